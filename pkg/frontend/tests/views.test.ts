import { describe, expect, it } from 'vitest';

import { ConsoleApi } from '../src/api.js';
import { QueueStore } from '../src/store.js';
import { renderDetailScreen, renderQueueScreen } from '../src/views.js';
import { DOMAIN, sampleItem, samplePage } from './fixtures.js';
import type { DecisionRequest, ReviewItem } from '../src/types.js';

function storeWith(item: ReviewItem, onDecide?: (d: DecisionRequest) => Promise<ReviewItem>) {
  const api = new ConsoleApi('http://unused', 'tester', async () => {
    throw new Error('fetch must not be called');
  });
  (api as any).queue = async () => samplePage([item]);
  (api as any).item = async () => item;
  (api as any).decide = async (_id: number, decision: DecisionRequest) =>
    onDecide ? onDecide(decision) : { ...item, status: 'ACCEPTED' as const };
  return new QueueStore(api);
}

describe('queue screen', () => {
  it('lists pending items with flagged classes and max probability', async () => {
    const store = storeWith(sampleItem());
    await store.loadQueue();
    const container = document.createElement('div');
    renderQueueScreen(document, container, store);
    expect(container.querySelector('.queue-total')?.textContent).toBe('1 pending item(s)');
    const row = container.querySelector('tr[data-item-id="7"]');
    expect(row).not.toBeNull();
    expect(row?.textContent).toContain('tender1_type');
    expect(row?.textContent).toContain('0.930');
    expect(row?.querySelector('a.open-item')?.getAttribute('href')).toBe('#/item/7');
  });
});

describe('detail screen', () => {
  it('shows panels only for flagged classes, with ranked recommendations', async () => {
    const store = storeWith(sampleItem());
    await store.openItem(7);
    const container = document.createElement('div');
    renderDetailScreen(document, container, store, () => undefined);
    const panels = container.querySelectorAll('.class-panel');
    expect(panels.length).toBe(1);
    const entries = panels[0]!.querySelectorAll('.recommendations li');
    expect(entries.length).toBe(5);
    expect(entries[0]!.textContent).toContain('CASH');
    const checked = panels[0]!.querySelector<HTMLInputElement>('input:checked');
    expect(checked?.value).toBe('CASH'); // top-1 preselected
  });

  it('restricts the override picker to the class value domain', async () => {
    const store = storeWith(sampleItem());
    await store.openItem(7);
    const container = document.createElement('div');
    renderDetailScreen(document, container, store, () => undefined);
    const options = [...container.querySelectorAll<HTMLOptionElement>('.override-picker option')];
    expect(options.map((o) => o.value)).toEqual(DOMAIN);
    // free text cannot enter: the control is a closed select
    expect(container.querySelector('.override-picker')?.tagName.toLowerCase()).toBe('select');
  });

  it('accept submits the selected recommendation and leaves the screen', async () => {
    const decisions: DecisionRequest[] = [];
    let navigated = 0;
    const item = sampleItem();
    const store = storeWith(item, async (decision) => {
      decisions.push(decision);
      return { ...item, status: 'ACCEPTED', decided_by: 'tester' };
    });
    await store.loadQueue();
    await store.openItem(7);
    const container = document.createElement('div');
    renderDetailScreen(document, container, store, () => { navigated += 1; });
    container.querySelector<HTMLButtonElement>('button.accept')!.click();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(decisions).toEqual([{ action: 'ACCEPT', class_id: 0, value: 'CASH' }]);
    expect(navigated).toBe(1);
  });

  it('dismiss requires a reason before submitting', async () => {
    const decisions: DecisionRequest[] = [];
    const item = sampleItem();
    const store = storeWith(item, async (decision) => {
      decisions.push(decision);
      return { ...item, status: 'DISMISSED' };
    });
    await store.openItem(7);
    const container = document.createElement('div');
    renderDetailScreen(document, container, store, () => undefined);
    const button = container.querySelector<HTMLButtonElement>('button.dismiss')!;
    button.click();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(decisions).toEqual([]); // blocked: no reason given
    expect(container.querySelector('.dismiss-panel .notice-error')).not.toBeNull();

    container.querySelector<HTMLTextAreaElement>('.dismiss-reason')!.value = 'looks fine';
    button.click();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(decisions).toEqual([{ action: 'DISMISS', reason: 'looks fine' }]);
  });

  it('renders decided items with the audit line and disabled actions', async () => {
    const store = storeWith(sampleItem({
      status: 'ACCEPTED',
      decided_by: 'alice',
      decided_at: '2019-03-07T11:00:00Z',
      decision: { action: 'ACCEPT', class_id: 0, value: 'CASH' }
    }));
    await store.openItem(7);
    const container = document.createElement('div');
    renderDetailScreen(document, container, store, () => undefined);
    expect(container.textContent).toContain('Decided by alice');
    expect(container.querySelector<HTMLButtonElement>('button.accept')?.disabled).toBe(true);
    expect(container.querySelector<HTMLButtonElement>('button.dismiss')?.disabled).toBe(true);
  });

  it('shows the conflict notice after a lost race', async () => {
    const store = storeWith(sampleItem());
    await store.openItem(7);
    (store as any).state = { ...store.state, conflict: 'Another operator decided this item first (service.AlreadyDecided).' };
    const container = document.createElement('div');
    renderDetailScreen(document, container, store, () => undefined);
    expect(container.querySelector('.notice-conflict')?.textContent)
      .toMatch(/decided this item first/);
  });
});
