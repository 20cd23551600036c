/**
 * Queue and detail screens. Plain DOM, no framework: the service is the
 * source of truth and these functions re-render whole screens from store
 * state. Decisions flow back through the store's optimistic submit.
 */

import { QueueStore } from './store.js';
import { renderTransactionTree } from './tree.js';
import type { DetectedClass, Recommendation, ReviewItem } from './types.js';

export function renderQueueScreen(doc: Document, container: HTMLElement, store: QueueStore): void {
  const { page, busy, error } = store.state;
  container.replaceChildren();
  const heading = doc.createElement('h2');
  heading.textContent = 'Review queue';
  container.append(heading);

  if (error) {
    container.append(notice(doc, 'error', error));
  }
  if (!page) {
    if (!error) container.append(notice(doc, 'info', busy ? 'Loading...' : 'No data yet.'));
    return;
  }

  const summary = doc.createElement('p');
  summary.className = 'queue-total';
  summary.textContent = `${page.total_pending} pending item(s)`;
  container.append(summary);

  const table = doc.createElement('table');
  table.className = 'queue';
  const head = doc.createElement('tr');
  for (const column of ['item', 'transaction', 'flagged classes', 'max p', '']) {
    const cell = doc.createElement('th');
    cell.textContent = column;
    head.append(cell);
  }
  table.append(head);

  for (const item of page.items) {
    const row = doc.createElement('tr');
    row.dataset.itemId = String(item.item_id);
    const cells = [
      String(item.item_id),
      `store ${item.key.store_number} / txn ${item.key.transaction_index}`,
      item.flagged_classes.join(', '),
      item.max_probability.toFixed(3)
    ];
    for (const text of cells) {
      const cell = doc.createElement('td');
      cell.textContent = text;
      row.append(cell);
    }
    const actions = doc.createElement('td');
    const open = doc.createElement('a');
    open.href = `#/item/${item.item_id}`;
    open.textContent = 'open';
    open.className = 'open-item';
    actions.append(open);
    row.append(actions);
    table.append(row);
  }
  container.append(table);

  const pager = doc.createElement('div');
  pager.className = 'pager';
  const prev = doc.createElement('button');
  prev.textContent = 'previous';
  prev.disabled = page.offset === 0;
  prev.addEventListener('click', () => {
    void store.loadQueue(Math.max(0, page.offset - page.items.length), page.items.length || 50);
  });
  const next = doc.createElement('button');
  next.textContent = 'next';
  next.disabled = page.offset + page.items.length >= page.total_pending;
  next.addEventListener('click', () => {
    void store.loadQueue(page.offset + page.items.length, page.items.length || 50);
  });
  pager.append(prev, next);
  container.append(pager);
}

function notice(doc: Document, kind: 'info' | 'error' | 'conflict', text: string): HTMLElement {
  const box = doc.createElement('p');
  box.className = `notice notice-${kind}`;
  box.textContent = text;
  return box;
}

function recommendationPanel(
  doc: Document,
  item: ReviewItem,
  cls: DetectedClass,
  store: QueueStore,
  onDecided: () => void
): HTMLElement {
  const panel = doc.createElement('section');
  panel.className = 'class-panel';
  panel.dataset.classId = String(cls.class_id);

  const heading = doc.createElement('h4');
  heading.textContent = `${cls.name} - p=${cls.probability.toFixed(3)}`;
  panel.append(heading);

  const ranked: Recommendation[] = item.recommendations[String(cls.class_id)] ?? [];
  const list = doc.createElement('ol');
  list.className = 'recommendations';
  ranked.forEach(([value, score], position) => {
    const entry = doc.createElement('li');
    const label = doc.createElement('label');
    const radio = doc.createElement('input');
    radio.type = 'radio';
    radio.name = `choice-${cls.class_id}`;
    radio.value = value;
    if (position === 0) radio.checked = true;
    label.append(radio, doc.createTextNode(` ${value} (${score.toFixed(4)})`));
    entry.append(label);
    list.append(entry);
  });
  panel.append(list);

  const accept = doc.createElement('button');
  accept.className = 'accept';
  accept.textContent = 'Accept selected';
  accept.disabled = ranked.length === 0 || item.status !== 'PENDING';
  accept.addEventListener('click', () => {
    const chosen = panel.querySelector<HTMLInputElement>(
      `input[name="choice-${cls.class_id}"]:checked`);
    if (!chosen) return;
    void store
      .decide({ action: 'ACCEPT', class_id: cls.class_id, value: chosen.value })
      .then((decided) => decided && onDecided());
  });

  // OVERRIDE picks from the class's closed value domain; free text would
  // just bounce off the service's domain validation.
  const picker = doc.createElement('select');
  picker.className = 'override-picker';
  for (const value of cls.domain) {
    const option = doc.createElement('option');
    option.value = value;
    option.textContent = value;
    picker.append(option);
  }
  const override = doc.createElement('button');
  override.className = 'override';
  override.textContent = 'Override with picked value';
  override.disabled = item.status !== 'PENDING';
  override.addEventListener('click', () => {
    void store
      .decide({ action: 'OVERRIDE', class_id: cls.class_id, value: picker.value })
      .then((decided) => decided && onDecided());
  });

  panel.append(accept, picker, override);
  return panel;
}

export function renderDetailScreen(
  doc: Document,
  container: HTMLElement,
  store: QueueStore,
  onDecided: () => void
): void {
  const { current, conflict, error, busy } = store.state;
  container.replaceChildren();
  if (error) container.append(notice(doc, 'error', error));
  if (conflict) container.append(notice(doc, 'conflict', conflict));
  if (!current) {
    if (!error) container.append(notice(doc, 'info', busy ? 'Loading...' : 'Item not found.'));
    return;
  }

  const heading = doc.createElement('h2');
  heading.textContent = `Item ${current.item_id} - ${current.status}`;
  container.append(heading);

  if (current.status !== 'PENDING') {
    container.append(notice(
      doc, 'info',
      `Decided by ${current.decided_by ?? 'unknown'} at ${current.decided_at ?? '?'}: ` +
      JSON.stringify(current.decision)));
  }

  const layout = doc.createElement('div');
  layout.className = 'detail-layout';
  layout.append(renderTransactionTree(doc, current.transaction, current.detected));

  const side = doc.createElement('div');
  side.className = 'decision-side';
  for (const cls of current.detected) {
    if (cls.flagged) {
      side.append(recommendationPanel(doc, current, cls, store, onDecided));
    }
  }

  const dismiss = doc.createElement('section');
  dismiss.className = 'dismiss-panel';
  const reason = doc.createElement('textarea');
  reason.placeholder = 'Dismissal reason (required)';
  reason.className = 'dismiss-reason';
  const dismissButton = doc.createElement('button');
  dismissButton.className = 'dismiss';
  dismissButton.textContent = 'Dismiss';
  dismissButton.disabled = current.status !== 'PENDING';
  dismissButton.addEventListener('click', () => {
    if (!reason.value.trim()) {
      dismiss.prepend(notice(doc, 'error', 'A dismissal reason is required.'));
      return;
    }
    void store
      .decide({ action: 'DISMISS', reason: reason.value.trim() })
      .then((decided) => decided && onDecided());
  });
  dismiss.append(reason, dismissButton);
  side.append(dismiss);

  layout.append(side);
  container.append(layout);
}
