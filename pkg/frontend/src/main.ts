/**
 * Entry point: hash routing between the queue screen (#/queue) and item
 * detail (#/item/<id>). The service base URL comes from a global set in
 * index.html or defaults to the local service port.
 */

import { ConsoleApi } from './api.js';
import { QueueStore } from './store.js';
import { renderDetailScreen, renderQueueScreen } from './views.js';

declare global {
  interface Window {
    TXC_BASE_URL?: string;
  }
}

export function startConsole(doc: Document, root: HTMLElement): QueueStore {
  const baseUrl = (typeof window !== 'undefined' && window.TXC_BASE_URL) || 'http://127.0.0.1:8700';
  const operator = localStorage.getItem('txc-operator') ?? 'operator';
  const api = new ConsoleApi(baseUrl, operator);
  const store = new QueueStore(api);

  const header = doc.createElement('header');
  const title = doc.createElement('h1');
  title.textContent = 'Transaction review console';
  const who = doc.createElement('input');
  who.value = api.operator;
  who.title = 'operator identity sent with every decision';
  who.addEventListener('change', () => {
    api.operator = who.value.trim() || 'operator';
    localStorage.setItem('txc-operator', api.operator);
  });
  header.append(title, who);

  const screen = doc.createElement('main');
  root.replaceChildren(header, screen);

  const route = (): void => {
    const hash = doc.defaultView?.location.hash ?? '';
    const itemMatch = /^#\/item\/(\d+)$/.exec(hash);
    if (itemMatch && itemMatch[1]) {
      const itemId = Number(itemMatch[1]);
      void store.openItem(itemId);
    } else {
      void store.loadQueue();
    }
  };

  store.subscribe(() => {
    const hash = doc.defaultView?.location.hash ?? '';
    if (/^#\/item\//.test(hash)) {
      renderDetailScreen(doc, screen, store, () => {
        if (doc.defaultView) doc.defaultView.location.hash = '#/queue';
      });
    } else {
      renderQueueScreen(doc, screen, store);
    }
  });

  doc.defaultView?.addEventListener('hashchange', route);
  route();
  return store;
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  startConsole(document, document.getElementById('app') as HTMLElement);
}
