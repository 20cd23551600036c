/**
 * Client-side queue state with optimistic decisions.
 *
 * A decision flips the open item's status immediately; if the service
 * answers 409 (another operator decided first) the local state rolls back
 * and the item is refetched so the screen shows the server's truth. The
 * store never invents data: everything rendered comes from API responses.
 */

import { ApiError, ConsoleApi, isConflict } from './api.js';
import type { DecisionRequest, ItemStatus, QueuePage, ReviewItem } from './types.js';

export interface StoreState {
  page: QueuePage | null;
  current: ReviewItem | null;
  /** set when the last decision lost a race and the item was refreshed */
  conflict: string | null;
  error: string | null;
  busy: boolean;
}

export type Listener = (state: StoreState) => void;

const ACTION_STATUS: Record<string, ItemStatus> = {
  ACCEPT: 'ACCEPTED',
  OVERRIDE: 'OVERRIDDEN',
  DISMISS: 'DISMISSED'
};

export class QueueStore {
  private readonly api: ConsoleApi;
  private listeners: Listener[] = [];
  state: StoreState = { page: null, current: null, conflict: null, error: null, busy: false };

  constructor(api: ConsoleApi) {
    this.api = api;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(partial: Partial<StoreState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  async loadQueue(offset = 0, limit = 50): Promise<void> {
    this.emit({ busy: true, error: null });
    try {
      const page = await this.api.queue(offset, limit);
      this.emit({ page, busy: false });
    } catch (error) {
      this.emit({ busy: false, error: describe(error) });
    }
  }

  async openItem(itemId: number): Promise<void> {
    this.emit({ busy: true, error: null, conflict: null });
    try {
      const current = await this.api.item(itemId);
      this.emit({ current, busy: false });
    } catch (error) {
      this.emit({ busy: false, current: null, error: describe(error) });
    }
  }

  /**
   * Submit a decision optimistically. Returns the decided item on success.
   * On a 409 race the optimistic state is rolled back, the item is
   * refreshed to the server's decided state, and `conflict` is set.
   */
  async decide(decision: DecisionRequest): Promise<ReviewItem | null> {
    const item = this.state.current;
    if (!item) {
      throw new Error('no item open');
    }
    const before: ReviewItem = { ...item };
    const optimisticStatus = ACTION_STATUS[decision.action] ?? item.status;
    this.emit({
      current: { ...item, status: optimisticStatus, decided_by: this.api.operator },
      busy: true,
      conflict: null,
      error: null
    });
    try {
      const decided = await this.api.decide(item.item_id, decision);
      this.emit({ current: decided, busy: false });
      this.removeFromQueue(item.item_id);
      return decided;
    } catch (error) {
      // roll the optimistic flip back before deciding what to show
      this.emit({ current: before, busy: false });
      if (isConflict(error)) {
        const refreshed = await this.refresh(item.item_id);
        this.emit({
          conflict: `Another operator decided this item first (${error.code}).`,
          current: refreshed ?? before
        });
        if (refreshed && refreshed.status !== 'PENDING') {
          this.removeFromQueue(item.item_id);
        }
        return null;
      }
      this.emit({ error: describe(error) });
      throw error;
    }
  }

  private async refresh(itemId: number): Promise<ReviewItem | null> {
    try {
      return await this.api.item(itemId);
    } catch {
      return null;
    }
  }

  private removeFromQueue(itemId: number): void {
    const page = this.state.page;
    if (!page) return;
    const items = page.items.filter((summary) => summary.item_id !== itemId);
    if (items.length !== page.items.length) {
      this.emit({
        page: { ...page, items, total_pending: Math.max(0, page.total_pending - 1) }
      });
    }
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) {
    return `${error.code}: ${error.message}`;
  }
  return error instanceof Error ? error.message : String(error);
}
