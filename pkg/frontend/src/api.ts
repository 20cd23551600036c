/**
 * Thin typed client for the review service. The console writes nothing
 * except through the decision endpoint, and every non-2xx response surfaces
 * as an ApiError carrying the HTTP status and the service's error code.
 */

import type { DecisionRequest, ErrorBody, QueuePage, ReviewItem } from './types.js';

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly body: ErrorBody;

  constructor(status: number, body: ErrorBody) {
    super(body.message ?? body.error ?? `HTTP ${status}`);
    this.status = status;
    this.code = body.error ?? 'unknown';
    this.body = body;
  }
}

export function isConflict(error: unknown): error is ApiError {
  return error instanceof ApiError && error.status === 409;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ConsoleApi {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;
  operator: string;

  constructor(baseUrl: string, operator: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
    this.operator = operator;
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = {
      method,
      headers: {
        'X-Operator': this.operator,
        ...(body === undefined ? {} : { 'Content-Type': 'application/json' })
      },
      ...(body === undefined ? {} : { body: JSON.stringify(body) })
    };
    const response = await this.fetchFn(this.baseUrl + path, init);
    const payload = (await response.json()) as unknown;
    if (!response.ok) {
      throw new ApiError(response.status, payload as ErrorBody);
    }
    return payload as T;
  }

  queue(offset = 0, limit = 50): Promise<QueuePage> {
    return this.request<QueuePage>('GET', `/queue?offset=${offset}&limit=${limit}`);
  }

  item(itemId: number): Promise<ReviewItem> {
    return this.request<ReviewItem>('GET', `/queue/${itemId}`);
  }

  decide(itemId: number, decision: DecisionRequest): Promise<ReviewItem> {
    return this.request<ReviewItem>('POST', `/queue/${itemId}/decision`, decision);
  }

  models(): Promise<{ models: Record<string, unknown>[] }> {
    return this.request('GET', '/models');
  }
}
