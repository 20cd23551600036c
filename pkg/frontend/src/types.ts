/**
 * Wire types mirroring the service JSON API.
 *
 * Values arrive as tagged unions with string payloads (numbers are decimal
 * strings); the console renders them verbatim and never reformats codes or
 * amounts on the client.
 */

export interface FieldValueJson {
  kind: 'text' | 'number' | 'code' | 'missing';
  value?: string;
}

export interface TransactionKeyJson {
  store_number: number;
  business_date: string;
  transaction_index: number;
  timestamp: string;
}

export interface TransactionRecordJson {
  row_id: number;
  qualifier: string;
  parent_row_id: number | null;
  attributes: Record<string, FieldValueJson>;
}

export interface TransactionJson {
  key: TransactionKeyJson;
  records: TransactionRecordJson[];
}

/** One error class scored by the detection model for a transaction. */
export interface DetectedClass {
  class_id: number;
  name: string;
  probability: number;
  flagged: boolean;
  qualifier: string;
  field_name: string;
  ordinal: number;
  /** row in the posted transaction this class points at; null when absent */
  row_id: number | null;
  /** closed set of legal correction values for this class */
  domain: string[];
}

/** Ranked recommendation: [value, score]. */
export type Recommendation = [string, number];

export type ItemStatus = 'PENDING' | 'ACCEPTED' | 'OVERRIDDEN' | 'DISMISSED';

export interface ReviewItemSummary {
  item_id: number;
  key: TransactionKeyJson;
  status: ItemStatus;
  flagged_classes: string[];
  max_probability: number;
  created_at: string;
}

export interface ReviewItem {
  item_id: number;
  transaction: TransactionJson;
  detected: DetectedClass[];
  recommendations: Record<string, Recommendation[]>;
  detection_version: number;
  correction_versions: Record<string, number>;
  created_at: string;
  status: ItemStatus;
  decided_by: string | null;
  decided_at: string | null;
  decision: Record<string, unknown> | null;
}

export interface QueuePage {
  items: ReviewItemSummary[];
  total_pending: number;
  offset: number;
}

export type DecisionAction = 'ACCEPT' | 'OVERRIDE' | 'DISMISS';

export interface DecisionRequest {
  action: DecisionAction;
  class_id?: number;
  value?: string;
  reason?: string;
}

/** Body of every service error response. */
export interface ErrorBody {
  error: string;
  message: string;
  [extra: string]: unknown;
}
