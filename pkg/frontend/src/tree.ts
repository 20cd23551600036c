/**
 * Render a transaction as a collapsible tree: header root, children grouped
 * underneath, attribute values shown exactly as the API sent them.
 */

import type { DetectedClass, FieldValueJson, TransactionJson, TransactionRecordJson } from './types.js';

/** "rowId:field" keys for fields the detection model flagged. */
export function flaggedFieldKeys(detected: DetectedClass[]): Set<string> {
  const keys = new Set<string>();
  for (const cls of detected) {
    if (cls.flagged && cls.row_id !== null) {
      keys.add(`${cls.row_id}:${cls.field_name}`);
    }
  }
  return keys;
}

/** Verbatim display form of a field value; no reformatting of payloads. */
export function displayValue(value: FieldValueJson): string {
  if (value.kind === 'missing') {
    return '(missing)';
  }
  return value.value ?? '';
}

function recordLabel(record: TransactionRecordJson): string {
  return `${record.qualifier} #${record.row_id}`;
}

function renderAttributes(
  doc: Document,
  record: TransactionRecordJson,
  flagged: Set<string>
): HTMLElement {
  const list = doc.createElement('dl');
  list.className = 'attributes';
  for (const [name, value] of Object.entries(record.attributes)) {
    const term = doc.createElement('dt');
    term.textContent = name;
    const detail = doc.createElement('dd');
    detail.textContent = displayValue(value);
    detail.dataset.field = `${record.row_id}:${name}`;
    if (flagged.has(`${record.row_id}:${name}`)) {
      term.classList.add('flagged');
      detail.classList.add('flagged');
      detail.title = 'flagged by the detection model';
    }
    list.append(term, detail);
  }
  return list;
}

function renderNode(
  doc: Document,
  txn: TransactionJson,
  record: TransactionRecordJson,
  flagged: Set<string>
): HTMLElement {
  const children = txn.records.filter((r) => r.parent_row_id === record.row_id);
  const node = doc.createElement('details');
  node.open = true;
  node.className = `tree-node qualifier-${record.qualifier.toLowerCase()}`;
  node.dataset.rowId = String(record.row_id);
  const summary = doc.createElement('summary');
  summary.textContent = recordLabel(record);
  node.append(summary, renderAttributes(doc, record, flagged));
  for (const child of children) {
    node.append(renderNode(doc, txn, child, flagged));
  }
  return node;
}

/** Build the full collapsible tree rooted at the header record. */
export function renderTransactionTree(
  doc: Document,
  txn: TransactionJson,
  detected: DetectedClass[]
): HTMLElement {
  const root = txn.records.find((r) => r.parent_row_id === null);
  const container = doc.createElement('div');
  container.className = 'transaction-tree';
  if (!root) {
    container.textContent = 'transaction has no root record';
    return container;
  }
  const key = txn.key;
  const caption = doc.createElement('p');
  caption.className = 'tree-caption';
  caption.textContent =
    `store ${key.store_number} / txn ${key.transaction_index} @ ${key.timestamp}`;
  container.append(caption, renderNode(doc, txn, root, flaggedFieldKeys(detected)));
  return container;
}
