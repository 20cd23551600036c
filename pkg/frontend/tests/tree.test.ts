import { describe, expect, it } from 'vitest';

import { displayValue, flaggedFieldKeys, renderTransactionTree } from '../src/tree.js';
import { sampleDetected, sampleTransaction } from './fixtures.js';

describe('transaction tree', () => {
  it('renders the hierarchy as nested collapsible nodes', () => {
    const tree = renderTransactionTree(document, sampleTransaction(), sampleDetected());
    const nodes = tree.querySelectorAll('details');
    expect(nodes.length).toBe(4); // header, item, item discount, tender
    const header = tree.querySelector('details');
    expect(header?.querySelector('summary')?.textContent).toBe('HEADER #0');
    // the item discount nests inside the item, which nests inside the header
    const discount = tree.querySelector('details.qualifier-item_discount');
    expect(discount?.parentElement?.dataset.rowId).toBe('1');
    expect(discount?.parentElement?.parentElement?.dataset.rowId).toBe('0');
  });

  it('highlights exactly the flagged fields', () => {
    const tree = renderTransactionTree(document, sampleTransaction(), sampleDetected());
    const flagged = tree.querySelectorAll('dd.flagged');
    expect(flagged.length).toBe(1);
    expect((flagged[0] as HTMLElement).dataset.field).toBe('3:TENDER_TYPE_CODE');
  });

  it('renders values verbatim, amounts not reformatted', () => {
    const tree = renderTransactionTree(document, sampleTransaction(), sampleDetected());
    const total = tree.querySelector('dd[data-field="0:TOTAL_AMOUNT"]');
    expect(total?.textContent).toBe('12.50'); // not 12.5
    expect(displayValue({ kind: 'missing' })).toBe('(missing)');
    expect(displayValue({ kind: 'code', value: 'CASH' })).toBe('CASH');
  });

  it('maps flagged classes to row:field keys, skipping absent rows', () => {
    const keys = flaggedFieldKeys(sampleDetected());
    expect([...keys]).toEqual(['3:TENDER_TYPE_CODE']);
  });
});
