import type { DetectedClass, QueuePage, ReviewItem, TransactionJson } from '../src/types.js';

export const DOMAIN = ['CASH', 'CREDIT', 'DEBIT', 'GIFT', 'VOUCHER'];

export function sampleTransaction(): TransactionJson {
  return {
    key: {
      store_number: 1,
      business_date: '2019-03-07',
      transaction_index: 42,
      timestamp: '2019-03-07T09:00:00Z'
    },
    records: [
      {
        row_id: 0,
        qualifier: 'HEADER',
        parent_row_id: null,
        attributes: {
          TRANSACTION_TYPE: { kind: 'code', value: 'SALE' },
          TOTAL_AMOUNT: { kind: 'number', value: '12.50' }
        }
      },
      {
        row_id: 1,
        qualifier: 'ITEM',
        parent_row_id: 0,
        attributes: {
          PRODUCT_CODE: { kind: 'code', value: 'P001' },
          QUANTITY: { kind: 'number', value: '1' },
          UNIT_PRICE: { kind: 'number', value: '11.90' },
          EXTENDED_AMOUNT: { kind: 'number', value: '11.90' }
        }
      },
      {
        row_id: 2,
        qualifier: 'ITEM_DISCOUNT',
        parent_row_id: 1,
        attributes: {
          DISCOUNT_CODE: { kind: 'code', value: 'PROMO' },
          DISCOUNT_AMOUNT: { kind: 'number', value: '0.00' }
        }
      },
      {
        row_id: 3,
        qualifier: 'TENDER',
        parent_row_id: 0,
        attributes: {
          TENDER_TYPE_CODE: { kind: 'code', value: 'GIFT' },
          TENDER_AMOUNT: { kind: 'number', value: '12.50' },
          TENDER_MEDIA_CODE: { kind: 'code', value: 'DRAWER' }
        }
      }
    ]
  };
}

export function sampleDetected(): DetectedClass[] {
  return [
    {
      class_id: 0,
      name: 'tender1_type',
      probability: 0.93,
      flagged: true,
      qualifier: 'TENDER',
      field_name: 'TENDER_TYPE_CODE',
      ordinal: 1,
      row_id: 3,
      domain: [...DOMAIN]
    },
    {
      class_id: 1,
      name: 'tender2_type',
      probability: 0.04,
      flagged: false,
      qualifier: 'TENDER',
      field_name: 'TENDER_TYPE_CODE',
      ordinal: 2,
      row_id: null,
      domain: [...DOMAIN]
    }
  ];
}

export function sampleItem(overrides: Partial<ReviewItem> = {}): ReviewItem {
  return {
    item_id: 7,
    transaction: sampleTransaction(),
    detected: sampleDetected(),
    recommendations: {
      '0': [
        ['CASH', 0.91],
        ['CREDIT', 0.4],
        ['DEBIT', 0.2],
        ['GIFT', 0.05],
        ['VOUCHER', 0.01]
      ]
    },
    detection_version: 1,
    correction_versions: { '0': 1 },
    created_at: '2019-03-07T10:00:00Z',
    status: 'PENDING',
    decided_by: null,
    decided_at: null,
    decision: null,
    ...overrides
  };
}

export function samplePage(items: ReviewItem[] = [sampleItem()]): QueuePage {
  return {
    items: items.map((item) => ({
      item_id: item.item_id,
      key: item.transaction.key,
      status: item.status,
      flagged_classes: item.detected.filter((d) => d.flagged).map((d) => d.name),
      max_probability: Math.max(...item.detected.map((d) => d.probability)),
      created_at: item.created_at
    })),
    total_pending: items.length,
    offset: 0
  };
}
