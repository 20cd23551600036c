"""Hand-rolled transaction builders shared across test modules."""

from datetime import date, datetime, timezone
from decimal import Decimal

from txcorrect.txmodel import (
    Code,
    Number,
    RecordQualifier,
    TransactionKey,
    TransactionRecord,
    build_transaction,
)

Q = RecordQualifier


def make_key(index=1, store=1, minute=0):
    return TransactionKey(
        store_number=store,
        business_date=date(2019, 3, 7),
        transaction_index=index,
        timestamp=datetime(2019, 3, 7, 9, minute, 0, tzinfo=timezone.utc),
    )


def money(raw):
    return Number(Decimal(raw))


def record(key, row_id, qualifier, parent, **attrs):
    return TransactionRecord(key, row_id, qualifier, parent, attrs)


def simple_transaction(key=None, tender_types=("CASH",), item_count=1,
                       unit_price="10.00", media=None, product_code=None):
    """Header + items + tax + tenders; totals consistent by construction."""
    key = key or make_key()
    records = [None]  # header placeholder
    row = 1
    extended_total = Decimal(0)
    for i in range(item_count):
        extended = Decimal(unit_price)
        records.append(record(
            key, row, Q.ITEM, 0,
            PRODUCT_CODE=Code(product_code or f"P{i + 1:03d}"),
            QUANTITY=money("1"),
            UNIT_PRICE=money(unit_price),
            EXTENDED_AMOUNT=Number(extended),
        ))
        extended_total += extended
        row += 1
    tax = (extended_total * Decimal("0.05")).quantize(Decimal("0.01"))
    records.append(record(key, row, Q.TAX, 0, TAX_CODE=Code("GST"), TAX_AMOUNT=Number(tax)))
    row += 1
    media = media or [None] * len(tender_types)
    for tender_type, media_code in zip(tender_types, media):
        attrs = {
            "TENDER_TYPE_CODE": Code(tender_type),
            "TENDER_AMOUNT": money("12.00"),
        }
        if media_code:
            attrs["TENDER_MEDIA_CODE"] = Code(media_code)
        records.append(TransactionRecord(key, row, Q.TENDER, 0, attrs))
        row += 1
    records[0] = record(
        key, 0, Q.HEADER, None,
        TRANSACTION_TYPE=Code("SALE"),
        TOTAL_AMOUNT=Number(extended_total + tax),
    )
    return build_transaction(records)
