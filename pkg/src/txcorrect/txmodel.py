"""In-memory model of a retail transaction: a validated tree of typed records.

A transaction is one customer order. Its rows share a four-field key and form
a tree: the header is the root, items / tenders / taxes / transaction-level
discounts hang off the header, and item-level discounts hang off their item.
Values are immutable; "mutation" returns a new transaction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import date, datetime, timezone
from decimal import Decimal

from .errors import TxcError


class TxModelError(TxcError):
    module = "txmodel"


class NoHeader(TxModelError):
    pass


class MultipleHeaders(TxModelError):
    pass


class DanglingParent(TxModelError):
    pass


class CycleDetected(TxModelError):
    pass


class DuplicateRowId(TxModelError):
    pass


class MixedKeys(TxModelError):
    pass


class InvalidParent(TxModelError):
    pass


class UnknownRow(TxModelError):
    pass


class NotATender(TxModelError):
    pass


class RecordQualifier(enum.Enum):
    HEADER = "HEADER"
    ITEM = "ITEM"
    ITEM_DISCOUNT = "ITEM_DISCOUNT"
    TXN_DISCOUNT = "TXN_DISCOUNT"
    TAX = "TAX"
    TENDER = "TENDER"


# Allowed parent qualifier per child qualifier; HEADER has no parent.
_PARENT_RULE = {
    RecordQualifier.ITEM: RecordQualifier.HEADER,
    RecordQualifier.ITEM_DISCOUNT: RecordQualifier.ITEM,
    RecordQualifier.TXN_DISCOUNT: RecordQualifier.HEADER,
    RecordQualifier.TAX: RecordQualifier.HEADER,
    RecordQualifier.TENDER: RecordQualifier.HEADER,
}


# ---------------------------------------------------------------------------
# Field values: tagged union Text | Number | Code | Missing
# ---------------------------------------------------------------------------

class FieldValue:
    """Marker base for attribute values."""

    kind = "value"


@dataclass(frozen=True)
class Text(FieldValue):
    value: str
    kind = "text"


@dataclass(frozen=True)
class Number(FieldValue):
    """Fixed-scale decimal (scale <= 4); used for money and quantities."""

    value: Decimal
    kind = "number"

    def __post_init__(self):
        if not isinstance(self.value, Decimal):
            raise TypeError(f"Number wants Decimal, got {type(self.value).__name__}")
        if not self.value.is_finite():
            raise ValueError(f"Number must be finite, got {self.value}")
        exponent = self.value.as_tuple().exponent
        if isinstance(exponent, int) and exponent < -4:
            raise ValueError(f"Number scale exceeds 4 decimal places: {self.value}")


@dataclass(frozen=True)
class Code(FieldValue):
    """Categorical value drawn from a named vocabulary (enforced downstream)."""

    value: str
    kind = "code"


class _Missing(FieldValue):
    kind = "missing"

    def __repr__(self) -> str:
        return "MISSING"

    def __eq__(self, other) -> bool:
        return isinstance(other, _Missing)

    def __hash__(self) -> int:
        return hash("txcorrect.MISSING")


MISSING = _Missing()


def number(raw: str | int | Decimal) -> Number:
    """Convenience constructor; floats are rejected to keep replay exact."""
    if isinstance(raw, float):
        raise TypeError("construct Number from str/int/Decimal, not float")
    return Number(Decimal(raw))


# ---------------------------------------------------------------------------
# Keys and records
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class TransactionKey:
    """Four-field identity of one transaction; shared by its TLOG and PLOG rows."""

    store_number: int
    business_date: date
    transaction_index: int
    timestamp: datetime

    def __post_init__(self):
        if self.store_number < 1:
            raise ValueError("store_number must be a positive integer")
        if self.transaction_index < 1:
            raise ValueError("transaction_index must be a positive integer")
        if self.timestamp.tzinfo is None:
            raise ValueError("timestamp must be timezone-aware (UTC)")
        if self.timestamp.utcoffset() != timezone.utc.utcoffset(None):
            object.__setattr__(self, "timestamp", self.timestamp.astimezone(timezone.utc))


@dataclass(frozen=True)
class TransactionRecord:
    key: TransactionKey
    row_id: int
    qualifier: RecordQualifier
    parent_row_id: int | None
    attributes: dict[str, FieldValue]

    def __post_init__(self):
        if self.row_id < 0:
            raise ValueError("row_id must be non-negative")
        object.__setattr__(self, "attributes", dict(self.attributes))

    def get(self, field_name: str) -> FieldValue:
        return self.attributes.get(field_name, MISSING)


@dataclass(frozen=True)
class Transaction:
    """Validated record tree; construct through build_transaction."""

    key: TransactionKey
    records: tuple[TransactionRecord, ...]

    def record(self, row_id: int) -> TransactionRecord:
        for rec in self.records:
            if rec.row_id == row_id:
                return rec
        raise UnknownRow(f"row {row_id} not in transaction {self.key}")

    def has_row(self, row_id: int) -> bool:
        return any(rec.row_id == row_id for rec in self.records)

    @property
    def header(self) -> TransactionRecord:
        return next(r for r in self.records if r.qualifier is RecordQualifier.HEADER)

    def of_qualifier(self, qualifier: RecordQualifier) -> tuple[TransactionRecord, ...]:
        return tuple(r for r in self.records if r.qualifier is qualifier)

    @property
    def items(self) -> tuple[TransactionRecord, ...]:
        return self.of_qualifier(RecordQualifier.ITEM)

    @property
    def tenders(self) -> tuple[TransactionRecord, ...]:
        return self.of_qualifier(RecordQualifier.TENDER)

    def children_of(self, row_id: int) -> tuple[TransactionRecord, ...]:
        return tuple(r for r in self.records if r.parent_row_id == row_id)

    def tender_ordinal(self, row_id: int) -> int:
        """1-based position of a tender row among tenders, by ascending row_id."""
        rec = self.record(row_id)
        if rec.qualifier is not RecordQualifier.TENDER:
            raise NotATender(f"row {row_id} is {rec.qualifier.value}, not TENDER")
        return 1 + sum(1 for t in self.tenders if t.row_id < row_id)

    def ordinal_of(self, row_id: int) -> int:
        """1-based position of a row among rows sharing its qualifier."""
        rec = self.record(row_id)
        same = self.of_qualifier(rec.qualifier)
        return 1 + sum(1 for r in same if r.row_id < row_id)

    def get_field(self, row_id: int, field_name: str) -> FieldValue:
        return self.record(row_id).get(field_name)

    def set_field(self, row_id: int, field_name: str, value: FieldValue) -> "Transaction":
        """Return a new transaction with one field updated; MISSING removes it."""
        if not isinstance(value, FieldValue):
            raise TypeError(f"value must be a FieldValue, got {type(value).__name__}")
        target = self.record(row_id)  # raises UnknownRow
        new_records = []
        for rec in self.records:
            if rec is not target:
                new_records.append(rec)
                continue
            attrs = dict(rec.attributes)
            if value is MISSING or isinstance(value, _Missing):
                attrs.pop(field_name, None)
            else:
                attrs[field_name] = value
            new_records.append(
                TransactionRecord(rec.key, rec.row_id, rec.qualifier, rec.parent_row_id, attrs)
            )
        return Transaction(self.key, tuple(new_records))


def build_transaction(records: list[TransactionRecord]) -> Transaction:
    """Validate a record list into a Transaction.

    Checks: single shared key, unique row ids, exactly one header, parent links
    resolve, parent qualifiers follow the hierarchy rule, and the parent graph
    is a tree rooted at the header.
    """
    if not records:
        raise NoHeader("empty record list")
    key = records[0].key
    for rec in records:
        if rec.key != key:
            raise MixedKeys(f"records mix keys {key} and {rec.key}")
    by_id: dict[int, TransactionRecord] = {}
    for rec in records:
        if rec.row_id in by_id:
            raise DuplicateRowId(f"row_id {rec.row_id} appears more than once")
        by_id[rec.row_id] = rec

    headers = [r for r in records if r.qualifier is RecordQualifier.HEADER]
    if not headers:
        raise NoHeader(f"transaction {key} has no HEADER record")
    if len(headers) > 1:
        raise MultipleHeaders(f"transaction {key} has {len(headers)} HEADER records")
    header = headers[0]
    if header.parent_row_id is not None:
        raise InvalidParent("HEADER must not have a parent")

    for rec in records:
        if rec.qualifier is RecordQualifier.HEADER:
            continue
        if rec.parent_row_id is None:
            raise InvalidParent(f"row {rec.row_id} ({rec.qualifier.value}) lacks a parent")
        parent = by_id.get(rec.parent_row_id)
        if parent is None:
            raise DanglingParent(f"row {rec.row_id} references absent parent {rec.parent_row_id}")
        expected = _PARENT_RULE[rec.qualifier]
        if parent.qualifier is not expected:
            raise InvalidParent(
                f"row {rec.row_id} ({rec.qualifier.value}) must attach to a "
                f"{expected.value}, found {parent.qualifier.value}"
            )

    # Parent chains must reach the header without revisiting a row.
    for rec in records:
        seen = {rec.row_id}
        cursor = rec
        while cursor.parent_row_id is not None:
            if cursor.parent_row_id in seen:
                raise CycleDetected(f"parent chain of row {rec.row_id} loops")
            seen.add(cursor.parent_row_id)
            cursor = by_id[cursor.parent_row_id]
        if cursor.row_id != header.row_id:
            raise CycleDetected(f"row {rec.row_id} does not reach the header")

    ordered = tuple(sorted(records, key=lambda r: r.row_id))
    return Transaction(key, ordered)
