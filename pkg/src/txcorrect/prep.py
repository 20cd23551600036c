"""Qualify and normalize transactions before feature extraction.

Transactions with too many items, missing required attributes, or
inconsistent money fields are rejected (with every failed reason listed, not
just the first). Accepted transactions are normalized: codes upper-cased and
trimmed, date-like text canonicalized, and missing optional numeric fields
imputed as 0 with an explicit marker attribute.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date
from decimal import Decimal
from pathlib import Path

from .errors import TxcError
from .txmodel import (
    MISSING,
    Code,
    FieldValue,
    Number,
    RecordQualifier,
    Text,
    Transaction,
)


class PrepError(TxcError):
    module = "prep"


class UnparseableValue(PrepError):
    pass


DEFAULT_REQUIRED_FIELDS: tuple[tuple[RecordQualifier, str], ...] = (
    (RecordQualifier.HEADER, "TOTAL_AMOUNT"),
    (RecordQualifier.ITEM, "PRODUCT_CODE"),
    (RecordQualifier.ITEM, "QUANTITY"),
    (RecordQualifier.ITEM, "UNIT_PRICE"),
    (RecordQualifier.ITEM, "EXTENDED_AMOUNT"),
    (RecordQualifier.TENDER, "TENDER_TYPE_CODE"),
    (RecordQualifier.TENDER, "TENDER_AMOUNT"),
    (RecordQualifier.TAX, "TAX_AMOUNT"),
)

# Optional numeric fields imputed to 0 (plus marker) when absent.
DEFAULT_IMPUTED_FIELDS: tuple[tuple[RecordQualifier, str], ...] = (
    (RecordQualifier.ITEM_DISCOUNT, "DISCOUNT_AMOUNT"),
    (RecordQualifier.TXN_DISCOUNT, "DISCOUNT_AMOUNT"),
)

IMPUTED_MARKER_SUFFIX = "__IMPUTED"

# Money comparisons tolerate one minor currency unit (per-line tax rounding).
MONEY_TOLERANCE = Decimal("0.01")


@dataclass(frozen=True)
class Rejection:
    code: str
    detail: str


@dataclass(frozen=True)
class QualifyResult:
    accepted: bool
    reasons: tuple[Rejection, ...] = ()


@dataclass(frozen=True)
class FilterPolicy:
    """What a transaction must look like to enter the training pipeline."""

    max_items: int = 20
    required_fields: tuple[tuple[RecordQualifier, str], ...] = DEFAULT_REQUIRED_FIELDS
    consistency_checks: tuple[str, ...] = ("totals_balance",)

    def __post_init__(self):
        if self.max_items < 1:
            raise ValueError("max_items must be >= 1")
        for name in self.consistency_checks:
            if name not in CONSISTENCY_CHECKS:
                raise ValueError(f"unknown consistency check: {name!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "FilterPolicy":
        kwargs = {}
        if "max_items" in raw:
            kwargs["max_items"] = int(raw["max_items"])
        if "required_fields" in raw:
            kwargs["required_fields"] = tuple(
                (RecordQualifier(q), str(f)) for q, f in raw["required_fields"])
        if "consistency_checks" in raw:
            kwargs["consistency_checks"] = tuple(raw["consistency_checks"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "FilterPolicy":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "max_items": self.max_items,
            "required_fields": [[q.value, f] for q, f in self.required_fields],
            "consistency_checks": list(self.consistency_checks),
        }


def _as_decimal(value: FieldValue) -> Decimal | None:
    return value.value if isinstance(value, Number) else None


def _sum_field(txn: Transaction, qualifier: RecordQualifier, field_name: str) -> Decimal:
    total = Decimal(0)
    for rec in txn.of_qualifier(qualifier):
        amount = _as_decimal(rec.get(field_name))
        if amount is not None:
            total += amount
    return total


def _check_totals_balance(txn: Transaction) -> Rejection | None:
    """total == sum(item extended) - discounts + taxes, within one minor unit."""
    total = _as_decimal(txn.header.get("TOTAL_AMOUNT"))
    if total is None:
        return None  # required-field check already reports the absence
    items = txn.items
    if any(_as_decimal(i.get("EXTENDED_AMOUNT")) is None for i in items):
        return None
    extended = _sum_field(txn, RecordQualifier.ITEM, "EXTENDED_AMOUNT")
    discounts = (_sum_field(txn, RecordQualifier.ITEM_DISCOUNT, "DISCOUNT_AMOUNT")
                 + _sum_field(txn, RecordQualifier.TXN_DISCOUNT, "DISCOUNT_AMOUNT"))
    taxes = _sum_field(txn, RecordQualifier.TAX, "TAX_AMOUNT")
    expected = extended - discounts + taxes
    if abs(total - expected) > MONEY_TOLERANCE:
        return Rejection("InconsistentTotal",
                         f"TOTAL_AMOUNT {total} != items-discounts+taxes {expected}")
    return None


def _check_tenders_cover_total(txn: Transaction) -> Rejection | None:
    total = _as_decimal(txn.header.get("TOTAL_AMOUNT"))
    if total is None or not txn.tenders:
        return None
    tendered = _sum_field(txn, RecordQualifier.TENDER, "TENDER_AMOUNT")
    if abs(tendered - total) > MONEY_TOLERANCE:
        return Rejection("TendersDoNotCoverTotal",
                         f"tendered {tendered} != TOTAL_AMOUNT {total}")
    return None


CONSISTENCY_CHECKS = {
    "totals_balance": _check_totals_balance,
    "tenders_cover_total": _check_tenders_cover_total,
}


def qualify(txn: Transaction, policy: FilterPolicy | None = None) -> QualifyResult:
    """Decide whether a transaction enters the pipeline; rejection is a value."""
    policy = policy or FilterPolicy()
    reasons: list[Rejection] = []

    item_count = len(txn.items)
    if item_count > policy.max_items:
        reasons.append(Rejection(
            "TooManyItems", f"{item_count} items exceeds cap of {policy.max_items}"))

    for qualifier, field_name in policy.required_fields:
        for rec in txn.of_qualifier(qualifier):
            if rec.get(field_name) is MISSING:
                reasons.append(Rejection(
                    "MissingField",
                    f"{qualifier.value} row {rec.row_id} lacks {field_name}"))

    for name in policy.consistency_checks:
        rejection = CONSISTENCY_CHECKS[name](txn)
        if rejection is not None:
            reasons.append(rejection)

    return QualifyResult(accepted=not reasons, reasons=tuple(reasons))


_DATE_PATTERN = re.compile(r"^(\d{4})[/.](\d{2})[/.](\d{2})$")


def _canonical_date_text(raw: str) -> str:
    match = _DATE_PATTERN.match(raw.strip())
    if match is None:
        return raw
    year, month, day = (int(g) for g in match.groups())
    try:
        return date(year, month, day).isoformat()
    except ValueError as exc:
        raise UnparseableValue(f"date-like text {raw!r} is not a valid date") from exc


def normalize(txn: Transaction,
              imputed_fields: tuple[tuple[RecordQualifier, str], ...] = DEFAULT_IMPUTED_FIELDS,
              ) -> Transaction:
    """Canonicalize an accepted transaction. Idempotent and deterministic."""
    impute_for: dict[RecordQualifier, list[str]] = {}
    for qualifier, field_name in imputed_fields:
        impute_for.setdefault(qualifier, []).append(field_name)

    current = txn
    for rec in txn.records:
        for name, value in rec.attributes.items():
            if isinstance(value, Code):
                cleaned = value.value.strip().upper()
                if cleaned != value.value:
                    current = current.set_field(rec.row_id, name, Code(cleaned))
            elif isinstance(value, Text):
                canonical = _canonical_date_text(value.value)
                if canonical != value.value:
                    current = current.set_field(rec.row_id, name, Text(canonical))
        for field_name in impute_for.get(rec.qualifier, ()):
            if rec.get(field_name) is MISSING:
                current = current.set_field(rec.row_id, field_name, Number(Decimal(0)))
                current = current.set_field(
                    rec.row_id, field_name + IMPUTED_MARKER_SUFFIX, Number(Decimal(1)))
    return current
