"""Deterministic synthetic corpus: transactions, injected errors, corrections.

The generator is the ground-truth authority for every test and acceptance
target. It emits the post-correction state: the TLOG carries corrected
values, while the PLOG carries ERROR_LOGGED plus FIELD_CHANGED(old=corrupted,
new=correct) entries, exactly what a production store would look like after
operators fixed everything.

Learnability is designed, not hoped for:

* EASY corruption draws the wrong tender-type code from {GIFT, VOUCHER} with
  probability 0.92 while clean tenders use those codes with probability 0.08,
  so a single threshold on the tender-type index already separates the
  classes at ~0.92 accuracy. Tender amounts also live in per-type buckets,
  and a TENDER_MEDIA_CODE attribute agrees with the *correct* tender type
  with probability 0.8 - that is the signal the value-prediction model
  learns.
* HARD corruption is uniform over the wrong codes with no correlated
  attributes: irreducible by design.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal
from pathlib import Path
from typing import Iterable

from .errors import TxcError
from .features import ErrorClass, ErrorTaxonomy, default_taxonomy, TENDER_TYPE_CODES, TENDER_MEDIA_CODES
from .logstore import ChangeLogEntry, error_logged, field_changed, write_plog, write_tlog
from .replay import ReconstructionResult
from .txmodel import (
    Code,
    Number,
    RecordQualifier,
    Transaction,
    TransactionKey,
    TransactionRecord,
    build_transaction,
)


class SynthError(TxcError):
    module = "synth"


class InvalidProfile(SynthError):
    pass


EASY = "EASY"
HARD = "HARD"

# Tender amounts per correct tender type, in cents: the "payment bucket".
_AMOUNT_BUCKETS = {
    "CASH": (500, 2499),
    "CREDIT": (2500, 5999),
    "DEBIT": (6000, 9999),
    "GIFT": (10000, 13999),
    "VOUCHER": (14000, 17999),
}

# Media code aligned with each tender type; agreement probability is the
# correction model's designed signal strength.
_MEDIA_FOR_TYPE = dict(zip(TENDER_TYPE_CODES, TENDER_MEDIA_CODES))

_CLEAN_TYPE_WEIGHTS = (("CASH", 0.32), ("CREDIT", 0.32), ("DEBIT", 0.30),
                       ("GIFT", 0.03), ("VOUCHER", 0.03))

EASY_BIAS_CODES = ("GIFT", "VOUCHER")
EASY_BIAS_PROBABILITY = 0.95
MEDIA_AGREEMENT_PROBABILITY = 0.80


@dataclass(frozen=True)
class ErrorModelSpec:
    error_class: ErrorClass
    injection_rate: float
    learnability: str = EASY

    def __post_init__(self):
        if not 0.0 <= self.injection_rate <= 1.0:
            raise InvalidProfile(f"injection rate {self.injection_rate} outside [0, 1]")
        if self.learnability not in (EASY, HARD):
            raise InvalidProfile(f"learnability must be EASY or HARD, got {self.learnability!r}")


@dataclass(frozen=True)
class GeneratorProfile:
    seed: int
    store_count: int = 2
    transactions_per_store: int = 500
    max_items: int = 20
    item_count_p: float = 0.45          # geometric continue-probability complement
    tender_count_weights: tuple[float, float, float] = (0.55, 0.30, 0.15)
    product_codes: tuple[str, ...] = tuple(f"P{i:03d}" for i in range(1, 41))
    tender_type_codes: tuple[str, ...] = TENDER_TYPE_CODES
    error_model: tuple[ErrorModelSpec, ...] = ()
    business_date: date = date(2019, 3, 7)

    def __post_init__(self):
        if self.store_count < 1 or self.transactions_per_store < 1:
            raise InvalidProfile("store_count and transactions_per_store must be >= 1")
        if not 0.0 < self.item_count_p <= 1.0:
            raise InvalidProfile("item_count_p must be in (0, 1]")
        if self.max_items < 1:
            raise InvalidProfile("max_items must be >= 1")
        if abs(sum(self.tender_count_weights) - 1.0) > 1e-9:
            raise InvalidProfile("tender_count_weights must sum to 1")


def easy_profile(seed: int, store_count: int = 4, transactions_per_store: int = 2000,
                 rates: tuple[float, float, float] = (0.18, 0.10, 0.06),
                 taxonomy: ErrorTaxonomy | None = None) -> GeneratorProfile:
    """Acceptance-grade profile: all tender classes EASY at the given rates."""
    taxonomy = taxonomy or default_taxonomy()
    model = tuple(ErrorModelSpec(cls, rate, EASY)
                  for cls, rate in zip(taxonomy.classes, rates))
    return GeneratorProfile(seed=seed, store_count=store_count,
                            transactions_per_store=transactions_per_store,
                            error_model=model)


@dataclass(frozen=True)
class InjectedError:
    key: TransactionKey
    class_id: int
    class_name: str
    row_id: int
    field_name: str
    erroneous_value: str    # wire form of the corrupted (pre-correction) value
    correct_value: str      # wire form of the corrected value now in the TLOG


@dataclass(frozen=True)
class Corpus:
    tlog: bytes
    plog: bytes
    injected: tuple[InjectedError, ...]
    profile: GeneratorProfile

    def manifest_json(self) -> str:
        from .logstore import format_date, format_timestamp
        payload = {
            "seed": self.profile.seed,
            "store_count": self.profile.store_count,
            "transactions_per_store": self.profile.transactions_per_store,
            "injected": [
                {
                    "key": [e.key.store_number, format_date(e.key.business_date),
                            e.key.transaction_index, format_timestamp(e.key.timestamp)],
                    "class_id": e.class_id,
                    "class_name": e.class_name,
                    "row_id": e.row_id,
                    "field_name": e.field_name,
                    "erroneous_value": e.erroneous_value,
                    "correct_value": e.correct_value,
                }
                for e in self.injected
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def manifest_from_json(text: str) -> list[InjectedError]:
    from .logstore import parse_date, parse_timestamp
    raw = json.loads(text)
    out = []
    for item in raw["injected"]:
        store, bdate, index, ts = item["key"]
        out.append(InjectedError(
            key=TransactionKey(int(store), parse_date(bdate), int(index), parse_timestamp(ts)),
            class_id=int(item["class_id"]),
            class_name=item["class_name"],
            row_id=int(item["row_id"]),
            field_name=item["field_name"],
            erroneous_value=item["erroneous_value"],
            correct_value=item["correct_value"],
        ))
    return out


def _weighted_choice(rng: random.Random, pairs) -> str:
    roll = rng.random()
    acc = 0.0
    for value, weight in pairs:
        acc += weight
        if roll < acc:
            return value
    return pairs[-1][0]


def _cents(rng: random.Random, low: int, high: int) -> Decimal:
    return Decimal(rng.randint(low, high)) / 100


def _geometric_items(rng: random.Random, p: float, cap: int) -> int:
    count = 1
    while count < cap and rng.random() > p:
        count += 1
    return count


def _corrupt_value(rng: random.Random, correct: str, spec: ErrorModelSpec,
                   codes: tuple[str, ...]) -> str:
    wrong = [c for c in codes if c != correct]
    if spec.learnability == HARD:
        return wrong[rng.randrange(len(wrong))]
    biased = [c for c in EASY_BIAS_CODES if c != correct]
    plain = [c for c in wrong if c not in EASY_BIAS_CODES]
    if biased and rng.random() < EASY_BIAS_PROBABILITY:
        return biased[rng.randrange(len(biased))]
    pool = plain or biased
    return pool[rng.randrange(len(pool))]


def _build_transaction(rng: random.Random, key: TransactionKey,
                       profile: GeneratorProfile) -> Transaction:
    records = []
    row = 0

    def add(qualifier, parent, attrs):
        nonlocal row
        records.append(TransactionRecord(key, row, qualifier, parent, attrs))
        row += 1

    txn_type = "RETURN" if rng.random() < 0.05 else "SALE"
    add(RecordQualifier.HEADER, None, {})  # total filled in after children
    header_row = 0

    extended_total = Decimal(0)
    discount_total = Decimal(0)
    item_count = _geometric_items(rng, profile.item_count_p, profile.max_items)
    for _ in range(item_count):
        quantity = rng.randint(1, 5)
        unit_price = _cents(rng, 99, 4999)
        extended = unit_price * quantity
        item_row = row
        add(RecordQualifier.ITEM, header_row, {
            "PRODUCT_CODE": Code(profile.product_codes[rng.randrange(len(profile.product_codes))]),
            "QUANTITY": Number(Decimal(quantity)),
            "UNIT_PRICE": Number(unit_price),
            "EXTENDED_AMOUNT": Number(extended),
        })
        extended_total += extended
        if rng.random() < 0.25:
            amount = min(extended, _cents(rng, 50, 500))
            add(RecordQualifier.ITEM_DISCOUNT, item_row, {
                "DISCOUNT_CODE": Code("PROMO"),
                "DISCOUNT_AMOUNT": Number(amount),
            })
            discount_total += amount

    if rng.random() < 0.15:
        amount = min(extended_total - discount_total, _cents(rng, 100, 1000))
        if amount > 0:
            add(RecordQualifier.TXN_DISCOUNT, header_row, {
                "DISCOUNT_CODE": Code("LOYALTY"),
                "DISCOUNT_AMOUNT": Number(amount),
            })
            discount_total += amount

    taxable = extended_total - discount_total
    tax = (taxable * Decimal("0.05")).quantize(Decimal("0.01"))
    add(RecordQualifier.TAX, header_row, {
        "TAX_CODE": Code("GST"),
        "TAX_AMOUNT": Number(tax),
    })

    tender_count = 1 + int(_weighted_choice(
        rng, tuple((str(i), w) for i, w in enumerate(profile.tender_count_weights))))
    for _ in range(tender_count):
        tender_type = _weighted_choice(rng, _CLEAN_TYPE_WEIGHTS)
        low, high = _AMOUNT_BUCKETS[tender_type]
        if rng.random() < MEDIA_AGREEMENT_PROBABILITY:
            media = _MEDIA_FOR_TYPE[tender_type]
        else:
            others = [m for m in TENDER_MEDIA_CODES if m != _MEDIA_FOR_TYPE[tender_type]]
            media = others[rng.randrange(len(others))]
        add(RecordQualifier.TENDER, header_row, {
            "TENDER_TYPE_CODE": Code(tender_type),
            "TENDER_AMOUNT": Number(_cents(rng, low, high)),
            "TENDER_MEDIA_CODE": Code(media),
        })

    total = extended_total - discount_total + tax
    records[0] = TransactionRecord(key, 0, RecordQualifier.HEADER, None, {
        "TRANSACTION_TYPE": Code(txn_type),
        "TOTAL_AMOUNT": Number(total),
    })
    return build_transaction(records)


def generate_corpus(profile: GeneratorProfile) -> Corpus:
    """Emit (tlog bytes, plog bytes, ground-truth manifest); byte-stable per seed."""
    from .logstore import value_to_wire

    rng = random.Random(profile.seed)
    base_time = datetime.combine(profile.business_date, datetime.min.time(),
                                 tzinfo=timezone.utc) + timedelta(hours=8)

    tlog_records = []
    plog_entries: list[ChangeLogEntry] = []
    injected: list[InjectedError] = []

    for store in range(1, profile.store_count + 1):
        for index in range(1, profile.transactions_per_store + 1):
            key = TransactionKey(
                store_number=store,
                business_date=profile.business_date,
                transaction_index=index,
                timestamp=base_time + timedelta(minutes=index - 1, seconds=store),
            )
            txn = _build_transaction(rng, key, profile)

            corruptions = []
            for spec in profile.error_model:
                target_rows = sorted(
                    (r for r in txn.records if r.qualifier is spec.error_class.qualifier),
                    key=lambda r: r.row_id)
                if spec.error_class.ordinal > len(target_rows):
                    continue
                if rng.random() >= spec.injection_rate:
                    continue
                target = target_rows[spec.error_class.ordinal - 1]
                correct = target.get(spec.error_class.field_name)
                corrupted = Code(_corrupt_value(
                    rng, correct.value, spec, profile.tender_type_codes))
                corruptions.append((spec, target.row_id, corrupted, correct))

            sequence = 0
            for spec, row_id, corrupted, correct in corruptions:
                sequence += 1
                plog_entries.append(error_logged(
                    key, sequence,
                    error_code=f"E_{spec.error_class.name.upper()}",
                    task_name="VALIDATE_TENDER",
                    logged_at=key.timestamp + timedelta(minutes=5),
                ))
            for spec, row_id, corrupted, correct in corruptions:
                sequence += 1
                plog_entries.append(field_changed(
                    key, sequence, row_id, spec.error_class.field_name,
                    old_value=corrupted, new_value=correct,
                    logged_at=key.timestamp + timedelta(hours=4),
                    task_name="WORKBENCH_FIX",
                ))
                injected.append(InjectedError(
                    key=key,
                    class_id=spec.error_class.id,
                    class_name=spec.error_class.name,
                    row_id=row_id,
                    field_name=spec.error_class.field_name,
                    erroneous_value=value_to_wire(corrupted),
                    correct_value=value_to_wire(correct),
                ))

            tlog_records.extend(txn.records)

    return Corpus(
        tlog=write_tlog(tlog_records),
        plog=write_plog(plog_entries),
        injected=tuple(injected),
        profile=profile,
    )


def write_corpus(corpus: Corpus, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "tlog": out / "tlog.csv",
        "plog": out / "plog.csv",
        "manifest": out / "ground_truth.json",
    }
    paths["tlog"].write_bytes(corpus.tlog)
    paths["plog"].write_bytes(corpus.plog)
    paths["manifest"].write_text(corpus.manifest_json(), encoding="utf-8")
    return paths


# ---------------------------------------------------------------------------
# Ground-truth oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleMismatch:
    injected: InjectedError
    found: str
    reason: str


@dataclass(frozen=True)
class OracleReport:
    checked: int
    mismatches: tuple[OracleMismatch, ...]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def oracle_check(injected: Iterable[InjectedError],
                 results: Iterable[ReconstructionResult]) -> OracleReport:
    """Verify replay output against the ground-truth manifest."""
    from .logstore import value_to_wire

    by_key: dict[TransactionKey, ReconstructionResult] = {
        r.corrected.key: r for r in results}
    checked = 0
    mismatches: list[OracleMismatch] = []
    for expectation in injected:
        checked += 1
        result = by_key.get(expectation.key)
        if result is None:
            mismatches.append(OracleMismatch(
                expectation, "", "transaction was never reconstructed"))
            continue
        found = result.erroneous.get_field(expectation.row_id, expectation.field_name)
        found_wire = value_to_wire(found)
        if found_wire != expectation.erroneous_value:
            mismatches.append(OracleMismatch(
                expectation, found_wire,
                "reconstructed value differs from injected erroneous value"))
    return OracleReport(checked=checked, mismatches=tuple(mismatches))
