"""Fixed-length feature vectors, error labels, datasets, and the feature file.

The schema is the contract: an ordered list of transaction-level descriptors
plus an ordered per-item-slot block repeated ``max_item_slots`` times. Every
vector produced under a schema has the same length and the same meaning per
position, and the schema fingerprint travels with vectors, datasets, and
models so mismatches fail loudly instead of silently misaligning columns.

Code fields are encoded as vocabulary indices (index 0 is reserved for
unknown codes); the linear learner one-hot expands them later, tree learners
split on the index directly.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

from .errors import TxcError
from .logstore import ChangeKind, ChangeLogEntry, LogStore
from .prep import FilterPolicy, normalize, qualify
from .replay import reconstruct
from .txmodel import (
    Code,
    Number,
    RecordQualifier,
    Transaction,
    TransactionKey,
)
from . import logstore as _wire

SPLIT_TRAIN = 0
SPLIT_TEST = 1
SPLIT_VALIDATION = 2
SPLIT_NAMES = ("TRAIN", "TEST", "VALIDATION")


class FeatureError(TxcError):
    module = "features"


class TooManyItems(FeatureError):
    pass


class SchemaMismatch(FeatureError):
    pass


class FingerprintMismatch(FeatureError):
    pass


class ValueOutsideDomain(FeatureError):
    pass


class InsufficientData(FeatureError):
    pass


def _fingerprint(payload) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

DERIVED_FEATURES = (
    "item_count",
    "tender_count",
    "total_discount_ratio",
    "mean_unit_price",
    "tax_to_total_ratio",
)


@dataclass(frozen=True)
class FeatureDescriptor:
    """One position in the vector: where the value comes from and how to encode it.

    kind:
      derived        -- computed from the whole transaction (``derived`` names it)
      header_field   -- attribute of the header record
      tender_field   -- attribute of the ``ordinal``-th tender (0 when absent)
      tender_amount_bucket -- 1-based interval index of the ordinal-th tender's
                        amount against ``boundaries`` (0 when absent); payment
                        bands are a standard retail derived feature
      item_presence  -- 1.0 when the item slot is occupied (item block only)
      item_field     -- attribute of the slot's item (item block only)
      item_discount_total -- sum of the slot item's discount amounts
    ``vocabulary`` marks the value categorical: encoded as index in that
    vocabulary, unknown codes map to the reserved index 0.
    """

    name: str
    kind: str
    field: str | None = None
    ordinal: int | None = None
    vocabulary: str | None = None
    derived: str | None = None
    boundaries: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        for attr in ("field", "ordinal", "vocabulary", "derived"):
            value = getattr(self, attr)
            if value is not None:
                out[attr] = value
        if self.boundaries is not None:
            out["boundaries"] = list(self.boundaries)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "FeatureDescriptor":
        boundaries = raw.get("boundaries")
        return cls(
            name=raw["name"], kind=raw["kind"], field=raw.get("field"),
            ordinal=raw.get("ordinal"), vocabulary=raw.get("vocabulary"),
            derived=raw.get("derived"),
            boundaries=None if boundaries is None else tuple(float(b) for b in boundaries),
        )


@dataclass(frozen=True)
class FeatureSchema:
    version: int
    txn_features: tuple[FeatureDescriptor, ...]
    item_slot_features: tuple[FeatureDescriptor, ...]
    max_item_slots: int
    vocabularies: dict[str, tuple[str, ...]]

    def __post_init__(self):
        object.__setattr__(self, "vocabularies",
                           {k: tuple(v) for k, v in self.vocabularies.items()})
        names = [d.name for d in self.txn_features] + [d.name for d in self.item_slot_features]
        if len(set(names)) != len(names):
            raise SchemaMismatch("duplicate descriptor names in schema")
        for desc in self.txn_features + self.item_slot_features:
            if desc.vocabulary is not None and desc.vocabulary not in self.vocabularies:
                raise SchemaMismatch(f"descriptor {desc.name} references unknown "
                                     f"vocabulary {desc.vocabulary!r}")
            if desc.kind == "derived" and desc.derived not in DERIVED_FEATURES:
                raise SchemaMismatch(f"unknown derived feature: {desc.derived!r}")
            if desc.kind == "tender_amount_bucket" and not desc.boundaries:
                raise SchemaMismatch(f"descriptor {desc.name} needs bucket boundaries")

    @property
    def vector_length(self) -> int:
        return len(self.txn_features) + self.max_item_slots * len(self.item_slot_features)

    @property
    def fingerprint(self) -> str:
        return _fingerprint(self.to_dict())

    def feature_names(self) -> tuple[str, ...]:
        names = [d.name for d in self.txn_features]
        for slot in range(1, self.max_item_slots + 1):
            names.extend(f"item{slot}_{d.name}" for d in self.item_slot_features)
        return tuple(names)

    def categorical_cardinalities(self) -> tuple[tuple[int, int], ...]:
        """(vector index, vocabulary size) for every categorical position."""
        out = []
        position = 0
        for desc in self.txn_features:
            if desc.vocabulary is not None:
                out.append((position, len(self.vocabularies[desc.vocabulary])))
            position += 1
        for _ in range(self.max_item_slots):
            for desc in self.item_slot_features:
                if desc.vocabulary is not None:
                    out.append((position, len(self.vocabularies[desc.vocabulary])))
                position += 1
        return tuple(out)

    def code_index(self, vocabulary: str, code: str) -> int:
        try:
            return self.vocabularies[vocabulary].index(code) + 1
        except ValueError:
            return 0  # reserved unknown-code index

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "txn_features": [d.to_dict() for d in self.txn_features],
            "item_slot_features": [d.to_dict() for d in self.item_slot_features],
            "max_item_slots": self.max_item_slots,
            "vocabularies": {k: list(v) for k, v in sorted(self.vocabularies.items())},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FeatureSchema":
        return cls(
            version=int(raw["version"]),
            txn_features=tuple(FeatureDescriptor.from_dict(d) for d in raw["txn_features"]),
            item_slot_features=tuple(FeatureDescriptor.from_dict(d) for d in raw["item_slot_features"]),
            max_item_slots=int(raw["max_item_slots"]),
            vocabularies={k: tuple(v) for k, v in raw["vocabularies"].items()},
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "FeatureSchema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


TENDER_TYPE_CODES = ("CASH", "CREDIT", "DEBIT", "GIFT", "VOUCHER")
TENDER_MEDIA_CODES = ("DRAWER", "VISA", "INTERAC", "GIFTCARD", "COUPON")


def default_schema(max_item_slots: int = 20, product_codes: tuple[str, ...] | None = None,
                   ) -> FeatureSchema:
    """The shipped default encoding; any part can be replaced via config."""
    products = tuple(product_codes) if product_codes else tuple(
        f"P{i:03d}" for i in range(1, 41))
    txn_features = [
        FeatureDescriptor("item_count", "derived", derived="item_count"),
        FeatureDescriptor("tender_count", "derived", derived="tender_count"),
        FeatureDescriptor("total_discount_ratio", "derived", derived="total_discount_ratio"),
        FeatureDescriptor("mean_unit_price", "derived", derived="mean_unit_price"),
        FeatureDescriptor("tax_to_total_ratio", "derived", derived="tax_to_total_ratio"),
        FeatureDescriptor("total_amount", "header_field", field="TOTAL_AMOUNT"),
        FeatureDescriptor("transaction_type", "header_field", field="TRANSACTION_TYPE",
                          vocabulary="transaction_type"),
    ]
    for ordinal in (1, 2, 3):
        txn_features.extend([
            FeatureDescriptor(f"tender{ordinal}_type", "tender_field", field="TENDER_TYPE_CODE",
                              ordinal=ordinal, vocabulary="tender_type"),
            FeatureDescriptor(f"tender{ordinal}_amount", "tender_field", field="TENDER_AMOUNT",
                              ordinal=ordinal),
            FeatureDescriptor(f"tender{ordinal}_amount_band", "tender_amount_bucket",
                              field="TENDER_AMOUNT", ordinal=ordinal,
                              boundaries=(25.0, 60.0, 100.0, 140.0)),
            FeatureDescriptor(f"tender{ordinal}_media", "tender_field", field="TENDER_MEDIA_CODE",
                              ordinal=ordinal, vocabulary="tender_media"),
        ])
    item_slot_features = [
        FeatureDescriptor("present", "item_presence"),
        FeatureDescriptor("product", "item_field", field="PRODUCT_CODE", vocabulary="product"),
        FeatureDescriptor("quantity", "item_field", field="QUANTITY"),
        FeatureDescriptor("unit_price", "item_field", field="UNIT_PRICE"),
        FeatureDescriptor("extended_amount", "item_field", field="EXTENDED_AMOUNT"),
        FeatureDescriptor("discount_total", "item_discount_total"),
    ]
    return FeatureSchema(
        version=1,
        txn_features=tuple(txn_features),
        item_slot_features=tuple(item_slot_features),
        max_item_slots=max_item_slots,
        vocabularies={
            "transaction_type": ("SALE", "RETURN"),
            "tender_type": TENDER_TYPE_CODES,
            "tender_media": TENDER_MEDIA_CODES,
            "product": products,
        },
    )


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureVector:
    schema_fingerprint: str
    values: np.ndarray


def _numeric(value) -> float:
    return float(value.value) if isinstance(value, Number) else 0.0


def _decimal(value) -> Decimal:
    return value.value if isinstance(value, Number) else Decimal(0)


def _derived_value(name: str, txn: Transaction) -> float:
    items = txn.items
    if name == "item_count":
        return float(len(items))
    if name == "tender_count":
        return float(len(txn.tenders))
    total = _decimal(txn.header.get("TOTAL_AMOUNT"))
    if name == "total_discount_ratio":
        discounts = Decimal(0)
        for qualifier in (RecordQualifier.ITEM_DISCOUNT, RecordQualifier.TXN_DISCOUNT):
            for rec in txn.of_qualifier(qualifier):
                discounts += _decimal(rec.get("DISCOUNT_AMOUNT"))
        return float(discounts / total) if total else 0.0
    if name == "mean_unit_price":
        if not items:
            return 0.0
        prices = [_decimal(i.get("UNIT_PRICE")) for i in items]
        return float(sum(prices) / len(prices))
    if name == "tax_to_total_ratio":
        taxes = sum((_decimal(r.get("TAX_AMOUNT")) for r in txn.of_qualifier(RecordQualifier.TAX)),
                    Decimal(0))
        return float(taxes / total) if total else 0.0
    raise SchemaMismatch(f"unknown derived feature: {name!r}")


def _encode_field(schema: FeatureSchema, desc: FeatureDescriptor, value) -> float:
    if desc.vocabulary is not None:
        if isinstance(value, Code):
            return float(schema.code_index(desc.vocabulary, value.value))
        return 0.0
    return _numeric(value)


def extract(txn: Transaction, schema: FeatureSchema) -> FeatureVector:
    """Encode a qualified, normalized transaction as a fixed-length vector."""
    items = sorted(txn.items, key=lambda r: r.row_id)
    if len(items) > schema.max_item_slots:
        raise TooManyItems(
            f"{len(items)} items exceeds the schema's {schema.max_item_slots} slots")
    tenders = sorted(txn.tenders, key=lambda r: r.row_id)

    values = np.zeros(schema.vector_length, dtype=np.float64)
    pos = 0
    for desc in schema.txn_features:
        if desc.kind == "derived":
            values[pos] = _derived_value(desc.derived, txn)
        elif desc.kind == "header_field":
            values[pos] = _encode_field(schema, desc, txn.header.get(desc.field))
        elif desc.kind == "tender_field":
            if desc.ordinal is not None and desc.ordinal <= len(tenders):
                rec = tenders[desc.ordinal - 1]
                values[pos] = _encode_field(schema, desc, rec.get(desc.field))
        elif desc.kind == "tender_amount_bucket":
            if desc.ordinal is not None and desc.ordinal <= len(tenders):
                rec = tenders[desc.ordinal - 1]
                amount = rec.get(desc.field)
                if isinstance(amount, Number):
                    raw = float(amount.value)
                    values[pos] = 1.0 + sum(1 for b in desc.boundaries if raw >= b)
        else:
            raise SchemaMismatch(f"descriptor kind {desc.kind!r} not valid at txn level")
        pos += 1

    for slot in range(schema.max_item_slots):
        item = items[slot] if slot < len(items) else None
        for desc in schema.item_slot_features:
            if item is None:
                pass  # empty slot stays all-zero, presence flag included
            elif desc.kind == "item_presence":
                values[pos] = 1.0
            elif desc.kind == "item_field":
                values[pos] = _encode_field(schema, desc, item.get(desc.field))
            elif desc.kind == "item_discount_total":
                total = sum((_decimal(c.get("DISCOUNT_AMOUNT"))
                             for c in txn.children_of(item.row_id)
                             if c.qualifier is RecordQualifier.ITEM_DISCOUNT), Decimal(0))
                values[pos] = float(total)
            else:
                raise SchemaMismatch(f"descriptor kind {desc.kind!r} not valid in item block")
            pos += 1

    return FeatureVector(schema.fingerprint, values)


# ---------------------------------------------------------------------------
# Error taxonomy and labels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorClass:
    """One detectable error type: a (qualifier, field, ordinal) target."""

    id: int
    name: str
    qualifier: RecordQualifier
    field_name: str
    ordinal: int
    domain: tuple[str, ...]  # allowed correction values; empty for numeric fields

    def to_dict(self) -> dict:
        return {
            "id": self.id, "name": self.name, "qualifier": self.qualifier.value,
            "field_name": self.field_name, "ordinal": self.ordinal,
            "domain": list(self.domain),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ErrorClass":
        return cls(
            id=int(raw["id"]), name=raw["name"],
            qualifier=RecordQualifier(raw["qualifier"]),
            field_name=raw["field_name"], ordinal=int(raw["ordinal"]),
            domain=tuple(raw["domain"]),
        )


@dataclass(frozen=True)
class ErrorTaxonomy:
    classes: tuple[ErrorClass, ...]

    def __post_init__(self):
        ids = [c.id for c in self.classes]
        if ids != list(range(len(ids))):
            raise ValueError("error class ids must be dense from 0 in order")
        if any(c.ordinal < 1 for c in self.classes):
            raise ValueError("error class ordinals are 1-based")

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def fingerprint(self) -> str:
        return _fingerprint(self.to_dict())

    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.classes)

    def by_name(self, name: str) -> ErrorClass:
        for cls in self.classes:
            if cls.name == name:
                return cls
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"classes": [c.to_dict() for c in self.classes]}

    @classmethod
    def from_dict(cls, raw: dict) -> "ErrorTaxonomy":
        return cls(tuple(ErrorClass.from_dict(c) for c in raw["classes"]))

    @classmethod
    def from_file(cls, path: str | Path) -> "ErrorTaxonomy":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_taxonomy() -> ErrorTaxonomy:
    """Tender-type errors on the first three tenders, the canonical family."""
    return ErrorTaxonomy(tuple(
        ErrorClass(
            id=i, name=f"tender{i + 1}_type", qualifier=RecordQualifier.TENDER,
            field_name="TENDER_TYPE_CODE", ordinal=i + 1, domain=TENDER_TYPE_CODES,
        )
        for i in range(3)
    ))


@dataclass(frozen=True)
class LabelVector:
    taxonomy_fingerprint: str
    bits: np.ndarray


def resolve_target_row(txn: Transaction, error_class: ErrorClass) -> int | None:
    """row_id of the ordinal-th record of the class's qualifier, if present."""
    records = sorted(txn.of_qualifier(error_class.qualifier), key=lambda r: r.row_id)
    if error_class.ordinal <= len(records):
        return records[error_class.ordinal - 1].row_id
    return None


def _entry_matches(entry: ChangeLogEntry, txn: Transaction, error_class: ErrorClass) -> bool:
    if entry.kind is not ChangeKind.FIELD_CHANGED:
        return False
    if entry.field_name != error_class.field_name:
        return False
    if not txn.has_row(entry.row_id):
        return False
    rec = txn.record(entry.row_id)
    if rec.qualifier is not error_class.qualifier:
        return False
    return txn.ordinal_of(entry.row_id) == error_class.ordinal


def derive_detection_labels(history: list[ChangeLogEntry], txn: Transaction,
                            taxonomy: ErrorTaxonomy) -> LabelVector:
    """Bit i is 1 iff some change in the history targets class i's position."""
    bits = np.zeros(len(taxonomy), dtype=np.uint8)
    for entry in history:
        for cls in taxonomy.classes:
            if _entry_matches(entry, txn, cls):
                bits[cls.id] = 1
    return LabelVector(taxonomy.fingerprint, bits)


def uncovered_changes(history: list[ChangeLogEntry], txn: Transaction,
                      taxonomy: ErrorTaxonomy) -> list[ChangeLogEntry]:
    """Field changes the taxonomy has no class for (reported, not silently lost)."""
    out = []
    for entry in history:
        if entry.kind is not ChangeKind.FIELD_CHANGED:
            continue
        if not any(_entry_matches(entry, txn, cls) for cls in taxonomy.classes):
            out.append(entry)
    return out


def derive_correction_target(entry: ChangeLogEntry, error_class: ErrorClass) -> int:
    """Index of the corrected (new) value in the class's value domain."""
    if entry.kind is not ChangeKind.FIELD_CHANGED:
        raise ValueError("correction targets come from FIELD_CHANGED entries")
    if entry.field_name != error_class.field_name:
        raise ValueError(
            f"entry targets {entry.field_name!r}, class expects {error_class.field_name!r}")
    new = entry.new_value
    raw = new.value if isinstance(new, (Code,)) else None
    if raw is None:
        raise ValueOutsideDomain(f"new value {new!r} is not a code")
    try:
        return error_class.domain.index(raw)
    except ValueError:
        raise ValueOutsideDomain(
            f"{raw!r} is not among {list(error_class.domain)}") from None


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Aligned arrays of features plus labels or value targets, with splits."""

    kind: str  # "detection" | "correction"
    schema: FeatureSchema
    taxonomy: ErrorTaxonomy
    X: np.ndarray                      # (n, d) float64
    split: np.ndarray                  # (n,) uint8; SPLIT_* constants
    provenance: tuple[TransactionKey, ...]
    labels: np.ndarray | None = None   # (n, L) uint8, detection only
    targets: np.ndarray | None = None  # (n,) int32, correction only
    class_id: int | None = None        # correction only
    uncovered_count: int = 0
    skipped_replay_count: int = 0
    disqualified_count: int = 0

    @property
    def schema_fingerprint(self) -> str:
        return self.schema.fingerprint

    @property
    def taxonomy_fingerprint(self) -> str:
        return self.taxonomy.fingerprint

    @property
    def class_domain(self) -> tuple[str, ...] | None:
        if self.class_id is None:
            return None
        return self.taxonomy.classes[self.class_id].domain

    def __len__(self) -> int:
        return self.X.shape[0]

    def rows_for(self, split: int) -> np.ndarray:
        return np.flatnonzero(self.split == split)


def _largest_remainder_counts(n: int, ratios: tuple[float, ...]) -> list[int]:
    raw = [n * r for r in ratios]
    counts = [int(x) for x in raw]
    remainder = n - sum(counts)
    by_fraction = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in range(remainder):
        counts[by_fraction[i % len(ratios)]] += 1
    return counts


def assign_splits(strata: list[int] | np.ndarray, ratios: tuple[float, float, float],
                  rng: np.random.Generator) -> np.ndarray:
    """Stratified TRAIN/TEST/VALIDATION assignment with largest-remainder counts."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    strata = np.asarray(strata)
    out = np.zeros(len(strata), dtype=np.uint8)
    for stratum in sorted(set(strata.tolist())):
        indices = np.flatnonzero(strata == stratum)
        shuffled = indices[rng.permutation(len(indices))]
        counts = _largest_remainder_counts(len(indices), ratios)
        cursor = 0
        for split_code, count in enumerate(counts):
            out[shuffled[cursor:cursor + count]] = split_code
            cursor += count
    return out


def _prepare_erroneous(store: LogStore, schema: FeatureSchema, taxonomy: ErrorTaxonomy,
                       policy: FilterPolicy):
    """Reconstruct, qualify, normalize, and featurize every corrected transaction."""
    rows = []
    skipped_replay = 0
    disqualified = 0
    uncovered_total = 0
    for txn, history in store.corrected_transactions():
        result = reconstruct(txn, history)
        if result.skipped:
            skipped_replay += 1
            continue
        erroneous = result.erroneous
        if not qualify(erroneous, policy).accepted:
            disqualified += 1
            continue
        normalized = normalize(erroneous)
        labels = derive_detection_labels(history, txn, taxonomy)
        uncovered_total += len(uncovered_changes(history, txn, taxonomy))
        if not labels.bits.any():
            continue  # every change fell outside the taxonomy
        vector = extract(normalized, schema)
        rows.append((txn.key, vector.values, labels.bits, history, normalized))
    return rows, skipped_replay, disqualified, uncovered_total


def _prepare_clean(store: LogStore, schema: FeatureSchema, policy: FilterPolicy):
    rows = []
    disqualified = 0
    for txn in store.clean_transactions():
        if not qualify(txn, policy).accepted:
            disqualified += 1
            continue
        vector = extract(normalize(txn), schema)
        rows.append((txn.key, vector.values))
    return rows, disqualified


def build_detection_dataset(store: LogStore, schema: FeatureSchema, taxonomy: ErrorTaxonomy,
                            split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
                            seed: int = 0, policy: FilterPolicy | None = None) -> Dataset:
    """Balanced multi-label dataset: reconstructed erroneous rows + clean rows.

    Clean transactions are downsampled to match the erroneous count. Splits
    are stratified per label pattern. Deterministic for a given seed.
    """
    policy = policy or FilterPolicy()
    rng = np.random.default_rng(seed)

    erroneous, skipped_replay, disq_err, uncovered = _prepare_erroneous(
        store, schema, taxonomy, policy)
    clean, disq_clean = _prepare_clean(store, schema, policy)

    if not erroneous:
        raise InsufficientData("no usable corrected transactions")
    positives = np.sum(np.stack([bits for _, _, bits, _, _ in erroneous]), axis=0)
    for cls in taxonomy.classes:
        count = int(positives[cls.id])
        if 0 < count < 10:
            raise InsufficientData(
                f"class {cls.name} has only {count} positive samples (need >= 10)")

    if len(clean) > len(erroneous):
        pick = rng.choice(len(clean), size=len(erroneous), replace=False)
        clean = [clean[i] for i in sorted(pick.tolist())]

    keys: list[TransactionKey] = []
    vectors: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    for key, vec, bits, _, _ in erroneous:
        keys.append(key)
        vectors.append(vec)
        labels.append(bits)
    zero = np.zeros(len(taxonomy), dtype=np.uint8)
    for key, vec in clean:
        keys.append(key)
        vectors.append(vec)
        labels.append(zero.copy())

    X = np.stack(vectors)
    Y = np.stack(labels)
    strata = [int(sum(b << i for i, b in enumerate(bits.tolist()))) for bits in labels]
    split = assign_splits(strata, split_ratios, rng)

    return Dataset(
        kind="detection", schema=schema, taxonomy=taxonomy, X=X, split=split,
        provenance=tuple(keys), labels=Y,
        uncovered_count=uncovered, skipped_replay_count=skipped_replay,
        disqualified_count=disq_err + disq_clean,
    )


def build_correction_dataset(store: LogStore, schema: FeatureSchema, taxonomy: ErrorTaxonomy,
                             error_class: ErrorClass,
                             split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
                             seed: int = 0, policy: FilterPolicy | None = None) -> Dataset:
    """Value-prediction dataset for one error class.

    Rows are the reconstructed erroneous transactions whose history corrected
    this class's field; the target is the corrected value's domain index. The
    dominant value is capped at 3x the median value count, and splits are
    stratified per target value.
    """
    policy = policy or FilterPolicy()
    rng = np.random.default_rng(seed)

    erroneous, _, _, _ = _prepare_erroneous(store, schema, taxonomy, policy)
    keys: list[TransactionKey] = []
    vectors: list[np.ndarray] = []
    targets: list[int] = []
    for key, vec, bits, history, _ in erroneous:
        if not bits[error_class.id]:
            continue
        matches = [e for e in history
                   if _entry_matches(e, store.transaction(key), error_class)]
        entry = max(matches, key=lambda e: e.sequence)
        try:
            target = derive_correction_target(entry, error_class)
        except ValueOutsideDomain:
            continue
        keys.append(key)
        vectors.append(vec)
        targets.append(target)

    if len(targets) < 10:
        raise InsufficientData(
            f"class {error_class.name} has only {len(targets)} correction samples")

    targets_arr = np.array(targets, dtype=np.int32)
    counts = {int(v): int(c) for v, c in zip(*np.unique(targets_arr, return_counts=True))}
    median = float(np.median(list(counts.values())))
    cap = max(1, int(3 * median))
    keep = np.ones(len(targets_arr), dtype=bool)
    for value, count in counts.items():
        if count > cap:
            where = np.flatnonzero(targets_arr == value)
            drop = rng.choice(where, size=count - cap, replace=False)
            keep[drop] = False

    kept = np.flatnonzero(keep)
    X = np.stack([vectors[i] for i in kept])
    y = targets_arr[kept]
    keys = [keys[i] for i in kept]
    split = assign_splits(y, split_ratios, rng)

    return Dataset(
        kind="correction", schema=schema, taxonomy=taxonomy, X=X, split=split,
        provenance=tuple(keys), targets=y, class_id=error_class.id,
    )


# ---------------------------------------------------------------------------
# Feature file: self-describing binary, bit-exact round trip
# ---------------------------------------------------------------------------

_MAGIC = b"TXFEAT01"


def _key_to_json(key: TransactionKey) -> list:
    return [key.store_number, _wire.format_date(key.business_date),
            key.transaction_index, _wire.format_timestamp(key.timestamp)]


def _key_from_json(raw: list) -> TransactionKey:
    return TransactionKey(int(raw[0]), _wire.parse_date(raw[1]), int(raw[2]),
                          _wire.parse_timestamp(raw[3]))


def write_feature_file(dataset: Dataset, path: str | Path) -> str:
    """Write the dataset; returns the file's sha256 (provenance for models)."""
    header = {
        "kind": dataset.kind,
        "schema": dataset.schema.to_dict(),
        "taxonomy": dataset.taxonomy.to_dict(),
        "schema_fingerprint": dataset.schema_fingerprint,
        "taxonomy_fingerprint": dataset.taxonomy_fingerprint,
        "n_rows": int(len(dataset)),
        "n_features": int(dataset.X.shape[1]) if len(dataset) else dataset.schema.vector_length,
        "class_id": dataset.class_id,
        "counts": {
            "uncovered": dataset.uncovered_count,
            "skipped_replay": dataset.skipped_replay_count,
            "disqualified": dataset.disqualified_count,
        },
        "provenance": [_key_to_json(k) for k in dataset.provenance],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", len(header_bytes)))
    buf.write(header_bytes)
    X = np.ascontiguousarray(dataset.X, dtype="<f8")
    for column in range(X.shape[1] if len(dataset) else 0):
        buf.write(X[:, column].tobytes())
    if dataset.kind == "detection":
        buf.write(np.ascontiguousarray(dataset.labels, dtype=np.uint8).tobytes())
    else:
        buf.write(np.ascontiguousarray(dataset.targets, dtype="<i4").tobytes())
    buf.write(np.ascontiguousarray(dataset.split, dtype=np.uint8).tobytes())

    payload = buf.getvalue()
    Path(path).write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def read_feature_file(path: str | Path, expected_schema: FeatureSchema | None = None,
                      expected_taxonomy: ErrorTaxonomy | None = None) -> Dataset:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise FeatureError(f"not a feature file: {Path(path)}")
    (header_len,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + header_len].decode("utf-8"))
    schema = FeatureSchema.from_dict(header["schema"])
    taxonomy = ErrorTaxonomy.from_dict(header["taxonomy"])
    if schema.fingerprint != header["schema_fingerprint"]:
        raise FingerprintMismatch("stored schema does not match its fingerprint")
    if taxonomy.fingerprint != header["taxonomy_fingerprint"]:
        raise FingerprintMismatch("stored taxonomy does not match its fingerprint")
    if expected_schema is not None and expected_schema.fingerprint != schema.fingerprint:
        raise FingerprintMismatch(
            f"feature file was built with schema {schema.fingerprint[:12]}..., "
            f"expected {expected_schema.fingerprint[:12]}...")
    if expected_taxonomy is not None and expected_taxonomy.fingerprint != taxonomy.fingerprint:
        raise FingerprintMismatch("feature file taxonomy does not match the expected one")

    n = header["n_rows"]
    d = header["n_features"]
    offset = 12 + header_len
    X = np.zeros((n, d), dtype=np.float64)
    for column in range(d if n else 0):
        col = np.frombuffer(data, dtype="<f8", count=n, offset=offset)
        X[:, column] = col
        offset += 8 * n
    labels = None
    targets = None
    if header["kind"] == "detection":
        L = len(taxonomy)
        labels = np.frombuffer(data, dtype=np.uint8, count=n * L, offset=offset)
        labels = labels.reshape(n, L).copy()
        offset += n * L
    else:
        targets = np.frombuffer(data, dtype="<i4", count=n, offset=offset).copy()
        offset += 4 * n
    split = np.frombuffer(data, dtype=np.uint8, count=n, offset=offset).copy()

    counts = header.get("counts", {})
    return Dataset(
        kind=header["kind"], schema=schema, taxonomy=taxonomy, X=X, split=split,
        provenance=tuple(_key_from_json(k) for k in header["provenance"]),
        labels=labels, targets=targets, class_id=header.get("class_id"),
        uncovered_count=counts.get("uncovered", 0),
        skipped_replay_count=counts.get("skipped_replay", 0),
        disqualified_count=counts.get("disqualified", 0),
    )


def export_csv(dataset: Dataset, path: str | Path):
    """Debug-friendly delimited export; the binary file is the format of record."""
    names = dataset.schema.feature_names()
    with open(path, "w", encoding="utf-8") as fh:
        target_cols = (list(dataset.taxonomy.names()) if dataset.kind == "detection"
                       else ["target"])
        fh.write(",".join(["split", *target_cols, *names]) + "\n")
        for i in range(len(dataset)):
            row = [SPLIT_NAMES[dataset.split[i]]]
            if dataset.kind == "detection":
                row.extend(str(int(b)) for b in dataset.labels[i])
            else:
                row.append(str(int(dataset.targets[i])))
            row.extend(repr(float(v)) for v in dataset.X[i])
            fh.write(",".join(row) + "\n")
