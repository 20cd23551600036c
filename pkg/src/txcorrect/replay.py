"""Recover the erroneous version of a corrected transaction from its change log.

The TLOG only keeps the current (corrected) state. Walking the FIELD_CHANGED
history backwards and restoring each old value reproduces the state the
transaction was in before the corrections, which is what the detection and
correction models train on.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import TxcError
from .logstore import ChangeKind, ChangeLogEntry
from .txmodel import MISSING, Transaction, UnknownRow


class ReplayError(TxcError):
    module = "replay"


class UnknownRowInHistory(ReplayError):
    pass


@dataclass(frozen=True)
class SkippedChange:
    entry: ChangeLogEntry
    reason: str


@dataclass(frozen=True)
class ReconstructionResult:
    erroneous: Transaction
    corrected: Transaction
    applied: tuple[ChangeLogEntry, ...]   # ascending sequence; forward replay oracle
    skipped: tuple[SkippedChange, ...]


def apply_forward(txn: Transaction, entries: list[ChangeLogEntry] | tuple[ChangeLogEntry, ...]) -> Transaction:
    """Apply FIELD_CHANGED entries forward (field <- new_value), in given order."""
    current = txn
    for entry in entries:
        if entry.kind is not ChangeKind.FIELD_CHANGED:
            continue
        current = current.set_field(entry.row_id, entry.field_name, entry.new_value)
    return current


def reconstruct(corrected: Transaction, history: list[ChangeLogEntry]) -> ReconstructionResult:
    """Invert a correction history over the corrected transaction.

    FIELD_CHANGED entries are undone in reverse sequence order by restoring
    old_value (MISSING old values remove the field again). Before undoing an
    entry the current field value must equal the entry's new_value; on
    mismatch the entry is skipped and reported instead of corrupting the
    reconstruction. ERROR_LOGGED entries are metadata and pass through.

    Raises UnknownRowInHistory when an entry references a row the transaction
    does not have; that is malformed input, not a recoverable skip.
    """
    changes = [e for e in history if e.kind is ChangeKind.FIELD_CHANGED]
    changes.sort(key=lambda e: e.sequence)

    current = corrected
    applied: list[ChangeLogEntry] = []
    skipped: list[SkippedChange] = []
    for entry in reversed(changes):
        if not current.has_row(entry.row_id):
            raise UnknownRowInHistory(
                f"change at sequence {entry.sequence} targets absent row {entry.row_id}")
        found = current.get_field(entry.row_id, entry.field_name)
        if found != entry.new_value:
            skipped.append(SkippedChange(
                entry,
                f"current value {found!r} does not match logged new value "
                f"{entry.new_value!r}"))
            continue
        old = entry.old_value if entry.old_value is not None else MISSING
        current = current.set_field(entry.row_id, entry.field_name, old)
        applied.append(entry)

    applied.sort(key=lambda e: e.sequence)
    return ReconstructionResult(
        erroneous=current,
        corrected=corrected,
        applied=tuple(applied),
        skipped=tuple(skipped),
    )


def transactions_equal(a: Transaction, b: Transaction) -> bool:
    """Field-for-field equality over keys, structure, and attribute values."""
    if a.key != b.key or len(a.records) != len(b.records):
        return False
    for ra, rb in zip(a.records, b.records):
        if (ra.row_id, ra.qualifier, ra.parent_row_id) != (rb.row_id, rb.qualifier, rb.parent_row_id):
            return False
        if ra.attributes != rb.attributes:
            return False
    return True


def verify_roundtrip(result: ReconstructionResult) -> bool:
    """True iff forward-replaying ``applied`` over ``erroneous`` gives ``corrected``."""
    try:
        replayed = apply_forward(result.erroneous, result.applied)
    except UnknownRow:
        return False
    return transactions_equal(replayed, result.corrected)
