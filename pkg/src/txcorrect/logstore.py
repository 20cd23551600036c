"""TLOG/PLOG tables: parse, validate, persist, and query by transaction key.

Two flattened tables hold everything. ``tlog.csv`` carries the current
(post-correction) state of every transaction, one record per row.
``plog.csv`` carries the change history: logged errors and field-level
changes (field name, old value, new value). Both files are UTF-8 CSV with a
declared header row, RFC-4180-style quoting, and LF line endings; the formats
are pinned bit-exact by golden fixtures.

When constructed with a directory path the store is durable: accepted rows
are appended to the two files and the in-memory index is rebuilt from them at
startup.
"""

from __future__ import annotations

import csv
import enum
import io
import threading
from dataclasses import dataclass, replace
from datetime import date, datetime, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable

from .errors import TxcError
from .txmodel import (
    MISSING,
    Code,
    FieldValue,
    Number,
    RecordQualifier,
    Text,
    Transaction,
    TransactionKey,
    TransactionRecord,
    build_transaction,
)

TLOG_COLUMNS = (
    "store_number",
    "business_date",
    "transaction_index",
    "timestamp",
    "row_id",
    "qualifier",
    "parent_row_id",
    "attributes",
)

PLOG_COLUMNS = (
    "store_number",
    "business_date",
    "transaction_index",
    "timestamp",
    "sequence",
    "kind",
    "error_code",
    "task_name",
    "row_id",
    "field_name",
    "old_value",
    "new_value",
    "logged_at",
)


class LogStoreError(TxcError):
    module = "logstore"


class UnreadableSource(LogStoreError):
    pass


class HeaderMismatch(LogStoreError):
    pass


class UnknownKey(LogStoreError):
    pass


class SequenceConflict(LogStoreError):
    pass


@dataclass(frozen=True)
class RowError:
    """One rejected input row: where, what, and why."""

    line: int
    code: str
    reason: str


@dataclass(frozen=True)
class IngestReport:
    added: int
    duplicates: int
    errors: tuple[RowError, ...]


class ChangeKind(enum.Enum):
    ERROR_LOGGED = "ERROR_LOGGED"
    FIELD_CHANGED = "FIELD_CHANGED"


@dataclass(frozen=True)
class ChangeLogEntry:
    """One PLOG event for a key: an error was logged, or a field changed."""

    key: TransactionKey
    sequence: int
    kind: ChangeKind
    logged_at: datetime
    error_code: str | None = None
    task_name: str | None = None
    row_id: int | None = None
    field_name: str | None = None
    old_value: FieldValue | None = None
    new_value: FieldValue | None = None

    def __post_init__(self):
        if self.sequence < 1:
            raise ValueError("sequence must be >= 1")
        if self.kind is ChangeKind.ERROR_LOGGED:
            if not self.error_code or not self.task_name:
                raise ValueError("ERROR_LOGGED needs error_code and task_name")
            if self.row_id is not None or self.field_name is not None:
                raise ValueError("ERROR_LOGGED must not carry field-change payload")
        else:
            if self.row_id is None or not self.field_name:
                raise ValueError("FIELD_CHANGED needs row_id and field_name")
            if self.old_value is None or self.new_value is None:
                raise ValueError("FIELD_CHANGED needs old_value and new_value")
            if self.old_value == self.new_value:
                raise ValueError("FIELD_CHANGED with old_value == new_value is a no-op")
            if self.error_code:
                raise ValueError("FIELD_CHANGED must not carry error_code")


def error_logged(key, sequence, error_code, task_name, logged_at) -> ChangeLogEntry:
    return ChangeLogEntry(
        key=key, sequence=sequence, kind=ChangeKind.ERROR_LOGGED,
        logged_at=logged_at, error_code=error_code, task_name=task_name,
    )


def field_changed(key, sequence, row_id, field_name, old_value, new_value,
                  logged_at, task_name=None) -> ChangeLogEntry:
    return ChangeLogEntry(
        key=key, sequence=sequence, kind=ChangeKind.FIELD_CHANGED,
        logged_at=logged_at, row_id=row_id, field_name=field_name,
        old_value=old_value, new_value=new_value, task_name=task_name,
    )


# ---------------------------------------------------------------------------
# Canonical scalar formats
# ---------------------------------------------------------------------------

def format_timestamp(value: datetime) -> str:
    """ISO-8601 UTC with trailing Z; fraction written only when non-zero."""
    value = value.astimezone(timezone.utc)
    base = value.strftime("%Y-%m-%dT%H:%M:%S")
    if value.microsecond:
        return f"{base}.{value.microsecond:06d}Z"
    return base + "Z"


def parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        raise ValueError(f"timestamp lacks timezone: {raw!r}")
    return parsed.astimezone(timezone.utc)


def format_date(value: date) -> str:
    return value.isoformat()


def parse_date(raw: str) -> date:
    return date.fromisoformat(raw.strip())


# FieldValue wire form: "text:...", "num:...", "code:...", or "missing".
# The payload percent-encodes the few characters that collide with the
# attribute-list syntax (; = %) and line breaks.

_ESCAPES = {"%": "%25", ";": "%3B", "=": "%3D", "\n": "%0A", "\r": "%0D"}


def _escape(payload: str) -> str:
    for char, repl in _ESCAPES.items():
        payload = payload.replace(char, repl)
    return payload


def _unescape(payload: str) -> str:
    for char, repl in _ESCAPES.items():
        if char == "%":
            continue
        payload = payload.replace(repl, char)
    return payload.replace("%25", "%")


def value_to_wire(value: FieldValue) -> str:
    if value is MISSING or value.kind == "missing":
        return "missing"
    if isinstance(value, Number):
        return f"num:{value.value}"
    if isinstance(value, Code):
        return f"code:{_escape(value.value)}"
    if isinstance(value, Text):
        return f"text:{_escape(value.value)}"
    raise TypeError(f"not a FieldValue: {value!r}")


def value_from_wire(raw: str) -> FieldValue:
    if raw == "missing":
        return MISSING
    tag, sep, payload = raw.partition(":")
    if not sep:
        raise ValueError(f"malformed field value: {raw!r}")
    if tag == "num":
        try:
            return Number(Decimal(payload))
        except (InvalidOperation, ValueError) as exc:
            raise ValueError(f"malformed number: {payload!r}") from exc
    if tag == "code":
        return Code(_unescape(payload))
    if tag == "text":
        return Text(_unescape(payload))
    raise ValueError(f"unknown field value tag: {tag!r}")


def attributes_to_wire(attributes: dict[str, FieldValue]) -> str:
    parts = []
    for name, value in attributes.items():
        if not name or any(c in name for c in "=;%\n\r"):
            raise ValueError(f"attribute name not serializable: {name!r}")
        parts.append(f"{name}={value_to_wire(value)}")
    return ";".join(parts)


def attributes_from_wire(raw: str) -> dict[str, FieldValue]:
    attrs: dict[str, FieldValue] = {}
    if not raw:
        return attrs
    for part in raw.split(";"):
        name, sep, payload = part.partition("=")
        if not sep or not name:
            raise ValueError(f"malformed attribute: {part!r}")
        if name in attrs:
            raise ValueError(f"duplicate attribute name: {name!r}")
        attrs[name] = value_from_wire(payload)
    return attrs


# ---------------------------------------------------------------------------
# Row <-> record codecs
# ---------------------------------------------------------------------------

def _key_fields(key: TransactionKey) -> list[str]:
    return [
        str(key.store_number),
        format_date(key.business_date),
        str(key.transaction_index),
        format_timestamp(key.timestamp),
    ]


def _parse_key(cells: list[str]) -> TransactionKey:
    store_raw, date_raw, index_raw, ts_raw = cells
    if not store_raw.strip() or not date_raw.strip() or not index_raw.strip() or not ts_raw.strip():
        raise ValueError("missing key field")
    return TransactionKey(
        store_number=int(store_raw),
        business_date=parse_date(date_raw),
        transaction_index=int(index_raw),
        timestamp=parse_timestamp(ts_raw),
    )


def tlog_row_cells(record: TransactionRecord) -> list[str]:
    return _key_fields(record.key) + [
        str(record.row_id),
        record.qualifier.value,
        "" if record.parent_row_id is None else str(record.parent_row_id),
        attributes_to_wire(record.attributes),
    ]


def parse_tlog_cells(cells: list[str]) -> TransactionRecord:
    if len(cells) != len(TLOG_COLUMNS):
        raise ValueError(f"expected {len(TLOG_COLUMNS)} columns, got {len(cells)}")
    key = _parse_key(cells[:4])
    row_id = int(cells[4])
    qualifier_raw = cells[5].strip()
    try:
        qualifier = RecordQualifier(qualifier_raw)
    except ValueError:
        raise ValueError(f"unknown qualifier: {qualifier_raw!r}") from None
    parent_raw = cells[6].strip()
    parent = None if parent_raw == "" else int(parent_raw)
    attributes = attributes_from_wire(cells[7])
    return TransactionRecord(key, row_id, qualifier, parent, attributes)


def plog_row_cells(entry: ChangeLogEntry) -> list[str]:
    if entry.kind is ChangeKind.ERROR_LOGGED:
        tail = [entry.error_code or "", entry.task_name or "", "", "", "", ""]
    else:
        tail = [
            "",
            entry.task_name or "",
            str(entry.row_id),
            entry.field_name or "",
            value_to_wire(entry.old_value),
            value_to_wire(entry.new_value),
        ]
    return (
        _key_fields(entry.key)
        + [str(entry.sequence), entry.kind.value]
        + tail
        + [format_timestamp(entry.logged_at)]
    )


def parse_plog_cells(cells: list[str]) -> ChangeLogEntry:
    if len(cells) != len(PLOG_COLUMNS):
        raise ValueError(f"expected {len(PLOG_COLUMNS)} columns, got {len(cells)}")
    key = _parse_key(cells[:4])
    sequence = int(cells[4])
    kind_raw = cells[5].strip()
    try:
        kind = ChangeKind(kind_raw)
    except ValueError:
        raise ValueError(f"unknown change kind: {kind_raw!r}") from None
    logged_at = parse_timestamp(cells[12])
    if kind is ChangeKind.ERROR_LOGGED:
        if cells[8].strip() or cells[9].strip() or cells[10].strip() or cells[11].strip():
            raise ValueError("ERROR_LOGGED row carries field-change columns")
        return error_logged(key, sequence, cells[6].strip(), cells[7].strip(), logged_at)
    if cells[6].strip():
        raise ValueError("FIELD_CHANGED row carries error_code")
    old = value_from_wire(cells[10])
    new = value_from_wire(cells[11])
    if old == new:
        raise ValueError("no-op change: old value equals new value")
    return field_changed(
        key, sequence, int(cells[8]), cells[9].strip(), old, new,
        logged_at, task_name=cells[7].strip() or None,
    )


def _write_csv(rows: Iterable[list[str]], header: tuple[str, ...]) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return out.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# The store
# ---------------------------------------------------------------------------

class LogStore:
    """Indexed TLOG rows and PLOG entries, optionally file-backed.

    Reads are lock-free; writes serialize on an internal lock. Feedback
    appends use optimistic sequence checking: pass the last sequence you saw
    and the append fails with SequenceConflict if someone got there first.
    """

    def __init__(self, path: str | Path | None = None, dedupe: bool = True):
        self.dedupe = dedupe
        self._rows: dict[TransactionKey, dict[int, TransactionRecord]] = {}
        self._entries: dict[TransactionKey, list[ChangeLogEntry]] = {}
        self._row_lines: set[str] = set()
        self._entry_lines: set[str] = set()
        self.quarantine: list[tuple[int, str, RowError]] = []
        self._lock = threading.RLock()
        self._path = Path(path) if path is not None else None
        self.startup_errors: list[RowError] = []
        if self._path is not None:
            self._path.mkdir(parents=True, exist_ok=True)
            self._recover()

    # -- persistence --------------------------------------------------------

    @property
    def tlog_path(self) -> Path | None:
        return None if self._path is None else self._path / "tlog.csv"

    @property
    def plog_path(self) -> Path | None:
        return None if self._path is None else self._path / "plog.csv"

    def _recover(self):
        for path, ingest in ((self.tlog_path, self._ingest_tlog_rows),
                             (self.plog_path, self._ingest_plog_rows)):
            if path.exists():
                with open(path, "rb") as fh:
                    report = ingest(fh, persist=False)
                self.startup_errors.extend(report.errors)

    def _append_lines(self, path: Path | None, header: tuple[str, ...],
                      cell_rows: list[list[str]]):
        if path is None or not cell_rows:
            return
        fresh = not path.exists() or path.stat().st_size == 0
        with open(path, "a", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if fresh:
                writer.writerow(header)
            for cells in cell_rows:
                writer.writerow(cells)

    # -- ingest --------------------------------------------------------------

    @staticmethod
    def _read_source(source) -> list[str]:
        if isinstance(source, (str, Path)):
            data = Path(source).read_bytes()
        elif isinstance(source, (bytes, bytearray)):
            data = bytes(source)
        elif hasattr(source, "read"):
            data = source.read()
        else:
            raise UnreadableSource(f"cannot read from {type(source).__name__}")
        if isinstance(data, str):
            data = data.encode("utf-8")
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise UnreadableSource(f"source is not UTF-8: {exc}") from exc
        return text.splitlines()

    def _parse_lines(self, source, columns: tuple[str, ...]):
        lines = self._read_source(source)
        if not lines:
            raise HeaderMismatch("source is empty, expected a header row")
        header = next(csv.reader([lines[0]]))
        if tuple(header) != columns:
            raise HeaderMismatch(f"expected columns {list(columns)}, found {header}")
        for line_no, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            yield line_no, line, next(csv.reader([line]))

    def ingest_tlog(self, source) -> IngestReport:
        """Load TLOG rows. Malformed rows are reported, never silently dropped."""
        with self._lock:
            return self._ingest_tlog_rows(source, persist=True)

    def _ingest_tlog_rows(self, source, persist: bool) -> IngestReport:
        added = 0
        duplicates = 0
        errors: list[RowError] = []
        accepted: list[list[str]] = []
        for line_no, line, cells in self._parse_lines(source, TLOG_COLUMNS):
            try:
                record = parse_tlog_cells(cells)
            except (ValueError, ArithmeticError) as exc:
                code = "MissingKeyField" if "missing key field" in str(exc) else "MalformedRow"
                errors.append(RowError(line_no, code, str(exc)))
                continue
            canonical = ",".join(tlog_row_cells(record))
            if self.dedupe and canonical in self._row_lines:
                duplicates += 1
                continue
            existing = self._rows.get(record.key, {}).get(record.row_id)
            if existing is not None:
                errors.append(RowError(
                    line_no, "DuplicateRow",
                    f"row_id {record.row_id} already stored for this key"))
                continue
            self._rows.setdefault(record.key, {})[record.row_id] = record
            self._row_lines.add(canonical)
            accepted.append(tlog_row_cells(record))
            added += 1
        if persist:
            self._append_lines(self.tlog_path, TLOG_COLUMNS, accepted)
        return IngestReport(added, duplicates, tuple(errors))

    def ingest_plog(self, source) -> IngestReport:
        """Load PLOG entries; orphans (key without TLOG rows) are quarantined."""
        with self._lock:
            return self._ingest_plog_rows(source, persist=True)

    def _ingest_plog_rows(self, source, persist: bool) -> IngestReport:
        added = 0
        duplicates = 0
        errors: list[RowError] = []
        accepted: list[list[str]] = []
        for line_no, line, cells in self._parse_lines(source, PLOG_COLUMNS):
            try:
                entry = parse_plog_cells(cells)
            except (ValueError, ArithmeticError) as exc:
                text = str(exc)
                if "missing key field" in text:
                    code = "MissingKeyField"
                elif "no-op change" in text:
                    code = "NoOpChange"
                else:
                    code = "MalformedRow"
                errors.append(RowError(line_no, code, text))
                continue
            canonical = ",".join(plog_row_cells(entry))
            if self.dedupe and canonical in self._entry_lines:
                duplicates += 1
                continue
            if entry.key not in self._rows:
                err = RowError(line_no, "OrphanEntry",
                               f"key {entry.key} has no TLOG rows")
                errors.append(err)
                self.quarantine.append((line_no, line, err))
                continue
            last = self._last_sequence(entry.key)
            if entry.sequence != last + 1:
                errors.append(RowError(
                    line_no, "SequenceConflict",
                    f"expected sequence {last + 1} for key, got {entry.sequence}"))
                continue
            self._entries.setdefault(entry.key, []).append(entry)
            self._entry_lines.add(canonical)
            accepted.append(plog_row_cells(entry))
            added += 1
        if persist:
            self._append_lines(self.plog_path, PLOG_COLUMNS, accepted)
        return IngestReport(added, duplicates, tuple(errors))

    # -- queries -------------------------------------------------------------

    def _last_sequence(self, key: TransactionKey) -> int:
        entries = self._entries.get(key)
        return entries[-1].sequence if entries else 0

    def keys(self) -> list[TransactionKey]:
        return sorted(self._rows)

    def transaction(self, key: TransactionKey) -> Transaction:
        rows = self._rows.get(key)
        if not rows:
            raise UnknownKey(f"no TLOG rows for {key}")
        return build_transaction(list(rows.values()))

    def entries_for(self, key: TransactionKey) -> list[ChangeLogEntry]:
        return list(self._entries.get(key, ()))

    def corrected_transactions(self) -> list[tuple[Transaction, list[ChangeLogEntry]]]:
        """Transactions with at least one logged error AND at least one change.

        Erroneous transactions without corrections are excluded. Output is in
        deterministic key order; each history is in sequence order.
        """
        out = []
        for key in self.keys():
            entries = self._entries.get(key, ())
            has_error = any(e.kind is ChangeKind.ERROR_LOGGED for e in entries)
            has_change = any(e.kind is ChangeKind.FIELD_CHANGED for e in entries)
            if has_error and has_change:
                out.append((self.transaction(key), sorted(entries, key=lambda e: e.sequence)))
        return out

    def clean_transactions(self) -> list[Transaction]:
        """Transactions with zero logged errors, in deterministic key order."""
        out = []
        for key in self.keys():
            entries = self._entries.get(key, ())
            if not any(e.kind is ChangeKind.ERROR_LOGGED for e in entries):
                out.append(self.transaction(key))
        return out

    def error_only_keys(self) -> list[TransactionKey]:
        out = []
        for key in self.keys():
            entries = self._entries.get(key, ())
            has_error = any(e.kind is ChangeKind.ERROR_LOGGED for e in entries)
            has_change = any(e.kind is ChangeKind.FIELD_CHANGED for e in entries)
            if has_error and not has_change:
                out.append(key)
        return out

    # -- feedback ------------------------------------------------------------

    def append_feedback(self, key: TransactionKey, entries: list[ChangeLogEntry],
                        expected_last_sequence: int | None = None) -> list[ChangeLogEntry]:
        """Append entries for an existing key, renumbered to the next sequences.

        The entries' own sequence numbers are ignored; relative order is kept.
        Returns the stored entries. Durable when the store is file-backed.
        """
        with self._lock:
            if key not in self._rows:
                raise UnknownKey(f"no TLOG rows for {key}")
            last = self._last_sequence(key)
            if expected_last_sequence is not None and expected_last_sequence != last:
                raise SequenceConflict(
                    f"expected last sequence {expected_last_sequence}, store has {last}")
            stored = []
            for offset, entry in enumerate(entries, start=1):
                renumbered = replace(entry, key=key, sequence=last + offset)
                self._entries.setdefault(key, []).append(renumbered)
                self._entry_lines.add(",".join(plog_row_cells(renumbered)))
                stored.append(renumbered)
            self._append_lines(self.plog_path, PLOG_COLUMNS,
                               [plog_row_cells(e) for e in stored])
            return stored

    # -- canonical export ----------------------------------------------------

    def dump_tlog(self) -> bytes:
        """Canonical TLOG serialization: sorted by (key, row_id)."""
        rows = []
        for key in self.keys():
            for row_id in sorted(self._rows[key]):
                rows.append(tlog_row_cells(self._rows[key][row_id]))
        return _write_csv(rows, TLOG_COLUMNS)

    def dump_plog(self) -> bytes:
        """Canonical PLOG serialization: sorted by (key, sequence)."""
        rows = []
        for key in sorted(self._entries):
            for entry in sorted(self._entries[key], key=lambda e: e.sequence):
                rows.append(plog_row_cells(entry))
        return _write_csv(rows, PLOG_COLUMNS)


def write_tlog(records: Iterable[TransactionRecord]) -> bytes:
    """Serialize records (already in intended order) as a TLOG file."""
    return _write_csv([tlog_row_cells(r) for r in records], TLOG_COLUMNS)


def write_plog(entries: Iterable[ChangeLogEntry]) -> bytes:
    """Serialize entries (already in intended order) as a PLOG file."""
    return _write_csv([plog_row_cells(e) for e in entries], PLOG_COLUMNS)
