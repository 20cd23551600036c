"""HTTP JSON API: detection, top-k recommendations, review queue, registry.

The WSGI application is plain enough to call in-process from tests and to
serve with the stdlib threading server. Models come from the registry on
every request (with a version-checked cache), so activating a new version
atomically switches subsequent requests while in-flight ones finish on the
model they already hold.

Queue state is durable: every enqueue and decision is appended to a JSONL
event log and replayed at startup. Accepted and overridden corrections are
written back to the PLOG through the log store, carrying the deciding
operator and the recommending model version in the task_name column.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path
from wsgiref.simple_server import WSGIRequestHandler, WSGIServer, make_server
import os
import socketserver

from .errors import TxcError
from .features import extract, resolve_target_row
from .learn import (
    KOutOfRange,
    ModelRegistry,
    PURPOSE_DETECTION,
    correction_purpose,
    predict_labels,
    recommend_values,
)
from .logstore import (
    LogStore,
    UnknownKey,
    field_changed,
    format_date,
    format_timestamp,
    parse_date,
    parse_timestamp,
)
from .prep import FilterPolicy, normalize, qualify
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
    TxModelError,
    build_transaction,
)

logger = logging.getLogger("txcorrect.service")


class ServiceError(TxcError):
    module = "service"


# ---------------------------------------------------------------------------
# JSON codecs for domain values
# ---------------------------------------------------------------------------

def value_to_json(value: FieldValue) -> dict:
    if value is MISSING or value.kind == "missing":
        return {"kind": "missing"}
    if isinstance(value, Number):
        return {"kind": "number", "value": str(value.value)}
    return {"kind": value.kind, "value": value.value}


def value_from_json(raw: dict) -> FieldValue:
    kind = raw.get("kind")
    if kind == "missing":
        return MISSING
    if kind == "number":
        try:
            return Number(Decimal(str(raw["value"])))
        except (InvalidOperation, ValueError) as exc:
            raise ValueError(f"bad number value: {raw.get('value')!r}") from exc
    if kind == "code":
        return Code(str(raw["value"]))
    if kind == "text":
        return Text(str(raw["value"]))
    raise ValueError(f"unknown value kind: {kind!r}")


def key_to_json(key: TransactionKey) -> dict:
    return {
        "store_number": key.store_number,
        "business_date": format_date(key.business_date),
        "transaction_index": key.transaction_index,
        "timestamp": format_timestamp(key.timestamp),
    }


def key_from_json(raw: dict) -> TransactionKey:
    return TransactionKey(
        store_number=int(raw["store_number"]),
        business_date=parse_date(str(raw["business_date"])),
        transaction_index=int(raw["transaction_index"]),
        timestamp=parse_timestamp(str(raw["timestamp"])),
    )


def transaction_to_json(txn: Transaction) -> dict:
    return {
        "key": key_to_json(txn.key),
        "records": [
            {
                "row_id": rec.row_id,
                "qualifier": rec.qualifier.value,
                "parent_row_id": rec.parent_row_id,
                "attributes": {name: value_to_json(v) for name, v in rec.attributes.items()},
            }
            for rec in txn.records
        ],
    }


def transaction_from_json(raw: dict) -> Transaction:
    key = key_from_json(raw["key"])
    records = []
    for rec in raw["records"]:
        attributes = {name: value_from_json(v)
                      for name, v in rec.get("attributes", {}).items()}
        records.append(TransactionRecord(
            key=key,
            row_id=int(rec["row_id"]),
            qualifier=RecordQualifier(rec["qualifier"]),
            parent_row_id=None if rec.get("parent_row_id") is None else int(rec["parent_row_id"]),
            attributes=attributes,
        ))
    return build_transaction(records)


# ---------------------------------------------------------------------------
# Review queue
# ---------------------------------------------------------------------------

STATUS_PENDING = "PENDING"
STATUS_ACCEPTED = "ACCEPTED"
STATUS_OVERRIDDEN = "OVERRIDDEN"
STATUS_DISMISSED = "DISMISSED"


@dataclass
class ReviewItem:
    item_id: int
    transaction: dict                 # JSON form, echoed verbatim to clients
    detected: list[dict]              # [{class_id, name, probability, flagged}]
    recommendations: dict[str, list]  # class_id (str) -> [[value, score], ...]
    detection_version: int
    correction_versions: dict[str, int]
    created_at: str
    status: str = STATUS_PENDING
    decided_by: str | None = None
    decided_at: str | None = None
    decision: dict | None = None

    def summary(self) -> dict:
        flagged = [d for d in self.detected if d["flagged"]]
        return {
            "item_id": self.item_id,
            "key": self.transaction["key"],
            "status": self.status,
            "flagged_classes": [d["name"] for d in flagged],
            "max_probability": max((d["probability"] for d in self.detected), default=0.0),
            "created_at": self.created_at,
        }

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "transaction": self.transaction,
            "detected": self.detected,
            "recommendations": self.recommendations,
            "detection_version": self.detection_version,
            "correction_versions": self.correction_versions,
            "created_at": self.created_at,
            "status": self.status,
            "decided_by": self.decided_by,
            "decided_at": self.decided_at,
            "decision": self.decision,
        }


class ReviewQueue:
    """Durable queue: an append-only JSONL event log plus an in-memory index."""

    def __init__(self, state_path: str | Path | None = None):
        self._items: dict[int, ReviewItem] = {}
        self._next_id = 1
        self._lock = threading.RLock()
        self._path = None
        if state_path is not None:
            state_dir = Path(state_path)
            state_dir.mkdir(parents=True, exist_ok=True)
            self._path = state_dir / "queue.jsonl"
            self._replay()

    def _replay(self):
        if self._path is None or not self._path.exists():
            return
        with open(self._path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                event = json.loads(line)
                if event["event"] == "enqueue":
                    item = ReviewItem(**event["item"])
                    self._items[item.item_id] = item
                    self._next_id = max(self._next_id, item.item_id + 1)
                elif event["event"] == "decision":
                    item = self._items[event["item_id"]]
                    item.status = event["status"]
                    item.decided_by = event["decided_by"]
                    item.decided_at = event["decided_at"]
                    item.decision = event["decision"]

    def _log(self, event: dict):
        if self._path is None:
            return
        with open(self._path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def enqueue(self, item: ReviewItem) -> int:
        with self._lock:
            item.item_id = self._next_id
            self._next_id += 1
            self._items[item.item_id] = item
            self._log({"event": "enqueue", "item": item.to_json()})
            return item.item_id

    def get(self, item_id: int) -> ReviewItem | None:
        return self._items.get(item_id)

    def pending(self, offset: int = 0, limit: int = 50) -> tuple[list[ReviewItem], int]:
        with self._lock:
            pending = [self._items[i] for i in sorted(self._items)
                       if self._items[i].status == STATUS_PENDING]
            return pending[offset:offset + limit], len(pending)

    def decide(self, item_id: int, status: str, decided_by: str,
               decision: dict) -> ReviewItem:
        """Transition PENDING -> decided; exactly one caller wins a race."""
        with self._lock:
            item = self._items.get(item_id)
            if item is None:
                raise KeyError(item_id)
            if item.status != STATUS_PENDING:
                raise ServiceError(f"item {item_id} already {item.status}")
            item.status = status
            item.decided_by = decided_by
            item.decided_at = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
            item.decision = decision
            self._log({
                "event": "decision", "item_id": item_id, "status": status,
                "decided_by": decided_by, "decided_at": item.decided_at,
                "decision": decision,
            })
            return item


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ServiceConfig:
    registry_path: str = "models"
    store_path: str = "store"
    state_path: str = "service-state"
    host: str = "127.0.0.1"
    port: int = 8700
    flag_threshold: float = 0.5

    @classmethod
    def from_file(cls, path: str | Path | None = None, env: dict | None = None,
                  ) -> "ServiceConfig":
        """Config file first, then TXC_* environment overrides."""
        raw = {}
        if path is not None:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        env = os.environ if env is None else env
        def pick(name, env_name, cast=str):
            if env_name in env:
                return cast(env[env_name])
            if name in raw:
                return cast(raw[name])
            return getattr(cls, name, None) or cls.__dataclass_fields__[name].default
        return cls(
            registry_path=pick("registry_path", "TXC_REGISTRY"),
            store_path=pick("store_path", "TXC_STORE"),
            state_path=pick("state_path", "TXC_STATE"),
            host=pick("host", "TXC_HOST"),
            port=pick("port", "TXC_PORT", int),
            flag_threshold=pick("flag_threshold", "TXC_THRESHOLD", float),
        )


# ---------------------------------------------------------------------------
# WSGI application
# ---------------------------------------------------------------------------

class _HttpError(Exception):
    def __init__(self, status: int, code: str, message: str, extra: dict | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.extra = extra or {}


_STATUS_TEXT = {
    200: "200 OK", 400: "400 Bad Request", 404: "404 Not Found",
    405: "405 Method Not Allowed", 409: "409 Conflict",
    422: "422 Unprocessable Entity", 500: "500 Internal Server Error",
    503: "503 Service Unavailable",
}


class Service:
    def __init__(self, store: LogStore, registry: ModelRegistry,
                 queue: ReviewQueue | None = None,
                 policy: FilterPolicy | None = None,
                 flag_threshold: float = 0.5):
        self.store = store
        self.registry = registry
        self.queue = queue or ReviewQueue()
        self.policy = policy or FilterPolicy()
        self.flag_threshold = flag_threshold
        self._model_cache: dict[str, tuple[int, object]] = {}
        self._cache_lock = threading.Lock()

    # -- model snapshots -----------------------------------------------------

    def _active_model(self, purpose: str):
        """(version, model) for the purpose's ACTIVE pointer, else (None, None)."""
        version = self.registry.active_version(purpose)
        if version is None:
            return None, None
        with self._cache_lock:
            cached = self._model_cache.get(purpose)
            if cached is not None and cached[0] == version:
                return cached
            model = self.registry.load(purpose, version)
            self._model_cache[purpose] = (version, model)
            return version, model

    # -- request plumbing ------------------------------------------------------

    def __call__(self, environ, start_response):
        started = time.monotonic()
        method = environ["REQUEST_METHOD"]
        path = environ.get("PATH_INFO", "/")
        try:
            status, body = self._route(method, path, environ)
        except _HttpError as exc:
            status = exc.status
            body = {"error": exc.code, "message": exc.message, **exc.extra}
        except TxcError as exc:
            status = 400
            body = {"error": exc.code, "message": str(exc)}
        except Exception as exc:  # pragma: no cover - defensive
            logger.exception("unhandled error")
            status = 500
            body = {"error": "service.Internal", "message": str(exc)}
        payload = json.dumps(body).encode("utf-8")
        logger.info(json.dumps({
            "method": method, "path": path, "status": status,
            "ms": round((time.monotonic() - started) * 1000, 2),
        }))
        start_response(_STATUS_TEXT.get(status, f"{status} Error"), [
            ("Content-Type", "application/json"),
            ("Content-Length", str(len(payload))),
            ("Access-Control-Allow-Origin", "*"),
            ("Access-Control-Allow-Headers", "Content-Type, X-Operator"),
            ("Access-Control-Allow-Methods", "GET, POST, OPTIONS"),
        ])
        return [payload]

    def _read_json(self, environ) -> dict:
        try:
            length = int(environ.get("CONTENT_LENGTH") or 0)
        except ValueError:
            length = 0
        raw = environ["wsgi.input"].read(length) if length else b""
        if not raw:
            raise _HttpError(400, "service.EmptyBody", "request body required")
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise _HttpError(400, "service.MalformedJson", f"body is not JSON: {exc}")

    def _route(self, method: str, path: str, environ) -> tuple[int, dict]:
        if method == "OPTIONS":
            return 200, {}
        parts = [p for p in path.split("/") if p]
        if parts == ["detect"] and method == "POST":
            return self._detect(environ)
        if parts == ["correct"] and method == "POST":
            return self._correct(environ)
        if parts == ["queue"] and method == "GET":
            return self._queue_list(environ)
        if len(parts) == 2 and parts[0] == "queue" and method == "GET":
            return self._queue_item(parts[1])
        if len(parts) == 3 and parts[0] == "queue" and parts[2] == "decision" and method == "POST":
            return self._queue_decision(parts[1], environ)
        if parts == ["models"] and method == "GET":
            return 200, {"models": self.registry.list_artifacts()}
        if len(parts) == 4 and parts[0] == "models" and parts[3] == "activate" and method == "POST":
            return self._activate(parts[1], parts[2])
        raise _HttpError(404, "service.NoRoute", f"no route for {method} {path}")

    # -- endpoints -------------------------------------------------------------

    def _parse_transaction(self, raw) -> Transaction:
        if not isinstance(raw, dict):
            raise _HttpError(400, "service.MalformedTransaction",
                             "transaction payload must be an object")
        try:
            return transaction_from_json(raw)
        except (KeyError, ValueError, TypeError, TxModelError) as exc:
            raise _HttpError(400, "service.MalformedTransaction",
                             f"cannot parse transaction: {exc}")

    def _qualified(self, txn: Transaction) -> Transaction:
        result = qualify(txn, self.policy)
        if not result.accepted:
            raise _HttpError(409, "service.TransactionRejected",
                             "transaction does not qualify",
                             {"reasons": [{"code": r.code, "detail": r.detail}
                                          for r in result.reasons]})
        return normalize(txn)

    def _detect(self, environ) -> tuple[int, dict]:
        body = self._read_json(environ)
        txn = self._parse_transaction(body.get("transaction", body))
        version, model = self._active_model(PURPOSE_DETECTION)
        if model is None:
            raise _HttpError(503, "service.NoActiveModel",
                             "no active detection model")
        normalized = self._qualified(txn)
        vector = extract(normalized, model.schema)
        probabilities = predict_labels(model, vector)

        detected = []
        flagged_ids = []
        for column, label_id in enumerate(model.label_ids):
            prob = float(probabilities[column])
            flagged = prob >= self.flag_threshold
            error_class = model.taxonomy.classes[label_id]
            detected.append({
                "class_id": label_id,
                "name": model.label_names[column],
                "probability": prob,
                "flagged": flagged,
                "qualifier": error_class.qualifier.value,
                "field_name": error_class.field_name,
                "ordinal": error_class.ordinal,
                "row_id": resolve_target_row(txn, error_class),
                "domain": list(error_class.domain),
            })
            if flagged:
                flagged_ids.append(label_id)

        queued_item_id = None
        if flagged_ids:
            recommendations = {}
            correction_versions = {}
            for class_id in flagged_ids:
                c_version, c_model = self._active_model(correction_purpose(class_id))
                if c_model is None:
                    continue
                ranked = recommend_values(c_model, extract(normalized, c_model.schema),
                                          k=min(5, c_model.n_classes))
                recommendations[str(class_id)] = [[value, score] for value, score in ranked]
                correction_versions[str(class_id)] = c_version
            item = ReviewItem(
                item_id=0,
                transaction=transaction_to_json(txn),
                detected=detected,
                recommendations=recommendations,
                detection_version=version,
                correction_versions=correction_versions,
                created_at=datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
            )
            queued_item_id = self.queue.enqueue(item)

        return 200, {
            "model_version": version,
            "schema_fingerprint": model.schema_fingerprint,
            "probabilities": detected,
            "flagged": flagged_ids,
            "queued_item_id": queued_item_id,
        }

    def _correct(self, environ) -> tuple[int, dict]:
        body = self._read_json(environ)
        if "class_id" not in body:
            raise _HttpError(400, "service.MissingField", "class_id required")
        class_id = int(body["class_id"])
        k = int(body.get("k", 5))
        purpose = correction_purpose(class_id)
        if not self.registry.versions(purpose):
            raise _HttpError(404, "service.UnknownClass",
                             f"no correction models exist for class {class_id}")
        version, model = self._active_model(purpose)
        if model is None:
            raise _HttpError(503, "service.NoActiveModel",
                             f"no active correction model for class {class_id}")
        txn = self._parse_transaction(body.get("transaction"))
        normalized = self._qualified(txn)
        try:
            ranked = recommend_values(model, extract(normalized, model.schema), k=k)
        except KOutOfRange as exc:
            raise _HttpError(422, exc.code, str(exc))
        return 200, {
            "model_version": version,
            "class_id": class_id,
            "recommendations": [{"value": value, "score": score} for value, score in ranked],
        }

    def _queue_list(self, environ) -> tuple[int, dict]:
        from urllib.parse import parse_qs
        query = parse_qs(environ.get("QUERY_STRING", ""))
        offset = int(query.get("offset", ["0"])[0])
        limit = int(query.get("limit", ["50"])[0])
        items, total = self.queue.pending(offset, limit)
        return 200, {
            "items": [item.summary() for item in items],
            "total_pending": total,
            "offset": offset,
        }

    def _queue_item(self, raw_id: str) -> tuple[int, dict]:
        item = self.queue.get(self._item_id(raw_id))
        if item is None:
            raise _HttpError(404, "service.UnknownItem", f"no queue item {raw_id}")
        return 200, item.to_json()

    @staticmethod
    def _item_id(raw: str) -> int:
        try:
            return int(raw)
        except ValueError:
            raise _HttpError(404, "service.UnknownItem", f"no queue item {raw!r}")

    def _queue_decision(self, raw_id: str, environ) -> tuple[int, dict]:
        item_id = self._item_id(raw_id)
        item = self.queue.get(item_id)
        if item is None:
            raise _HttpError(404, "service.UnknownItem", f"no queue item {item_id}")
        body = self._read_json(environ)
        action = body.get("action")
        operator = environ.get("HTTP_X_OPERATOR", "anonymous")
        if action not in ("ACCEPT", "OVERRIDE", "DISMISS"):
            raise _HttpError(400, "service.BadAction",
                             "action must be ACCEPT, OVERRIDE, or DISMISS")

        if action == "DISMISS":
            if not body.get("reason"):
                raise _HttpError(400, "service.MissingField", "DISMISS requires a reason")
            decided = self._decide(item_id, STATUS_DISMISSED, operator,
                                   {"action": action, "reason": body["reason"]})
            return 200, decided.to_json()

        if "class_id" not in body or "value" not in body:
            raise _HttpError(400, "service.MissingField",
                             "ACCEPT/OVERRIDE require class_id and value")
        class_id = int(body["class_id"])
        value = str(body["value"])

        taxonomy = self._taxonomy_for_item(item)
        error_class = None
        if taxonomy is not None and 0 <= class_id < len(taxonomy):
            error_class = taxonomy.classes[class_id]
        if error_class is None:
            raise _HttpError(404, "service.UnknownClass", f"no class {class_id}")
        if error_class.domain and value not in error_class.domain:
            raise _HttpError(422, "service.ValueOutsideDomain",
                             f"{value!r} is not in the {error_class.name} domain",
                             {"domain": list(error_class.domain)})

        txn = transaction_from_json(item.transaction)
        key = txn.key
        try:
            stored = self.store.transaction(key)
        except UnknownKey:
            raise _HttpError(409, "service.UnknownKey",
                             "transaction key is not in the log store")
        row_id = resolve_target_row(stored, error_class)
        if row_id is None:
            raise _HttpError(422, "service.NoTargetRow",
                             f"transaction has no row for {error_class.name}")
        current = stored.get_field(row_id, error_class.field_name)
        new_value = Code(value)
        if current == new_value:
            raise _HttpError(422, "service.NoOpChange",
                             "accepted value equals the current stored value")

        model_version = item.correction_versions.get(str(class_id))
        audit = f"console:{operator}:model-v{model_version}"
        entry = field_changed(
            key, 1, row_id, error_class.field_name,
            old_value=current, new_value=new_value,
            logged_at=datetime.now(timezone.utc), task_name=audit,
        )
        status = STATUS_ACCEPTED if action == "ACCEPT" else STATUS_OVERRIDDEN
        decided = self._decide(item_id, status, operator, {
            "action": action, "class_id": class_id, "value": value,
            "model_version": model_version,
        })
        try:
            self.store.append_feedback(key, [entry])
        except UnknownKey:
            raise _HttpError(409, "service.UnknownKey",
                             "transaction key is not in the log store")
        return 200, decided.to_json()

    def _decide(self, item_id: int, status: str, operator: str, decision: dict) -> ReviewItem:
        try:
            return self.queue.decide(item_id, status, operator, decision)
        except KeyError:
            raise _HttpError(404, "service.UnknownItem", f"no queue item {item_id}")
        except ServiceError as exc:
            raise _HttpError(409, "service.AlreadyDecided", str(exc))

    def _taxonomy_for_item(self, item: ReviewItem):
        version, model = self._active_model(PURPOSE_DETECTION)
        if model is not None:
            return model.taxonomy
        for class_id in item.correction_versions:
            _, c_model = self._active_model(correction_purpose(int(class_id)))
            if c_model is not None:
                return c_model.taxonomy
        return None

    def _activate(self, purpose: str, raw_version: str) -> tuple[int, dict]:
        from .learn.registry import UnknownVersion
        try:
            version = int(raw_version)
        except ValueError:
            raise _HttpError(404, "registry.UnknownVersion", f"bad version {raw_version!r}")
        try:
            self.registry.activate(purpose, version)
        except UnknownVersion as exc:
            raise _HttpError(404, exc.code, str(exc))
        return 200, {"purpose": purpose, "version": version, "active": True}


# ---------------------------------------------------------------------------
# Server runner
# ---------------------------------------------------------------------------

class _ThreadingWSGIServer(socketserver.ThreadingMixIn, WSGIServer):
    daemon_threads = True


class _QuietHandler(WSGIRequestHandler):
    def log_message(self, format, *args):  # request logging happens in the app
        pass


def build_service(config: ServiceConfig) -> Service:
    store = LogStore(config.store_path)
    registry = ModelRegistry(config.registry_path)
    queue = ReviewQueue(config.state_path)
    return Service(store, registry, queue, flag_threshold=config.flag_threshold)


def serve(config: ServiceConfig, service: Service | None = None):
    """Blocking server loop; Ctrl-C to stop."""
    app = service or build_service(config)
    httpd = make_server(config.host, config.port, app,
                        server_class=_ThreadingWSGIServer, handler_class=_QuietHandler)
    logger.info(json.dumps({"serving": f"http://{config.host}:{config.port}"}))
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
