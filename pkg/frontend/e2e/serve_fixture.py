"""Seeded service for console end-to-end tests.

Training happens on a generated corpus; the serving store then gets the
*erroneous* versions of the corrected transactions, mimicking a live TLOG of
fresh, not-yet-corrected arrivals. A few of those are posted through /detect
so the review queue starts populated. Prints "READY <port>" when listening.
"""

import io
import json
import sys
import tempfile
import threading
from pathlib import Path
from wsgiref.simple_server import make_server

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))

from txcorrect.features import build_correction_dataset, build_detection_dataset, default_schema, default_taxonomy
from txcorrect.learn import (
    MODE_JOINT, ModelRegistry, PURPOSE_DETECTION, correction_purpose,
    train_forest, train_ovr_logistic,
)
from txcorrect.logstore import LogStore, write_tlog
from txcorrect.replay import reconstruct
from txcorrect.service import ReviewQueue, Service, _QuietHandler, _ThreadingWSGIServer, transaction_to_json
from txcorrect.synth import easy_profile, generate_corpus

SEED = 515


def call(app, method, path, body):
    raw = json.dumps(body).encode()
    environ = {
        "REQUEST_METHOD": method, "PATH_INFO": path, "QUERY_STRING": "",
        "CONTENT_LENGTH": str(len(raw)), "wsgi.input": io.BytesIO(raw),
        "wsgi.errors": io.StringIO(), "wsgi.url_scheme": "http",
        "SERVER_NAME": "fixture", "SERVER_PORT": "0",
    }
    statuses = []
    chunks = app(environ, lambda s, h: statuses.append(int(s.split()[0])))
    return statuses[0], json.loads(b"".join(chunks))


def main():
    workdir = Path(tempfile.mkdtemp(prefix="txcorrect-e2e-"))
    corpus = generate_corpus(easy_profile(seed=SEED, store_count=2,
                                          transactions_per_store=700))
    training_store = LogStore()
    training_store.ingest_tlog(corpus.tlog)
    training_store.ingest_plog(corpus.plog)

    schema, taxonomy = default_schema(), default_taxonomy()
    registry = ModelRegistry(workdir / "models")
    detection = build_detection_dataset(training_store, schema, taxonomy, seed=SEED)
    version = registry.save(
        PURPOSE_DETECTION,
        train_forest(detection, mode=MODE_JOINT, n_trees=25, seed=SEED),
        {"rows": len(detection)})
    registry.activate(PURPOSE_DETECTION, version)
    correction = build_correction_dataset(training_store, schema, taxonomy,
                                          taxonomy.classes[0], seed=SEED)
    version = registry.save(
        correction_purpose(0),
        train_ovr_logistic(correction, folds=3, seed=SEED),
        {"rows": len(correction)})
    registry.activate(correction_purpose(0), version)

    # Serving store: fresh arrivals. Clean transactions stay as they are;
    # corrected ones appear in their erroneous (pre-correction) state.
    erroneous = [reconstruct(txn, history).erroneous
                 for txn, history in training_store.corrected_transactions()]
    rows = []
    for txn in training_store.clean_transactions():
        rows.extend(txn.records)
    for txn in erroneous:
        rows.extend(txn.records)
    serving_store = LogStore(workdir / "store")
    report = serving_store.ingest_tlog(write_tlog(rows))
    assert not report.errors

    service = Service(serving_store, registry, ReviewQueue(workdir / "state"))

    # Pre-populate the queue with erroneous arrivals flagged on tender1.
    tender1_keys = {e.key for e in corpus.injected if e.class_id == 0}
    enqueued = 0
    for txn in erroneous:
        if txn.key not in tender1_keys:
            continue
        status, body = call(service, "POST", "/detect",
                            {"transaction": transaction_to_json(txn)})
        if status == 200 and body.get("queued_item_id"):
            enqueued += 1
        if enqueued >= 6:
            break
    assert enqueued >= 3, f"only {enqueued} items enqueued"

    httpd = make_server("127.0.0.1", 0, service,
                        server_class=_ThreadingWSGIServer, handler_class=_QuietHandler)
    print(f"READY {httpd.server_address[1]}", flush=True)
    httpd.serve_forever()


if __name__ == "__main__":
    main()
