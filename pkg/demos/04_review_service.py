"""The full review loop over HTTP: detect, queue, accept, audit.

Starts the service on an ephemeral port with freshly trained models, posts an
erroneous transaction, accepts the top recommendation as an operator would,
and shows the audit entry the decision wrote back into the change log.
"""

import json
import tempfile
import threading
import urllib.request
from pathlib import Path
from wsgiref.simple_server import make_server

from txcorrect.features import build_correction_dataset, build_detection_dataset, default_schema, default_taxonomy
from txcorrect.learn import (
    MODE_JOINT, ModelRegistry, PURPOSE_DETECTION, correction_purpose,
    train_forest, train_ovr_logistic,
)
from txcorrect.logstore import LogStore
from txcorrect.replay import reconstruct
from txcorrect.service import ReviewQueue, Service, _QuietHandler, _ThreadingWSGIServer, transaction_to_json
from txcorrect.synth import easy_profile, generate_corpus


def post(url, body, operator=None):
    headers = {"Content-Type": "application/json"}
    if operator:
        headers["X-Operator"] = operator
    request = urllib.request.Request(url, data=json.dumps(body).encode(),
                                     headers=headers, method="POST")
    with urllib.request.urlopen(request) as response:
        return json.loads(response.read())


def get(url):
    with urllib.request.urlopen(url) as response:
        return json.loads(response.read())


workdir = Path(tempfile.mkdtemp(prefix="txcorrect-demo-"))
corpus = generate_corpus(easy_profile(seed=31, store_count=2, transactions_per_store=1200))
store = LogStore(workdir / "store")
store.ingest_tlog(corpus.tlog)
store.ingest_plog(corpus.plog)

schema, taxonomy = default_schema(), default_taxonomy()
registry = ModelRegistry(workdir / "models")
detection = build_detection_dataset(store, schema, taxonomy, seed=31)
version = registry.save(PURPOSE_DETECTION,
                        train_forest(detection, mode=MODE_JOINT, n_trees=30, seed=31),
                        {"rows": len(detection)})
registry.activate(PURPOSE_DETECTION, version)
correction = build_correction_dataset(store, schema, taxonomy, taxonomy.classes[0], seed=31)
version = registry.save(correction_purpose(0),
                        train_ovr_logistic(correction, folds=3, seed=31),
                        {"rows": len(correction)})
registry.activate(correction_purpose(0), version)

service = Service(store, registry, ReviewQueue(workdir / "state"))
httpd = make_server("127.0.0.1", 0, service, server_class=_ThreadingWSGIServer,
                    handler_class=_QuietHandler)
base = f"http://127.0.0.1:{httpd.server_address[1]}"
threading.Thread(target=httpd.serve_forever, daemon=True).start()
print(f"service listening at {base}")

# pick an erroneous transaction (reconstructed pre-correction state)
wanted = {e.key for e in corpus.injected if e.class_id == 0}
erroneous = next(reconstruct(t, h).erroneous
                 for t, h in store.corrected_transactions() if t.key in wanted)

detected = post(f"{base}/detect", {"transaction": transaction_to_json(erroneous)})
print(f"\nflagged classes: {detected['flagged']} "
      f"(model v{detected['model_version']})")
item_id = detected["queued_item_id"]

item = get(f"{base}/queue/{item_id}")
print(f"queue item {item_id} recommendations: {item['recommendations']['0'][:3]}")

stored = store.transaction(erroneous.key)
current = stored.get_field(stored.tenders[0].row_id, "TENDER_TYPE_CODE").value
choice = next(v for v, _ in item["recommendations"]["0"] if v != current)
decided = post(f"{base}/queue/{item_id}/decision",
               {"action": "ACCEPT", "class_id": 0, "value": choice},
               operator="demo-operator")
print(f"decision: {decided['status']} by {decided['decided_by']}")

newest = store.entries_for(erroneous.key)[-1]
print(f"audit entry in the change log: seq={newest.sequence} "
      f"{newest.field_name} {newest.old_value!r} -> {newest.new_value!r} "
      f"({newest.task_name})")

pending = get(f"{base}/queue")
print(f"queue now has {pending['total_pending']} pending item(s)")
httpd.shutdown()
