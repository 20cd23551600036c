import io
import json
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from txcorrect.features import build_correction_dataset, build_detection_dataset
from txcorrect.learn import (
    MODE_JOINT,
    ModelRegistry,
    PURPOSE_DETECTION,
    correction_purpose,
    train_forest,
    train_ovr_logistic,
)
from txcorrect.logstore import ChangeKind, LogStore
from txcorrect.replay import reconstruct
from txcorrect.service import ReviewQueue, Service, ServiceConfig, transaction_to_json
from util import simple_transaction


def call(app, method, path, body=None, headers=None, query=""):
    raw = b"" if body is None else json.dumps(body).encode()
    environ = {
        "REQUEST_METHOD": method,
        "PATH_INFO": path,
        "QUERY_STRING": query,
        "CONTENT_LENGTH": str(len(raw)),
        "wsgi.input": io.BytesIO(raw),
        "wsgi.errors": io.StringIO(),
        "wsgi.url_scheme": "http",
        "SERVER_NAME": "test",
        "SERVER_PORT": "80",
    }
    for name, value in (headers or {}).items():
        environ["HTTP_" + name.upper().replace("-", "_")] = value
    captured = {}

    def start_response(status, header_list):
        captured["status"] = int(status.split()[0])

    chunks = app(environ, start_response)
    payload = b"".join(chunks)
    return captured["status"], json.loads(payload) if payload else None


@pytest.fixture(scope="module")
def env(tmp_path_factory, small_corpus, schema, taxonomy):
    root = tmp_path_factory.mktemp("service")
    store = LogStore(root / "store")
    store.ingest_tlog(small_corpus.tlog)
    store.ingest_plog(small_corpus.plog)

    registry = ModelRegistry(root / "models")
    detection = build_detection_dataset(store, schema, taxonomy, seed=3)
    forest = train_forest(detection, mode=MODE_JOINT, n_trees=30, seed=3)
    v1 = registry.save(PURPOSE_DETECTION, forest, {"rows": len(detection)})
    registry.activate(PURPOSE_DETECTION, v1)

    correction = build_correction_dataset(store, schema, taxonomy,
                                          taxonomy.classes[0], seed=5)
    logistic = train_ovr_logistic(correction, folds=3, seed=5)
    cv = registry.save(correction_purpose(0), logistic, {"rows": len(correction)})
    registry.activate(correction_purpose(0), cv)

    queue = ReviewQueue(root / "state")
    service = Service(store, registry, queue)
    return {"root": root, "store": store, "registry": registry,
            "queue": queue, "service": service, "corpus": small_corpus}


def erroneous_payload(env, class_id=0):
    """Erroneous version of a corrected transaction whose history touched class_id."""
    store = env["store"]
    wanted = {e.key for e in env["corpus"].injected if e.class_id == class_id}
    for txn, history in store.corrected_transactions():
        if txn.key in wanted:
            result = reconstruct(txn, history)
            return transaction_to_json(result.erroneous)
    raise AssertionError("corpus has no corrected transaction for that class")


def clean_payloads(env, limit=20):
    return [transaction_to_json(t) for t in env["store"].clean_transactions()[:limit]]


# --- /detect ---------------------------------------------------------------------

def test_detect_erroneous_flags_and_enqueues(env):
    status, body = call(env["service"], "POST", "/detect",
                        {"transaction": erroneous_payload(env)})
    assert status == 200
    assert body["model_version"] == 1
    assert len(body["probabilities"]) == 3
    assert 0 in body["flagged"]
    assert body["queued_item_id"] is not None
    item_status, item = call(env["service"], "GET", f"/queue/{body['queued_item_id']}")
    assert item_status == 200
    assert item["status"] == "PENDING"
    assert item["recommendations"].get("0")


def test_detect_clean_mostly_unflagged(env):
    unflagged = 0
    payloads = clean_payloads(env)
    for payload in payloads:
        status, body = call(env["service"], "POST", "/detect", {"transaction": payload})
        assert status == 200
        if not body["flagged"]:
            unflagged += 1
            assert all(p["probability"] < 0.5 for p in body["probabilities"])
    assert unflagged >= 0.8 * len(payloads)


def test_detect_rejects_oversized_transaction(env):
    payload = transaction_to_json(simple_transaction(item_count=21))
    status, body = call(env["service"], "POST", "/detect", {"transaction": payload})
    assert status == 409
    assert any(r["code"] == "TooManyItems" for r in body["reasons"])


def test_detect_malformed_body(env):
    raw_env = {
        "REQUEST_METHOD": "POST", "PATH_INFO": "/detect", "QUERY_STRING": "",
        "CONTENT_LENGTH": "9", "wsgi.input": io.BytesIO(b"not json!"),
        "wsgi.errors": io.StringIO(), "wsgi.url_scheme": "http",
        "SERVER_NAME": "test", "SERVER_PORT": "80",
    }
    captured = {}
    chunks = env["service"](raw_env, lambda s, h: captured.update(status=int(s.split()[0])))
    assert captured["status"] == 400
    assert json.loads(b"".join(chunks))["error"] == "service.MalformedJson"


def test_detect_without_active_model_is_503(tmp_path, env):
    bare = Service(env["store"], ModelRegistry(tmp_path / "empty-models"), ReviewQueue())
    status, body = call(bare, "POST", "/detect",
                        {"transaction": clean_payloads(env, 1)[0]})
    assert status == 503
    assert body["error"] == "service.NoActiveModel"


# --- /correct ---------------------------------------------------------------------

def test_correct_k1_is_prefix_of_k5(env):
    payload = erroneous_payload(env)
    status1, top1 = call(env["service"], "POST", "/correct",
                         {"transaction": payload, "class_id": 0, "k": 1})
    status5, top5 = call(env["service"], "POST", "/correct",
                         {"transaction": payload, "class_id": 0, "k": 5})
    assert status1 == status5 == 200
    assert len(top1["recommendations"]) == 1
    assert len(top5["recommendations"]) == 5
    assert top1["recommendations"][0] == top5["recommendations"][0]


def test_correct_full_k_is_permutation(env):
    status, body = call(env["service"], "POST", "/correct",
                        {"transaction": erroneous_payload(env), "class_id": 0, "k": 5})
    values = [r["value"] for r in body["recommendations"]]
    assert sorted(values) == ["CASH", "CREDIT", "DEBIT", "GIFT", "VOUCHER"]
    scores = [r["score"] for r in body["recommendations"]]
    assert scores == sorted(scores, reverse=True)


def test_correct_unknown_class_404(env):
    status, body = call(env["service"], "POST", "/correct",
                        {"transaction": erroneous_payload(env), "class_id": 7, "k": 1})
    assert status == 404
    assert body["error"] == "service.UnknownClass"


def test_correct_k_out_of_range_422(env):
    status, body = call(env["service"], "POST", "/correct",
                        {"transaction": erroneous_payload(env), "class_id": 0, "k": 9})
    assert status == 422


# --- queue -----------------------------------------------------------------------

def enqueue_one(env, class_id=0):
    status, body = call(env["service"], "POST", "/detect",
                        {"transaction": erroneous_payload(env, class_id)})
    assert status == 200 and body["queued_item_id"] is not None
    return body["queued_item_id"]


def test_queue_listing_deterministic_order(env):
    first = enqueue_one(env)
    second = enqueue_one(env)
    status, body = call(env["service"], "GET", "/queue", query="limit=1000")
    assert status == 200
    ids = [item["item_id"] for item in body["items"]]
    assert ids == sorted(ids)
    assert first in ids and second in ids


def test_accept_writes_audit_plog_entry(env):
    item_id = enqueue_one(env)
    _, item = call(env["service"], "GET", f"/queue/{item_id}")
    value = item["recommendations"]["0"][0][0]
    from txcorrect.service import key_from_json
    key = key_from_json(item["transaction"]["key"])
    store = env["store"]
    before = len(store.entries_for(key))
    current = store.transaction(key).get_field(
        store.transaction(key).tenders[0].row_id, "TENDER_TYPE_CODE").value
    if value == current:  # top recommendation may equal the stored value
        value = next(v for v, _ in item["recommendations"]["0"] if v != current)

    status, decided = call(env["service"], "POST", f"/queue/{item_id}/decision",
                           {"action": "ACCEPT", "class_id": 0, "value": value},
                           headers={"X-Operator": "alice"})
    assert status == 200
    assert decided["status"] == "ACCEPTED"
    assert decided["decided_by"] == "alice"

    entries = store.entries_for(key)
    assert len(entries) == before + 1
    newest = entries[-1]
    assert newest.kind is ChangeKind.FIELD_CHANGED
    assert newest.new_value.value == value
    assert "alice" in newest.task_name and "model-v" in newest.task_name

    again, body = call(env["service"], "POST", f"/queue/{item_id}/decision",
                       {"action": "ACCEPT", "class_id": 0, "value": value})
    assert again == 409
    assert body["error"] == "service.AlreadyDecided"


def test_dismiss_requires_reason_and_writes_nothing(env):
    item_id = enqueue_one(env)
    status, body = call(env["service"], "POST", f"/queue/{item_id}/decision",
                        {"action": "DISMISS"})
    assert status == 400
    from txcorrect.service import key_from_json
    _, item = call(env["service"], "GET", f"/queue/{item_id}")
    key = key_from_json(item["transaction"]["key"])
    before = len(env["store"].entries_for(key))
    status, body = call(env["service"], "POST", f"/queue/{item_id}/decision",
                        {"action": "DISMISS", "reason": "false positive"})
    assert status == 200 and body["status"] == "DISMISSED"
    assert len(env["store"].entries_for(key)) == before


def test_override_rejects_out_of_domain_value(env):
    item_id = enqueue_one(env)
    status, body = call(env["service"], "POST", f"/queue/{item_id}/decision",
                        {"action": "OVERRIDE", "class_id": 0, "value": "BARTER"})
    assert status == 422
    assert body["error"] == "service.ValueOutsideDomain"
    assert "domain" in body


def test_unknown_item_404(env):
    status, body = call(env["service"], "GET", "/queue/99999")
    assert status == 404
    status, body = call(env["service"], "POST", "/queue/99999/decision",
                        {"action": "DISMISS", "reason": "x"})
    assert status == 404


def test_concurrent_decisions_exactly_one_wins(env):
    item_id = enqueue_one(env)
    _, item = call(env["service"], "GET", f"/queue/{item_id}")

    barrier = threading.Barrier(2)

    def decide(operator):
        barrier.wait()
        return call(env["service"], "POST", f"/queue/{item_id}/decision",
                    {"action": "DISMISS", "reason": f"by {operator}"},
                    headers={"X-Operator": operator})

    with ThreadPoolExecutor(max_workers=2) as pool:
        results = list(pool.map(decide, ["alice", "bob"]))
    statuses = sorted(status for status, _ in results)
    assert statuses == [200, 409]


# --- models ------------------------------------------------------------------------

def test_models_listing_and_activation(env):
    status, body = call(env["service"], "GET", "/models")
    assert status == 200
    purposes = {m["purpose"] for m in body["models"]}
    assert purposes == {"detection", "correction:0"}

    # save a second detection version and activate it over HTTP
    registry = env["registry"]
    detection_model = registry.load(PURPOSE_DETECTION, 1)
    v2 = registry.save(PURPOSE_DETECTION, detection_model, {"rows": 0})
    status, body = call(env["service"], "POST", f"/models/detection/{v2}/activate")
    assert status == 200
    status, body = call(env["service"], "POST", "/detect",
                        {"transaction": clean_payloads(env, 1)[0]})
    assert body["model_version"] == v2
    # restore v1 for neighbouring tests
    call(env["service"], "POST", "/models/detection/1/activate")


def test_activate_unknown_version_404(env):
    status, body = call(env["service"], "POST", "/models/detection/999/activate")
    assert status == 404


def test_queue_survives_restart(env):
    item_id = enqueue_one(env)
    reopened = ReviewQueue(env["root"] / "state")
    assert reopened.get(item_id) is not None
    pending_before, total = env["queue"].pending(limit=10_000)
    pending_after, total_after = reopened.pending(limit=10_000)
    assert total == total_after
    assert [i.item_id for i in pending_before] == [i.item_id for i in pending_after]


def test_live_http_smoke(env):
    from wsgiref.simple_server import make_server
    from txcorrect.service import _QuietHandler, _ThreadingWSGIServer
    import urllib.request

    httpd = make_server("127.0.0.1", 0, env["service"],
                        server_class=_ThreadingWSGIServer, handler_class=_QuietHandler)
    port = httpd.server_address[1]
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    try:
        with urllib.request.urlopen(f"http://127.0.0.1:{port}/models") as response:
            assert response.status == 200
            listed = json.loads(response.read())
            assert "models" in listed
        request = urllib.request.Request(
            f"http://127.0.0.1:{port}/detect",
            data=json.dumps({"transaction": clean_payloads(env, 1)[0]}).encode(),
            headers={"Content-Type": "application/json"}, method="POST")
        with urllib.request.urlopen(request) as response:
            assert response.status == 200
    finally:
        httpd.shutdown()
        httpd.server_close()


def test_service_config_env_overrides(tmp_path):
    config_path = tmp_path / "service.json"
    config_path.write_text(json.dumps({"port": 9000, "registry_path": "/from/file"}))
    config = ServiceConfig.from_file(config_path, env={"TXC_PORT": "9100"})
    assert config.port == 9100
    assert config.registry_path == "/from/file"
    assert config.host == "127.0.0.1"
