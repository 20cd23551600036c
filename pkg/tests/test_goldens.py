"""The on-disk formats are pinned: fixtures in tests/goldens/ must match what
the code writes byte for byte, and every format must round-trip bit-exactly.
Regenerate deliberately with: python tests/make_goldens.py
"""

import json
from pathlib import Path

import pytest

from txcorrect.features import (
    FingerprintMismatch,
    default_schema,
    read_feature_file,
    write_feature_file,
)
from txcorrect.learn import forest_from_payload, forest_to_payload
from txcorrect.logstore import LogStore
from make_goldens import build

GOLDENS = Path(__file__).parent / "goldens"


@pytest.fixture(scope="module")
def rebuilt():
    return build(GOLDENS)


def golden(name: str) -> bytes:
    return (GOLDENS / name).read_bytes()


@pytest.mark.parametrize("name", ["tlog.csv", "plog.csv", "features.bin",
                                  "manifest.json", "payload.bin"])
def test_regeneration_matches_pinned_bytes(rebuilt, name):
    assert rebuilt[name] == golden(name), (
        f"{name} drifted from the pinned fixture; if the format change is "
        f"intentional, rerun tests/make_goldens.py")


def test_tlog_plog_roundtrip_bit_exact():
    store = LogStore()
    assert store.ingest_tlog(golden("tlog.csv")).errors == ()
    assert store.ingest_plog(golden("plog.csv")).errors == ()
    assert store.dump_tlog() == golden("tlog.csv")
    assert store.dump_plog() == golden("plog.csv")


def test_feature_file_roundtrip_bit_exact(tmp_path):
    dataset = read_feature_file(GOLDENS / "features.bin")
    out = tmp_path / "rewritten.bin"
    write_feature_file(dataset, out)
    assert out.read_bytes() == golden("features.bin")


def test_feature_file_rejects_wrong_schema():
    with pytest.raises(FingerprintMismatch):
        read_feature_file(GOLDENS / "features.bin",
                          expected_schema=default_schema(max_item_slots=7))


def test_model_payload_roundtrip_bit_exact():
    model = forest_from_payload(golden("payload.bin"))
    assert forest_to_payload(model) == golden("payload.bin")


def test_manifest_roundtrip_bit_exact():
    manifest = json.loads(golden("manifest.json"))
    rewritten = (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode()
    assert rewritten == golden("manifest.json")
    assert manifest["kind"] == "forest"
    assert manifest["checksum"]
