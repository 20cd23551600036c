import json
import subprocess
import sys
from pathlib import Path

import pytest

from txcorrect.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> ingest once for the whole module."""
    root = tmp_path_factory.mktemp("cli")
    corpus_dir = root / "corpus"
    store_dir = root / "store"
    code = main(["synth", "--out", str(corpus_dir), "--seed", "77",
                 "--stores", "1", "--transactions", "1500"])
    assert code == 0
    code = main(["ingest", "--store", str(store_dir),
                 "--tlog", str(corpus_dir / "tlog.csv"),
                 "--plog", str(corpus_dir / "plog.csv")])
    assert code == 0
    return root


def test_synth_ingest_reconstruct_verify(pipeline, capsys):
    code, out, err = run(
        capsys, "reconstruct", "--store", str(pipeline / "store"), "--verify",
        "--ground-truth", str(pipeline / "corpus" / "ground_truth.json"))
    assert code == 0
    report = json.loads(out)
    assert report["mismatches"] == 0
    assert report["checked"] > 0
    assert report["skipped_samples"] == 0


def test_extract_and_train_detector_deterministic(pipeline, capsys):
    features = pipeline / "features.bin"
    code, out, _ = run(capsys, "extract", "--store", str(pipeline / "store"),
                       "--kind", "detection", "--seed", "7",
                       "--out", str(features))
    assert code == 0
    assert json.loads(out)["rows"] > 0

    checksums = []
    for attempt in ("a", "b"):
        registry = pipeline / f"registry-{attempt}"
        code, out, _ = run(capsys, "train-detector", "--features", str(features),
                           "--mode", "per-label", "--label", "tender1_type",
                           "--trees", "5", "--seed", "7",
                           "--registry", str(registry), "--activate")
        assert code == 0
        checksums.append(json.loads(out)["checksum"])
    assert checksums[0] == checksums[1]


def test_train_corrector_and_evaluate(pipeline, capsys):
    features = pipeline / "corr.bin"
    code, out, _ = run(capsys, "extract", "--store", str(pipeline / "store"),
                       "--kind", "correction", "--class-id", "0", "--seed", "7",
                       "--out", str(features))
    assert code == 0
    registry = pipeline / "registry-c"
    code, out, _ = run(capsys, "train-corrector", "--features", str(features),
                       "--folds", "3", "--seed", "7",
                       "--registry", str(registry), "--activate")
    assert code == 0
    trained = json.loads(out)
    assert trained["purpose"] == "correction:0"

    code, out, _ = run(capsys, "evaluate", "--registry", str(registry),
                       "--purpose", "correction:0", "--version", "1",
                       "--features", str(features), "--split", "test")
    assert code == 0
    assert "accuracy@1" in out
    manifest = json.loads(
        (registry / "correction-0" / "1" / "manifest.json").read_text())
    assert manifest["evaluation"]["accuracy_at_k"]["1"] >= 0.0


def test_registry_list_and_activate(pipeline, capsys):
    registry = pipeline / "registry-a"
    code, out, _ = run(capsys, "registry", "list", "--registry", str(registry))
    assert code == 0
    listed = json.loads(out)
    assert listed and listed[0]["purpose"] == "detection"

    code, out, _ = run(capsys, "registry", "activate", "--registry", str(registry),
                       "--purpose", "detection", "--version", "1")
    assert code == 0


def test_error_is_machine_readable(pipeline, capsys):
    code, out, err = run(capsys, "registry", "activate",
                         "--registry", str(pipeline / "registry-a"),
                         "--purpose", "detection", "--version", "99")
    assert code == 2
    error = json.loads(err.strip().splitlines()[-1])
    assert error["error"] == "registry.UnknownVersion"


def test_reconstruct_detects_tampered_plog(pipeline, capsys, tmp_path):
    corrupted = tmp_path / "store2"
    tlog = (pipeline / "corpus" / "tlog.csv").read_bytes()
    plog_text = (pipeline / "corpus" / "plog.csv").read_text()
    # swap one corrected value so the manifest no longer matches
    tampered = plog_text.replace("code:DEBIT", "code:TAMPERED", 1)
    (tmp_path / "tlog.csv").write_bytes(tlog)
    (tmp_path / "plog.csv").write_text(tampered)
    code = main(["ingest", "--store", str(corrupted),
                 "--tlog", str(tmp_path / "tlog.csv"),
                 "--plog", str(tmp_path / "plog.csv")])
    capsys.readouterr()
    assert code == 0
    code, out, err = run(
        capsys, "reconstruct", "--store", str(corrupted),
        "--ground-truth", str(pipeline / "corpus" / "ground_truth.json"))
    assert code == 3
    assert json.loads(out)["mismatches"] >= 1


def test_console_script_via_subprocess(pipeline):
    result = subprocess.run(
        [sys.executable, "-m", "txcorrect.cli", "--help"],
        capture_output=True, text=True,
        env={"PYTHONPATH": str(Path(__file__).resolve().parents[1] / "src"),
             "PATH": "/usr/bin:/bin"},
    )
    assert result.returncode == 0
    for subcommand in ("synth", "ingest", "reconstruct", "extract",
                       "train-detector", "train-corrector", "evaluate",
                       "registry", "serve"):
        assert subcommand in result.stdout
