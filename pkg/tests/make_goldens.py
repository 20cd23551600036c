"""Regenerate the pinned file-format fixtures in tests/goldens/.

Run from the repo root:  python tests/make_goldens.py
The fixtures are deterministic: a pinned seed, pinned hyperparameters, and a
pinned created_at. Any byte change here is a format change and must be
intentional.
"""

from pathlib import Path

GOLDEN_SEED = 20190307


def build(out_dir: Path) -> dict[str, bytes]:
    from txcorrect.features import (
        build_detection_dataset, default_schema, default_taxonomy, write_feature_file,
    )
    from txcorrect.learn import MODE_JOINT, ModelRegistry, PURPOSE_DETECTION, train_forest
    from txcorrect.logstore import LogStore
    from txcorrect.synth import easy_profile, generate_corpus
    import tempfile

    corpus = generate_corpus(easy_profile(
        seed=GOLDEN_SEED, store_count=1, transactions_per_store=120,
        rates=(0.3, 0.0, 0.0)))
    store = LogStore()
    store.ingest_tlog(corpus.tlog)
    store.ingest_plog(corpus.plog)

    schema, taxonomy = default_schema(), default_taxonomy()
    dataset = build_detection_dataset(store, schema, taxonomy, seed=GOLDEN_SEED)

    with tempfile.TemporaryDirectory() as tmp:
        feature_path = Path(tmp) / "features.bin"
        write_feature_file(dataset, feature_path)
        feature_bytes = feature_path.read_bytes()

        model = train_forest(dataset, mode=MODE_JOINT, n_trees=3, max_depth=6,
                             seed=GOLDEN_SEED)
        registry = ModelRegistry(Path(tmp) / "models")
        version = registry.save(PURPOSE_DETECTION, model,
                                {"feature_file_sha256": "pinned-fixture", "rows": len(dataset)},
                                created_at="2019-03-07T00:00:00Z")
        vdir = Path(tmp) / "models" / "detection" / str(version)
        manifest_bytes = (vdir / "manifest.json").read_bytes()
        payload_bytes = (vdir / "payload.bin").read_bytes()

    return {
        "tlog.csv": corpus.tlog,
        "plog.csv": corpus.plog,
        "features.bin": feature_bytes,
        "manifest.json": manifest_bytes,
        "payload.bin": payload_bytes,
    }


def main():
    out_dir = Path(__file__).parent / "goldens"
    out_dir.mkdir(exist_ok=True)
    for name, data in build(out_dir).items():
        (out_dir / name).write_bytes(data)
        print(f"wrote {name}: {len(data)} bytes")


if __name__ == "__main__":
    import sys
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    main()
