"""Command-line entry point driving the full pipeline reproducibly.

Every subcommand reads/writes the documented file formats and accepts
``--seed`` wherever randomness exists. Failures exit non-zero after printing
one machine-readable JSON line on stderr: {"error": code, "message": text}.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import TxcError
from .features import (
    ErrorTaxonomy,
    FeatureSchema,
    build_correction_dataset,
    build_detection_dataset,
    default_schema,
    default_taxonomy,
    read_feature_file,
    write_feature_file,
)
from .learn import (
    MODE_JOINT,
    MODE_PER_LABEL,
    ModelRegistry,
    PURPOSE_DETECTION,
    correction_purpose,
    predict_matrix,
    rank_matrix,
    train_forest,
    train_ovr_logistic,
)
from .logstore import LogStore
from .metrics import evaluate_correction, evaluate_detection
from .prep import FilterPolicy
from .replay import reconstruct, verify_roundtrip
from .synth import easy_profile, generate_corpus, manifest_from_json, oracle_check, write_corpus
from .features import SPLIT_NAMES


def _load_schema(args) -> FeatureSchema:
    return FeatureSchema.from_file(args.schema) if args.schema else default_schema()


def _load_taxonomy(args) -> ErrorTaxonomy:
    return ErrorTaxonomy.from_file(args.taxonomy) if args.taxonomy else default_taxonomy()


def _ratios(raw: str) -> tuple[float, float, float]:
    parts = tuple(float(p) for p in raw.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("ratios must be train,test,validation")
    return parts


def cmd_synth(args) -> int:
    if args.profile:
        raw = json.loads(Path(args.profile).read_text(encoding="utf-8"))
        if raw.get("kind", "easy") == "easy":
            profile = easy_profile(
                seed=args.seed if args.seed is not None else int(raw.get("seed", 0)),
                store_count=int(raw.get("store_count", 4)),
                transactions_per_store=int(raw.get("transactions_per_store", 2000)),
                rates=tuple(raw.get("rates", (0.18, 0.10, 0.06))),
            )
        else:
            raise TxcError(f"unknown profile kind {raw.get('kind')!r}")
    else:
        profile = easy_profile(
            seed=args.seed if args.seed is not None else 0,
            store_count=args.stores,
            transactions_per_store=args.transactions,
        )
    corpus = generate_corpus(profile)
    paths = write_corpus(corpus, args.out)
    print(json.dumps({
        "tlog": str(paths["tlog"]), "plog": str(paths["plog"]),
        "manifest": str(paths["manifest"]),
        "transactions": profile.store_count * profile.transactions_per_store,
        "injected_errors": len(corpus.injected),
    }))
    return 0


def cmd_ingest(args) -> int:
    store = LogStore(args.store)
    tlog_report = store.ingest_tlog(Path(args.tlog)) if args.tlog else None
    plog_report = store.ingest_plog(Path(args.plog)) if args.plog else None
    out = {}
    for name, report in (("tlog", tlog_report), ("plog", plog_report)):
        if report is not None:
            out[name] = {
                "added": report.added,
                "duplicates": report.duplicates,
                "errors": [{"line": e.line, "code": e.code, "reason": e.reason}
                           for e in report.errors],
            }
    print(json.dumps(out))
    return 0


def cmd_reconstruct(args) -> int:
    store = LogStore(args.store)
    results = []
    skipped_samples = 0
    for txn, history in store.corrected_transactions():
        result = reconstruct(txn, history)
        results.append(result)
        if result.skipped:
            skipped_samples += 1
        if args.verify and not verify_roundtrip(result):
            print(json.dumps({"error": "replay.RoundTripFailed",
                              "key": str(txn.key)}), file=sys.stderr)
            return 3
    out = {"reconstructed": len(results), "skipped_samples": skipped_samples}
    if args.ground_truth:
        injected = manifest_from_json(Path(args.ground_truth).read_text(encoding="utf-8"))
        report = oracle_check(injected, results)
        out["checked"] = report.checked
        out["mismatches"] = len(report.mismatches)
        print(json.dumps(out))
        return 0 if report.ok else 3
    print(json.dumps(out))
    return 0


def cmd_extract(args) -> int:
    store = LogStore(args.store)
    schema = _load_schema(args)
    taxonomy = _load_taxonomy(args)
    policy = FilterPolicy.from_file(args.policy) if args.policy else FilterPolicy()
    if args.kind == "detection":
        dataset = build_detection_dataset(
            store, schema, taxonomy, split_ratios=args.ratios, seed=args.seed,
            policy=policy)
    else:
        if args.class_id is None:
            raise TxcError("correction extraction requires --class-id")
        dataset = build_correction_dataset(
            store, schema, taxonomy, taxonomy.classes[args.class_id],
            split_ratios=args.ratios, seed=args.seed, policy=policy)
    file_hash = write_feature_file(dataset, args.out)
    print(json.dumps({
        "out": str(args.out), "rows": len(dataset), "sha256": file_hash,
        "splits": {name: int((dataset.split == code).sum())
                   for code, name in enumerate(SPLIT_NAMES)},
    }))
    return 0


def _provenance(args, dataset) -> dict:
    import hashlib
    return {
        "feature_file": str(args.features),
        "feature_file_sha256": hashlib.sha256(Path(args.features).read_bytes()).hexdigest(),
        "rows": len(dataset),
    }


def cmd_train_detector(args) -> int:
    dataset = read_feature_file(args.features)
    taxonomy = dataset.taxonomy
    if args.mode == "per-label":
        if args.label is None:
            raise TxcError("per-label mode requires --label")
        label_id = taxonomy.by_name(args.label).id if not args.label.isdigit() else int(args.label)
        model = train_forest(dataset, mode=MODE_PER_LABEL, label_ids=(label_id,),
                             n_trees=args.trees, max_depth=args.max_depth,
                             min_leaf=args.min_leaf, seed=args.seed)
    else:
        model = train_forest(dataset, mode=MODE_JOINT, n_trees=args.trees,
                             max_depth=args.max_depth, min_leaf=args.min_leaf,
                             seed=args.seed)
    registry = ModelRegistry(args.registry)
    version = registry.save(PURPOSE_DETECTION, model, _provenance(args, dataset))
    manifest = registry.manifest(PURPOSE_DETECTION, version)
    if args.activate:
        registry.activate(PURPOSE_DETECTION, version)
    print(json.dumps({"purpose": PURPOSE_DETECTION, "version": version,
                      "checksum": manifest["checksum"],
                      "activated": bool(args.activate)}))
    return 0


def cmd_train_corrector(args) -> int:
    dataset = read_feature_file(args.features)
    if dataset.kind != "correction":
        raise TxcError("train-corrector needs a correction feature file")
    model = train_ovr_logistic(
        dataset, candidate_regularizations=tuple(args.penalties),
        folds=args.folds, seed=args.seed)
    registry = ModelRegistry(args.registry)
    purpose = correction_purpose(dataset.class_id)
    version = registry.save(purpose, model, _provenance(args, dataset))
    manifest = registry.manifest(purpose, version)
    if args.activate:
        registry.activate(purpose, version)
    print(json.dumps({"purpose": purpose, "version": version,
                      "checksum": manifest["checksum"],
                      "regularization": model.regularization,
                      "converged": model.fully_converged,
                      "activated": bool(args.activate)}))
    return 0


def cmd_evaluate(args) -> int:
    registry = ModelRegistry(args.registry)
    model = registry.load(args.purpose, args.version)
    dataset = read_feature_file(args.features, expected_schema=model.schema)
    split_code = SPLIT_NAMES.index(args.split.upper())
    rows = dataset.rows_for(split_code)
    if len(rows) == 0:
        raise TxcError(f"no rows in split {args.split}")
    if dataset.kind == "detection":
        probabilities = predict_matrix(model, dataset.X[rows])
        predicted = (probabilities >= 0.5).astype(int)
        truth = dataset.labels[rows][:, list(model.label_ids)]
        report = evaluate_detection(predicted, truth, model.label_names)
    else:
        rankings = rank_matrix(model, dataset.X[rows])
        report = evaluate_correction(rankings.tolist(), dataset.targets[rows].tolist(),
                                     model.class_values)
    registry.attach_evaluation(args.purpose, args.version, report.to_dict())
    print(report.to_text())
    return 0


def cmd_registry(args) -> int:
    registry = ModelRegistry(args.registry)
    if args.registry_command == "list":
        print(json.dumps(registry.list_artifacts(), indent=2))
        return 0
    registry.activate(args.purpose, args.version)
    print(json.dumps({"purpose": args.purpose, "version": args.version, "active": True}))
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve
    config = ServiceConfig.from_file(args.config)
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    serve(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="txcorrect",
        description="Detect and correct retail transaction errors from change-log history.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--profile", help="profile JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--stores", type=int, default=4)
    p.add_argument("--transactions", type=int, default=2000,
                   help="transactions per store")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="load tlog/plog files into a store")
    p.add_argument("--store", required=True, help="store directory")
    p.add_argument("--tlog")
    p.add_argument("--plog")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("reconstruct", help="rebuild erroneous versions from the PLOG")
    p.add_argument("--store", required=True)
    p.add_argument("--verify", action="store_true",
                   help="check the forward-replay round trip per transaction")
    p.add_argument("--ground-truth", help="ground_truth.json to compare against")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("extract", help="build a feature file from a store")
    p.add_argument("--store", required=True)
    p.add_argument("--kind", choices=("detection", "correction"), default="detection")
    p.add_argument("--class-id", type=int, default=None)
    p.add_argument("--schema", help="schema JSON (default: built-in)")
    p.add_argument("--taxonomy", help="taxonomy JSON (default: built-in)")
    p.add_argument("--policy", help="filter policy JSON (default: built-in)")
    p.add_argument("--ratios", type=_ratios, default=(0.7, 0.15, 0.15))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-detector", help="train a random-forest detector")
    p.add_argument("--features", required=True)
    p.add_argument("--mode", choices=("per-label", "joint"), default="joint")
    p.add_argument("--label", help="label name or id for per-label mode")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=16)
    p.add_argument("--min-leaf", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--registry", required=True)
    p.add_argument("--activate", action="store_true")
    p.set_defaults(func=cmd_train_detector)

    p = sub.add_parser("train-corrector", help="train an OvR logistic value predictor")
    p.add_argument("--features", required=True)
    p.add_argument("--penalties", type=float, nargs="+",
                   default=[0.001, 0.01, 0.1, 1.0, 10.0])
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--registry", required=True)
    p.add_argument("--activate", action="store_true")
    p.set_defaults(func=cmd_train_corrector)

    p = sub.add_parser("evaluate", help="evaluate a model and store the report")
    p.add_argument("--registry", required=True)
    p.add_argument("--purpose", required=True,
                   help="detection or correction:<class-id>")
    p.add_argument("--version", type=int, required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--split", default="test", choices=("train", "test", "validation"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("registry", help="list artifacts or flip the active version")
    reg_sub = p.add_subparsers(dest="registry_command", required=True)
    lp = reg_sub.add_parser("list")
    lp.add_argument("--registry", required=True)
    lp.set_defaults(func=cmd_registry)
    ap = reg_sub.add_parser("activate")
    ap.add_argument("--registry", required=True)
    ap.add_argument("--purpose", required=True)
    ap.add_argument("--version", type=int, required=True)
    ap.set_defaults(func=cmd_registry)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="service config JSON")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TxcError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
