"""Train random-forest detectors for tender-type errors and evaluate them.

One binary forest per error position (binary relevance); the joint model is
the same thing for all three positions at once. The evaluation prints the
standard report: per-label precision/recall, subset accuracy, Jaccard.
"""

from txcorrect.features import (
    SPLIT_TEST, build_detection_dataset, default_schema, default_taxonomy,
)
from txcorrect.learn import MODE_JOINT, MODE_PER_LABEL, predict_matrix, train_forest
from txcorrect.logstore import LogStore
from txcorrect.metrics import evaluate_detection
from txcorrect.synth import easy_profile, generate_corpus

corpus = generate_corpus(easy_profile(seed=11, store_count=2, transactions_per_store=1500))
store = LogStore()
store.ingest_tlog(corpus.tlog)
store.ingest_plog(corpus.plog)

schema, taxonomy = default_schema(), default_taxonomy()
dataset = build_detection_dataset(store, schema, taxonomy, seed=11)
print(f"dataset: {len(dataset)} rows, positives per class "
      f"{dataset.labels.sum(axis=0).tolist()}")

test_rows = dataset.rows_for(SPLIT_TEST)
X, Y = dataset.X[test_rows], dataset.labels[test_rows]

print("\nper-label model for the first tender position:")
single = train_forest(dataset, mode=MODE_PER_LABEL, label_ids=(0,), n_trees=50, seed=11)
predictions = (predict_matrix(single, X) >= 0.5).astype(int)
print(evaluate_detection(predictions, Y[:, [0]], single.label_names).to_text())

print("\njoint model over all three tender positions:")
joint = train_forest(dataset, mode=MODE_JOINT, n_trees=50, seed=11)
predictions = (predict_matrix(joint, X) >= 0.5).astype(int)
print(evaluate_detection(predictions, Y, joint.label_names).to_text())
