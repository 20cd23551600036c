"""Recommend correction values: one-vs-rest logistic regression, top-k ranked.

The model trains on erroneous transactions whose history corrected the first
tender's type code; the target is the corrected value. Scores are per-value
sigmoids used for ranking.
"""

from txcorrect.features import (
    FeatureVector, SPLIT_TEST, build_correction_dataset, default_schema,
    default_taxonomy, extract,
)
from txcorrect.learn import rank_matrix, recommend_values, train_ovr_logistic
from txcorrect.logstore import LogStore
from txcorrect.metrics import evaluate_correction
from txcorrect.synth import easy_profile, generate_corpus

corpus = generate_corpus(easy_profile(seed=23, store_count=2, transactions_per_store=1500))
store = LogStore()
store.ingest_tlog(corpus.tlog)
store.ingest_plog(corpus.plog)

schema, taxonomy = default_schema(), default_taxonomy()
tender1 = taxonomy.classes[0]
dataset = build_correction_dataset(store, schema, taxonomy, tender1, seed=23)
print(f"correction dataset for {tender1.name}: {len(dataset)} rows, "
      f"domain {list(tender1.domain)}")

model = train_ovr_logistic(dataset, folds=5, seed=23)
print(f"chosen L2 penalty: {model.regularization}, converged: {model.fully_converged}")

test_rows = dataset.rows_for(SPLIT_TEST)
rankings = rank_matrix(model, dataset.X[test_rows]).tolist()
report = evaluate_correction(rankings, dataset.targets[test_rows].tolist(),
                             model.class_values)
print("\n" + report.to_text())

print("\ntop-3 recommendations for one erroneous transaction:")
row = test_rows[0]
vector = FeatureVector(schema.fingerprint, dataset.X[row])
for value, score in recommend_values(model, vector, k=3):
    print(f"  {value:8s} score={score:.4f}")
print(f"true corrected value: {model.class_values[dataset.targets[row]]}")
