"""Rebuild what a transaction looked like before operators fixed it.

The store only keeps corrected state; the change log keeps every fix. Walking
the log backwards recovers the erroneous original - the training data for
everything downstream. A ground-truth manifest from the generator proves the
reconstruction is exact.
"""

from txcorrect.logstore import LogStore
from txcorrect.replay import reconstruct, verify_roundtrip
from txcorrect.synth import easy_profile, generate_corpus, oracle_check

corpus = generate_corpus(easy_profile(seed=7, store_count=1, transactions_per_store=300))
print(f"generated {corpus.tlog.count(chr(10).encode()):,} TLOG rows, "
      f"{len(corpus.injected)} injected errors")

store = LogStore()
store.ingest_tlog(corpus.tlog)
store.ingest_plog(corpus.plog)

corrected = store.corrected_transactions()
print(f"{len(corrected)} transactions have an error plus a correction history")

txn, history = corrected[0]
result = reconstruct(txn, history)
print(f"\ntransaction {txn.key.store_number}/{txn.key.transaction_index}:")
for entry in result.applied:
    now = txn.get_field(entry.row_id, entry.field_name)
    was = result.erroneous.get_field(entry.row_id, entry.field_name)
    print(f"  row {entry.row_id} {entry.field_name}: stored={now!r} -> erroneous={was!r}")
print(f"forward replay restores the corrected state: {verify_roundtrip(result)}")

results = [reconstruct(t, h) for t, h in corrected]
report = oracle_check(corpus.injected, results)
print(f"\nground-truth oracle: {report.checked} injected values checked, "
      f"{len(report.mismatches)} mismatches")
