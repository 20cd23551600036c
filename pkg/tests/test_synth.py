import numpy as np
import pytest

from txcorrect.features import build_detection_dataset, default_schema, default_taxonomy
from txcorrect.logstore import LogStore
from txcorrect.prep import qualify
from txcorrect.replay import reconstruct
from txcorrect.synth import (
    EASY,
    HARD,
    ErrorModelSpec,
    GeneratorProfile,
    InvalidProfile,
    easy_profile,
    generate_corpus,
    manifest_from_json,
    oracle_check,
)
from txcorrect.txmodel import build_transaction
from oracles import best_single_feature_threshold, binomial_mass_between


def test_zero_rate_produces_clean_plog():
    taxonomy = default_taxonomy()
    profile = easy_profile(seed=3, store_count=1, transactions_per_store=50,
                           rates=(0.0, 0.0, 0.0))
    corpus = generate_corpus(profile)
    assert corpus.injected == ()
    assert corpus.plog.decode().count("\n") == 1  # header only


def test_same_seed_byte_identical():
    a = generate_corpus(easy_profile(seed=9, store_count=1, transactions_per_store=60))
    b = generate_corpus(easy_profile(seed=9, store_count=1, transactions_per_store=60))
    assert a.tlog == b.tlog
    assert a.plog == b.plog
    assert a.manifest_json() == b.manifest_json()
    c = generate_corpus(easy_profile(seed=10, store_count=1, transactions_per_store=60))
    assert c.tlog != a.tlog


def test_injection_count_within_binomial_band():
    # Oracle: the binomial 99% band for n=1000, p=0.1 sits inside [60, 140].
    assert binomial_mass_between(1000, 0.1, 60, 140) > 0.99
    taxonomy = default_taxonomy()
    profile = GeneratorProfile(
        seed=17, store_count=1, transactions_per_store=1000,
        error_model=(ErrorModelSpec(taxonomy.classes[0], 0.1, EASY),),
    )
    corpus = generate_corpus(profile)
    assert 60 <= len(corpus.injected) <= 140


def test_invalid_profile_rejected():
    taxonomy = default_taxonomy()
    with pytest.raises(InvalidProfile):
        ErrorModelSpec(taxonomy.classes[0], 1.5, EASY)
    with pytest.raises(InvalidProfile):
        GeneratorProfile(seed=1, store_count=0)
    with pytest.raises(InvalidProfile):
        ErrorModelSpec(taxonomy.classes[0], 0.1, "MEDIUM")


def test_generated_transactions_validate_and_qualify(small_corpus):
    store = LogStore()
    store.ingest_tlog(small_corpus.tlog)
    keys = store.keys()
    assert keys
    for key in keys[:100]:
        txn = store.transaction(key)  # build_transaction validates the tree
        assert qualify(txn).accepted, key


def test_manifest_roundtrip(small_corpus):
    injected = manifest_from_json(small_corpus.manifest_json())
    assert injected == list(small_corpus.injected)


def test_oracle_flags_tampering(small_corpus, small_store):
    results = [reconstruct(t, h) for t, h in small_store.corrected_transactions()]
    clean_report = oracle_check(small_corpus.injected, results)
    assert clean_report.ok

    # tamper with one reconstruction
    bad = results[0]
    injected_here = [e for e in small_corpus.injected if e.key == bad.corrected.key]
    target = injected_here[0]
    from txcorrect.txmodel import Code
    tampered = bad.__class__(
        erroneous=bad.erroneous.set_field(target.row_id, target.field_name, Code("BARTER")),
        corrected=bad.corrected, applied=bad.applied, skipped=bad.skipped)
    report = oracle_check(small_corpus.injected, [tampered] + results[1:])
    assert not report.ok
    assert len(report.mismatches) >= 1


def test_empty_corpus_oracle():
    report = oracle_check([], [])
    assert report.ok and report.checked == 0


def test_easy_profile_single_feature_recoverability(small_corpus, small_store):
    """Designed guarantee: one feature's threshold separates EASY errors at >= 0.9."""
    schema, taxonomy = default_schema(), default_taxonomy()
    ds = build_detection_dataset(small_store, schema, taxonomy, seed=3)
    names = schema.feature_names()
    column = names.index("tender1_type")
    label = ds.labels[:, 0]
    # restrict to rows where tender1 exists (all transactions have >= 1 tender)
    X = ds.X[:, [column]].tolist()
    accuracy = best_single_feature_threshold(X, label.tolist())
    assert accuracy >= 0.9


def test_hard_errors_have_no_single_feature_signal():
    taxonomy = default_taxonomy()
    easy = GeneratorProfile(
        seed=21, store_count=1, transactions_per_store=800,
        error_model=(ErrorModelSpec(taxonomy.classes[0], 0.25, EASY),))
    hard = GeneratorProfile(
        seed=21, store_count=1, transactions_per_store=800,
        error_model=(ErrorModelSpec(taxonomy.classes[0], 0.25, HARD),))
    schema = default_schema()
    accuracies = {}
    for name, profile in (("easy", easy), ("hard", hard)):
        corpus = generate_corpus(profile)
        store = LogStore()
        store.ingest_tlog(corpus.tlog)
        store.ingest_plog(corpus.plog)
        ds = build_detection_dataset(store, schema, taxonomy, seed=0)
        column = schema.feature_names().index("tender1_type")
        accuracies[name] = best_single_feature_threshold(
            ds.X[:, [column]].tolist(), ds.labels[:, 0].tolist())
    assert accuracies["easy"] >= 0.9
    assert accuracies["hard"] < accuracies["easy"] - 0.1


def test_plog_sequences_gap_free(small_store):
    for key in small_store.keys():
        entries = small_store.entries_for(key)
        assert [e.sequence for e in entries] == list(range(1, len(entries) + 1))
