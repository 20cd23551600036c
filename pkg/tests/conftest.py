import pytest

from txcorrect.features import default_schema, default_taxonomy
from txcorrect.logstore import LogStore
from txcorrect.synth import easy_profile, generate_corpus


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture(scope="session")
def small_corpus():
    """Shared small corpus for unit tests; the acceptance suite builds its own."""
    return generate_corpus(easy_profile(seed=1234, store_count=2,
                                        transactions_per_store=400))


@pytest.fixture(scope="session")
def small_store(small_corpus):
    store = LogStore()
    assert not store.ingest_tlog(small_corpus.tlog).errors
    assert not store.ingest_plog(small_corpus.plog).errors
    return store
