import pytest


@pytest.fixture(scope="session", autouse=True)
def _isolated_cache(tmp_path_factory):
    # Reference solutions go to a private cache for the whole session.
    mp = pytest.MonkeyPatch()
    mp.setenv("MLP_CACHE_DIR", str(tmp_path_factory.mktemp("refcache")))
    yield
    mp.undo()
