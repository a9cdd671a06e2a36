import numpy as np
import pytest
from hypothesis import settings

from probsparse import kernels
from probsparse.numeric import make_rng

settings.register_profile("default", derandomize=True, deadline=None, max_examples=200)
settings.load_profile("default")

_CRITERIA = {}


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per kernel backend."""
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return make_rng(20240607)


def qkv(rng, length, d, scale=1.0):
    return tuple(rng.standard_normal((length, d)) * scale for _ in range(3))


@pytest.fixture
def criterion():
    """Record one acceptance line; call before asserting so failures are reported too."""

    def record(cid, ok, detail=""):
        _CRITERIA[cid] = (None if ok is None else bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA):
        ok, detail = _CRITERIA[cid]
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"{cid}: {status}  {detail}")
