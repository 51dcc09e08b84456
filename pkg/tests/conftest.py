from importlib.resources import files

import pytest

from global_aware import kernels
from global_aware.model import SyntheticSpec, load_model, make_synthetic

TM1_PATH = files("global_aware") / "fixtures" / "tm1.json"


@pytest.fixture
def tm1():
    return load_model(TM1_PATH)


@pytest.fixture
def src2(tm1):
    return tm1.default_source()


@pytest.fixture(scope="session")
def synth():
    return make_synthetic(SyntheticSpec(seed=0))


@pytest.fixture(scope="session")
def tiny_synth():
    """Small vocabulary so exhaustive enumeration stays cheap."""
    return make_synthetic(SyntheticSpec(seed=5, vocab_size=4, source_len=5))


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one criterion outcome; the line is echoed and summarized at the end."""

    def report(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
