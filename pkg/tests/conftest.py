import numpy as np
import pytest

from asymptopt.pareto import discretize
from asymptopt.problems import RunConfig, load_bundled


class Loaded:
    def __init__(self, name):
        self.spec = load_bundled(name)
        self.f = self.spec.objective()
        self.X = self.spec.feasible()
        self.g = RunConfig().grid_for(self.spec)
        self._data = None

    @property
    def data(self):
        if self._data is None:
            self._data = discretize(self.f, self.X, self.g)
        return self._data


@pytest.fixture(scope="session")
def corpus():
    return {name: Loaded(name) for name in ("example-3.1", "example-4.1", "example-4.2", "sqrt-abs")}


@pytest.fixture(scope="session")
def ex31(corpus):
    return corpus["example-3.1"]


@pytest.fixture(scope="session")
def ex41(corpus):
    return corpus["example-4.1"]


@pytest.fixture(scope="session")
def ex42(corpus):
    return corpus["example-4.2"]


@pytest.fixture(scope="session")
def sqrtabs(corpus):
    return corpus["sqrt-abs"]


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def _record(label, ok, msg):
        line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {msg}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
