import numpy as np
import pytest

from surveyperm import PopulationConfig, SurveyDataset, generate_population


def make_dataset(n_clusters=6, size=4, seed=0, p=1, weights="lognormal"):
    """Random clustered sample with both labels present."""
    rng = np.random.default_rng(seed)
    n = n_clusters * size
    cluster = np.repeat([f"c{i}" for i in range(n_clusters)], size)
    g = rng.integers(0, 2, n)
    g[0], g[1] = 0, 1
    x = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    y = x @ rng.normal(size=p) + np.repeat(rng.normal(size=n_clusters), size) + rng.normal(size=n)
    w = rng.lognormal(size=n) if weights == "lognormal" else np.ones(n)
    return SurveyDataset(y=y, g=g, w=w, cluster=cluster, x=x)


@pytest.fixture
def dataset():
    return make_dataset()


@pytest.fixture(scope="session")
def population():
    return generate_population(PopulationConfig(label="B"))


_acceptance_lines = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion; returns ``ok``."""
    lines = request.config.stash.setdefault(_acceptance_lines, [])

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_acceptance_lines, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
