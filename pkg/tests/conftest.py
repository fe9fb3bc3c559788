import numpy as np
import pytest


def random_reports(rng, m, n, floor=1e-4):
    """Random (m, n) row-stochastic matrix with every entry at least ``floor``."""
    p = rng.dirichlet(np.full(n, 0.7), size=m)
    p = floor + (1 - n * floor) * p
    return p / p.sum(axis=1, keepdims=True)


def random_simplex(rng, m):
    return rng.dirichlet(np.ones(m))


def naive_pool(reports, w):
    """Direct product formula with no log-domain stabilization."""
    reports = np.asarray(reports, dtype=float)
    num = np.prod(reports ** np.asarray(w)[:, None], axis=0)
    return num / num.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
