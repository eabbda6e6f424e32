import numpy as np
import pytest

from ggmcpd.ggm import PrecisionMatrix
from ggmcpd.scenarios import random_sparse_precision


_ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo checks")
    config.stash[_ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record a criterion outcome, print it, then assert it."""

    def report(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        print(line)
        request.config.stash[_ACCEPTANCE_LINES].append(line)
        assert passed, line

    return report


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_omega():
    """Sparse unit-diagonal precision on 10 nodes."""
    return random_sparse_precision(10, 3, lambda0=0.2, seed=7)


@pytest.fixture(scope="session")
def tridiagonal():
    p = 5
    m = 2.0 * np.eye(p)
    idx = np.arange(p - 1)
    m[idx, idx + 1] = m[idx + 1, idx] = -0.6
    return PrecisionMatrix(m)


def random_spd(rng, p, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    lam = np.exp(rng.uniform(0.0, np.log(cond), size=p))
    m = (q * lam) @ q.T
    return 0.5 * (m + m.T)
