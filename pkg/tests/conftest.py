import math

import numpy as np
import pytest

from vipar import _backend

# Filled by tests/test_acceptance.py; printed at the end of the session.
ACCEPTANCE_RESULTS = []

BACKENDS = _backend.available()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def grid_root(f, lo, hi, points=1_000_000):
    """Locate the sign change of a vectorized increasing ``f`` on a uniform grid.

    The grid includes both bracket ends, where ``f`` takes its limits -inf
    and +inf. Returns (midpoint of the sign-change cell, grid step).
    Independent of the bisection code.
    """
    u = np.linspace(lo, hi, points)
    v = np.empty_like(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        v[1:-1] = f(u[1:-1])
    v[0], v[-1] = -np.inf, np.inf
    k = int(np.argmax(v > 0))
    assert np.all(v[:k] <= 0)
    return 0.5 * (u[k - 1] + u[k]), u[1] - u[0]


def gop_from_odds_product(u, c):
    """Residual built from the constructed table and the raw odds product (no log1p form)."""
    c1, c2, c3, c4 = c
    p00 = u
    p01 = c1 * u
    p10 = c2 * u / (1 - u + c2 * u)
    p11 = c1 * c3 * u
    odds = lambda p: p / (1 - p)
    return np.log(odds(p00) * odds(p01) * odds(p10) * odds(p11)) - math.log(c4)
