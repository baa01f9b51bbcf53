import math

import pytest
from hypothesis import given, settings, strategies as st

from vipar.measures import EffectVector, gop_residual
from vipar.rootfind import (
    Bracket,
    BracketError,
    ConvergenceError,
    SolverConfig,
    solve_monotone,
)


def test_linear_root():
    r = solve_monotone(lambda u: u - 0.3, Bracket(0.0, 1.0))
    assert r.converged
    assert abs(r.root - 0.3) < 1e-12


def test_logit_root():
    r = solve_monotone(lambda u: math.log(u / (1 - u)), Bracket(0.0, 1.0))
    assert abs(r.root - 0.5) < 1e-12


def test_gop_residual_root():
    c = EffectVector(2.0, 1.0, 1.0, 1.0)
    r = solve_monotone(lambda u: gop_residual(u, c), Bracket(0.0, 0.5))
    assert abs(r.root - 1.0 / 3.0) < 1e-12


@pytest.mark.parametrize("k", [1, 2, 5, 17, 30])
def test_width_halves_each_iteration(k):
    # tolerances tight enough that only the iteration cap stops the loop
    cfg = SolverConfig(abs_tol_x=1e-300, abs_tol_f=1e-300, max_iter=k)
    br = Bracket(0.0, 1.0)
    w0 = br.width * (1 - 2 * cfg.endpoint_shrink)
    with pytest.raises(ConvergenceError) as ei:
        solve_monotone(lambda u: u - 0.3141, br, cfg)
    res = ei.value.result
    assert res.iterations == k
    assert res.bracket_width == pytest.approx(w0 * 2.0**-k, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    root=st.floats(0.01, 0.99),
    slope=st.floats(0.1, 100.0),
    curv=st.floats(0.0, 5.0),
)
def test_root_uniqueness(root, slope, curv):
    def f(u):
        return slope * (u - root) + curv * (u - root) ** 3

    cfg = SolverConfig()
    r = solve_monotone(f, Bracket(0.0, 1.0), cfg)
    d = 10 * cfg.abs_tol_x
    if 0.0 < r.root - d and r.root + d < 1.0:
        assert f(r.root - d) < 0 < f(r.root + d)


def test_same_sign_endpoints_raise():
    with pytest.raises(BracketError):
        solve_monotone(lambda u: u + 1.0, Bracket(0.0, 1.0))


def test_decreasing_function_rejected():
    with pytest.raises(BracketError):
        solve_monotone(lambda u: 0.3 - u, Bracket(0.0, 1.0))


def test_root_exactly_at_shrunken_endpoint():
    cfg = SolverConfig()
    a = cfg.endpoint_shrink
    r = solve_monotone(lambda u: u - a, Bracket(0.0, 1.0), cfg)
    assert r.root == a and r.residual == 0.0


def test_iteration_cap_reports_best_iterate():
    cfg = SolverConfig(abs_tol_x=1e-300, abs_tol_f=1e-300, max_iter=10)
    with pytest.raises(ConvergenceError) as ei:
        solve_monotone(lambda u: u - 0.3, Bracket(0.0, 1.0), cfg)
    assert abs(ei.value.result.root - 0.3) < 2.0**-9
    assert not ei.value.result.converged


@pytest.mark.parametrize("lo,hi", [(0.5, 0.5), (0.6, 0.2), (-0.1, 1.0), (0.0, math.nan)])
def test_invalid_bracket(lo, hi):
    with pytest.raises(ValueError):
        Bracket(lo, hi)


def test_invalid_config():
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(abs_tol_x=-1.0)


def test_deterministic():
    f = lambda u: math.log(u) + u - 0.7
    a = solve_monotone(f, Bracket(0.0, 1.0))
    b = solve_monotone(f, Bracket(0.0, 1.0))
    assert a == b


def test_newton_polish_keeps_contract():
    # the polished root must still sit inside the last bisection bracket
    f = lambda u: math.expm1(5 * (u - 0.42))
    cfg = SolverConfig(abs_tol_x=1e-6, abs_tol_f=1e-300)
    plain = solve_monotone(f, Bracket(0.0, 1.0), cfg)
    polished = solve_monotone(f, Bracket(0.0, 1.0), cfg, fprime=lambda u: 5 * math.exp(5 * (u - 0.42)))
    assert abs(polished.residual) <= abs(plain.residual)
    assert abs(polished.root - plain.root) <= 2e-6
    assert abs(polished.root - 0.42) < 1e-14
