import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import gop_from_odds_product, grid_root
from vipar.measures import (
    DomainError,
    EffectVector,
    ProbTable,
    RiskPair,
    TargetPair,
    check_rr_sr_feasible,
    forward_gop,
    forward_rr_op,
    gop_bracket,
    gop_residual,
    gop_residual_derivative,
    inverse_gop,
    inverse_gop_many,
    inverse_rr_op,
    inverse_rr_op_many,
    rbc_risk,
    rr_op_bracket,
    rr_op_residual,
    rr_sr_witness_interval,
    solve_gop,
)


def exact_forward(p00, p01, p10, p11):
    p00, p01, p10, p11 = (Fraction(x) for x in (p00, p01, p10, p11))
    odds = lambda p: p / (1 - p)
    return (
        p01 / p00,
        odds(p10) / odds(p00),
        p11 / p01,
        odds(p00) * odds(p01) * odds(p10) * odds(p11),
    )


def rr_op_closed_form(rr, op):
    """p0 from rr(1-op) p0^2 + op(1+rr) p0 - op = 0, the root inside (0, min(1, 1/rr))."""
    if op == 1.0:
        return 1.0 / (1.0 + rr)
    a, b, c = rr * (1 - op), op * (1 + rr), -op
    disc = math.sqrt(b * b - 4 * a * c)
    # numerically stable pair of roots
    q = -0.5 * (b + math.copysign(disc, b))
    hi = min(1.0, 1.0 / rr)
    cands = [x for x in (q / a, c / q) if 0 < x < hi]
    assert len(cands) == 1
    return cands[0]


# ---------------------------------------------------------------- forward


@pytest.mark.parametrize(
    "p",
    [("0.5", "0.5", "0.5", "0.5"), ("0.2", "0.3", "0.4", "0.6"), ("0.1", "0.2", "0.3", "0.4")],
)
def test_forward_gop_matches_exact_arithmetic(p):
    got = forward_gop(ProbTable(*(float(x) for x in p))).as_tuple()
    want = exact_forward(*p)
    for g, w in zip(got, want):
        assert g == pytest.approx(float(w), rel=1e-14)


def test_forward_gop_stated_values():
    assert forward_gop(ProbTable(0.2, 0.3, 0.4, 0.6)).as_tuple() == pytest.approx(
        (1.5, 8 / 3, 2.0, 0.107142857), rel=1e-8
    )
    assert forward_gop(ProbTable(0.1, 0.2, 0.3, 0.4)).as_tuple() == pytest.approx(
        (2.0, 27 / 7, 2.0, 1 / 126), rel=1e-12
    )


@pytest.mark.parametrize("field,bad", [("p00", 0.0), ("p01", 1.0), ("p10", -0.2), ("p11", 1.2), ("p11", math.nan)])
def test_forward_gop_domain(field, bad):
    vals = dict(p00=0.5, p01=0.5, p10=0.5, p11=0.5)
    vals[field] = bad
    with pytest.raises(DomainError) as ei:
        forward_gop(ProbTable(**vals))
    assert ei.value.field == field


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_effect_vector_domain(bad):
    with pytest.raises(DomainError) as ei:
        EffectVector(1.0, 1.0, bad, 1.0)
    assert ei.value.field == "rr11"


# ---------------------------------------------------------------- bracket / residual


@pytest.mark.parametrize(
    "c1,c3,hi", [(2.0, 1.0, 0.5), (0.5, 0.5, 1.0), (4.0, 1.0, 0.25), (0.5, 8.0, 0.25)]
)
def test_gop_bracket(c1, c3, hi):
    b = gop_bracket(EffectVector(c1, 3.7, c3, 0.2))
    assert b.lo == 0.0 and b.hi == pytest.approx(hi, rel=1e-15)


@pytest.mark.parametrize(
    "u,c,want",
    [
        (0.5, (1, 1, 1, 1), 0.0),
        (1 / 3, (2, 1, 1, 1), 0.0),
        (0.25, (1, 1, 1, 1), 4 * math.log(1 / 3)),
    ],
)
def test_gop_residual_examples(u, c, want):
    assert gop_residual(u, EffectVector(*map(float, c))) == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("u", [0.0, 0.5, -0.1, 0.7])
def test_gop_residual_outside_bracket(u):
    with pytest.raises(DomainError):
        gop_residual(u, EffectVector(2.0, 1.0, 1.0, 1.0))


log_uniform = st.floats(-3.0, 3.0).map(math.exp)
effects = st.builds(EffectVector, log_uniform, log_uniform, log_uniform, log_uniform)


@settings(max_examples=200, deadline=None)
@given(effects, st.floats(1e-6, 1 - 1e-6))
def test_residual_agrees_with_odds_product_form(c, t):
    hi = gop_bracket(c).hi
    u = t * hi
    direct = float(gop_from_odds_product(np.array([u]), c.as_tuple())[0])
    if math.isfinite(direct):
        assert gop_residual(u, c) == pytest.approx(direct, abs=1e-8 * max(1.0, abs(direct)))


@settings(max_examples=100, deadline=None)
@given(effects)
def test_residual_strictly_increasing(c):
    hi = gop_bracket(c).hi
    u = np.linspace(0, hi, 1002)[1:-1]
    v = np.array([gop_residual(x, c) for x in u])
    assert np.all(np.diff(v) > 0)
    assert all(gop_residual_derivative(x, c) > 0 for x in u[::100])


@settings(max_examples=300, deadline=None)
@given(effects)
def test_residual_sign_structure(c):
    hi = gop_bracket(c).hi
    assert gop_residual(1e-8 * hi, c) < 0
    # the upper divergence is only logarithmic in the distance to hi, so
    # 1e-10 is the offset that works across the whole [e^-3, e^3]^4 box
    assert gop_residual(hi - 1e-10 * hi, c) > 0


@pytest.mark.xfail(strict=True, reason="residual still negative at hi - 1e-8*hi for this corner (about 0.03% of the box)")
def test_residual_positive_at_1e8_offset_corner_case():
    c = EffectVector(math.exp(3), math.exp(-3), math.exp(3), math.exp(3))
    hi = gop_bracket(c).hi
    assert gop_residual(hi - 1e-8 * hi, c) > 0


# ---------------------------------------------------------------- inverse


def test_inverse_symmetric():
    assert inverse_gop(EffectVector(1.0, 1.0, 1.0, 1.0)).as_tuple() == pytest.approx((0.5,) * 4, abs=1e-12)


def test_inverse_analytic():
    got = inverse_gop(EffectVector(2.0, 1.0, 1.0, 1.0)).as_tuple()
    assert got == pytest.approx((1 / 3, 2 / 3, 1 / 3, 2 / 3), abs=1e-10)


def test_inverse_against_grid_scan():
    c = (1.5, 8 / 3, 2.0, 3 / 28)
    est, step = grid_root(lambda u: gop_from_odds_product(u, c), 0.0, 1 / 3)
    assert est == pytest.approx(0.2, abs=2 * step)
    got = inverse_gop(EffectVector(*c))
    assert got.p00 == pytest.approx(est, abs=2 * step)
    assert got.as_tuple() == pytest.approx((0.2, 0.3, 0.4, 0.6), abs=1e-12)


def test_solve_gop_diagnostics():
    r = solve_gop(EffectVector(2.0, 1.0, 1.0, 1.0))
    assert r.converged and 0 < r.iterations <= 200
    assert abs(r.residual) <= 1e-12


probs = st.floats(0.001, 0.999)


@settings(max_examples=300, deadline=None)
@given(probs, probs, probs, probs)
def test_round_trip_probabilities(p00, p01, p10, p11):
    p = ProbTable(p00, p01, p10, p11)
    q = inverse_gop(forward_gop(p))
    assert q.as_tuple() == pytest.approx(p.as_tuple(), abs=1e-9)


def rounding_floor(p: ProbTable):
    """Relative change of the measures caused by rounding each cell to a double.

    One half-ulp in p moves log odds(p) by about eps / (2 (1 - p)); the
    factor 4 covers the four cells entering GOP.
    """
    eps = np.finfo(float).eps
    return 4 * eps * sum(1 / (1 - x) for x in p.as_tuple())


@settings(max_examples=300, deadline=None)
@given(effects)
def test_round_trip_effects(c):
    p = inverse_gop(c)
    back = forward_gop(p).as_tuple()
    # 1e-8 wherever storing the table as doubles allows it
    tol = max(1e-8, rounding_floor(p))
    for g, w in zip(back, c.as_tuple()):
        assert abs(g - w) <= tol * w


@pytest.mark.xfail(strict=True, reason="1 - p11 = 6e-9 here; one ulp of p11 moves GOP by 1.9e-8 relative")
def test_round_trip_effects_at_precision_floor():
    c = EffectVector(math.exp(2), math.exp(-3), math.exp(3), math.exp(3))
    back = forward_gop(inverse_gop(c)).as_tuple()
    assert all(abs(g - w) <= 1e-8 * w for g, w in zip(back, c.as_tuple()))


def test_round_trip_bulk(backend):
    rng = np.random.default_rng(7)
    P = rng.uniform(0.001, 0.999, size=(10_000, 4))
    odds = P / (1 - P)
    c = (P[:, 1] / P[:, 0], odds[:, 2] / odds[:, 0], P[:, 3] / P[:, 1], odds.prod(axis=1))
    res = inverse_gop_many(*c, backend=backend)
    assert res.converged.all()
    assert np.max(np.abs(res.probs - P)) <= 1e-9


def test_surjectivity_on_extremes():
    for c in [(math.e**3, math.e**3, math.e**3, math.e**-3), (math.e**-3,) * 4, (math.e**3,) * 4]:
        p = inverse_gop(EffectVector(*c))
        assert all(0 < x < 1 for x in p.as_tuple())


def test_root_closer_to_endpoint_than_default_shrink():
    # p11 = 1 - 1e-13: the default 1e-12 shrink cuts the root off, the retry finds it
    p = ProbTable(0.3, 0.5, 0.4, 1 - 1e-13)
    c = forward_gop(p)
    q = inverse_gop(c)
    # u is accurate to the absolute width tolerance; p11 = k2*u scales it by k2
    k2 = c.rr0 * c.rr11
    assert q.as_tuple() == pytest.approx(p.as_tuple(), abs=k2 * 1e-12)
    assert q.p11 < 1.0
    tiny = ProbTable(1e-20, 0.5, 0.4, 0.6)
    assert inverse_gop(forward_gop(tiny)).p00 == pytest.approx(1e-20, rel=1e-6)


def test_unrepresentable_table_raises_bracket_error():
    from vipar.rootfind import BracketError

    # GOP = e^20 forces 1 - p00 ~ e^-20, then OR10 = e^20 gives 1 - p10 ~ e^-40
    c = tuple(math.exp(v) for v in (-20.0, 20.0, 0.0, 20.0))
    with pytest.raises(BracketError, match="rounding"):
        inverse_gop(EffectVector(*c))
    res = inverse_gop_many(*([v, 1.0] for v in c))
    assert not res.converged[0] and res.converged[1]
    assert np.isnan(res.probs[0]).all()


# ---------------------------------------------------------------- rr / op


@pytest.mark.parametrize(
    "p,want", [((0.5, 0.5), (1.0, 1.0)), ((0.6, 0.3), (2.0, 9 / 14)), ((0.9, 0.1), (9.0, 1.0))]
)
def test_forward_rr_op(p, want):
    assert forward_rr_op(RiskPair(*p)).as_tuple() == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize(
    "t,want", [((1.0, 1.0), (0.5, 0.5)), ((2.0, 9 / 14), (0.6, 0.3)), ((9.0, 1.0), (0.9, 0.1))]
)
def test_inverse_rr_op(t, want):
    assert inverse_rr_op(TargetPair(*t)).as_tuple() == pytest.approx(want, abs=1e-12)


targets = st.builds(TargetPair, log_uniform, log_uniform)


@settings(max_examples=300, deadline=None)
@given(targets)
def test_inverse_rr_op_matches_closed_form(t):
    p0 = rr_op_closed_form(t.rr, t.op)
    got = inverse_rr_op(t)
    assert got.p0 == pytest.approx(p0, abs=1e-12)
    assert got.p1 == pytest.approx(t.rr * p0, abs=1e-11)


@settings(max_examples=300, deadline=None)
@given(targets)
def test_rr_op_round_trip_targets(t):
    back = forward_rr_op(inverse_rr_op(t)).as_tuple()
    for g, w in zip(back, t.as_tuple()):
        assert abs(g - w) <= 1e-8 * w


@settings(max_examples=300, deadline=None)
@given(probs, probs)
def test_rr_op_round_trip_risks(p1, p0):
    q = inverse_rr_op(forward_rr_op(RiskPair(p1, p0)))
    assert q.as_tuple() == pytest.approx((p1, p0), abs=1e-9)


def test_rr_op_bulk(backend):
    rng = np.random.default_rng(3)
    P = rng.uniform(0.001, 0.999, size=(10_000, 2))
    rr = P[:, 0] / P[:, 1]
    op = P.prod(axis=1) / (1 - P).prod(axis=1)
    res = inverse_rr_op_many(rr, op, backend=backend)
    assert res.converged.all()
    assert np.max(np.abs(res.probs - P)) <= 1e-9


def test_rr_op_residual_and_bracket():
    t = TargetPair(2.0, 9 / 14)
    assert rr_op_bracket(t).hi == 0.5
    assert rr_op_residual(0.3, t) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        rr_op_residual(0.5, t)


# ---------------------------------------------------------------- feasibility


@pytest.mark.parametrize("r,s,want", [(2.0, 5.0, True), (0.5, 3.0, False), (0.5, 2.0, False)])
def test_rr_sr_examples(r, s, want):
    assert check_rr_sr_feasible(r, s) is want


@pytest.mark.parametrize("r,s", [(0.0, 1.0), (1.0, -2.0), (math.nan, 1.0)])
def test_rr_sr_domain(r, s):
    with pytest.raises(DomainError):
        check_rr_sr_feasible(r, s)


def brute_force_feasible(r, s, points=10_000):
    p01 = (np.arange(points) + 0.5) / points
    p00 = p01 / r
    p11 = 1 - s * (1 - p01)
    return bool(np.any((p00 > 0) & (p00 < 1) & (p11 > 0) & (p11 < 1)))


def test_feasibility_against_interval_and_scan():
    axis = 0.02 * np.arange(1, 201)
    resolution = 0.02
    for r in axis:
        for s in axis:
            got = check_rr_sr_feasible(r, s)
            lo, hi = rr_sr_witness_interval(r, s)
            off_boundary = abs(s * (1 - r) - 1) >= resolution
            if off_boundary:
                assert got == (lo < hi)
    # the p01 scan is coarser, so sample it on a sub-grid
    for r in axis[::7]:
        for s in axis[::7]:
            if abs(s * (1 - r) - 1) >= resolution:
                assert check_rr_sr_feasible(r, s) == brute_force_feasible(r, s)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
def test_feasible_cells_have_valid_witness(r, s):
    if check_rr_sr_feasible(r, s):
        lo, hi = rr_sr_witness_interval(r, s)
        p01 = 0.5 * (lo + hi)
        p00, p11 = p01 / r, 1 - s * (1 - p01)
        assert 0 < p00 < 1 and 0 < p11 < 1
        assert (1 - p11) / (1 - p01) == pytest.approx(s)
        assert p01 / p00 == pytest.approx(r)


# ---------------------------------------------------------------- rbc


def test_rbc_examples():
    assert rbc_risk(0.0, 0.0, 1) == 0.5
    assert rbc_risk(0.0, math.log(3), 1) is None
    assert rbc_risk(math.log(2), 0.0, 0) == pytest.approx(1.0)


@settings(max_examples=500, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.sampled_from([0, 1]))
def test_rbc_risk_in_unit_interval(a, b, trt):
    v = rbc_risk(a, b, trt)
    eta = math.exp(a + b * trt)
    if v is None:
        assert eta > 2
    else:
        assert 0 < v <= 1


def test_rbc_trt_domain():
    with pytest.raises(DomainError):
        rbc_risk(0.0, 0.0, 2)
