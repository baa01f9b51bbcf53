"""Effect measures for two sequential binary treatments and their inverses.

Cell probabilities are indexed ``p_{a1,a0}``: ``p01`` is the outcome risk
with ``a1 = 0`` and ``a0 = 1``. The four measures

    RR0  = p01 / p00
    OR10 = odds(p10) / odds(p00)
    RR11 = p11 / p01
    GOP  = prod odds(p_{a1,a0})

range freely over the positive orthant; every positive quadruple maps back to
exactly one table in ``(0, 1)^4``. The inverse fixes ``u = p00``, writes the
other three cells as functions of ``u`` and solves a monotone scalar equation
in ``u``.

The two-arm analogue pairs the risk ratio with the odds product.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from vipar import _backend
from vipar.rootfind import (
    Bracket,
    BracketError,
    ConvergenceError,
    RootResult,
    SolverConfig,
    solve_monotone,
)

__all__ = [
    "DomainError",
    "BracketError",
    "ConvergenceError",
    "ProbTable",
    "EffectVector",
    "RiskPair",
    "TargetPair",
    "forward_gop",
    "gop_bracket",
    "gop_residual",
    "gop_residual_derivative",
    "solve_gop",
    "inverse_gop",
    "table_from_root",
    "forward_rr_op",
    "rr_op_bracket",
    "rr_op_residual",
    "solve_rr_op",
    "inverse_rr_op",
    "check_rr_sr_feasible",
    "rr_sr_witness_interval",
    "rbc_risk",
    "BatchInverse",
    "inverse_gop_many",
    "inverse_rr_op_many",
]


class DomainError(ValueError):
    """An input lies outside the domain of the map. ``field`` names it."""

    def __init__(self, field, value, message):
        super().__init__(f"{field}={value!r}: {message}")
        self.field = field
        self.value = value


def _check_prob(field, value):
    value = float(value)
    if not 0.0 < value < 1.0:
        raise DomainError(field, value, "probability must lie strictly inside (0, 1)")
    return value


def _check_positive(field, value):
    value = float(value)
    if not (value > 0.0 and math.isfinite(value)):
        raise DomainError(field, value, "must be a positive finite number")
    return value


def _odds(p):
    return p / (1.0 - p)


@dataclass(frozen=True)
class ProbTable:
    """Outcome risks for the four treatment histories of one covariate stratum."""

    p00: float
    p01: float
    p10: float
    p11: float

    def __post_init__(self):
        for name in ("p00", "p01", "p10", "p11"):
            object.__setattr__(self, name, _check_prob(name, getattr(self, name)))

    def cell(self, a1: int, a0: int) -> float:
        return getattr(self, f"p{int(a1)}{int(a0)}")

    def as_tuple(self):
        return astuple(self)


@dataclass(frozen=True)
class EffectVector:
    """``(RR0, OR10, RR11, GOP)``; the first three are targets, GOP the nuisance."""

    rr0: float
    or10: float
    rr11: float
    gop: float

    def __post_init__(self):
        for name in ("rr0", "or10", "rr11", "gop"):
            object.__setattr__(self, name, _check_positive(name, getattr(self, name)))

    def as_tuple(self):
        return astuple(self)


@dataclass(frozen=True)
class RiskPair:
    p1: float
    p0: float

    def __post_init__(self):
        object.__setattr__(self, "p1", _check_prob("p1", self.p1))
        object.__setattr__(self, "p0", _check_prob("p0", self.p0))

    def as_tuple(self):
        return astuple(self)


@dataclass(frozen=True)
class TargetPair:
    rr: float
    op: float

    def __post_init__(self):
        object.__setattr__(self, "rr", _check_positive("rr", self.rr))
        object.__setattr__(self, "op", _check_positive("op", self.op))

    def as_tuple(self):
        return astuple(self)


# --------------------------------------------------------------------------
# four-cell map


def forward_gop(p: ProbTable) -> EffectVector:
    if not isinstance(p, ProbTable):
        p = ProbTable(*p)
    num = p.p00 * p.p01 * p.p10 * p.p11
    den = (1.0 - p.p00) * (1.0 - p.p01) * (1.0 - p.p10) * (1.0 - p.p11)
    return EffectVector(
        rr0=p.p01 / p.p00,
        or10=_odds(p.p10) / _odds(p.p00),
        rr11=p.p11 / p.p01,
        gop=num / den,
    )


def gop_bracket(c: EffectVector) -> Bracket:
    """Admissible range of ``u = p00``: ``(0, min(1, 1/RR0, 1/(RR0*RR11)))``."""
    if not isinstance(c, EffectVector):
        c = EffectVector(*c)
    return Bracket(0.0, min(1.0, 1.0 / c.rr0, 1.0 / (c.rr0 * c.rr11)))


def _log(x):
    return math.log(x) if x > 0.0 else -math.inf


def _log1m(x):
    # log(1 - x), continued as -inf past the singularity so residuals stay
    # monotone right up to (and past) a rounded bracket end
    return math.log1p(-x) if x < 1.0 else -math.inf


def _gop_f(u, c1, k2, shift):
    if u <= 0.0:
        return -math.inf
    return 4.0 * math.log(u) - 2.0 * _log1m(u) - _log1m(c1 * u) - _log1m(k2 * u) + shift


def _gop_shift(c):
    # log(RR0^2 * OR10 * RR11 / GOP): the u-free part of the log odds product
    return 2.0 * math.log(c.rr0) + math.log(c.or10) + math.log(c.rr11) - math.log(c.gop)


def _gop_df(u, c1, k2):
    return 4.0 / u + 2.0 / (1.0 - u) + c1 / (1.0 - c1 * u) + k2 / (1.0 - k2 * u)


def gop_residual(u: float, c: EffectVector) -> float:
    """Log GOP of the table built from ``p00 = u``, minus ``log(c.gop)``.

    Strictly increasing in ``u`` and running from -inf to +inf across
    ``gop_bracket(c)``.
    """
    if not isinstance(c, EffectVector):
        c = EffectVector(*c)
    br = gop_bracket(c)
    u = float(u)
    if not br.lo < u < br.hi:
        raise DomainError("u", u, f"must lie inside the open bracket ({br.lo!r}, {br.hi!r})")
    return _gop_f(u, c.rr0, c.rr0 * c.rr11, _gop_shift(c))


def gop_residual_derivative(u: float, c: EffectVector) -> float:
    if not isinstance(c, EffectVector):
        c = EffectVector(*c)
    return _gop_df(float(u), c.rr0, c.rr0 * c.rr11)


def table_from_root(u: float, c: EffectVector) -> ProbTable:
    """The unique table with ``p00 = u`` matching the three target measures."""
    c1, c2, c3 = c.rr0, c.or10, c.rr11
    return ProbTable(
        p00=u,
        p01=c1 * u,
        p10=c2 * u / (1.0 - u + c2 * u),
        p11=c1 * c3 * u,
    )


# Shrinks tried, in order, after the configured one fails the endpoint sign
# check. That happens when some cell risk lies within about eps*w of 0 or 1,
# which moderate measures (|log c| near 8) already reach.
RETRY_SHRINKS = (1e-14, 1e-16, 1e-20, 1e-40, 1e-80, 1e-160, 1e-280)


def _retry_shrinks(cfg: SolverConfig):
    return [s for s in RETRY_SHRINKS if s < cfg.endpoint_shrink]


def _solve_widening(f, bracket, cfg, fprime):
    cfg = cfg or SolverConfig()
    try:
        return solve_monotone(f, bracket, cfg, fprime)
    except BracketError as first:
        for eps in _retry_shrinks(cfg):
            try:
                return solve_monotone(f, bracket, replace(cfg, endpoint_shrink=eps), fprime)
            except BracketError:
                continue
        raise first


def _unrepresentable(exc: DomainError, target):
    return BracketError(
        f"{exc.field} is within double-precision rounding of 0 or 1 for {target}; "
        "the table exists but cannot be stored as floats"
    )


def solve_gop(c: EffectVector, cfg: Optional[SolverConfig] = None) -> RootResult:
    """Bisection for ``p00``; returns the raw solver result.

    If the configured endpoint shrink cuts off the root, the solve is
    repeated with the smaller shrinks in ``RETRY_SHRINKS``.
    """
    if not isinstance(c, EffectVector):
        c = EffectVector(*c)
    c1, k2 = c.rr0, c.rr0 * c.rr11
    shift = _gop_shift(c)
    return _solve_widening(
        lambda u: _gop_f(u, c1, k2, shift),
        gop_bracket(c),
        cfg,
        fprime=lambda u: _gop_df(u, c1, k2),
    )


def inverse_gop(c: EffectVector, cfg: Optional[SolverConfig] = None) -> ProbTable:
    """Recover the four cell risks from ``(RR0, OR10, RR11, GOP)``.

    Succeeds for every positive finite quadruple whose table is representable
    in double precision. ``ConvergenceError`` only comes from a too-small
    ``cfg.max_iter``; ``BracketError`` means some cell risk rounds to 0 or 1.
    """
    if not isinstance(c, EffectVector):
        c = EffectVector(*c)
    res = solve_gop(c, cfg)
    try:
        return table_from_root(res.root, c)
    except DomainError as exc:
        raise _unrepresentable(exc, c) from None


# --------------------------------------------------------------------------
# two-arm map


def forward_rr_op(p: RiskPair) -> TargetPair:
    if not isinstance(p, RiskPair):
        p = RiskPair(*p)
    return TargetPair(
        rr=p.p1 / p.p0,
        op=(p.p1 * p.p0) / ((1.0 - p.p1) * (1.0 - p.p0)),
    )


def rr_op_bracket(t: TargetPair) -> Bracket:
    if not isinstance(t, TargetPair):
        t = TargetPair(*t)
    return Bracket(0.0, min(1.0, 1.0 / t.rr))


def _rr_f(p0, rr, shift):
    if p0 <= 0.0:
        return -math.inf
    return 2.0 * math.log(p0) - _log1m(rr * p0) - _log1m(p0) + shift


def _rr_df(p0, rr):
    return 2.0 / p0 + rr / (1.0 - rr * p0) + 1.0 / (1.0 - p0)


def rr_op_residual(p0: float, t: TargetPair) -> float:
    """``log OP(rr * p0, p0) - log(t.op)``; increasing in ``p0``."""
    if not isinstance(t, TargetPair):
        t = TargetPair(*t)
    br = rr_op_bracket(t)
    p0 = float(p0)
    if not br.lo < p0 < br.hi:
        raise DomainError("p0", p0, f"must lie inside the open bracket ({br.lo!r}, {br.hi!r})")
    return _rr_f(p0, t.rr, math.log(t.rr) - math.log(t.op))


def solve_rr_op(t: TargetPair, cfg: Optional[SolverConfig] = None) -> RootResult:
    if not isinstance(t, TargetPair):
        t = TargetPair(*t)
    rr = t.rr
    shift = math.log(t.rr) - math.log(t.op)
    return _solve_widening(
        lambda p0: _rr_f(p0, rr, shift),
        rr_op_bracket(t),
        cfg,
        fprime=lambda p0: _rr_df(p0, rr),
    )


def inverse_rr_op(t: TargetPair, cfg: Optional[SolverConfig] = None) -> RiskPair:
    if not isinstance(t, TargetPair):
        t = TargetPair(*t)
    res = solve_rr_op(t, cfg)
    try:
        return RiskPair(p1=t.rr * res.root, p0=res.root)
    except DomainError as exc:
        raise _unrepresentable(exc, t) from None


# --------------------------------------------------------------------------
# variation-dependent alternatives


def check_rr_sr_feasible(r: float, s: float) -> bool:
    """Can a stratum have ``RR0 = r`` together with survival ratio ``SR11 = s``?

    Feasible exactly when ``s * (1 - r) < 1``; the boundary is excluded.
    """
    r = _check_positive("r", r)
    s = _check_positive("s", s)
    return s * (1.0 - r) < 1.0


def rr_sr_witness_interval(r: float, s: float):
    """Open interval of ``p01`` values that realise ``(RR0, SR11) = (r, s)``.

    ``p00 = p01 / r`` needs ``p01 < r``; ``p11 = 1 - s (1 - p01)`` needs
    ``p01 > 1 - 1/s``. Returns ``(lo, hi)``; empty when ``lo >= hi``.
    """
    r = _check_positive("r", r)
    s = _check_positive("s", s)
    return max(0.0, 1.0 - 1.0 / s), min(1.0, r)


def rbc_risk(alpha: float, beta: float, trt: int) -> Optional[float]:
    """``P(Y=1 | trt) = exp(alpha + beta*trt) / 2`` for a scaled-risk flow on Ber(1/2).

    Returns ``None`` when ``exp(alpha + beta*trt) > 2``, i.e. when the
    coefficients do not describe a probability. ``eta == 2`` is allowed and
    gives risk 1.
    """
    if trt not in (0, 1):
        raise DomainError("trt", trt, "treatment must be 0 or 1")
    alpha = float(alpha)
    beta = float(beta)
    if not (math.isfinite(alpha) and math.isfinite(beta)):
        raise DomainError("alpha" if not math.isfinite(alpha) else "beta",
                          alpha if not math.isfinite(alpha) else beta,
                          "must be finite")
    eta = math.exp(alpha + beta * trt)
    if eta > 2.0:
        return None
    return 0.5 * eta


# --------------------------------------------------------------------------
# vectorised inverses (dispatch to the compiled kernels when present)


class BatchInverse(NamedTuple):
    """Per-lane results of a vectorised inverse.

    ``probs`` has one column per cell: ``(p00, p01, p10, p11)`` for the
    four-cell map, ``(p1, p0)`` for the two-arm map.
    """

    probs: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray


def _check_positive_array(name, x):
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    bad = ~(np.isfinite(x) & (x > 0.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DomainError(name, float(x[i]), f"must be positive and finite (first bad index {i})")
    return x


def _roots_widening(kernel, args, cfg):
    """Run a batch kernel, re-solving bracket failures with smaller shrinks."""
    tol = (cfg.abs_tol_x, cfg.abs_tol_f, int(cfg.max_iter))
    root, resid, iters, conv = kernel(*args, *tol, cfg.endpoint_shrink)
    for eps in _retry_shrinks(cfg):
        # bracket failures come back as NaN roots; iteration-cap lanes do not
        retry = np.flatnonzero(~conv & np.isnan(root))
        if retry.size == 0:
            break
        r2 = kernel(*(a[retry] for a in args), *tol, eps)
        root[retry], resid[retry], iters[retry], conv[retry] = r2
    return root, resid, iters, conv


def _validated(probs, resid, iters, conv):
    bad = conv & ~np.all((probs > 0.0) & (probs < 1.0), axis=1)
    if bad.any():
        probs[bad] = np.nan
        conv = conv & ~bad
    return BatchInverse(probs, resid, iters, conv)


def inverse_gop_many(c1, c2, c3, c4, cfg: Optional[SolverConfig] = None, backend=None) -> BatchInverse:
    """Vectorised ``inverse_gop`` over equal-length arrays of measures.

    Lanes where the solver fails, or whose table rounds onto 0 or 1, are
    returned with ``converged=False`` and NaN probabilities rather than
    raising.
    """
    cfg = cfg or SolverConfig()
    c1 = _check_positive_array("rr0", c1)
    c2 = _check_positive_array("or10", c2)
    c3 = _check_positive_array("rr11", c3)
    c4 = _check_positive_array("gop", c4)
    if not (c1.shape == c2.shape == c3.shape == c4.shape):
        raise ValueError("measure arrays must have equal length")
    k = _backend.kernels if backend is None else _backend.load(backend)
    u, resid, iters, conv = _roots_widening(k.gop_roots, (c1, c2, c3, c4), cfg)
    probs = np.empty((u.shape[0], 4))
    probs[:, 0] = u
    probs[:, 1] = c1 * u
    probs[:, 2] = c2 * u / (1.0 - u + c2 * u)
    probs[:, 3] = c1 * c3 * u
    return _validated(probs, resid, iters, conv)


def inverse_rr_op_many(rr, op, cfg: Optional[SolverConfig] = None, backend=None) -> BatchInverse:
    cfg = cfg or SolverConfig()
    rr = _check_positive_array("rr", rr)
    op = _check_positive_array("op", op)
    if rr.shape != op.shape:
        raise ValueError("measure arrays must have equal length")
    k = _backend.kernels if backend is None else _backend.load(backend)
    p0, resid, iters, conv = _roots_widening(k.rr_op_roots, (rr, op), cfg)
    probs = np.empty((p0.shape[0], 2))
    probs[:, 0] = rr * p0
    probs[:, 1] = p0
    return _validated(probs, resid, iters, conv)

