"""Bracketed bisection for strictly increasing scalar functions.

The target functions here blow up at both ends of an open interval, so the
bracket is pulled in by a relative ``endpoint_shrink`` before the sign check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

__all__ = [
    "Bracket",
    "SolverConfig",
    "RootResult",
    "BracketError",
    "ConvergenceError",
    "solve_monotone",
    "NEWTON_POLISH_STEPS",
]

# Newton steps attempted after bisection when a derivative is supplied.
NEWTON_POLISH_STEPS = 3


class BracketError(ValueError):
    """The function does not change sign across the shrunken bracket."""


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted before the tolerance was met."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"bracket endpoints must be finite, got ({self.lo}, {self.hi})")
        if not 0.0 <= self.lo < self.hi:
            raise ValueError(f"bracket must satisfy 0 <= lo < hi, got ({self.lo}, {self.hi})")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class SolverConfig:
    abs_tol_x: float = 1e-12
    abs_tol_f: float = 1e-12
    max_iter: int = 200
    endpoint_shrink: float = 1e-12

    def __post_init__(self):
        for name in ("abs_tol_x", "abs_tol_f", "endpoint_shrink"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be an integer >= 1, got {self.max_iter!r}")


@dataclass(frozen=True)
class RootResult:
    root: float
    residual: float
    iterations: int
    converged: bool
    # Width of the final bisection bracket (before any Newton polish).
    bracket_width: float = math.nan


def solve_monotone(
    f: Callable[[float], float],
    bracket: Bracket,
    cfg: Optional[SolverConfig] = None,
    fprime: Optional[Callable[[float], float]] = None,
) -> RootResult:
    """Find the unique zero of a strictly increasing ``f`` inside ``bracket``.

    Plain bisection on ``[lo + eps*w, hi - eps*w]``. Stops once the bracket is
    narrower than ``abs_tol_x`` or ``|f(mid)| <= abs_tol_f``.

    If ``fprime`` is given, up to ``NEWTON_POLISH_STEPS`` Newton steps are
    taken from the accepted midpoint. A step is kept only if it stays inside
    the final bracket and reduces ``|f|``, so polishing never moves the root
    outside the interval bisection certified.

    Raises
    ------
    BracketError
        ``f`` does not go from negative to positive across the bracket.
    ConvergenceError
        ``max_iter`` bisections were not enough. The best iterate is attached
        as ``exc.result``.
    """
    cfg = cfg or SolverConfig()
    w = bracket.hi - bracket.lo
    a = bracket.lo + cfg.endpoint_shrink * w
    b = bracket.hi - cfg.endpoint_shrink * w
    fa = f(a)
    fb = f(b)
    if math.isnan(fa) or math.isnan(fb):
        raise BracketError(f"residual is NaN at the bracket endpoints ({a!r}, {b!r})")
    if fa > 0.0 or fb < 0.0:
        raise BracketError(
            f"no sign change on [{a!r}, {b!r}]: f(lo)={fa!r}, f(hi)={fb!r}"
        )
    if fa == 0.0:
        return RootResult(a, 0.0, 0, True, b - a)
    if fb == 0.0:
        return RootResult(b, 0.0, 0, True, b - a)

    mid = a + 0.5 * (b - a)
    fmid = math.nan
    converged = False
    it = 0
    while it < cfg.max_iter:
        it += 1
        mid = a + 0.5 * (b - a)
        fmid = f(mid)
        if fmid < 0.0:
            a = mid
        else:
            b = mid
        if abs(fmid) <= cfg.abs_tol_f or (b - a) <= cfg.abs_tol_x:
            converged = True
            break

    width = b - a
    if not converged:
        raise ConvergenceError(
            f"bisection did not converge in {cfg.max_iter} iterations "
            f"(width={width!r}, residual={fmid!r})",
            RootResult(mid, fmid, it, False, width),
        )

    if fprime is not None and fmid != 0.0:
        mid, fmid = _newton_polish(f, fprime, mid, fmid, a, b)
    return RootResult(mid, fmid, it, True, width)


def _newton_polish(f, fprime, x, fx, a, b):
    for _ in range(NEWTON_POLISH_STEPS):
        d = fprime(x)
        if not d > 0.0:
            break
        xn = x - fx / d
        if not a <= xn <= b:
            break
        fn = f(xn)
        if not abs(fn) < abs(fx):
            break
        x, fx = xn, fn
        if fx == 0.0:
            break
    return x, fx
