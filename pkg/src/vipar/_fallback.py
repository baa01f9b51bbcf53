"""Pure numpy versions of the batch root kernels.

Same algorithm, same argument order and return layout as ``_kernels.pyx``;
used when the compiled extension is missing or ``VIPAR_PURE_PYTHON`` is set.
"""

import numpy as np

NEWTON_POLISH_STEPS = 3


def _log1m(x):
    # log(1 - x), -inf at and past the singularity
    return np.log1p(-np.minimum(x, 1.0))


def _bisect(f, fprime, lo, hi, tol_x, tol_f, max_iter, shrink):
    n = lo.shape[0]
    w = hi - lo
    a = lo + shrink * w
    b = hi - shrink * w
    with np.errstate(invalid="ignore", divide="ignore"):
        fa = f(a, slice(None))
        fb = f(b, slice(None))
    root = np.full(n, np.nan)
    resid = np.full(n, np.nan)
    iters = np.zeros(n, dtype=np.int64)
    conv = np.zeros(n, dtype=bool)

    bad = ~((fa <= 0.0) & (fb >= 0.0))
    at_a = ~bad & (fa == 0.0)
    at_b = ~bad & ~at_a & (fb == 0.0)
    root[at_a], resid[at_a], conv[at_a] = a[at_a], 0.0, True
    root[at_b], resid[at_b], conv[at_b] = b[at_b], 0.0, True

    idx = np.flatnonzero(~(bad | at_a | at_b))
    a = a[idx]
    b = b[idx]
    mid = a + 0.5 * (b - a)
    fmid = np.full(idx.shape[0], np.nan)
    it = 0
    while idx.size and it < max_iter:
        it += 1
        mid = a + 0.5 * (b - a)
        with np.errstate(invalid="ignore", divide="ignore"):
            fmid = f(mid, idx)
        neg = fmid < 0.0
        a = np.where(neg, mid, a)
        b = np.where(neg, b, mid)
        done = (np.abs(fmid) <= tol_f) | ((b - a) <= tol_x)
        if done.any():
            sel = idx[done]
            x, fx = _polish(f, fprime, mid[done], fmid[done], a[done], b[done], sel)
            root[sel] = x
            resid[sel] = fx
            iters[sel] = it
            conv[sel] = True
            keep = ~done
            idx, a, b, mid, fmid = idx[keep], a[keep], b[keep], mid[keep], fmid[keep]
    if idx.size:
        root[idx] = mid
        resid[idx] = fmid
        iters[idx] = it
    return root, resid, iters, conv


def _polish(f, fprime, x, fx, a, b, idx):
    x = x.copy()
    fx = fx.copy()
    live = fx != 0.0
    for _ in range(NEWTON_POLISH_STEPS):
        if not live.any():
            break
        with np.errstate(invalid="ignore", divide="ignore"):
            d = fprime(x, idx)
            xn = x - fx / d
            ok = live & (d > 0.0) & (xn >= a) & (xn <= b)
            fn = f(np.where(ok, xn, x), idx)
        ok &= np.abs(fn) < np.abs(fx)
        x = np.where(ok, xn, x)
        fx = np.where(ok, fn, fx)
        live = ok & (fx != 0.0)
    return x, fx


def gop_roots(c1, c2, c3, c4, tol_x, tol_f, max_iter, shrink):
    """Solve the GOP residual for ``u = p00`` lane by lane.

    Returns ``(u, residual, iterations, converged)``.
    """
    c1 = np.ascontiguousarray(c1, dtype=np.float64)
    k2 = c1 * np.ascontiguousarray(c3, dtype=np.float64)
    const = (
        2.0 * np.log(c1)
        + np.log(np.asarray(c2, dtype=np.float64))
        + np.log(np.asarray(c3, dtype=np.float64))
        - np.log(np.asarray(c4, dtype=np.float64))
    )
    hi = np.minimum(np.minimum(1.0, 1.0 / c1), 1.0 / k2)
    lo = np.zeros_like(hi)

    def f(u, i):
        return (
            4.0 * np.log(u)
            - 2.0 * _log1m(u)
            - _log1m(c1[i] * u)
            - _log1m(k2[i] * u)
            + const[i]
        )

    def fprime(u, i):
        return (
            4.0 / u
            + 2.0 / (1.0 - u)
            + c1[i] / (1.0 - c1[i] * u)
            + k2[i] / (1.0 - k2[i] * u)
        )

    return _bisect(f, fprime, lo, hi, tol_x, tol_f, max_iter, shrink)


def rr_op_roots(rr, op, tol_x, tol_f, max_iter, shrink):
    """Solve the RR/OP residual for ``p0``. Same return layout as ``gop_roots``."""
    rr = np.ascontiguousarray(rr, dtype=np.float64)
    const = np.log(rr) - np.log(np.asarray(op, dtype=np.float64))
    hi = np.minimum(1.0, 1.0 / rr)
    lo = np.zeros_like(hi)

    def f(p, i):
        return 2.0 * np.log(p) - _log1m(rr[i] * p) - _log1m(p) + const[i]

    def fprime(p, i):
        return 2.0 / p + rr[i] / (1.0 - rr[i] * p) + 1.0 / (1.0 - p)

    return _bisect(f, fprime, lo, hi, tol_x, tol_f, max_iter, shrink)
