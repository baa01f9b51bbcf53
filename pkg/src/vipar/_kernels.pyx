# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch root kernels; same contract as ``vipar._fallback``.

Bisection only needs the sign of the log residual, so inside the loop the
kernel compares the two sides of ``log(lhs) = log(rhs)`` without taking
logs: ``(u/hi)^m * K`` against the product of the ``(1 - x)`` factors, with
``K`` holding every u-free term. The logarithm is only taken when the two
sides agree to within ``4 * tol_f`` (to test ``|f| <= tol_f``) and for the Newton polish and the
reported residual, which use the log1p form. Lanes whose ``K`` would
overflow go through the log form throughout.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, exp, fabs, fmin, fmax, isnan

cnp.import_array()

cdef extern from "math.h":
    double NAN

cdef enum:
    NEWTON_POLISH_STEPS = 3
    GOP = 0
    RROP = 1

# |log K| beyond this risks overflow in the linear-domain comparison
cdef double LOG_K_LIMIT = 600.0


cdef inline double _log1m(double x) noexcept nogil:
    # log(1 - x), -inf at and past the singularity
    return log1p(-fmin(x, 1.0))


cdef inline double _f(int kind, double u, double k1, double k2, double shift) noexcept nogil:
    if kind == GOP:
        return 4.0 * log(u) - 2.0 * _log1m(u) - _log1m(k1 * u) - _log1m(k2 * u) + shift
    return 2.0 * log(u) - _log1m(k1 * u) - _log1m(u) + shift


cdef inline double _df(int kind, double u, double k1, double k2) noexcept nogil:
    if kind == GOP:
        return 4.0 / u + 2.0 / (1.0 - u) + k1 / (1.0 - k1 * u) + k2 / (1.0 - k2 * u)
    return 2.0 / u + k1 / (1.0 - k1 * u) + 1.0 / (1.0 - u)


cdef inline double _fast(int kind, double u, double k1, double k2, double shift,
                         double inv_hi, double K, bint linear, double near) noexcept nogil:
    # exact residual when |lhs/rhs - 1| < near, otherwise a value with the right sign
    # and magnitude above tol_f
    cdef double s, lhs, rhs, d
    if not linear:
        return _f(kind, u, k1, k2, shift)
    s = u * inv_hi
    if kind == GOP:
        s = s * s
        lhs = s * s * K
        rhs = (1.0 - u) * (1.0 - u) * (1.0 - k1 * u) * (1.0 - k2 * u)
    else:
        lhs = s * s * K
        rhs = (1.0 - k1 * u) * (1.0 - u)
    d = lhs - rhs
    if fabs(d) < near * rhs:
        return log(lhs / rhs)
    return -1.0 if d < 0.0 else 1.0


cdef enum:
    BLOCK = 8


cdef struct Lane:
    double k1, k2, shift, hi, inv_hi, K
    double a, b, mid, fmid
    bint linear
    int state  # 0 failed, 1 root at an endpoint, 2 bisecting, 3 bisection done
    long it


cdef void _setup(int kind, Lane* L, double tol_f, double shrink) noexcept nogil:
    cdef double fa, fb, logK
    L.a = shrink * L.hi
    L.b = L.hi - shrink * L.hi
    L.inv_hi = 1.0 / L.hi
    L.it = 0
    L.mid = NAN
    L.fmid = NAN
    fa = _f(kind, L.a, L.k1, L.k2, L.shift)
    fb = _f(kind, L.b, L.k1, L.k2, L.shift)
    if isnan(fa) or isnan(fb) or fa > 0.0 or fb < 0.0:
        L.state = 0
        return
    if fa == 0.0 or fb == 0.0:
        L.mid = L.a if fa == 0.0 else L.b
        L.fmid = 0.0
        L.state = 1
        return
    logK = L.shift + (4.0 if kind == GOP else 2.0) * log(L.hi)
    L.linear = fabs(logK) < LOG_K_LIMIT and tol_f < 0.1
    L.K = exp(logK) if L.linear else 0.0
    L.state = 2


cdef void _bisect_block(int kind, Lane* lanes, int m, double tol_x, double tol_f,
                        long max_iter) noexcept nogil:
    # lanes advance in lockstep so their dependency chains overlap
    cdef double near = 4.0 * tol_f
    cdef double mid, fm
    cdef int j, active = m
    cdef long it = 0
    cdef Lane* L
    while active > 0 and it < max_iter:
        it += 1
        active = 0
        for j in range(m):
            L = &lanes[j]
            if L.state != 2:
                continue
            mid = L.a + 0.5 * (L.b - L.a)
            fm = _fast(kind, mid, L.k1, L.k2, L.shift, L.inv_hi, L.K, L.linear, near)
            L.a = mid if fm < 0.0 else L.a
            L.b = L.b if fm < 0.0 else mid
            L.mid = mid
            L.fmid = fm
            L.it = it
            if fabs(fm) <= tol_f or (L.b - L.a) <= tol_x:
                L.state = 3
            else:
                active += 1


cdef void _finish(int kind, Lane* L, double* root, double* resid, long* iters,
                  unsigned char* conv) noexcept nogil:
    cdef double d, xn, fn, mid, fmid
    cdef int s
    iters[0] = L.it
    if L.state == 0:
        root[0] = NAN
        resid[0] = NAN
        conv[0] = False
        return
    if L.state == 1:
        root[0] = L.mid
        resid[0] = 0.0
        conv[0] = True
        return
    mid = L.mid
    fmid = _f(kind, mid, L.k1, L.k2, L.shift)
    if L.state == 3 and fmid != 0.0:
        for s in range(NEWTON_POLISH_STEPS):
            d = _df(kind, mid, L.k1, L.k2)
            if not d > 0.0:
                break
            xn = mid - fmid / d
            if not (L.a <= xn and xn <= L.b):
                break
            fn = _f(kind, xn, L.k1, L.k2, L.shift)
            if not fabs(fn) < fabs(fmid):
                break
            mid = xn
            fmid = fn
            if fmid == 0.0:
                break
    root[0] = mid
    resid[0] = fmid
    conv[0] = L.state == 3


cdef void _solve_all(int kind, const double* k1, const double* k2, const double* shift,
                     const double* hi, Py_ssize_t n, double tol_x, double tol_f,
                     long max_iter, double shrink, double* root, double* resid,
                     long* iters, unsigned char* conv) noexcept nogil:
    cdef Lane lanes[BLOCK]
    cdef Py_ssize_t start = 0, i
    cdef int j, m
    while start < n:
        m = BLOCK if n - start > BLOCK else <int>(n - start)
        for j in range(m):
            i = start + j
            lanes[j].k1 = k1[i]
            lanes[j].k2 = k2[i]
            lanes[j].shift = shift[i]
            lanes[j].hi = hi[i]
            _setup(kind, &lanes[j], tol_f, shrink)
        _bisect_block(kind, lanes, m, tol_x, tol_f, max_iter)
        for j in range(m):
            i = start + j
            _finish(kind, &lanes[j], &root[i], &resid[i], &iters[i], &conv[i])
        start += BLOCK


def gop_roots(c1, c2, c3, c4, double tol_x, double tol_f, long max_iter, double shrink):
    """Solve the GOP residual for ``u = p00`` lane by lane.

    Returns ``(u, residual, iterations, converged)``.
    """
    v1 = np.ascontiguousarray(c1, dtype=np.float64)
    v2 = np.ascontiguousarray(c2, dtype=np.float64)
    v3 = np.ascontiguousarray(c3, dtype=np.float64)
    v4 = np.ascontiguousarray(c4, dtype=np.float64)
    k2 = v1 * v3
    shift = 2.0 * np.log(v1) + np.log(v2) + np.log(v3) - np.log(v4)
    hi = np.minimum(np.minimum(1.0, 1.0 / v1), 1.0 / k2)
    return _run(GOP, v1, k2, shift, hi, tol_x, tol_f, max_iter, shrink)


def rr_op_roots(rr, op, double tol_x, double tol_f, long max_iter, double shrink):
    """Solve the RR/OP residual for ``p0``. Same return layout as ``gop_roots``."""
    vr = np.ascontiguousarray(rr, dtype=np.float64)
    vo = np.ascontiguousarray(op, dtype=np.float64)
    shift = np.log(vr) - np.log(vo)
    hi = np.minimum(1.0, 1.0 / vr)
    return _run(RROP, vr, np.zeros_like(vr), shift, hi, tol_x, tol_f, max_iter, shrink)


cdef _run(int kind, k1_a, k2_a, shift_a, hi_a, double tol_x, double tol_f,
          long max_iter, double shrink):
    cdef double[::1] k1 = np.ascontiguousarray(k1_a, dtype=np.float64)
    cdef double[::1] k2 = np.ascontiguousarray(k2_a, dtype=np.float64)
    cdef double[::1] shift = np.ascontiguousarray(shift_a, dtype=np.float64)
    cdef double[::1] hi = np.ascontiguousarray(hi_a, dtype=np.float64)
    cdef Py_ssize_t n = k1.shape[0]
    root_a = np.empty(n, dtype=np.float64)
    resid_a = np.empty(n, dtype=np.float64)
    iters_a = np.empty(n, dtype=np.int64)
    conv_a = np.zeros(n, dtype=np.uint8)
    cdef double[::1] root = root_a
    cdef double[::1] resid = resid_a
    cdef long[::1] iters = iters_a
    cdef unsigned char[::1] conv = conv_a
    if n == 0:
        return root_a, resid_a, iters_a, conv_a.astype(bool)
    with nogil:
        _solve_all(kind, &k1[0], &k2[0], &shift[0], &hi[0], n, tol_x, tol_f, max_iter,
                   shrink, &root[0], &resid[0], &iters[0], &conv[0])
    return root_a, resid_a, iters_a, conv_a.astype(bool)
