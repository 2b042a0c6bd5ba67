# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: q-exponential scalars and the t-logistic root solve.

Behaviour is identical to :mod:`imbreg._purepy`; only the speed differs.
"""

import numpy as np

from libc.math cimport exp, expm1, fabs, log, log1p, pow, INFINITY, NAN, isnan

from imbreg._purepy import RootSolverError

cdef double EPS = 2.220446049250313e-16
cdef double SERIES_CUTOFF = 1e-4
cdef double XTOL = 1e-300
cdef double RTOL = 4 * EPS
cdef int MAXITER = 500


cdef inline double c_ln_exp_q(double z, double q) noexcept nogil:
    cdef double u, base
    if q == 1.0:
        return z
    u = (1.0 - q) * z
    if fabs(u) < SERIES_CUTOFF:
        return z * (1.0 - u / 2.0 + u * u / 3.0 - u * u * u / 4.0 + u * u * u * u / 5.0)
    base = 1.0 + u
    if base <= 0.0:
        return -INFINITY if q < 1.0 else INFINITY
    return log1p(u) / (1.0 - q)


cdef inline double c_exp_q(double z, double q) noexcept nogil:
    cdef double u, base
    if q == 1.0:
        return exp(z)
    u = (1.0 - q) * z
    if fabs(u) < SERIES_CUTOFF:
        return exp(c_ln_exp_q(z, q))
    base = 1.0 + u
    if base <= 0.0:
        return 0.0 if q < 1.0 else INFINITY
    return pow(base, 1.0 / (1.0 - q))


cdef inline double resid(double g, double z, double t) noexcept nogil:
    return c_exp_q(z - g, t) + c_exp_q(-g, t) - 1.0


cdef int brent_gamma(double z, double t, double xa, double xb,
                     double fa, double fb, double* out) noexcept nogil:
    cdef double xpre = xa, xcur = xb, fpre = fa, fcur = fb
    cdef double xblk = 0.0, fblk = 0.0, spre = 0.0, scur = 0.0
    cdef double delta, sbis, stry, dpre, dblk, tmp
    cdef int i
    if fpre == 0.0:
        out[0] = xpre
        return 0
    if fcur == 0.0:
        out[0] = xcur
        return 0
    for i in range(MAXITER):
        if fpre * fcur < 0.0:
            xblk = xpre
            fblk = fpre
            spre = xcur - xpre
            scur = spre
        if fabs(fblk) < fabs(fcur):
            xpre = xcur
            xcur = xblk
            xblk = xpre
            fpre = fcur
            fcur = fblk
            fblk = fpre
        delta = (XTOL + RTOL * fabs(xcur)) / 2.0
        sbis = (xblk - xcur) / 2.0
        if fcur == 0.0 or fabs(sbis) < delta:
            out[0] = xcur
            return 0
        if fabs(spre) > delta and fabs(fcur) < fabs(fpre):
            if xpre == xblk:
                stry = -fcur * (xcur - xpre) / (fcur - fpre)
            else:
                dpre = (fpre - fcur) / (xpre - xcur)
                dblk = (fblk - fcur) / (xblk - xcur)
                stry = -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            tmp = 3.0 * fabs(sbis) - delta
            if fabs(spre) < tmp:
                tmp = fabs(spre)
            if 2.0 * fabs(stry) < tmp:
                spre = scur
                scur = stry
            else:
                spre = sbis
                scur = sbis
        else:
            spre = sbis
            scur = sbis
        xpre = xcur
        fpre = fcur
        if fabs(scur) > delta:
            xcur += scur
        else:
            xcur += delta if sbis > 0.0 else -delta
        fcur = resid(xcur, z, t)
    out[0] = xcur
    return 1


cdef int solve_gamma_nonpositive(double z, double t, double* out) noexcept nogil:
    cdef double f0 = resid(0.0, z, t)
    cdef double hi, fhi
    if f0 <= 0.0:
        out[0] = 0.0
        return 0
    hi = (z if z > 0.0 else 0.0) + 2.0
    fhi = resid(hi, z, t)
    while fhi > 0.0:
        hi *= 2.0
        if hi > 1e300:
            return 2
        fhi = resid(hi, z, t)
    return brent_gamma(z, t, 0.0, hi, f0, fhi, out)


cdef int tlogistic_point(double t, double z, double* gam,
                         double* lcdf, double* lsf) noexcept nogil:
    cdef double w, g, ls, lc, base, small
    cdef int status
    if isnan(z):
        gam[0] = NAN
        lcdf[0] = NAN
        lsf[0] = NAN
        return 0
    w = -fabs(z)
    status = solve_gamma_nonpositive(w, t, &g)
    if status != 0:
        return status
    ls = c_ln_exp_q(-g, t)
    base = 1.0 + (1.0 - t) * (w - g)
    if t < 1.0 and base < 0.5:
        small = -expm1(ls)
        lc = log(small) if small > 0.0 else -INFINITY
    else:
        lc = c_ln_exp_q(w - g, t)
    if z > 0.0:
        gam[0] = g + z
        lcdf[0] = ls
        lsf[0] = lc
    else:
        gam[0] = g
        lcdf[0] = lc
        lsf[0] = ls
    return 0


def tlogistic_eval(double t, z):
    """Vectorised ``(gamma, log_cdf, log_sf)`` of the t-logistic law."""
    arr = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] zv = arr.ravel()
    cdef Py_ssize_t n = zv.shape[0], i
    gam = np.empty(n)
    lc = np.empty(n)
    ls = np.empty(n)
    cdef double[::1] gv = gam, lcv = lc, lsv = ls
    cdef int status = 0
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            status = tlogistic_point(t, zv[i], &gv[i], &lcv[i], &lsv[i])
            if status != 0:
                bad = i
                break
    if bad >= 0:
        raise RootSolverError(f"gamma solve failed (code {status}) for t={t}, z={zv[bad]}")
    shape = np.shape(z)
    return gam.reshape(shape), lc.reshape(shape), ls.reshape(shape)


def ln_exp_q(double z, double q):
    return c_ln_exp_q(z, q)


def exp_q(double z, double q):
    return c_exp_q(z, q)
