"""Pure-Python implementations of the hot kernels.

These mirror ``_kernels.pyx`` line for line and are used whenever the
compiled extension is unavailable (or ``IMBREG_PURE_PYTHON=1`` is set).
"""

import math

import numpy as np

EPS = 2.220446049250313e-16
SERIES_CUTOFF = 1e-4
XTOL = 1e-300
RTOL = 4 * EPS
MAXITER = 500


class RootSolverError(RuntimeError):
    """The bracketing solver failed to isolate a root."""


def ln_exp_q(z, q):
    """Scalar log of the q-exponential, computed without forming exp_q."""
    if q == 1.0:
        return z
    u = (1.0 - q) * z
    if abs(u) < SERIES_CUTOFF:
        return z * (1.0 + u * (-0.5 + u * (1.0 / 3.0 + u * (-0.25 + u * 0.2))))
    base = 1.0 + u
    if base <= 0.0:
        return -math.inf if q < 1.0 else math.inf
    return math.log1p(u) / (1.0 - q)


def exp_q(z, q):
    if q == 1.0:
        return _exp(z)
    u = (1.0 - q) * z
    if abs(u) < SERIES_CUTOFF:
        return _exp(ln_exp_q(z, q))
    base = 1.0 + u
    if base <= 0.0:
        return 0.0 if q < 1.0 else math.inf
    try:
        return base ** (1.0 / (1.0 - q))
    except OverflowError:
        return math.inf


def _exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _log(x):
    return math.log(x) if x > 0.0 else -math.inf


def brentq(f, xa, xb, fa, fb, xtol=XTOL, rtol=RTOL, maxiter=MAXITER):
    """Brent's bracketing root finder on ``[xa, xb]`` with known end values.

    Returns ``(root, converged)``.  Interpolation steps (secant or inverse
    quadratic) are only taken while they shrink the bracket fast enough;
    otherwise the step is a bisection.
    """
    xpre, xcur = xa, xb
    fpre, fcur = fa, fb
    xblk = fblk = spre = scur = 0.0
    if fpre == 0.0:
        return xpre, True
    if fcur == 0.0:
        return xcur, True
    for _ in range(maxiter):
        if fpre * fcur < 0.0:
            xblk, fblk = xpre, fpre
            spre = scur = xcur - xpre
        if abs(fblk) < abs(fcur):
            xpre, xcur, xblk = xcur, xblk, xcur
            fpre, fcur, fblk = fcur, fblk, fcur
        delta = (xtol + rtol * abs(xcur)) / 2.0
        sbis = (xblk - xcur) / 2.0
        if fcur == 0.0 or abs(sbis) < delta:
            return xcur, True
        if abs(spre) > delta and abs(fcur) < abs(fpre):
            if xpre == xblk:
                stry = -fcur * (xcur - xpre) / (fcur - fpre)
            else:
                dpre = (fpre - fcur) / (xpre - xcur)
                dblk = (fblk - fcur) / (xblk - xcur)
                stry = -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            if 2.0 * abs(stry) < min(abs(spre), 3.0 * abs(sbis) - delta):
                spre, scur = scur, stry
            else:
                spre = scur = sbis
        else:
            spre = scur = sbis
        xpre, fpre = xcur, fcur
        if abs(scur) > delta:
            xcur += scur
        else:
            xcur += delta if sbis > 0.0 else -delta
        fcur = f(xcur)
    return xcur, False


def _solve_gamma_nonpositive(z, t):
    """Root of exp_t(z - g) + exp_t(-g) = 1 in g >= 0, for z <= 0."""

    def resid(g):
        return exp_q(z - g, t) + exp_q(-g, t) - 1.0

    f0 = resid(0.0)
    if f0 <= 0.0:
        return 0.0
    hi = max(0.0, z) + 2.0
    fhi = resid(hi)
    while fhi > 0.0:
        hi *= 2.0
        if hi > 1e300:
            raise RootSolverError(f"cannot bracket gamma for t={t}, z={z}")
        fhi = resid(hi)
    root, ok = brentq(resid, 0.0, hi, f0, fhi)
    if not ok:
        raise RootSolverError(f"gamma solve did not converge for t={t}, z={z}")
    return root


def tlogistic_point(t, z):
    """Return ``(gamma, log_cdf, log_sf)`` of the t-logistic law at ``z``.

    The root is always solved at ``-|z|`` and reflected, so that the
    symmetry ``G(-z) = 1 - G(z)`` holds exactly.
    """
    if math.isnan(z):
        return math.nan, math.nan, math.nan
    w = -abs(z)
    g = _solve_gamma_nonpositive(w, t)
    lsf = ln_exp_q(-g, t)
    base = 1.0 + (1.0 - t) * (w - g)
    if t < 1.0 and base < 0.5:
        # near the lower support edge w - g cancels; go through the sf side
        small = -math.expm1(lsf)
        lcdf = _log(small)
    else:
        lcdf = ln_exp_q(w - g, t)
    if z > 0.0:
        return g + z, lsf, lcdf
    return g, lcdf, lsf


def tlogistic_eval(t, z):
    shape = np.shape(z)
    flat = np.ascontiguousarray(z, dtype=np.float64).ravel()
    gam = np.empty_like(flat)
    lc = np.empty_like(flat)
    ls = np.empty_like(flat)
    t = float(t)
    for i, zi in enumerate(flat):
        gam[i], lc[i], ls[i] = tlogistic_point(t, float(zi))
    return gam.reshape(shape), lc.reshape(shape), ls.reshape(shape)
