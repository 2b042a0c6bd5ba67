"""Damped Newton ascent shared by the GLM and point-process fitters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg

ARMIJO_SLOPE = 1e-4
BACKTRACK = 0.5
MAX_HALVINGS = 80
EPS = np.finfo(float).eps


@dataclass
class AscentResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    stalled: bool

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def _modified_newton(H, g):
    """Newton direction with the eigenvalues of ``-H`` made positive."""
    if not np.all(np.isfinite(H)):
        return None
    lam, V = linalg.eigh(-0.5 * (H + H.T))
    top = float(np.max(np.abs(lam)))
    if top == 0.0:
        return None
    lam = np.maximum(np.abs(lam), 1e-8 * top)
    return V @ ((V.T @ g) / lam)


def newton_ascent(
    fun: Callable,
    x0,
    *,
    gtol: float = 1e-10,
    max_iter: int = 500,
    feasible: Callable | None = None,
    monitor: Callable | None = None,
) -> AscentResult:
    """Maximise ``fun`` by Newton steps with Armijo backtracking.

    ``fun(x, order)`` returns the value for ``order=0`` and
    ``(value, grad, hess)`` for ``order=2``; values outside the domain must
    be ``-inf``.  When the Hessian is not negative definite the direction
    is built from the absolute eigenvalues of the Hessian, and the
    gradient is the last resort.  ``feasible(x)`` may reject trial points
    before they are evaluated.  ``monitor(x, f, iteration)`` is called after
    every accepted step and may raise to abort.
    """
    x = np.array(x0, dtype=float)
    f, g, H = fun(x, 2)
    if not np.isfinite(f):
        raise ValueError("starting point is outside the objective's domain")
    ga_scale = 1.0 / max(1.0, float(np.max(np.abs(g))))
    it = 0
    stalled = False
    while it < max_iter:
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= gtol:
            return AscentResult(x, f, g, it, True, False)
        newton = True
        try:
            chol = linalg.cho_factor(-H, lower=True, check_finite=True)
            d = linalg.cho_solve(chol, g)
        except (linalg.LinAlgError, ValueError):
            d = _modified_newton(H, g)
            if d is None:
                newton = False
                d = g * ga_scale
        slope = float(g @ d)
        if not slope > 0.0:
            newton = False
            d = g * ga_scale
            slope = float(g @ d)
        step = 1.0
        accepted = False
        fx_floor = f - 16.0 * EPS * max(1.0, abs(f))
        for k in range(MAX_HALVINGS):
            cand = x + step * d
            if feasible is None or feasible(cand):
                fc = fun(cand, 0)
                if np.isfinite(fc):
                    if fc >= f + ARMIJO_SLOPE * step * slope:
                        accepted = True
                        break
                    if newton and k == 0 and fc >= fx_floor:
                        # objective flat to rounding: accept if the gradient shrinks
                        _, gc, _ = fun(cand, 2)
                        if np.max(np.abs(gc)) < gnorm:
                            accepted = True
                            break
            step *= BACKTRACK
        if not accepted:
            stalled = True
            break
        if not newton:
            ga_scale = ga_scale * 2.0 if step == 1.0 else ga_scale * step
        x = cand
        f, g, H = fun(x, 2)
        it += 1
        if monitor is not None:
            monitor(x, f, it)
    gnorm = float(np.max(np.abs(g)))
    converged = gnorm <= gtol or (stalled and gnorm <= 1e-8 * max(1.0, abs(f)))
    return AscentResult(x, f, g, it, converged, stalled)
