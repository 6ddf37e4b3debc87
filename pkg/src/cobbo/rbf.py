"""Multiquadric radial basis function interpolation with analytic gradients.

The interpolant is

    s(x) = sum_i w_i * sqrt(||x - c_i||^2 + eps^2) + b,   sum_i w_i = 0,

i.e. a multiquadric with a constant tail. The tail makes constant data
reproduce exactly and keeps the saddle-point system nonsingular for
distinct centers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .domain import NumericalError

JITTER = 1e-10
_REFINE_STEPS = 3


@dataclass(frozen=True)
class RbfInterpolant:
    centers: np.ndarray  # (n, D)
    weights: np.ndarray  # (n,)
    offset: float
    shape: float
    jitter: float

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def __call__(self, x) -> np.ndarray | float:
        return rbf_eval(self, x)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def mean_nn_distance(points: np.ndarray) -> float:
    n = points.shape[0]
    if n < 2:
        return 1.0
    return _mean_nn_from_sq(_sq_dists(points, points))


def _mean_nn_from_sq(d2: np.ndarray) -> float:
    n = d2.shape[0]
    if n < 2:
        return 1.0
    diag = d2.diagonal().copy()
    np.fill_diagonal(d2, np.inf)
    eps = float(np.sqrt(d2.min(axis=1)).mean())
    np.fill_diagonal(d2, diag)
    return eps if eps > 0.0 else 1.0


def rbf_fit(points, values) -> RbfInterpolant:
    """Fit the interpolant through distinct ``points`` with ``values``.

    Raises
    ------
    NumericalError
        If the interpolation system is singular after jitter.
    """
    X = np.array(points, dtype=float, ndmin=2)
    y = np.asarray(values, dtype=float).ravel()
    n = X.shape[0]
    if n < 1 or y.shape[0] != n:
        raise ValueError("need at least one point and one value per point")
    d2 = _sq_dists(X, X)
    eps = _mean_nn_from_sq(d2)
    d2 += eps * eps
    phi = np.sqrt(d2, out=d2)
    jitter = JITTER * np.trace(phi) / n
    phi[np.diag_indices(n)] += jitter

    system = np.empty((n + 1, n + 1))
    system[:n, :n] = phi
    system[:n, n] = 1.0
    system[n, :n] = 1.0
    system[n, n] = 0.0
    rhs = np.append(y, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu = scipy.linalg.lu_factor(system, check_finite=False)
        sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
        if not np.all(np.isfinite(sol)):
            raise NumericalError(
                f"RBF system singular (n={n}, cond={np.linalg.cond(system):.3e})"
            )
        # refine against the unjittered system so the jitter does not leak into
        # the interpolation residual
        system[np.diag_indices(n)] -= jitter
        resid = rhs - system @ sol
        err = np.abs(resid).max()
        for _ in range(_REFINE_STEPS):
            trial = sol + scipy.linalg.lu_solve(lu, resid, check_finite=False)
            trial_resid = rhs - system @ trial
            trial_err = np.abs(trial_resid).max()
            if not trial_err < err:
                break
            sol, resid, err = trial, trial_resid, trial_err
    return RbfInterpolant(X, sol[:n], float(sol[n]), eps, jitter)


def rbf_eval(interp: RbfInterpolant, x) -> np.ndarray | float:
    """Evaluate at one point (returns a float) or a batch ``(m, D)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Z = np.atleast_2d(x)
    phi = np.sqrt(_sq_dists(Z, interp.centers) + interp.shape ** 2)
    out = phi @ interp.weights + interp.offset
    return float(out[0]) if single else out


def rbf_grad(interp: RbfInterpolant, x) -> np.ndarray:
    """Analytic gradient at one point ``(D,)`` or a batch ``(m, D)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Z = np.atleast_2d(x)
    phi = np.sqrt(_sq_dists(Z, interp.centers) + interp.shape ** 2)
    coef = interp.weights[None, :] / phi  # (m, n)
    # sum_i coef_i (z - c_i) = z * sum_i coef_i - coef @ C
    grad = Z * coef.sum(axis=1, keepdims=True) - coef @ interp.centers
    return grad[0] if single else grad
