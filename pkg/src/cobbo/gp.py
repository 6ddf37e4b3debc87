"""Gaussian process regression with an ARD Matern 5/2 kernel and expected
improvement acquisition.

Hyperparameters are fitted by maximizing the log marginal likelihood in log
space with bounded L-BFGS-B from several starting points.  Targets are
standardized before fitting and predictions are returned in the original
units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import ndtr
from scipy.stats import qmc

from .domain import NumericalError

SQRT5 = math.sqrt(5.0)
LOG_2PI = math.log(2.0 * math.pi)

LENGTH_BOUNDS = (1e-3, 10.0)
SIGNAL_BOUNDS = (1e-3, 1e3)
NOISE_BOUNDS = (1e-8, 1e-1)

_JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
_CHUNK = 4096
_GEMM_MIN = 256  # smaller batches use the triangular solve


@dataclass(frozen=True)
class GpModel:
    inputs: np.ndarray  # (n, d)
    targets: np.ndarray  # standardized, (n,)
    y_mean: float
    y_std: float
    length_scales: np.ndarray  # (d,)
    signal_var: float  # in standardized units
    noise_var: float  # in standardized units
    chol: np.ndarray  # lower factor of K + noise I (+ jitter)
    alpha: np.ndarray  # (K + noise I)^-1 targets
    fit_log: tuple = field(default=(), repr=False)  # (lml_start, lml_end) per restart

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def prior_var(self) -> float:
        """Prior variance of the latent function in original units."""
        return self.y_std ** 2 * self.signal_var

    @property
    def theta(self) -> np.ndarray:
        """Log hyperparameters ``[log l_1..log l_d, log signal, log noise]``."""
        return np.concatenate(
            [np.log(self.length_scales), [math.log(self.signal_var), math.log(self.noise_var)]]
        )


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def matern52(a: np.ndarray, b: np.ndarray, length_scales, signal_var: float) -> np.ndarray:
    """ARD Matern 5/2 cross-covariance between the rows of ``a`` and ``b``."""
    ls = np.asarray(length_scales, dtype=float)
    r2 = _sq_dists(a / ls, b / ls)
    t = np.sqrt(r2)
    t *= -SQRT5
    r2 *= 5.0 / 3.0
    r2 -= t
    r2 += 1.0
    np.exp(t, out=t)
    r2 *= t
    r2 *= signal_var
    return r2


def _cholesky(K: np.ndarray, scale: float) -> np.ndarray:
    n = K.shape[0]
    for jitter in _JITTERS:
        try:
            if jitter:
                return scipy.linalg.cholesky(
                    K + jitter * scale * np.eye(n), lower=True, check_finite=False
                )
            return scipy.linalg.cholesky(K, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            continue
    raise NumericalError(f"kernel matrix not positive definite after jitter (n={n})")


def _unpack(theta: np.ndarray, d: int):
    return np.exp(theta[:d]), math.exp(theta[d]), math.exp(theta[d + 1])


def neg_log_marginal_likelihood(theta, X: np.ndarray, y: np.ndarray, grad: bool = True):
    """Negative log marginal likelihood and its gradient in log-parameters."""
    n, d = X.shape
    ls, sv, nv = _unpack(np.asarray(theta, dtype=float), d)
    Z = X / ls
    r2 = _sq_dists(Z, Z)
    r = np.sqrt(r2)
    e = np.exp(-SQRT5 * r)
    Kf = sv * (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * e
    K = Kf.copy()
    K[np.diag_indices(n)] += nv
    try:
        L = _cholesky(K, sv)
    except NumericalError:
        if grad:
            return 1e25, np.zeros_like(theta)
        return 1e25
    alpha = scipy.linalg.cho_solve((L, True), y, check_finite=False)
    nlml = 0.5 * y @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * LOG_2PI
    if not grad:
        return nlml
    Kinv, info = scipy.linalg.lapack.dpotri(L, lower=1)
    if info != 0:
        return 1e25, np.zeros_like(theta)
    Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
    W = np.outer(alpha, alpha) - Kinv
    # dK/dlog(l_j) = G * (z_aj - z_bj)^2 with G = 5/3 sv (1 + sqrt5 r) e^{-sqrt5 r}
    M = W * ((5.0 / 3.0) * sv * (1.0 + SQRT5 * r) * e)
    m = M.sum(axis=1)
    g_ls = m @ (Z * Z) - (Z * (M @ Z)).sum(axis=0)
    g_sv = 0.5 * (W * Kf).sum()
    g_nv = 0.5 * nv * np.trace(W)
    g = -np.concatenate([g_ls, [g_sv, g_nv]])
    return nlml, g


def _bounds(d: int) -> list[tuple[float, float]]:
    lb = [(math.log(LENGTH_BOUNDS[0]), math.log(LENGTH_BOUNDS[1]))] * d
    return lb + [
        (math.log(SIGNAL_BOUNDS[0]), math.log(SIGNAL_BOUNDS[1])),
        (math.log(NOISE_BOUNDS[0]), math.log(NOISE_BOUNDS[1])),
    ]


def default_theta(d: int) -> np.ndarray:
    return np.concatenate([np.full(d, math.log(0.5)), [0.0, math.log(1e-6)]])


def _random_theta(d: int, rng: np.random.Generator) -> np.ndarray:
    ls = rng.uniform(math.log(0.02), math.log(2.0), size=d)
    sv = rng.uniform(math.log(0.1), math.log(10.0))
    nv = rng.uniform(math.log(1e-7), math.log(1e-2))
    return np.concatenate([ls, [sv, nv]])


def gp_fit(
    X,
    y,
    rng: Optional[np.random.Generator] = None,
    n_restarts: int = 8,
    init: Optional[np.ndarray] = None,
    maxiter: int = 200,
    fit_points: Optional[int] = None,
) -> GpModel:
    """Fit a GP to ``(X, y)``.

    Parameters
    ----------
    X : (n, d) array
    y : (n,) array
    rng : numpy Generator
        Drives random restarts and hyperparameter subsampling.
    n_restarts : int
        Number of local searches. The first starts from ``init`` (or a
        fixed default), the rest from random log-uniform draws.
    init : array, optional
        Log hyperparameters for a warm start.
    maxiter : int
        L-BFGS-B iteration limit per restart.
    fit_points : int, optional
        If set and ``n`` exceeds it, hyperparameters are fitted on a random
        subset of this size. The final model always conditions on all data.
    """
    X = np.array(X, dtype=float, ndmin=2)
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n < 1 or y.shape[0] != n:
        raise ValueError("need at least one observation and one target per input")
    rng = np.random.default_rng(0) if rng is None else rng

    y_mean = float(y.mean())
    y_std = float(y.std())
    if not np.isfinite(y_std) or y_std <= 1e-12 * max(1.0, abs(y_mean)):
        y_std = 1.0
    t = (y - y_mean) / y_std

    bounds = _bounds(d)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    first = default_theta(d) if init is None else np.clip(np.asarray(init, float), lo, hi)

    Xf, tf = X, t
    if fit_points is not None and n > fit_points:
        idx = np.sort(rng.choice(n, size=fit_points, replace=False))
        Xf, tf = X[idx], t[idx]

    best_theta, best_f = first, math.inf
    log = []
    trivial = n < 2 or not np.any(t)
    for k in range(max(1, n_restarts)):
        start = first if k == 0 else np.clip(_random_theta(d, rng), lo, hi)
        f0 = neg_log_marginal_likelihood(start, Xf, tf, grad=False)
        theta, f1 = start, f0
        if not trivial:
            res = scipy.optimize.minimize(
                neg_log_marginal_likelihood,
                start,
                args=(Xf, tf),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": maxiter},
            )
            if np.isfinite(res.fun) and res.fun <= f0:
                theta, f1 = np.clip(res.x, lo, hi), float(res.fun)
        log.append((-float(f0), -float(f1)))
        if f1 < best_f:
            best_theta, best_f = theta, f1
    return _condition(X, t, y_mean, y_std, best_theta, tuple(log))


def gp_condition(X, y, theta) -> GpModel:
    """Build a model at fixed log hyperparameters (no fitting)."""
    X = np.array(X, dtype=float, ndmin=2)
    y = np.asarray(y, dtype=float).ravel()
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std <= 1e-12 * max(1.0, abs(y_mean)):
        y_std = 1.0
    return _condition(X, (y - y_mean) / y_std, y_mean, y_std, np.asarray(theta, float), ())


def _condition(X, t, y_mean, y_std, theta, log) -> GpModel:
    d = X.shape[1]
    ls, sv, nv = _unpack(theta, d)
    K = matern52(X, X, ls, sv)
    K[np.diag_indices_from(K)] += nv
    L = _cholesky(K, sv)
    alpha = scipy.linalg.cho_solve((L, True), t, check_finite=False)
    model = GpModel(X, t, y_mean, y_std, ls, sv, nv, L, alpha, log)
    # explicit inverse factor turns the batched variance solve into a gemm
    inv, info = scipy.linalg.lapack.dtrtri(L, lower=1)
    object.__setattr__(model, "_chol_inv", np.tril(inv) if info == 0 else None)
    return model


def gp_posterior(model: GpModel, x):
    """Predictive mean and latent variance at one point or a batch.

    Returns floats for a single ``(d,)`` point, arrays for ``(m, d)``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Z = np.atleast_2d(x)
    if Z.shape[1] != model.dim:
        raise ValueError(f"expected {model.dim} coordinates, got {Z.shape[1]}")
    means = np.empty(Z.shape[0])
    variances = np.empty(Z.shape[0])
    for s in range(0, Z.shape[0], _CHUNK):
        Ks = matern52(Z[s : s + _CHUNK], model.inputs, model.length_scales, model.signal_var)
        means[s : s + _CHUNK] = Ks @ model.alpha
        inv = getattr(model, "_chol_inv", None)
        if inv is not None and Ks.shape[0] > _GEMM_MIN:
            v = Ks @ inv.T
            variances[s : s + _CHUNK] = model.signal_var - np.einsum("ij,ij->i", v, v)
        else:
            v = scipy.linalg.solve_triangular(model.chol, Ks.T, lower=True, check_finite=False)
            variances[s : s + _CHUNK] = model.signal_var - (v * v).sum(axis=0)
    means = model.y_mean + model.y_std * means
    variances = np.maximum(variances, 0.0) * model.y_std ** 2
    if single:
        return float(means[0]), float(variances[0])
    return means, variances


def expected_improvement(mean, variance, incumbent):
    """Closed-form EI for maximization; ``max(mean - incumbent, 0)`` at zero
    variance."""
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    diff = mean - incumbent
    positive = sd > 0.0
    safe_sd = np.where(positive, sd, 1.0)
    with np.errstate(over="ignore"):  # huge |z| underflows the density to 0
        z = diff / safe_sd
        ei = diff * ndtr(z) + safe_sd * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    ei = np.where(positive, ei, np.maximum(diff, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def sobol_points(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """First ``n`` points of a scrambled Sobol sequence in ``[0, 1]^d``."""
    m = max(0, math.ceil(math.log2(max(n, 1))))
    engine = qmc.Sobol(d, scramble=True, seed=rng)
    return engine.random_base2(m)[:n]


_LINE_POINTS = 17
_SCALES = (0.01, 0.05, 0.1, 0.25)


def maximize_acquisition(
    model: GpModel,
    lower: Sequence[float],
    upper: Sequence[float],
    incumbent: float,
    rng: np.random.Generator,
    anchor: Optional[np.ndarray] = None,
    candidates_per_dim: int = 512,
    n_perturb: int = 64,
    polish_steps: int = 50,
) -> np.ndarray:
    """Approximate argmax of EI over the box ``[lower, upper]``.

    Scores ``candidates_per_dim * d`` Sobol points plus ``n_perturb``
    Gaussian perturbations of ``anchor`` (default: the best training input),
    then polishes the winner by batched coordinate line searches on
    shrinking brackets.
    If every candidate has zero EI the candidate with the largest posterior
    mean is returned unpolished.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    d = lo.shape[0]
    width = hi - lo
    if anchor is None:
        anchor = model.inputs[int(np.argmax(model.targets))]
    anchor = np.clip(np.asarray(anchor, dtype=float), lo, hi)

    cands = lo + sobol_points(candidates_per_dim * d, d, rng) * width
    if n_perturb > 0:
        scales = np.array(_SCALES)[np.arange(n_perturb) % len(_SCALES)]
        noise = rng.standard_normal((n_perturb, d)) * scales[:, None] * width
        cands = np.vstack([cands, np.clip(anchor + noise, lo, hi)])

    mean, var = gp_posterior(model, cands)
    ei = expected_improvement(mean, var, incumbent)
    if not np.max(ei) > 0.0:
        return cands[int(np.argmax(mean))].copy()

    k = int(np.argmax(ei))
    x, fx = cands[k].copy(), float(ei[k])

    # cyclic coordinate polish: each step scores one line of points along one
    # coordinate in a single batch; the bracket shrinks every full cycle
    live = np.flatnonzero(width > 0.0)
    line = np.linspace(-1.0, 1.0, _LINE_POINTS)
    for step in range(polish_steps if live.size else 0):
        j = live[step % live.size]
        reach = 0.2 * width[j] / (1 + step // live.size)
        trial = np.repeat(x[None, :], _LINE_POINTS, axis=0)
        trial[:, j] = np.clip(x[j] + reach * line, lo[j], hi[j])
        m, v = gp_posterior(model, trial)
        vals = expected_improvement(m, v, incumbent)
        i = int(np.argmax(vals))
        if vals[i] > fx:
            fx = float(vals[i])
            x = trial[i].copy()
    return np.clip(x, lo, hi)
