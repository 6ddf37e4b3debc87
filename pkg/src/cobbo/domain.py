"""Search domain, evaluation history and run configuration.

All optimizer geometry lives in the unit cube ``[0, 1]^D``; physical
coordinates only appear when the objective is evaluated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np


class DomainError(ValueError):
    """A point lies outside the domain it is mapped from."""


class StateError(RuntimeError):
    """An operation was requested on an incompatible optimizer state."""


class NumericalError(ArithmeticError):
    """A linear system or factorization could not be solved reliably."""


_BOUND_TOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in physical units.

    Parameters
    ----------
    lower, upper : array_like
        Per-coordinate bounds, ``lower[j] < upper[j]``.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be below its upper bound")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, dim: int, lower: float, upper: float) -> "Domain":
        return cls(np.full(dim, float(lower)), np.full(dim, float(upper)))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def normalize(x_phys, domain: Domain) -> np.ndarray:
    """Map physical coordinates into the unit cube."""
    x = np.asarray(x_phys, dtype=float)
    slack = _BOUND_TOL * np.maximum(1.0, np.abs(domain.width))
    if x.shape[-1] != domain.dim:
        raise DomainError(f"expected {domain.dim} coordinates, got {x.shape[-1]}")
    if np.any(x < domain.lower - slack) or np.any(x > domain.upper + slack):
        raise DomainError("point lies outside the physical bounds")
    u = (x - domain.lower) / domain.width
    return np.clip(u, 0.0, 1.0)


def denormalize(u, domain: Domain) -> np.ndarray:
    """Inverse of :func:`normalize`."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != domain.dim:
        raise DomainError(f"expected {domain.dim} coordinates, got {u.shape[-1]}")
    if np.any(u < -_BOUND_TOL) or np.any(u > 1.0 + _BOUND_TOL):
        raise DomainError("normalized point lies outside [0, 1]")
    return domain.lower + np.clip(u, 0.0, 1.0) * domain.width


class History:
    """Append-only record of queried points (unit cube) and their values.

    Values are in the maximization sense. Storage grows geometrically so
    that appending is amortized O(D); ``points`` and ``values`` are
    read-only views of the filled part.
    """

    def __init__(self, dim: int, capacity: int = 64):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._x = np.empty((max(capacity, 1), dim))
        self._y = np.empty(max(capacity, 1))
        self._n = 0

    def __len__(self) -> int:
        return self._n

    @property
    def count(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        view = self._x[: self._n]
        view.flags.writeable = False
        return view

    @property
    def values(self) -> np.ndarray:
        view = self._y[: self._n]
        view.flags.writeable = False
        return view

    def record(self, x, y: float) -> "History":
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DomainError(f"expected a point of shape ({self.dim},), got {x.shape}")
        if np.any(x < -_BOUND_TOL) or np.any(x > 1.0 + _BOUND_TOL):
            raise DomainError("history points must lie in the unit cube")
        if self._n == self._x.shape[0]:
            self._x = np.concatenate([self._x, np.empty_like(self._x)])
            self._y = np.concatenate([self._y, np.empty_like(self._y)])
        self._x[self._n] = np.clip(x, 0.0, 1.0)
        self._y[self._n] = float(y)
        self._n += 1
        return self

    def best_of(self) -> tuple[np.ndarray, float]:
        """Return the point with the largest value; ties go to the earliest."""
        return best_of(self)


def record(history: History, x, y: float) -> History:
    return history.record(x, y)


def best_of(history: History) -> tuple[np.ndarray, float]:
    if history.count == 0:
        raise StateError("best_of called on an empty history")
    # argmax returns the first maximal index, which is the tie rule we want.
    i = int(np.argmax(history.values))
    return history.points[i].copy(), float(history.values[i])


@dataclass
class PivotState:
    """Pivot point, incumbent value and consecutive-fail counter."""

    pivot: np.ndarray
    incumbent: float
    fails: int = 0
    index: int = -1  # row of the pivot in the history, -1 if unknown


@dataclass(frozen=True)
class Config:
    """Hyperparameters of the coordinate-backoff optimizer.

    The first block mirrors the published default table; ``theta=None``
    resolves to 60 when the budget exceeds 2000 queries and 30 otherwise.
    The remaining fields are engineering knobs of this implementation.
    """

    theta: Optional[int] = None
    alpha: float = 2.0
    beta: float = 1.1
    p_topk: float = 0.3
    kappa_slow: int = 30
    kappa_fast: int = 6
    tau_fast: int = 6
    delta: float = 0.1
    kernel: str = "matern52"
    block_cap: int = 30
    filter_threshold: int = 1000

    # Backoff stopping rule.
    fail_limit: int = 5
    converge_frac: float = 0.01
    # Block selection.
    gradient_mode_prob: float = 0.5
    # Escape.
    escape_samples: int = 5
    escape_incumbent: str = "pivot"  # "pivot": new pivot's value; "max": penalized landscape max
    # Late-budget domain shrinking.
    shrink_start: float = 0.7
    shrink_step: float = 0.1
    # Which trust region the subspace box is cut from: "fine" or "coarse".
    subspace_region: str = "fine"
    # Surrogate sizes and acquisition effort.
    gp_max_points: Optional[int] = 200
    gp_fit_points: Optional[int] = 100
    gp_restarts: int = 2
    gp_maxiter: int = 30
    gp_refit_every: int = 3  # hyperparameter refit cadence within a subspace
    candidates_per_dim: int = 512
    n_perturb: int = 64
    polish_steps: int = 50
    # Test hooks for the degenerate configuration.
    use_trust_regions: bool = True
    force_full_block: bool = False

    def resolved_theta(self, budget: int) -> int:
        if self.theta is not None:
            return int(self.theta)
        return 60 if budget > 2000 else 30

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)


def config_from_mapping(values: dict) -> Config:
    """Build a :class:`Config` from string or typed overrides.

    Unknown keys raise ``KeyError``; strings are coerced to the type of the
    field's default.
    """
    base = Config()
    fields = {f.name: f for f in dataclasses.fields(Config)}
    changes = {}
    for key, raw in values.items():
        if key not in fields:
            raise KeyError(f"unknown config key {key!r}")
        default = getattr(base, key)
        changes[key] = _coerce(raw, default, key)
    return base.replace(**changes)


def _coerce(raw, default, key):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int) or key in ("theta", "gp_max_points", "gp_fit_points"):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text
