"""Virtual clock, two-timescale trust regions, backoff stopping rule and
local-optimum escape.

Boxes are ``(lo, hi)`` pairs of length-``D`` arrays in the unit cube. Every
transition keeps ``fine`` inside ``coarse`` inside ``outer`` inside the
cube, with the pivot inside ``fine``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .domain import PivotState


def clock_update(
    k: float, delta_rel: float, step_dist: float, block_size: int, delta_threshold: float
) -> float:
    """Advance the virtual clock after one query.

    Failure adds one tick, a large relative improvement resets to zero and a
    small one attenuates the clock by ``gamma`` in ``[0, 1]``.
    """
    if delta_rel <= 0.0:
        return k + 1.0
    if delta_rel > delta_threshold:
        return 0.0
    return clock_factor(delta_rel, step_dist, block_size, delta_threshold) * k


def clock_factor(delta_rel: float, step_dist: float, block_size: int, delta_threshold: float) -> float:
    gamma = (1.0 - delta_rel / delta_threshold) * (1.0 - step_dist / math.sqrt(block_size))
    return min(1.0, max(0.0, gamma))


def _box_around(lo, hi, center, factor, limit_lo, limit_hi):
    half = 0.5 * (hi - lo) * factor
    return np.maximum(center - half, limit_lo), np.minimum(center + half, limit_hi)


def _intersect(lo, hi, limit_lo, limit_hi):
    return np.maximum(lo, limit_lo), np.minimum(hi, limit_hi)


@dataclass(frozen=True)
class TrustRegions:
    coarse_lo: np.ndarray
    coarse_hi: np.ndarray
    fine_lo: np.ndarray
    fine_hi: np.ndarray
    outer_lo: np.ndarray
    outer_hi: np.ndarray

    @classmethod
    def full(cls, dim: int) -> "TrustRegions":
        z, o = np.zeros(dim), np.ones(dim)
        return cls(z, o, z, o, z, o)

    @property
    def coarse(self):
        return self.coarse_lo, self.coarse_hi

    @property
    def fine(self):
        return self.fine_lo, self.fine_hi

    @property
    def outer(self):
        return self.outer_lo, self.outer_hi

    def volumes(self) -> tuple[float, float]:
        return (
            float(np.prod(self.coarse_hi - self.coarse_lo)),
            float(np.prod(self.fine_hi - self.fine_lo)),
        )

    def is_nested(self, pivot=None, tol: float = 1e-12) -> bool:
        ok = (
            np.all(self.outer_lo >= -tol)
            and np.all(self.outer_hi <= 1 + tol)
            and np.all(self.coarse_lo >= self.outer_lo - tol)
            and np.all(self.coarse_hi <= self.outer_hi + tol)
            and np.all(self.fine_lo >= self.coarse_lo - tol)
            and np.all(self.fine_hi <= self.coarse_hi + tol)
            and np.all(self.fine_lo <= self.fine_hi)
        )
        if pivot is not None:
            ok = ok and np.all(pivot >= self.fine_lo - tol) and np.all(pivot <= self.fine_hi + tol)
        return bool(ok)


def form_trust_regions(
    state: TrustRegions,
    k: float,
    improved: bool,
    pivot,
    kappa_slow: int,
    kappa_fast: int,
    tau_fast: int,
) -> tuple[TrustRegions, bool]:
    """One step of the coarse/fine trust-region schedule.

    Returns the new regions and whether the virtual clock must be reset.
    The clock may be fractional after attenuation, so the slow threshold is
    tested with ``>=`` and the fast duty cycle uses ``floor(k)``.
    """
    pivot = np.asarray(pivot, dtype=float)
    if improved:
        lo, hi = _box_around(*state.coarse, pivot, 2.0, *state.outer)
        return replace(state, coarse_lo=lo, coarse_hi=hi, fine_lo=lo, fine_hi=hi), False
    if k >= kappa_slow:
        lo, hi = _box_around(*state.coarse, pivot, 0.5, *state.outer)
        return replace(state, coarse_lo=lo, coarse_hi=hi, fine_lo=lo, fine_hi=hi), True
    phase = int(math.floor(k)) % (kappa_fast + tau_fast)
    if phase == kappa_fast - 1:
        lo, hi = _box_around(*state.fine, pivot, 0.5, *state.coarse)
        return replace(state, fine_lo=lo, fine_hi=hi), False
    if phase == kappa_fast + tau_fast - 1:
        return replace(state, fine_lo=state.coarse_lo, fine_hi=state.coarse_hi), False
    return state, False


def recenter(state: TrustRegions, pivot) -> TrustRegions:
    """Move all three boxes onto a new pivot, keeping their widths."""
    pivot = np.asarray(pivot, dtype=float)
    olo, ohi = _box_around(*state.outer, pivot, 1.0, 0.0, 1.0)
    clo, chi = _box_around(*state.coarse, pivot, 1.0, olo, ohi)
    flo, fhi = _box_around(*state.fine, pivot, 1.0, clo, chi)
    return TrustRegions(clo, chi, flo, fhi, olo, ohi)


def reset_regions(state: TrustRegions, pivot) -> TrustRegions:
    """Move the outer box onto ``pivot`` and widen both regions to it."""
    olo, ohi = _box_around(*state.outer, np.asarray(pivot, dtype=float), 1.0, 0.0, 1.0)
    return TrustRegions(olo, ohi, olo, ohi, olo, ohi)


def shrink_outer(state: TrustRegions, pivot) -> TrustRegions:
    """Halve the global box around the pivot and clip both regions into it."""
    pivot = np.asarray(pivot, dtype=float)
    olo, ohi = _box_around(*state.outer, pivot, 0.5, 0.0, 1.0)
    clo, chi = _intersect(*state.coarse, olo, ohi)
    flo, fhi = _intersect(*state.fine, clo, chi)
    return TrustRegions(clo, chi, flo, fhi, olo, ohi)


def subspace_limit(budget: int) -> int:
    """Maximum number of consecutive queries in one subspace."""
    return int(min(30, max(5, math.floor(budget / 100.0 + 0.5))))


@dataclass
class BackoffState:
    s_max: int
    f_max: int = 5
    queries: int = 0
    fails: int = 0

    def observe(self, improved: bool) -> None:
        self.queries += 1
        self.fails = 0 if improved else self.fails + 1

    def reset(self) -> None:
        self.queries = 0
        self.fails = 0


def should_switch(
    backoff: BackoffState,
    delta_rel: Optional[float],
    step_dist: Optional[float],
    block_size: int,
    delta_threshold: float = 0.1,
    converge_frac: float = 0.01,
) -> bool:
    """Decide whether to abandon the current subspace.

    True after ``f_max`` consecutive fails, after ``s_max`` queries, or after
    a large improvement achieved by a tiny step (local convergence).
    """
    if backoff.fails >= backoff.f_max:
        return True
    if backoff.queries >= backoff.s_max:
        return True
    if delta_rel is not None and step_dist is not None and delta_rel > delta_threshold:
        return step_dist < converge_frac * math.sqrt(block_size)
    return False


def escape(
    points: np.ndarray,
    values: np.ndarray,
    state: PivotState,
    rng: np.random.Generator,
    n_samples: int = 5,
) -> tuple[PivotState, float]:
    """Relocate the pivot away from a stagnant optimum.

    ``state.index`` is the pivot's row in ``points``. The pivot's surrogate
    value is lowered to the minimum of ``values``; the new pivot is the point
    furthest from the old one among a few random draws above the median.

    Returns the new state (fails reset, incumbent = max of the penalized
    values) and the penalty value to store at the old pivot's row.
    """
    X = np.asarray(points, dtype=float)
    y = np.array(values, dtype=float)
    old = state.index
    penalty = float(y.min())
    y[old] = penalty
    old_point = X[old]

    above = np.flatnonzero(y > np.median(y))
    above = above[np.any(X[above] != old_point, axis=1)]
    if np.unique(X[above], axis=0).shape[0] >= 2:
        picks = rng.choice(above, size=min(n_samples, above.size), replace=False)
        dist = np.linalg.norm(X[picks] - old_point, axis=1)
        new = int(picks[int(np.argmax(dist))])
    else:
        others = np.flatnonzero(np.any(X != old_point, axis=1))
        if others.size == 0:
            return replace(state, fails=0, incumbent=float(y.max())), penalty
        new = int(others[int(np.argmax(y[others]))])
    new_state = PivotState(pivot=X[new].copy(), incumbent=float(y.max()), fails=0, index=new)
    return new_state, penalty
