"""Coordinate backoff Bayesian optimization and the comparison baselines.

Objectives are maximized and take physical coordinates. Internally every
point lives in the unit cube.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.stats import qmc

from .domain import Config, Domain, History, NumericalError, PivotState, denormalize
from .gp import default_theta, gp_condition, gp_fit, maximize_acquisition
from .rbf import rbf_fit
from .schedule import (
    BackoffState,
    TrustRegions,
    clock_update,
    escape,
    form_trust_regions,
    reset_regions,
    should_switch,
    shrink_outer,
    subspace_limit,
)
from .subspace import (
    choose_block_size,
    gradient_block,
    init_uniform,
    project,
    sample_block,
    update_preference,
)

Objective = Callable[[np.ndarray], float]
RngLike = Union[None, int, np.random.Generator]
DUPLICATE_TOL = 1e-9


@dataclass
class RunTrace:
    """Per-iteration record of one optimization run (maximization sense)."""

    points: np.ndarray  # (T, D) unit cube
    values: np.ndarray  # (T,), -inf where the objective was not finite
    best: np.ndarray  # running best finite value
    block_size: np.ndarray  # 0 for design / random points
    coarse_volume: np.ndarray
    fine_volume: np.ndarray
    elapsed: np.ndarray  # wall-clock seconds per iteration
    model_time: np.ndarray  # surrogate fit + acquisition seconds
    failed: np.ndarray  # bool, objective returned a non-finite value

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def best_value(self) -> float:
        return float(self.best[-1])

    @property
    def best_point(self) -> np.ndarray:
        return self.points[int(np.argmax(self.values))].copy()


class _TraceBuilder:
    def __init__(self):
        self.rows = []

    def add(self, x, y, best, block_size, volumes, elapsed, model_time, failed):
        self.rows.append((np.array(x), y, best, block_size, volumes[0], volumes[1], elapsed, model_time, failed))

    def build(self) -> RunTrace:
        cols = list(zip(*self.rows))
        return RunTrace(
            points=np.array(cols[0]),
            values=np.array(cols[1], dtype=float),
            best=np.array(cols[2], dtype=float),
            block_size=np.array(cols[3], dtype=int),
            coarse_volume=np.array(cols[4], dtype=float),
            fine_volume=np.array(cols[5], dtype=float),
            elapsed=np.array(cols[6], dtype=float),
            model_time=np.array(cols[7], dtype=float),
            failed=np.array(cols[8], dtype=bool),
        )


@dataclass(frozen=True)
class IterationInfo:
    """Snapshot passed to the optional per-iteration callback."""

    t: int
    x: np.ndarray
    y: float
    block: np.ndarray
    box_lo: np.ndarray  # subspace box over ``block``
    box_hi: np.ndarray
    pivot: np.ndarray  # pivot the proposal was made around
    regions: TrustRegions
    switched: bool
    escaped: bool
    train_size: int
    virtual_size: int


def _streams(rng: RngLike):
    base = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    design, select, model = base.spawn(3)
    return design, select, model


def initial_design(tau: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Randomized Latin hypercube of ``tau`` points in ``[0, 1]^dim``."""
    if tau < 2:
        raise ValueError("the initial design needs at least two points")
    return qmc.LatinHypercube(d=dim, scramble=True, seed=rng).random(tau)


def kmeans_filter(
    points,
    values,
    threshold: int,
    rng: np.random.Generator,
    k: Optional[int] = None,
    keep=(),
) -> np.ndarray:
    """Indices of the points kept after clustering.

    A no-op (all indices) at or below ``threshold`` points. Otherwise
    k-means (k-means++ seeding, 20 Lloyd iterations, ``k = threshold // 2``
    by default) keeps the best point of each cluster, plus the global best
    and any index in ``keep``.
    """
    X = np.asarray(points, dtype=float)
    y = np.asarray(values, dtype=float)
    n = X.shape[0]
    if n <= threshold:
        return np.arange(n)
    k = max(1, threshold // 2) if k is None else int(k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, labels = kmeans2(X, k, iter=20, minit="++", seed=rng)
    order = np.lexsort((np.arange(n), -y))  # best first, earliest on ties
    _, first = np.unique(labels[order], return_index=True)
    kept = set(order[first].tolist())
    kept.add(int(np.argmax(y)))
    kept.update(int(i) for i in keep)
    return np.array(sorted(kept), dtype=int)


@dataclass
class ShrinkSchedule:
    """Halve the global box once at each budget fraction in ``thresholds``."""

    thresholds: tuple
    crossed: int = 0

    @classmethod
    def from_config(cls, config: Config) -> "ShrinkSchedule":
        marks, f = [], config.shrink_start
        while f < 1.0 - 1e-9:
            marks.append(round(f, 10))
            f += config.shrink_step
        return cls(tuple(marks))

    def apply(self, regions: TrustRegions, fraction: float, pivot) -> TrustRegions:
        while self.crossed < len(self.thresholds) and fraction >= self.thresholds[self.crossed]:
            regions = shrink_outer(regions, pivot)
            self.crossed += 1
        return regions


def shrink_global(regions: TrustRegions, fraction: float, pivot, schedule: ShrinkSchedule) -> TrustRegions:
    return schedule.apply(regions, fraction, pivot)


def _relative_improvement(new: float, old: float) -> float:
    if new <= old:
        return 0.0 if new == old else (new - old) / max(abs(old), 1e-300)
    if old == 0.0:
        return math.inf
    return (new - old) / abs(old)


def _evaluate(objective: Objective, u: np.ndarray, domain: Domain) -> tuple[float, bool]:
    y = float(objective(denormalize(u, domain)))
    if math.isfinite(y):
        return y, False
    return -math.inf, True


def _nearest(Z: np.ndarray, center: np.ndarray, limit: Optional[int]) -> np.ndarray:
    n = Z.shape[0]
    if limit is None or n <= limit:
        return np.arange(n)
    d2 = ((Z - center) ** 2).sum(axis=1)
    return np.sort(np.argsort(d2, kind="stable")[:limit])


def run_cobbo(
    objective: Objective,
    domain: Domain,
    tau: int,
    budget: int,
    config: Optional[Config] = None,
    rng: RngLike = None,
    callback: Optional[Callable[[IterationInfo], None]] = None,
) -> RunTrace:
    """Maximize ``objective`` over ``domain`` with ``budget`` evaluations.

    The first ``tau`` evaluations are a Latin hypercube design; every
    further evaluation is one Bayesian-optimization step inside a
    coordinate subspace through the pivot.
    """
    cfg = config or Config()
    dim = domain.dim
    if budget <= tau:
        raise ValueError("budget must exceed the initial design size")
    design_rng, select_rng, model_rng = _streams(rng)

    hist = History(dim, capacity=budget)
    surrogate = np.full(budget, np.nan)  # values fed to the surrogates
    trace = _TraceBuilder()
    regions = TrustRegions.full(dim)
    best = -math.inf
    train: list[int] = []

    for u in initial_design(tau, dim, design_rng):
        start = time.perf_counter()
        y, failed = _evaluate(objective, u, domain)
        hist.record(u, y)
        if not failed:
            surrogate[hist.count - 1] = y
            train.append(hist.count - 1)
            best = max(best, y)
        trace.add(u, y, best, 0, regions.volumes(), time.perf_counter() - start, 0.0, failed)
    if not train:
        raise RuntimeError("objective was non-finite on the whole initial design")

    values = hist.values
    pivot_idx = int(np.argmax(values))
    pivot = hist.points[pivot_idx].copy()
    incumbent = float(values[pivot_idx])
    fails = 0
    pref = init_uniform(dim)
    clock = 0.0
    backoff = BackoffState(s_max=subspace_limit(budget), f_max=cfg.fail_limit)
    shrink = ShrinkSchedule.from_config(cfg)
    theta_limit = cfg.resolved_theta(budget)
    length_memory = default_theta(dim)[:dim].copy()
    amp_memory = default_theta(1)[1:].copy()

    block: Optional[np.ndarray] = None
    last_delta = last_step = None
    prev_x = hist.points[-1].copy()

    for t in range(tau, budget):
        start = time.perf_counter()
        if cfg.use_trust_regions:
            regions = shrink.apply(regions, t / budget, pivot)
        switched = block is None or should_switch(
            backoff, last_delta, last_step, len(block), cfg.delta, cfg.converge_frac
        )

        if len(train) > cfg.filter_threshold:
            rows = np.array(train)
            kept = kmeans_filter(
                hist.points[rows], surrogate[rows], cfg.filter_threshold, select_rng,
                keep=[train.index(pivot_idx)],
            )
            train = rows[kept].tolist()

        model_start = time.perf_counter()
        rows = np.array(train)
        Xtr, ytr = hist.points[rows], surrogate[rows]
        escaped = False
        if switched and fails > theta_limit:
            state = PivotState(pivot, incumbent, fails, index=train.index(pivot_idx))
            state, penalty = escape(Xtr, ytr, state, select_rng, cfg.escape_samples)
            surrogate[pivot_idx] = penalty
            ytr = surrogate[rows]
            pivot_idx = int(rows[state.index])
            pivot = hist.points[pivot_idx].copy()
            incumbent = state.incumbent if cfg.escape_incumbent == "max" else float(surrogate[pivot_idx])
            fails, escaped = 0, True
            if cfg.use_trust_regions:
                regions = reset_regions(regions, pivot)
                clock = 0.0
        interp = rbf_fit(Xtr, ytr)

        if switched:
            block = _select_block(cfg, dim, pref, interp, pivot, select_rng)
            backoff.reset()
        source = regions.fine if cfg.subspace_region == "fine" else regions.coarse
        box_lo, box_hi = source[0][block].copy(), source[1][block].copy()

        vs = project(Xtr, ytr, block, pivot, interp)
        Z = vs.points[:, block]
        keep = _nearest(Z, pivot[block], cfg.gp_max_points)
        Z, targets = Z[keep], vs.values[keep]
        init = np.concatenate([length_memory[block], amp_memory])
        model = _fit_or_condition(Z, targets, init, model_rng, cfg, switched or backoff.queries % cfg.gp_refit_every == 0)
        length_memory[block] = np.log(model.length_scales)
        amp_memory = model.theta[-2:]
        z = maximize_acquisition(
            model, box_lo, box_hi, float(targets.max()), model_rng, anchor=pivot[block],
            candidates_per_dim=cfg.candidates_per_dim, n_perturb=cfg.n_perturb,
            polish_steps=cfg.polish_steps,
        )
        model_time = time.perf_counter() - model_start

        x = pivot.copy()
        x[block] = z
        y, failed = _evaluate(objective, x, domain)
        hist.record(x, y)
        if callback is not None:
            callback(IterationInfo(t, x.copy(), y, block.copy(), box_lo.copy(), box_hi.copy(),
                                   pivot.copy(), regions, switched, escaped, len(train), vs.count))
        if not failed:
            surrogate[t] = y
            best = max(best, y)
            # repeated queries add no information and would make the RBF system singular
            if np.abs(hist.points[train] - x).max(axis=1).min() > DUPLICATE_TOL:
                train.append(t)

        improved = (not failed) and y > incumbent
        delta_rel = _relative_improvement(y, incumbent) if improved else 0.0
        step = float(np.linalg.norm((x - prev_x)[block]))
        pref = update_preference(pref, block, improved, cfg.alpha, cfg.beta)
        if improved:
            pivot, pivot_idx, incumbent, fails = x.copy(), t, y, 0
        else:
            fails += 1
        backoff.observe(improved)
        if cfg.use_trust_regions:
            clock = clock_update(clock, delta_rel, step, len(block), cfg.delta)
            regions, reset = form_trust_regions(
                regions, clock, improved, pivot, cfg.kappa_slow, cfg.kappa_fast, cfg.tau_fast
            )
            if reset:
                clock = 0.0
        last_delta, last_step = delta_rel, step
        prev_x = x
        trace.add(x, y, best, len(block), regions.volumes(), time.perf_counter() - start, model_time, failed)

    return trace.build()


def _fit_or_condition(X, y, theta, rng, cfg: Config, refit: bool):
    if not refit:
        try:
            return gp_condition(X, y, theta)
        except NumericalError:
            pass
    return gp_fit(X, y, rng, n_restarts=cfg.gp_restarts, init=theta,
                  maxiter=cfg.gp_maxiter, fit_points=cfg.gp_fit_points)


def _select_block(cfg: Config, dim, pref, interp, pivot, rng) -> np.ndarray:
    if cfg.force_full_block:
        return np.arange(dim)
    size = choose_block_size(dim, cfg.block_cap, rng)
    if rng.random() < cfg.gradient_mode_prob:
        return gradient_block(interp, pivot, size)
    return sample_block(pref, size, cfg.p_topk, rng)


def run_vanilla_bo(
    objective: Objective,
    domain: Domain,
    tau: int,
    budget: int,
    config: Optional[Config] = None,
    rng: RngLike = None,
    callback: Optional[Callable[[IterationInfo], None]] = None,
) -> RunTrace:
    """Full-space GP with expected improvement, no subspaces or regions."""
    cfg = config or Config()
    dim = domain.dim
    if budget <= tau:
        raise ValueError("budget must exceed the initial design size")
    design_rng, _, model_rng = _streams(rng)
    hist = History(dim, capacity=budget)
    trace = _TraceBuilder()
    ones = (1.0, 1.0)
    best = -math.inf
    for u in initial_design(tau, dim, design_rng):
        start = time.perf_counter()
        y, failed = _evaluate(objective, u, domain)
        hist.record(u, y)
        best = max(best, y)
        trace.add(u, y, best, 0, ones, time.perf_counter() - start, 0.0, failed)
    if not np.isfinite(best):
        raise RuntimeError("objective was non-finite on the whole initial design")

    theta = default_theta(dim)
    lo, hi = np.zeros(dim), np.ones(dim)
    full = np.arange(dim)
    for t in range(tau, budget):
        start = time.perf_counter()
        ok = np.isfinite(hist.values)
        X, yv = hist.points[ok], hist.values[ok]
        anchor = X[int(np.argmax(yv))]
        model = _fit_or_condition(X, yv, theta, model_rng, cfg, (t - tau) % cfg.gp_refit_every == 0)
        theta = model.theta
        x = maximize_acquisition(
            model, lo, hi, float(yv.max()), model_rng, anchor=anchor,
            candidates_per_dim=cfg.candidates_per_dim, n_perturb=cfg.n_perturb,
            polish_steps=cfg.polish_steps,
        )
        model_time = time.perf_counter() - start
        y, failed = _evaluate(objective, x, domain)
        hist.record(x, y)
        if callback is not None:
            callback(IterationInfo(t, x.copy(), y, full, lo, hi, anchor.copy(),
                                   TrustRegions.full(dim), True, False, int(ok.sum()), int(ok.sum())))
        best = max(best, y)
        trace.add(x, y, best, dim, ones, time.perf_counter() - start, model_time, failed)
    return trace.build()


def run_random(objective: Objective, domain: Domain, budget: int, rng: RngLike = None) -> RunTrace:
    """Uniform random search."""
    if budget < 1:
        raise ValueError("budget must be positive")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    trace = _TraceBuilder()
    best = -math.inf
    for u in gen.random((budget, domain.dim)):
        start = time.perf_counter()
        y, failed = _evaluate(objective, u, domain)
        best = max(best, y)
        trace.add(u, y, best, 0, (1.0, 1.0), time.perf_counter() - start, 0.0, failed)
    return trace.build()
