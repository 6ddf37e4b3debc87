"""Coordinate preference, coordinate-block selection and subspace projection.

Blocks are sorted ``int`` arrays of coordinate indices. Preferences are
probability vectors over the ``D`` coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .rbf import RbfInterpolant, rbf_eval, rbf_grad

DEDUPE_TOL = 1e-9
_WEIGHT_FLOOR = 1e-12


def init_uniform(dim: int) -> np.ndarray:
    if dim < 1:
        raise ValueError("dim must be positive")
    return np.full(dim, 1.0 / dim)


def as_block(indices, dim: int) -> np.ndarray:
    block = np.unique(np.asarray(indices, dtype=int))
    if block.size == 0 or block[0] < 0 or block[-1] >= dim:
        raise ValueError(f"block must be a nonempty subset of range({dim})")
    return block


def update_preference(
    weights: np.ndarray, block, improved: bool, alpha: float, beta: float
) -> np.ndarray:
    """Multiplicative-weights step, then renormalize.

    In-block weights are scaled by ``alpha`` after an improvement and by
    ``1 / beta`` otherwise. A relative floor keeps every weight positive.
    """
    w = np.array(weights, dtype=float)
    w[np.asarray(block, dtype=int)] *= alpha if improved else 1.0 / beta
    w /= w.sum()
    floor = _WEIGHT_FLOOR / w.size
    if w.min() < floor:
        np.maximum(w, floor, out=w)
        w /= w.sum()
    return w


def choose_block_size(dim: int, cap: int, rng: np.random.Generator) -> int:
    if dim < 1:
        raise ValueError("dim must be positive")
    if dim <= cap:
        if rng.random() < 0.5:
            return dim
        return int(rng.integers(max(1, dim // 2), dim + 1))
    return int(rng.integers(max(1, cap // 2), cap + 1))


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores, ties to the lowest index, sorted."""
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    return np.sort(order[:k])


def sample_block(
    weights: np.ndarray, size: int, p_topk: float, rng: np.random.Generator
) -> np.ndarray:
    dim = len(weights)
    if not 1 <= size <= dim:
        raise ValueError(f"block size {size} outside [1, {dim}]")
    if size == dim:
        return np.arange(dim)
    if rng.random() < p_topk:
        return top_k(weights, size)
    p = np.asarray(weights, dtype=float)
    return np.sort(rng.choice(dim, size=size, replace=False, p=p / p.sum()))


def gradient_block(interp: RbfInterpolant, pivot, size: int) -> np.ndarray:
    """Coordinates with the largest absolute interpolant gradient at ``pivot``."""
    return top_k(np.abs(rbf_grad(interp, np.asarray(pivot, dtype=float))), size)


@dataclass(frozen=True)
class VirtualSet:
    """Projected training points and their (exact or interpolated) values."""

    points: np.ndarray  # (m, D), equal to the pivot off-block
    values: np.ndarray  # (m,)
    exact: np.ndarray  # (m,) bool, value taken from an observation
    source: np.ndarray  # (m,) row of the input each virtual point came from

    @property
    def count(self) -> int:
        return self.points.shape[0]


def project(points, values, block, pivot, interp: RbfInterpolant) -> VirtualSet:
    """Project points onto the subspace through ``pivot`` spanned by ``block``.

    Off-block coordinates are replaced by the pivot's. Duplicates (within
    ``DEDUPE_TOL`` in the max norm) are merged keeping the first. A virtual
    point that coincides with an input point keeps that point's value;
    the others are interpolated.
    """
    X = np.asarray(points, dtype=float)
    y = np.asarray(values, dtype=float)
    pivot = np.asarray(pivot, dtype=float)
    block = np.asarray(block, dtype=int)
    n, dim = X.shape
    off = np.ones(dim, dtype=bool)
    off[block] = False

    V = np.broadcast_to(pivot, (n, dim)).copy()
    V[:, block] = X[:, block]
    exact = np.all(np.abs(X[:, off] - pivot[off]) <= DEDUPE_TOL, axis=1)

    pairs = cKDTree(X[:, block]).query_pairs(DEDUPE_TOL, p=np.inf, output_type="ndarray")
    if len(pairs):
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
        # first occurrence of each label, in input order
        _, reps = np.unique(labels, return_index=True)
        reps = np.sort(reps)
        group_exact = np.zeros(labels.max() + 1, dtype=bool)
        exact_value = np.zeros(labels.max() + 1)
        for i in np.flatnonzero(exact)[::-1]:  # reverse so the first exact member wins
            group_exact[labels[i]] = True
            exact_value[labels[i]] = y[i]
        rep_labels = labels[reps]
        is_exact = group_exact[rep_labels]
        vals = np.where(is_exact, exact_value[rep_labels], 0.0)
    else:
        reps = np.arange(n)
        is_exact = exact
        vals = np.where(exact, y, 0.0)

    Vr = V[reps]
    need = ~is_exact
    if np.any(need):
        vals = vals.copy()
        vals[need] = rbf_eval(interp, Vr[need])
    return VirtualSet(Vr, vals, is_exact, reps)
