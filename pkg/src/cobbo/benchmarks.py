"""Synthetic test functions (minimization) and the additive composites.

Formulas and constants follow the usual Simon Fraser / Surjanovic & Bingham
test-function library conventions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .domain import Domain


def ackley(x, a: float = 20.0, b: float = 0.2, c: float = 2.0 * np.pi) -> float:
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    s1 = np.sqrt((x * x).sum(-1) / d)
    s2 = np.cos(c * x).sum(-1) / d
    return -a * np.exp(-b * s1) - np.exp(s2) + a + np.e


def levy(x) -> float:
    x = np.asarray(x, dtype=float)
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(np.pi * w[..., 0]) ** 2
    mid = ((w[..., :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[..., :-1] + 1.0) ** 2)).sum(-1)
    tail = (w[..., -1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[..., -1]) ** 2)
    return head + mid + tail


def rastrigin(x) -> float:
    x = np.asarray(x, dtype=float)
    return 10.0 * x.shape[-1] + (x * x - 10.0 * np.cos(2.0 * np.pi * x)).sum(-1)


def rosenbrock(x) -> float:
    x = np.asarray(x, dtype=float)
    return (100.0 * (x[..., 1:] - x[..., :-1] ** 2) ** 2 + (x[..., :-1] - 1.0) ** 2).sum(-1)


def schwefel(x) -> float:
    x = np.asarray(x, dtype=float)
    return 418.9829 * x.shape[-1] - (x * np.sin(np.sqrt(np.abs(x)))).sum(-1)


def sphere(x) -> float:
    x = np.asarray(x, dtype=float)
    return (x * x).sum(-1)


_H6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_H6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)
HARTMANN6_ARGMIN = np.array([0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573])


def hartmann6(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 6:
        raise ValueError("hartmann6 is defined in 6 dimensions")
    inner = (_H6_A * (x[..., None, :] - _H6_P) ** 2).sum(-1)
    return -(_H6_ALPHA * np.exp(-inner)).sum(-1)


# (function, dim, lower, upper) slices of the additive composites
_F36_PARTS = (
    (ackley, 10, -5.0, 10.0),
    (levy, 10, -5.0, 10.0),
    (rastrigin, 10, -3.0, 4.0),
    (hartmann6, 6, 0.0, 1.0),
)
_F56_PARTS = _F36_PARTS + (
    (rosenbrock, 10, -5.0, 10.0),
    (schwefel, 10, -500.0, 500.0),
)


def _additive(parts):
    def f(x):
        x = np.asarray(x, dtype=float)
        total, start = 0.0, 0
        for func, dim, _, _ in parts:
            total = total + func(x[..., start : start + dim])
            start += dim
        return total

    return f


additive_f36 = _additive(_F36_PARTS)
additive_f56 = _additive(_F56_PARTS)


def _composite_bounds(parts):
    lower = np.concatenate([np.full(dim, lo) for _, dim, lo, _ in parts])
    upper = np.concatenate([np.full(dim, hi) for _, dim, _, hi in parts])
    return lower, upper


@dataclass(frozen=True)
class Benchmark:
    name: str
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    evaluate: Callable[[np.ndarray], float]
    known_best: Optional[tuple[np.ndarray, float]] = None

    @property
    def domain(self) -> Domain:
        return Domain(self.lower, self.upper)

    def __call__(self, x) -> float:
        return float(self.evaluate(x))


# f(HARTMANN6_ARGMIN) at double precision; literature value -3.32237.
_H6_MIN = float(hartmann6(HARTMANN6_ARGMIN))


def _uniform(name, func, dim, lo, hi, argmin_coord):
    best = None
    if argmin_coord is not None:
        xs = np.full(dim, float(argmin_coord))
        best = (xs, float(func(xs)))
    return Benchmark(name, dim, np.full(dim, lo), np.full(dim, hi), func, best)


def _composite(name, parts, func):
    lower, upper = _composite_bounds(parts)
    optima = {ackley: 0.0, levy: 1.0, rastrigin: 0.0, rosenbrock: 1.0, schwefel: 420.9687}
    point = np.concatenate(
        [HARTMANN6_ARGMIN if f is hartmann6 else np.full(d, optima[f]) for f, d, _, _ in parts]
    )
    return Benchmark(name, len(lower), lower, upper, func, (point, float(func(point))))


_DEFAULT_DIMS = {"ackley": 10, "levy": 10, "rastrigin": 10, "rosenbrock": 10, "schwefel": 10, "sphere": 2}

BENCHMARK_NAMES = ("ackley", "levy", "rastrigin", "hartmann6", "rosenbrock", "schwefel", "f36", "f56", "sphere")


def get_benchmark(name: str, dim: Optional[int] = None) -> Benchmark:
    """Look up a benchmark by name.

    Fixed-dimension problems (``hartmann6``, ``f36``, ``f56``) reject a
    conflicting ``dim``.
    """
    key = name.lower()
    if key in ("hartmann6", "f36", "f56"):
        fixed = {"hartmann6": 6, "f36": 36, "f56": 56}[key]
        if dim is not None and dim != fixed:
            raise ValueError(f"{key} is {fixed}-dimensional, got dim={dim}")
        if key == "hartmann6":
            return Benchmark(
                "hartmann6", 6, np.zeros(6), np.ones(6), hartmann6, (HARTMANN6_ARGMIN.copy(), _H6_MIN)
            )
        if key == "f36":
            return _composite("f36", _F36_PARTS, additive_f36)
        return _composite("f56", _F56_PARTS, additive_f56)
    if key not in _DEFAULT_DIMS:
        raise KeyError(f"unknown function {name!r}; valid names: {', '.join(BENCHMARK_NAMES)}")
    d = _DEFAULT_DIMS[key] if dim is None else int(dim)
    if d < 1 or (key == "rosenbrock" and d < 2):
        raise ValueError(f"invalid dimension {d} for {key}")
    table = {
        "ackley": (ackley, -5.0, 10.0, 0.0),
        "levy": (levy, -5.0, 10.0, 1.0),
        "rastrigin": (rastrigin, -3.0, 4.0, 0.0),
        "rosenbrock": (rosenbrock, -5.0, 10.0, 1.0),
        "schwefel": (schwefel, -500.0, 500.0, 420.9687),
        "sphere": (sphere, -5.0, 5.0, 0.0),
    }
    func, lo, hi, opt = table[key]
    return _uniform(key, func, d, lo, hi, opt)
