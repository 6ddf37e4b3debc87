"""Coordinate backoff Bayesian optimization."""

from .benchmarks import BENCHMARK_NAMES, Benchmark, get_benchmark
from .domain import Config, Domain, History, PivotState, config_from_mapping
from .optimizer import RunTrace, initial_design, kmeans_filter, run_cobbo, run_random, run_vanilla_bo

__all__ = [
    "BENCHMARK_NAMES",
    "Benchmark",
    "Config",
    "Domain",
    "History",
    "PivotState",
    "RunTrace",
    "config_from_mapping",
    "get_benchmark",
    "initial_design",
    "kmeans_filter",
    "run_cobbo",
    "run_random",
    "run_vanilla_bo",
]
__version__ = "0.1.0"
