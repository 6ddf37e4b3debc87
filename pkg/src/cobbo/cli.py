"""Command-line experiment runner.

Runs repeated optimizations of a named benchmark, writes one CSV trace per
run and a per-iteration summary (median and a normal-approximation 95%
band across repeats).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .benchmarks import get_benchmark
from .domain import Config, config_from_mapping
from .optimizer import RunTrace, run_cobbo, run_random, run_vanilla_bo

ALGORITHMS = ("cobbo", "vanilla", "random")
TRACE_HEADER = ("run", "iter", "y", "best_y", "block_size", "elapsed_us")
SUMMARY_HEADER = ("iter", "median", "mean", "lower", "upper", "n")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class ExperimentSpec:
    function: str
    budget: int
    dim: Optional[int] = None
    algo: str = "cobbo"
    init: int = 20
    repeats: int = 1
    seed: int = 0
    out: Path = Path("results")
    config: Config = field(default_factory=Config)
    minimize: bool = True
    json: bool = False
    timing: bool = True

    @property
    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.repeats)]


@dataclass
class Summary:
    median: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    final_best: list[float]
    files: list[Path]

    def as_dict(self) -> dict:
        return {
            "median": self.median.tolist(),
            "mean": self.mean.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "final_best": list(self.final_best),
        }


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cobbo", description=__doc__.splitlines()[0])
    p.add_argument("--function", required=True, help="benchmark name, e.g. levy, rastrigin, f36")
    p.add_argument("--dim", type=_positive, default=None)
    p.add_argument("--algo", choices=ALGORITHMS, default="cobbo")
    p.add_argument("--budget", type=_positive, required=True, help="total evaluations T")
    p.add_argument("--init", type=_positive, default=20, help="initial design size")
    p.add_argument("--repeats", type=_positive, default=1)
    p.add_argument("--seed", type=int, default=0, help="seed of the first repeat")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--config", type=Path, default=None, help="key=value overrides file")
    p.add_argument("--minimize", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--json", action="store_true", help="also write summary.json")
    p.add_argument("--no-timing", dest="timing", action="store_false",
                   help="write elapsed_us as 0 so reruns are byte-identical")
    return p


def parse_args(argv: Optional[Sequence[str]] = None) -> ExperimentSpec:
    args = build_parser().parse_args(argv)
    config = Config()
    if args.config is not None:
        try:
            config = config_from_mapping(read_config_file(args.config))
        except (OSError, KeyError, ValueError) as exc:
            raise UsageError(f"bad config file: {exc}") from exc
    if args.algo != "random" and args.budget <= args.init:
        raise UsageError("--budget must exceed --init")
    return ExperimentSpec(
        function=args.function, budget=args.budget, dim=args.dim, algo=args.algo,
        init=args.init, repeats=args.repeats, seed=args.seed, out=args.out,
        config=config, minimize=args.minimize, json=args.json, timing=args.timing,
    )


def _run_one(spec: ExperimentSpec, bench, seed: int) -> RunTrace:
    sign = -1.0 if spec.minimize else 1.0

    def objective(x):
        return sign * bench(x)

    if spec.algo == "random":
        return run_random(objective, bench.domain, spec.budget, rng=seed)
    runner = run_cobbo if spec.algo == "cobbo" else run_vanilla_bo
    return runner(objective, bench.domain, spec.init, spec.budget, spec.config, rng=seed)


def summarize(curves: np.ndarray) -> tuple[np.ndarray, ...]:
    """Median, mean and mean +- 1.96 standard errors down the repeat axis."""
    curves = np.asarray(curves, dtype=float)
    n = curves.shape[0]
    mean = curves.mean(axis=0)
    sem = curves.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return np.median(curves, axis=0), mean, mean - 1.96 * sem, mean + 1.96 * sem


def run_experiments(spec: ExperimentSpec) -> Summary:
    bench = get_benchmark(spec.function, spec.dim)
    sign = -1.0 if spec.minimize else 1.0
    spec.out.mkdir(parents=True, exist_ok=True)
    stem = f"{bench.name}_{bench.dim}d_{spec.algo}"
    curves, files = [], []
    for run, seed in enumerate(spec.seeds):
        trace = _run_one(spec, bench, seed)
        y = sign * trace.values
        best = sign * trace.best
        curves.append(best)
        path = spec.out / f"{stem}_run{run:03d}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for i in range(len(trace)):
                us = int(round(trace.elapsed[i] * 1e6)) if spec.timing else 0
                writer.writerow((run, i, repr(float(y[i])), repr(float(best[i])), int(trace.block_size[i]), us))
        files.append(path)

    median, mean, lower, upper = summarize(np.array(curves))
    summary = Summary(median, mean, lower, upper, [float(c[-1]) for c in curves], files)
    path = spec.out / f"{stem}_summary.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for i in range(len(median)):
            writer.writerow((i, repr(float(median[i])), repr(float(mean[i])),
                             repr(float(lower[i])), repr(float(upper[i])), spec.repeats))
    files.append(path)
    if spec.json:
        path = spec.out / f"{stem}_summary.json"
        payload = {"function": bench.name, "dim": bench.dim, "algo": spec.algo, "seeds": spec.seeds}
        payload.update(summary.as_dict())
        path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
        files.append(path)
    return summary


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        spec = parse_args(argv)
    except UsageError as exc:
        print(f"cobbo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        summary = run_experiments(spec)
    except (KeyError, ValueError) as exc:
        print(f"cobbo: error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        print(f"cobbo: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"median final best: {np.median(summary.final_best):.6g}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
