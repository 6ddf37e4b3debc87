import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cobbo.cli import ExperimentSpec, UsageError, main, parse_args, run_experiments, summarize
from cobbo.domain import Config


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_parse_args_example():
    spec = parse_args("--function levy --dim 10 --budget 2000 --repeats 30 --seed 1".split())
    assert (spec.function, spec.dim, spec.budget, spec.repeats, spec.seed) == ("levy", 10, 2000, 30, 1)
    assert spec.algo == "cobbo" and spec.minimize is True
    assert spec.seeds == list(range(1, 31))


def test_parse_args_usage_errors():
    with pytest.raises(UsageError):
        parse_args("--function levy --budget abc".split())
    with pytest.raises(UsageError):
        parse_args("--function levy".split())
    with pytest.raises(UsageError):
        parse_args("--function levy --budget 10 --bogus".split())
    with pytest.raises(UsageError):
        parse_args("--function levy --budget 10 --init 20".split())


def test_config_file_overrides(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# tuned\nalpha = 3.0\nkappa_fast=4  # shorter cycle\n\n", encoding="utf-8")
    spec = parse_args(["--function", "levy", "--budget", "50", "--config", str(cfg)])
    expect = Config().replace(alpha=3.0, kappa_fast=4)
    assert spec.config == expect
    bad = tmp_path / "bad.txt"
    bad.write_text("unknown_key=1\n", encoding="utf-8")
    assert main(["--function", "levy", "--budget", "50", "--config", str(bad)]) == 2


def test_exit_codes(tmp_path, capsys):
    assert main(["--function", "levy", "--budget", "x"]) == 2
    assert main(["--function", "nope", "--budget", "30", "--out", str(tmp_path)]) == 2
    assert "valid names" in capsys.readouterr().err


def test_module_entry_point_usage_error():
    proc = subprocess.run([sys.executable, "-m", "cobbo", "--budget", "5"], capture_output=True, text=True)
    assert proc.returncode == 2


def _spec(tmp_path, **kw):
    base = dict(function="sphere", budget=30, dim=2, algo="cobbo", init=5, repeats=1, seed=0,
                out=tmp_path, config=Config(candidates_per_dim=32, n_perturb=8, polish_steps=4, gp_restarts=1),
                timing=False)
    base.update(kw)
    return ExperimentSpec(**base)


def test_single_repeat_band_is_degenerate(tmp_path):
    summary = run_experiments(_spec(tmp_path))
    np.testing.assert_array_equal(summary.lower, summary.upper)
    np.testing.assert_array_equal(summary.median, summary.mean)


def test_trace_schema_and_sign(tmp_path):
    summary = run_experiments(_spec(tmp_path, repeats=2))
    rows = _rows(summary.files[0])
    assert list(rows[0].keys()) == ["run", "iter", "y", "best_y", "block_size", "elapsed_us"]
    assert len(rows) == 30
    best = [float(r["best_y"]) for r in rows]
    assert all(b <= a for a, b in zip(best, best[1:]))
    assert min(float(r["y"]) for r in rows) >= 0.0  # sphere in minimization sign
    rows = _rows(run_experiments(_spec(tmp_path / "max", minimize=False)).files[0])
    best = [float(r["best_y"]) for r in rows]
    assert all(b >= a for a, b in zip(best, best[1:]))


def test_identical_spec_gives_identical_files(tmp_path):
    a = run_experiments(_spec(tmp_path / "a", repeats=2))
    b = run_experiments(_spec(tmp_path / "b", repeats=2))
    for fa, fb in zip(a.files, b.files):
        assert fa.read_bytes() == fb.read_bytes()


def test_summary_recomputed_from_run_files(tmp_path):
    summary = run_experiments(_spec(tmp_path, repeats=3, algo="random", json=True))
    curves = np.array([[float(r["best_y"]) for r in _rows(p)] for p in summary.files[:3]])
    rows = _rows(summary.files[3])
    np.testing.assert_allclose([float(r["median"]) for r in rows], np.median(curves, axis=0), rtol=0, atol=0)
    mean = curves.mean(axis=0)
    half = 1.96 * curves.std(axis=0, ddof=1) / np.sqrt(3)
    np.testing.assert_allclose([float(r["lower"]) for r in rows], mean - half, rtol=1e-12)
    np.testing.assert_allclose([float(r["upper"]) for r in rows], mean + half, rtol=1e-12)
    payload = json.loads(summary.files[4].read_text(encoding="utf-8"))
    assert payload["seeds"] == [0, 1, 2]
    np.testing.assert_allclose(payload["median"], np.median(curves, axis=0))


def test_summarize_band():
    med, mean, lo, hi = summarize(np.array([[1.0, 2.0], [3.0, 6.0]]))
    np.testing.assert_allclose(mean, [2.0, 4.0])
    np.testing.assert_allclose(hi - mean, 1.96 * np.array([np.sqrt(2), 2 * np.sqrt(2)]) / np.sqrt(2))


def test_main_end_to_end(tmp_path, capsys):
    code = main(["--function", "sphere", "--dim", "2", "--budget", "12", "--init", "4", "--algo", "vanilla",
                 "--out", str(tmp_path), "--no-timing"])
    assert code == 0
    assert "median final best" in capsys.readouterr().out
    assert (tmp_path / "sphere_2d_vanilla_run000.csv").exists()
    assert (tmp_path / "sphere_2d_vanilla_summary.csv").exists()


def test_runtime_error_exit_code(monkeypatch, tmp_path):
    import cobbo.cli as cli

    def boom(spec):
        raise RuntimeError("objective exploded")

    monkeypatch.setattr(cli, "run_experiments", boom)
    assert main(["--function", "levy", "--budget", "30", "--out", str(tmp_path)]) == 3
