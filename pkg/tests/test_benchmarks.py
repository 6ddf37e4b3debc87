import math

import numpy as np
import pytest

from cobbo.benchmarks import (
    BENCHMARK_NAMES,
    HARTMANN6_ARGMIN,
    ackley,
    additive_f36,
    additive_f56,
    get_benchmark,
    hartmann6,
    levy,
    rastrigin,
    rosenbrock,
    schwefel,
)


def _ackley_loop(x):
    d = len(x)
    s1 = sum(v * v for v in x)
    s2 = sum(math.cos(2 * math.pi * v) for v in x)
    return -20 * math.exp(-0.2 * math.sqrt(s1 / d)) - math.exp(s2 / d) + 20 + math.e


def _levy_loop(x):
    w = [1 + (v - 1) / 4 for v in x]
    total = math.sin(math.pi * w[0]) ** 2
    for v in w[:-1]:
        total += (v - 1) ** 2 * (1 + 10 * math.sin(math.pi * v + 1) ** 2)
    return total + (w[-1] - 1) ** 2 * (1 + math.sin(2 * math.pi * w[-1]) ** 2)


def test_ackley():
    assert ackley(np.zeros(5)) == pytest.approx(0.0, abs=1e-12)
    assert ackley([1.0]) == pytest.approx(_ackley_loop([1.0]), rel=1e-14)
    rng = np.random.default_rng(0)
    x = rng.uniform(-5, 10, 7)
    assert ackley(x) == pytest.approx(ackley(rng.permutation(x)), rel=1e-13)
    assert ackley(x) == pytest.approx(_ackley_loop(list(x)), rel=1e-13)


def test_levy():
    assert levy(np.ones(10)) == pytest.approx(0.0, abs=1e-12)
    assert levy([0.0, 0.0]) == pytest.approx(_levy_loop([0.0, 0.0]), rel=1e-14)
    probes = np.random.default_rng(1).uniform(-5, 10, (10_000, 10))
    assert np.all(levy(probes) >= 0)


def test_rastrigin():
    assert rastrigin(np.zeros(4)) == 0.0
    assert rastrigin([0.5]) == pytest.approx(20.25)
    probes = np.random.default_rng(2).uniform(-3, 4, (10_000, 10))
    assert np.all(rastrigin(probes) >= 0)


def test_literature_optima():
    assert rosenbrock(np.ones(10)) == 0.0
    assert hartmann6(HARTMANN6_ARGMIN) == pytest.approx(-3.32237, abs=1e-5)
    assert abs(schwefel(np.full(10, 420.9687))) < 1e-3


def test_hartmann6_rejects_wrong_dim():
    with pytest.raises(ValueError):
        hartmann6(np.zeros(5))


def _split(x, sizes):
    out, s = [], 0
    for n in sizes:
        out.append(x[s : s + n])
        s += n
    return out


def test_additive_component_sums():
    rng = np.random.default_rng(3)
    b = get_benchmark("f36")
    for _ in range(20):
        x = rng.uniform(b.lower, b.upper)
        a, l, r, h = _split(x, [10, 10, 10, 6])
        assert additive_f36(x) == pytest.approx(ackley(a) + levy(l) + rastrigin(r) + hartmann6(h), rel=1e-13)
    b = get_benchmark("f56")
    x = rng.uniform(b.lower, b.upper)
    parts = _split(x, [10, 10, 10, 6, 10, 10])
    expect = ackley(parts[0]) + levy(parts[1]) + rastrigin(parts[2]) + hartmann6(parts[3])
    expect += rosenbrock(parts[4]) + schwefel(parts[5])
    assert additive_f56(x) == pytest.approx(expect, rel=1e-13)


def test_additive_optimum_and_separability():
    b = get_benchmark("f36")
    point, value = b.known_best
    assert value == pytest.approx(hartmann6(HARTMANN6_ARGMIN), abs=1e-8)
    moved = point.copy()
    moved[12] += 1.0  # levy slice only
    delta = additive_f36(moved) - additive_f36(point)
    assert delta == pytest.approx(levy(moved[10:20]) - levy(point[10:20]), rel=1e-12)


def test_registry_and_known_best():
    rng = np.random.default_rng(4)
    for name in BENCHMARK_NAMES:
        b = get_benchmark(name)
        if b.known_best is not None:
            point, value = b.known_best
            tol = 1e-3 if name in ("schwefel", "f56") else 1e-8
            assert abs(b(point) - value) <= tol
            assert np.all(point >= b.lower) and np.all(point <= b.upper)
        probes = rng.uniform(b.lower, b.upper, (100_000 // len(BENCHMARK_NAMES), b.dim))
        assert np.all(np.isfinite(b.evaluate(probes)))
    with pytest.raises(KeyError, match="levy"):
        get_benchmark("nonexistent")
    with pytest.raises(ValueError):
        get_benchmark("f36", dim=10)


def test_domains_match_experiment_setups():
    assert get_benchmark("ackley", 200).dim == 200
    np.testing.assert_array_equal(get_benchmark("levy").lower, -5)
    np.testing.assert_array_equal(get_benchmark("rastrigin").upper, 4)
    np.testing.assert_array_equal(get_benchmark("schwefel").lower, -500)
