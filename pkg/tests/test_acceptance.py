"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from heatlayer.cli import main
from heatlayer.norms import GridFunction, NormParams, lpq_norm, minkowski_check, wrs_norm
from heatlayer.verify import (
    ExperimentSpec,
    erfc_sample_points,
    halfspace_constant,
    ratio_stability,
    run_erfc_benchmark,
    run_flat_check,
    run_identities,
    run_manufactured,
    run_ratio_theorem2,
    run_ratio_theorem3,
    run_solver_crosscheck,
)


@pytest.fixture
def report(capsys):
    def emit(number, passed, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return emit


@pytest.fixture(scope="module")
def crosscheck():
    return run_solver_crosscheck(M=64, K=64, T=0.5, source=(2.0, 0.0), tol=1e-8)


def test_criterion_1_identities(report):
    start = time.perf_counter()
    rep = run_identities(tolerance=1e-7)
    elapsed = time.perf_counter() - start
    worst = max(c.error for c in rep.checks)
    ok = rep.passed and elapsed < 10
    assert report(1, ok, f"identity suite: {len(rep.checks)} checks, max error {worst:.2e}, {elapsed:.1f} s")


def test_criterion_2_flat_boundary(report):
    checks = [run_flat_check(n=n) for n in (2, 3)]
    ok = all(c.kernel_max == 0.0 and c.iterations == 1 and c.density_error <= 1e-14 for c in checks)
    detail = "; ".join(f"n={n}: kernel max {c.kernel_max}, {c.iterations} iteration(s), |mu+2phi| {c.density_error:.1e}"
                       for n, c in zip((2, 3), checks))
    assert report(2, ok, detail)


def test_criterion_3_manufactured(report):
    start = time.perf_counter()
    table = run_manufactured(ExperimentSpec("manufactured", ladder=((32, 32), (64, 64)), horizon=0.5))
    elapsed = time.perf_counter() - start
    errs = table.max_errors
    gain = table.improvement()[0]
    ok = errs[-1] <= 0.02 and gain >= 1.5 and elapsed < 300
    assert report(3, ok, f"max rel error {errs[0]:.2e} -> {errs[1]:.2e}, improvement {gain:.2f}, {elapsed:.1f} s")


def test_criterion_4_erfc(report):
    start = time.perf_counter()
    bench = run_erfc_benchmark(erfc_sample_points(20, seed=0, t_range=(0.1, 1.0)), ramp_time=0.01)
    elapsed = time.perf_counter() - start
    ok = bench.erfc_deviation <= 2e-3 and elapsed < 60
    assert report(
        4, ok,
        f"max |u - erfc| {bench.erfc_deviation:.2e} (limit 2e-3); "
        f"max |u - exact ramped solution| {bench.reference_deviation:.1e}; {elapsed:.1f} s",
    )


def test_criterion_5_contraction_bound(report, crosscheck):
    rows = crosscheck.report.rows
    ok = crosscheck.bound_holds and crosscheck.report.converged
    worst = max(inc / bound for _, inc, bound, _ in rows if bound > 0)
    assert report(5, ok, f"{len(rows)} iterations, max increment/bound {worst:.2e}")


def test_criterion_6_uniqueness(report, crosscheck):
    tol = 1e-8
    ok = crosscheck.picard_vs_march <= 1e-6 and crosscheck.initial_guess_spread <= 10 * tol
    assert report(6, ok, f"picard vs marching {crosscheck.picard_vs_march:.2e}, "
                         f"initial-guess spread {crosscheck.initial_guess_spread:.2e}")


def test_criterion_7_halfspace_ratio(report):
    start = time.perf_counter()
    spec = ExperimentSpec("halfspace_ratio_i", n=2, horizon=1.0, norm=NormParams(p=1.0, q=math.inf, alpha=0.0),
                          family_size=20, seed=0)
    table = run_ratio_theorem2(spec)
    elapsed = time.perf_counter() - start
    limit = 1.05 * halfspace_constant(1.0, 1.0)
    ok = len(table.ratios()) == 20 and table.max_ratio <= limit and elapsed < 300
    assert report(7, ok, f"max ratio {table.max_ratio:.4f} <= {limit:.4f}, {elapsed:.1f} s")


def test_criterion_8_bounded_ratio_stability(report):
    spec = ExperimentSpec("bounded_ratio", norm=NormParams(p=2.0, q=2.0), family_size=10,
                          ladder=((32, 32), (64, 64)), horizon=0.5)
    table = run_ratio_theorem3(spec)
    change = ratio_stability(table)
    ok = change < 0.1
    assert report(8, ok, f"max ratio {max(table.ratios(0)):.4f} -> {max(table.ratios(1)):.4f}, change {change:.2%}")


def test_criterion_9_norms(report):
    rng = np.random.default_rng(99)
    params = NormParams(r=0.5, s=0.5, p=2.0, q=2.0)
    fails = []
    for _ in range(50):
        vals_f, vals_g = rng.standard_normal((2, 10, 8))
        x = np.sort(rng.uniform(0, 1, 10))
        w = rng.uniform(0.05, 0.15, 10)
        t = np.linspace(0, 1, 8)
        f, g = GridFunction(vals_f, x, w, t), GridFunction(vals_g, x, w, t)
        c = rng.uniform(-3, 3)
        if abs(wrs_norm(c * f, params).total - abs(c) * wrs_norm(f, params).total) > 1e-12 * abs(c) * wrs_norm(f, params).total:
            fails.append("homogeneity")
        if wrs_norm(f + g, params).total > wrs_norm(f, params).total + wrs_norm(g, params).total + 1e-10:
            fails.append("triangle")
    # closed forms: constant and sin(pi x) on (0,1)^2
    N = 2000
    xs = (np.arange(N) + 0.5) / N
    ts = np.linspace(0, 1, 5)
    const = GridFunction(np.full((N, 5), 2.5), xs, np.full(N, 1 / N), ts)
    if abs(lpq_norm(const, 3.0, 2.0) - 2.5) > 1e-12:
        fails.append("constant")
    sine = GridFunction(np.sin(np.pi * xs)[:, None] * np.ones((1, 5)), xs, np.full(N, 1 / N), ts)
    if abs(lpq_norm(sine, 2.0, 2.0) - 1 / math.sqrt(2)) > 1e-6:
        fails.append("sine")
    mink = 0
    for _ in range(1000):
        P, Q = rng.integers(1, 12, 2)
        f = GridFunction(rng.standard_normal((P, Q)), rng.uniform(0, 1, P), rng.uniform(0, 1, P),
                         np.cumsum(rng.uniform(0.01, 1, Q)))
        lhs, rhs = minkowski_check(f, rng.uniform(1, 8))
        mink += lhs <= rhs + 1e-10
    if mink != 1000:
        fails.append("minkowski")
    assert report(9, not fails, f"minkowski {mink}/1000; failures: {', '.join(fails) or 'none'}")


def _cli_outputs(tmp_path, name, text, args, threads):
    cfg = tmp_path / f"{name}.ini"
    cfg.write_text(text)
    out = tmp_path / f"{name}_t{threads}"
    main([*args, "--config", str(cfg), "--out", str(out), "--threads", str(threads)])
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


def test_criterion_10_determinism(report, tmp_path):
    runs = {
        "manufactured": ("[geometry]\nkind = circle\n[experiment]\nladder = 16x16,32x32\n", ["verify", "manufactured"]),
        "ratio": ("[geometry]\nkind = slab\n[discretization]\nT = 0.5\n[experiment]\nfamily_size = 3\nseed = 7\n",
                  ["verify", "halfspace_ratio_ii"]),
        "solve": ("[geometry]\nkind = circle\n[discretization]\nM = 16\nK = 16\n[data]\ntype = heat_source\n"
                  "[evaluation]\npoints = 0,0; 0.4,-0.1\n", ["solve"]),
    }
    same = {}
    for name, (text, args) in runs.items():
        a = _cli_outputs(tmp_path, name, text, args, 1)
        b = _cli_outputs(tmp_path, name, text, args, 4)
        c = _cli_outputs(tmp_path, name + "_again", text, args, 4)
        same[name] = bool(a) and a == b == c
    assert report(10, all(same.values()), ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
