import csv

import numpy as np
import pytest

import oracles as O
from heatlayer.bie_solver import (
    SolverConfig,
    assemble,
    picard_solve,
    residual,
    solve_dirichlet,
    time_march_solve,
)
from heatlayer.data import GaussianBump, ZeroData
from heatlayer.errors import ConfigurationError, ConvergenceError, StepSizeError
from heatlayer.geometry import SurfaceQuadrature, build_boundary
from heatlayer.grids import DensityField, TimeGrid, sample_field
from heatlayer.kernels import KernelTable, iterated_rhs, kernel_level


@pytest.mark.parametrize(
    "kwargs",
    [dict(tolerance=0.0), dict(tolerance=-1e-3), dict(max_iterations=0), dict(iteration_level=0), dict(method="lu")],
)
def test_solver_config_rejects(kwargs):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kwargs)


def test_default_level_is_n_plus_one():
    assert SolverConfig().level_for(2) == 3
    assert SolverConfig().level_for(3) == 4
    assert SolverConfig(iteration_level=2).level_for(3) == 2


def test_zero_data_gives_zero_density(circle32):
    _, quad, tgrid, base = circle32
    sol = solve_dirichlet(ZeroData(), quad, tgrid, base=base)
    assert not np.any(sol.mu.values)
    assert sol.report.converged


@pytest.mark.parametrize("n", [2, 3])
def test_flat_operator_converges_in_one_iteration(n):
    _, quad = build_boundary("slab", 8, n=n)
    tgrid = TimeGrid(0.5, 8)
    phi = GaussianBump((0.0,) * n, 1.0)
    sol = solve_dirichlet(phi, quad, tgrid)
    assert sol.report.iterations == 1
    assert np.max(np.abs(sol.mu.values + 2 * sol.phi.values)) <= 1e-14


def test_operator_on_unit_density_against_brute_force(circle32):
    _, quad, tgrid, base = circle32
    op = assemble(base, quad, tgrid)
    mu = np.ones((32, 33))
    mu[:, 0] = 0.0
    out = op(mu)
    dt = tgrid.dt
    F = lambda th, tau: np.clip(np.asarray(tau) / dt, 0.0, 1.0) * np.ones_like(th)  # noqa: E731
    theta = np.arctan2(quad.nodes[:, 1], quad.nodes[:, 0])
    for m in (2, 5, 16, 32):
        ref = O.apply_operator(F, theta[:3], tgrid.nodes[m])
        assert np.max(np.abs(out[:3, m] - ref)) <= 0.01 * np.max(np.abs(ref))


def test_picard_matches_time_marching(circle_solution, circle32):
    _, quad, tgrid, base = circle32
    data, sol = circle_solution
    g = sample_field(data, quad, tgrid)
    g = g.with_values(-2 * g.values)
    direct = time_march_solve(assemble(base, quad, tgrid), g)
    rel = np.max(np.abs(direct.values - sol.mu.values)) / np.max(np.abs(direct.values))
    assert rel < 1e-6


def test_picard_initial_guesses_agree(circle_solution, circle32):
    _, quad, tgrid, base = circle32
    data, sol = circle_solution
    table = kernel_level(base, 3, quad, tgrid)
    op = assemble(table, quad, tgrid)
    g = sample_field(data, quad, tgrid)
    g3 = iterated_rhs(g.with_values(-2 * g.values), base, 3)
    cfg = SolverConfig()
    rng = np.random.default_rng(9)
    sols = [picard_solve(op, g3, cfg, init)[0].values for init in (None, rng.standard_normal(g3.values.shape), g3.values)]
    scale = np.max(np.abs(sols[0]))
    for s in sols[1:]:
        assert np.max(np.abs(s - sols[0])) <= 10 * cfg.tolerance * scale


def test_solution_is_linear_in_data(circle32):
    _, quad, tgrid, base = circle32
    a = GaussianBump((1.0, 0.0), 0.4)
    b = GaussianBump((0.0, 1.0), 0.7, amplitude=-0.5)
    sa = solve_dirichlet(a, quad, tgrid, base=base).mu.values
    sb = solve_dirichlet(b, quad, tgrid, base=base).mu.values

    class Sum:
        time_breakpoints = (0.1,)

        def __call__(self, pts, t):
            return 2 * a(pts, t) - 3 * b(pts, t)

    s = solve_dirichlet(Sum(), quad, tgrid, base=base).mu.values
    assert np.max(np.abs(s - (2 * sa - 3 * sb))) <= 1e-7 * np.max(np.abs(s))


def test_increment_bound_and_report_csv(circle_solution, tmp_path):
    _, sol = circle_solution
    rep = sol.report
    assert rep.bound_holds()
    path = tmp_path / "conv.csv"
    rep.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iter", "increment_norm", "theory_bound", "residual"]
    assert len(rows) == rep.iterations + 1
    assert rows[1][0] == "0"


def test_residual_under_perturbation(circle32):
    _, quad, tgrid, base = circle32
    op = assemble(base, quad, tgrid)
    phi = GaussianBump((1.0, 0.0), 0.5)
    g = sample_field(phi, quad, tgrid)
    mu = time_march_solve(op, g)
    r0 = residual(op, mu, g)
    assert r0 < 1e-10
    row_sum = np.max(np.sum(np.abs(base.blocks), axis=(0, 2)))
    for eps in (1e-6, 1e-3):
        pert = mu.values.copy()
        pert[:, 1:] += eps
        assert residual(op, pert, g) <= r0 + eps * (1 + row_sum) * (1 + 1e-12)


def _point_quad():
    return SurfaceQuadrature(
        nodes=np.zeros((1, 2)),
        normals=np.array([[1.0, 0.0]]),
        weights=np.ones(1),
        self_coefficient=np.zeros(1),
        resolution=1,
    )


def _scalar_table(coeffs, tgrid):
    blocks = np.asarray(coeffs, dtype=float)[:, None, None]
    return KernelTable(1, 2, blocks, np.ones(1), tgrid.dt, tgrid.lag_mass)


def test_scalar_recursion():
    tgrid = TimeGrid(1.0, 6)
    quad = _point_quad()
    b = np.array([0.2, 0.1, -0.05, 0.3, 0.0, 0.4])
    op = assemble(_scalar_table(b, tgrid), quad, tgrid)
    g = DensityField(np.array([[0.0, 1.0, -2.0, 0.5, 3.0, 1.0, -1.0]]), quad, tgrid)
    mu = time_march_solve(op, g).values[0]
    expect = np.zeros(7)
    for m in range(1, 7):
        expect[m] = (g.values[0, m] + sum(b[p] * expect[m - p] for p in range(1, m))) / (1 - b[0])
    assert np.allclose(mu, expect, rtol=1e-14, atol=0)
    pic, _ = picard_solve(op, g, SolverConfig(tolerance=1e-13))
    assert np.allclose(pic.values[0], expect, rtol=1e-11, atol=1e-12)


def test_singular_diagonal_block_raises():
    tgrid = TimeGrid(1.0, 4)
    quad = _point_quad()
    op = assemble(_scalar_table([1.0, 0.0, 0.0, 0.0], tgrid), quad, tgrid)
    g = DensityField(np.array([[0.0, 1.0, 1.0, 1.0, 1.0]]), quad, tgrid)
    with pytest.raises(StepSizeError):
        time_march_solve(op, g)


def test_convergence_error_carries_report(circle32):
    _, quad, tgrid, base = circle32
    with pytest.raises(ConvergenceError) as info:
        solve_dirichlet(GaussianBump((1.0, 0.0), 0.5), quad, tgrid, SolverConfig(max_iterations=1, iteration_level=1), base=base)
    rep = info.value.report
    assert rep is not None and rep.iterations == 1 and not rep.converged


def test_assemble_rejects_mismatched_grid(circle32):
    _, quad, _, base = circle32
    with pytest.raises(ConfigurationError):
        assemble(base, quad, TimeGrid(0.5, 16))


def test_picard_rejects_mismatched_rhs(circle32):
    _, quad, tgrid, base = circle32
    op = assemble(base, quad, tgrid)
    _, other = build_boundary("circle", 16)
    with pytest.raises(ConfigurationError):
        picard_solve(op, DensityField(np.zeros((16, 33)), other, tgrid), SolverConfig())


def test_time_marching_method_skips_report(circle32):
    _, quad, tgrid, base = circle32
    sol = solve_dirichlet(GaussianBump((1.0, 0.0), 0.5), quad, tgrid, SolverConfig(method="time_marching"), base=base)
    assert sol.report is None
