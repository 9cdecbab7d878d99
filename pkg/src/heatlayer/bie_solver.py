"""Discrete boundary integral equation mu - K mu = g and its solvers.

The operator is block lower-triangular Toeplitz in time, stored as one
(M, M) block per lag.  ``picard_solve`` runs successive approximations on
the l-times iterated equation; ``time_march_solve`` is a direct forward
substitution used as a cross-check.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, ConvergenceError, StepSizeError
from .geometry import SurfaceQuadrature
from .grids import DensityField, TimeGrid, sample_field
from .kernels import KernelTable, apply_blocks, build_kernel_table, iterated_rhs, kernel_level

log = logging.getLogger(__name__)

__all__ = [
    "ConvergenceReport",
    "DensityField",
    "DiscreteOperator",
    "SolverConfig",
    "TimeGrid",
    "assemble",
    "picard_solve",
    "residual",
    "solve_dirichlet",
    "time_march_solve",
]


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-8
    max_iterations: int = 200
    iteration_level: int | None = None  # None -> n + 1
    method: str = "neumann_series"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigurationError("solver.tolerance must be > 0")
        if self.max_iterations < 1:
            raise ConfigurationError("solver.max_iterations must be >= 1")
        if self.iteration_level is not None and self.iteration_level < 1:
            raise ConfigurationError("solver.l must be >= 1")
        if self.method not in ("neumann_series", "time_marching"):
            raise ConfigurationError(f"solver.method must be neumann_series or time_marching, got {self.method!r}")

    def level_for(self, n: int) -> int:
        return n + 1 if self.iteration_level is None else self.iteration_level


@dataclass(frozen=True)
class DiscreteOperator:
    table: KernelTable
    quad: SurfaceQuadrature
    tgrid: TimeGrid

    @property
    def level(self) -> int:
        return self.table.level

    @property
    def is_zero(self) -> bool:
        return not np.any(self.table.blocks)

    def __call__(self, mu: DensityField | np.ndarray) -> np.ndarray:
        values = mu.values if isinstance(mu, DensityField) else np.asarray(mu, dtype=float)
        return apply_blocks(self.table.blocks, values)

    def contraction_rate(self) -> float:
        """|N_l| |S| T, the base of the factorial increment bound."""
        return self.table.sup_norm * float(np.sum(self.quad.weights)) * self.tgrid.horizon


@dataclass
class ConvergenceReport:
    sup_norm: float
    rate: float
    rhs_norm: float
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.rows)

    def bound_holds(self) -> bool:
        return all(inc <= bound for _, inc, bound, _ in self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "increment_norm", "theory_bound", "residual"])
            for k, inc, bound, res in self.rows:
                w.writerow([k, repr(float(inc)), repr(float(bound)), repr(float(res))])


def assemble(system: KernelTable, quad: SurfaceQuadrature, tgrid: TimeGrid) -> DiscreteOperator:
    if system.node_count != quad.node_count or system.lag_count != tgrid.steps:
        raise ConfigurationError("kernel table does not match the space-time grid")
    if system.dt != tgrid.dt or not np.array_equal(system.node_weights, quad.weights):
        raise ConfigurationError("kernel table does not match the space-time grid")
    return DiscreteOperator(system, quad, tgrid)


def residual(op: DiscreteOperator, mu, g) -> float:
    """max |mu - g - Op mu| over the grid."""
    mv = mu.values if isinstance(mu, DensityField) else np.asarray(mu, dtype=float)
    gv = g.values if isinstance(g, DensityField) else np.asarray(g, dtype=float)
    return float(np.max(np.abs(mv - gv - op(mv))))


def _check_field(op: DiscreteOperator, g: DensityField):
    if g.values.shape != (op.quad.node_count, op.tgrid.steps + 1):
        raise ConfigurationError("right-hand side does not match the operator grid")


def picard_solve(
    op: DiscreteOperator,
    g_l: DensityField,
    cfg: SolverConfig,
    initial: np.ndarray | DensityField | None = None,
) -> tuple[DensityField, ConvergenceReport]:
    """Successive approximations mu_k = g_l + Op mu_{k-1}.

    Starting from mu_0 = 0 the increment of sweep k (k = 0, 1, ...) is
    Op^k g_l; report row k compares its max norm with the factorial ceiling
    (|N_l| |S| T)^k / k! ||g_l||.
    Stops when the relative residual drops below ``cfg.tolerance``.
    """
    _check_field(op, g_l)
    gnorm = g_l.sup()
    rate = op.contraction_rate()
    report = ConvergenceReport(op.table.sup_norm, rate, gnorm)
    if gnorm == 0.0 and initial is None:
        report.converged = True
        return g_l.with_values(np.zeros_like(g_l.values)), report

    if initial is None:
        mu = np.zeros_like(g_l.values)
    else:
        mu = np.array(initial.values if isinstance(initial, DensityField) else initial, dtype=float)
        mu[:, 0] = 0.0
    scale = gnorm if gnorm > 0 else 1.0
    for k in range(cfg.max_iterations):
        new = g_l.values + op(mu)
        inc = float(np.max(np.abs(new - mu)))
        mu = new
        res = residual(op, mu, g_l)
        bound = rate**k / math.factorial(k) * gnorm if k < 170 else 0.0
        report.rows.append((k, inc, bound, res))
        if res <= cfg.tolerance * scale:
            report.converged = True
            break
    if not report.converged:
        raise ConvergenceError(
            f"Picard iteration did not converge in {cfg.max_iterations} iterations", report
        )
    log.debug("picard converged after %d iterations", report.iterations)
    return g_l.with_values(mu), report


def time_march_solve(op: DiscreteOperator, g: DensityField) -> DensityField:
    """Forward substitution (I - B_0) mu^m = g^m + sum_{p>=1} B_p mu^{m-p}."""
    _check_field(op, g)
    B = op.table.blocks
    K, M = op.tgrid.steps, op.quad.node_count
    A = np.eye(M) - B[0]
    try:
        lu = scipy.linalg.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise StepSizeError("diagonal time block is not invertible; reduce the time step") from exc
    diag = np.abs(np.diag(lu[0]))
    if diag.min() <= 1e-13 * max(diag.max(), 1.0):
        raise StepSizeError("diagonal time block is singular; reduce the time step")
    mu = np.zeros((M, K + 1))
    for m in range(1, K + 1):
        rhs = g.values[:, m].copy()
        for p in range(1, m):
            rhs += B[p] @ mu[:, m - p]
        mu[:, m] = scipy.linalg.lu_solve(lu, rhs)
    return g.with_values(mu)


@dataclass(frozen=True)
class Solution:
    """Density mu together with everything needed to evaluate the potential."""

    mu: DensityField
    phi: DensityField
    base: KernelTable
    report: ConvergenceReport | None


def solve_dirichlet(
    data,
    quad: SurfaceQuadrature,
    tgrid: TimeGrid,
    cfg: SolverConfig = SolverConfig(),
    base: KernelTable | None = None,
    threads: int = 1,
) -> Solution:
    """Solve for the density reproducing boundary data ``data(points, t)``."""
    phi = sample_field(data, quad, tgrid)
    g = phi.with_values(-2.0 * phi.values)
    if base is None:
        base = build_kernel_table(quad, tgrid, threads=threads)
    if cfg.method == "time_marching":
        mu = time_march_solve(assemble(base, quad, tgrid), g)
        return Solution(mu, phi, base, None)
    level = cfg.level_for(quad.dim)
    table = kernel_level(base, level, quad, tgrid)
    g_l = iterated_rhs(g, base, level)
    mu, report = picard_solve(assemble(table, quad, tgrid), g_l, cfg)
    return Solution(mu, phi, base, report)
