"""Experiment harness: identities, manufactured solutions and norm ratios."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import erfc
from scipy.special import gamma as gamma_fn

from .bie_solver import SolverConfig, assemble, picard_solve, solve_dirichlet, time_march_solve
from .data import ConstantRamp, GaussianBump, HeatSourceTrace, ZeroData
from .errors import ConfigurationError
from .geometry import build_boundary
from .grids import TimeGrid, sample_field
from .kernels import (
    build_kernel_table,
    gamma_derivative,
    iterated_rhs,
    kernel_level,
    sup_exponential_identity,
)
from .norms import GridFunction, NormParams, boundary_wrs_norm, lpq_norm, wrs_norm
from .potential_eval import (
    GridEvaluator,
    half_space_grid,
    kernel_mass_identity,
    ramped_erfc_reference,
)

EXPERIMENT_KINDS = (
    "manufactured",
    "halfspace_ratio_i",
    "halfspace_ratio_ii",
    "halfspace_ratio_iii",
    "bounded_ratio",
    "identities",
)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    geometry: str = "circle"
    radius: float = 1.0
    n: int = 2
    horizon: float = 0.5
    norm: NormParams = NormParams()
    seed: int = 0
    family_size: int = 10
    ladder: tuple[tuple[int, int], ...] = ((32, 32), (64, 64))
    source: Optional[tuple[float, ...]] = (2.0, 0.0)
    tolerance: float = 1e-8
    alphas: tuple[float, ...] = ()
    threads: int = 1

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        if self.kind in ("manufactured", "bounded_ratio") and len(self.ladder) < 2:
            raise ConfigurationError("experiment.ladder needs at least two levels")


# ---------------------------------------------------------------------------
# identities


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    value: float
    expected: float
    tolerance: float

    @property
    def error(self) -> float:
        return abs(self.value - self.expected)

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


@dataclass
class IdentityReport:
    checks: list[IdentityCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["check", "value", "expected", "error", "tolerance", "status"])
            for c in self.checks:
                w.writerow(
                    [c.name, repr(c.value), repr(c.expected), repr(c.error), repr(c.tolerance),
                     "PASS" if c.passed else "FAIL"]
                )


def _box_rule(n: int, half: float, panels: int = 16, order: int = 8):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-half, half, panels + 1)
    h = 0.5 * np.diff(edges)
    nodes = ((edges[:-1] + h)[:, None] + h[:, None] * x).ravel()
    weights = (h[:, None] * w).ravel()
    grids = np.meshgrid(*([nodes] * n), indexing="ij")
    wgrids = np.meshgrid(*([weights] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, wts


def kernel_moment(n: int, t: float, time_order: int = 0, multi_index=None) -> float:
    """Integral of d_t^r D_x^s Gamma over the box |x_i| <= 12 sqrt(t)."""
    pts, wts = _box_rule(n, 12.0 * math.sqrt(t))
    return float(np.sum(wts * gamma_derivative(pts, t, time_order, multi_index)))


def grid_search_sup(r: float, step: float = 1e-4, upper: float = 20.0) -> float:
    s = np.arange(0.0, upper + step / 2, step)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(s == 0, 1.0 if r == 0 else 0.0, s**r * np.exp(-s))
    return float(np.max(vals))


def run_identities(tolerance: float = 1e-7) -> IdentityReport:
    rep = IdentityReport()
    for n in (1, 2, 3):
        e1 = tuple(int(k == 0) for k in range(n))
        e11 = tuple(2 * int(k == 0) for k in range(n))
        for t in (0.1, 0.5, 1.0):
            rep.checks.append(IdentityCheck(f"int_Gamma_n{n}_t{t}", kernel_moment(n, t), 1.0, tolerance))
            rep.checks.append(IdentityCheck(f"int_DxGamma_n{n}_t{t}", kernel_moment(n, t, 0, e1), 0.0, tolerance))
            rep.checks.append(IdentityCheck(f"int_DtGamma_n{n}_t{t}", kernel_moment(n, t, 1), 0.0, tolerance))
            rep.checks.append(IdentityCheck(f"int_DxxGamma_n{n}_t{t}", kernel_moment(n, t, 0, e11), 0.0, tolerance))
            rep.checks.append(IdentityCheck(f"int_DtDxGamma_n{n}_t{t}", kernel_moment(n, t, 1, e1), 0.0, tolerance))
    for r in (0.0, 0.5, 1.0, 2.0, 5.0):
        rep.checks.append(IdentityCheck(f"sup_identity_r{r}", sup_exponential_identity(r), grid_search_sup(r), tolerance))
    for n, tau in ((2, 1.0), (2, 0.1), (3, 0.25), (3, 1.0)):
        rep.checks.append(
            IdentityCheck(f"kernel_mass_n{n}_tau{tau}", kernel_mass_identity(tau, n), (4 * math.pi * tau) ** ((n - 1) / 2), tolerance)
        )
    return rep


# ---------------------------------------------------------------------------
# manufactured solution


@dataclass
class ErrorTable:
    rows: list[tuple[int, int, float, float]] = field(default_factory=list)

    @property
    def max_errors(self) -> list[float]:
        return [r[2] for r in self.rows]

    def improvement(self) -> list[float]:
        e = self.max_errors
        return [e[k] / e[k + 1] if e[k + 1] > 0 else math.inf for k in range(len(e) - 1)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["M", "K", "max_rel_error", "mean_rel_error"])
            for M, K, emax, emean in self.rows:
                w.writerow([M, K, repr(emax), repr(emean)])


def interior_sample_points(radius: float = 1.0) -> np.ndarray:
    """Centre plus rings at 0.2R..0.8R with 8 angles each."""
    pts = [np.zeros(2)]
    for rr in (0.2, 0.4, 0.6, 0.8):
        ang = 2 * np.pi * np.arange(8) / 8 + rr
        pts.extend(radius * rr * np.column_stack([np.cos(ang), np.sin(ang)]))
    return np.array(pts)


def manufactured_error(M: int, K: int, T: float, source, radius: float = 1.0, cfg: SolverConfig = SolverConfig(), threads: int = 1):
    """Max and mean |u - u_exact| over interior points and grid times, scaled by max |u_exact|."""
    b, quad = build_boundary("circle", M, radius=radius)
    tgrid = TimeGrid(T, K)
    pts = interior_sample_points(radius)
    if source is None:
        data = ZeroData()
        exact = np.zeros((len(pts), K + 1))
    else:
        data = HeatSourceTrace(tuple(source))
        exact = np.column_stack([data.exact(pts, t) if t > 0 else np.zeros(len(pts)) for t in tgrid.nodes])
    sol = solve_dirichlet(data, quad, tgrid, cfg, threads=threads)
    ev = GridEvaluator.build(pts, b, quad, tgrid)
    u = ev.apply(sol.mu.values)[:, 0, :]
    scale = np.max(np.abs(exact))
    err = np.abs(u[:, 1:] - exact[:, 1:])
    if scale == 0:
        return float(np.max(err)), float(np.mean(err)), sol
    return float(np.max(err) / scale), float(np.mean(err) / scale), sol


def run_manufactured(spec: ExperimentSpec) -> ErrorTable:
    if spec.geometry != "circle":
        raise ConfigurationError("manufactured experiment is implemented for the circle")
    if spec.source is not None:
        dist = np.linalg.norm(spec.source) - spec.radius
        if dist < 0.2 * 2 * spec.radius:
            raise ConfigurationError("source must satisfy dist(x0, S) >= 0.2 diam")
    table = ErrorTable()
    cfg = SolverConfig(tolerance=spec.tolerance)
    for M, K in spec.ladder:
        emax, emean, _ = manufactured_error(M, K, spec.horizon, spec.source, spec.radius, cfg, spec.threads)
        table.rows.append((M, K, emax, emean))
    return table


# ---------------------------------------------------------------------------
# solver diagnostics


@dataclass
class SolverCrossCheck:
    picard_vs_march: float
    initial_guess_spread: float
    bound_holds: bool
    report: object


def run_solver_crosscheck(M=64, K=64, T=0.5, source=(2.0, 0.0), tol=1e-8, seed=0) -> SolverCrossCheck:
    """Solve the circle benchmark by Picard (three starts) and by time marching."""
    b, quad = build_boundary("circle", M)
    tgrid = TimeGrid(T, K)
    data = HeatSourceTrace(tuple(source))
    cfg = SolverConfig(tolerance=tol)
    phi = sample_field(data, quad, tgrid)
    g = phi.with_values(-2.0 * phi.values)
    base = build_kernel_table(quad, tgrid)
    level = cfg.level_for(2)
    op_l = assemble(kernel_level(base, level, quad, tgrid), quad, tgrid)
    g_l = iterated_rhs(g, base, level)
    mu0, report = picard_solve(op_l, g_l, cfg)
    mu_march = time_march_solve(assemble(base, quad, tgrid), g)
    scale = mu_march.sup()
    rng = np.random.default_rng(seed)
    starts = [g_l.values, rng.standard_normal(g_l.values.shape) * g_l.sup()]
    sols = [mu0.values] + [picard_solve(op_l, g_l, cfg, initial=s)[0].values for s in starts]
    spread = max(float(np.max(np.abs(s - sols[0]))) for s in sols[1:]) / g_l.sup()
    return SolverCrossCheck(
        float(np.max(np.abs(mu0.values - mu_march.values)) / scale), spread, report.bound_holds(), report
    )


@dataclass
class FlatCheck:
    kernel_max: float
    iterations: int
    density_error: float


def run_flat_check(n: int = 2, resolution: int = 16, steps: int = 16, T: float = 0.5) -> FlatCheck:
    """Slab boundary: the kernel vanishes and mu = -2 phi after one sweep."""
    b, quad = build_boundary("slab", resolution, n=n, half_width=2.0)
    tgrid = TimeGrid(T, steps)
    data = GaussianBump(center=(0.0,) * n, width=0.5, amplitude=1.0, ramp_time=0.1)
    sol = solve_dirichlet(data, quad, tgrid)
    return FlatCheck(
        float(np.max(np.abs(sol.base.blocks))),
        sol.report.iterations,
        float(np.max(np.abs(sol.mu.values + 2.0 * sol.phi.values))),
    )


# ---------------------------------------------------------------------------
# ratio experiments


def halfspace_constant(p: float, T: float) -> float:
    """Gamma((1+p)/2)^(1/p) / (sqrt(pi) p^(1/2 + 1/2p)) * int_0^T tau^(1/2p - 1) dtau."""
    return gamma_fn((1 + p) / 2) ** (1 / p) / (math.sqrt(math.pi) * p ** (0.5 + 0.5 / p)) * 2 * p * T ** (0.5 / p)


@dataclass
class RatioTable:
    kind: str
    rows: list[dict] = field(default_factory=list)
    reference_constant: Optional[float] = None

    def ratios(self, level=None, alpha=None) -> list[float]:
        return [
            r["ratio"] for r in self.rows
            if (level is None or r.get("level") == level) and (alpha is None or r.get("alpha") == alpha)
        ]

    @property
    def max_ratio(self) -> float:
        vals = self.ratios()
        return max(vals) if vals else 0.0

    def to_csv(self, path) -> None:
        keys = ["member", "level", "alpha", "regime", "numerator", "denominator", "ratio"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for r in self.rows:
                w.writerow([r[k] if not isinstance(r[k], float) else repr(r[k]) for k in keys])


def halfspace_family(size: int, seed: int, d: int) -> list[GaussianBump]:
    """Seeded Gaussian bumps on R^d with smoothstep ramps in time."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(size):
        out.append(
            GaussianBump(
                center=tuple(rng.uniform(-1.0, 1.0, d)),
                width=float(rng.uniform(0.1, 0.5)),
                amplitude=float(rng.uniform(0.5, 2.0)),
                ramp_time=float(rng.uniform(0.05, 0.5)),
            )
        )
    return out


def circle_family(size: int, seed: int, radius: float = 1.0) -> list[GaussianBump]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(size):
        ang = rng.uniform(0, 2 * np.pi)
        out.append(
            GaussianBump(
                center=(radius * math.cos(ang), radius * math.sin(ang)),
                width=float(rng.uniform(0.2, 0.6)),
                amplitude=float(rng.uniform(0.5, 2.0)),
                ramp_time=float(rng.uniform(0.05, 0.25)),
            )
        )
    return out


def _gauss_axis(edges, order: int = 4):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    h = 0.5 * np.diff(edges)
    return ((edges[:-1] + h)[:, None] + h[:, None] * x).ravel(), (h[:, None] * w).ravel()


# panel edges in x_n, graded towards the boundary
_XN_EDGES = (0.0, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.5, 7.5, 9.5, 12.0)


@dataclass(frozen=True)
class HalfSpaceGrid:
    """Tensor grid on [-10, 10] x (0, 12] with Gauss panels, plus sample times."""

    xp_axis: np.ndarray
    xp_weights: np.ndarray
    xn_axis: np.ndarray
    xn_weights: np.ndarray
    times: np.ndarray

    @classmethod
    def default(cls, T: float, coarse: bool = False):
        if coarse:
            xp, wp = _gauss_axis(np.linspace(-6.0, 6.0, 25), 3)
            xn, wn = _gauss_axis(_XN_EDGES[::2], 3)
            times = np.linspace(0.0, T, 9)
        else:
            xp, wp = _gauss_axis(np.linspace(-10.0, 10.0, 81), 4)
            xn, wn = _gauss_axis(_XN_EDGES, 4)
            times = np.linspace(0.0, T, 17)
        return cls(xp, wp, xn, wn, times)

    def points(self):
        XP, XN = np.meshgrid(self.xp_axis, self.xn_axis, indexing="ij")
        W = np.outer(self.xp_weights, self.xn_weights).ravel()
        return XP.ravel(), XN.ravel(), W


def _halfspace_field(phi, grid: HalfSpaceGrid, derivative: str):
    xp, xn, W = grid.points()
    nx, nn = grid.xp_axis.size, grid.xn_axis.size
    vals = np.zeros((nx, nn, grid.times.size))
    xq = grid.xp_axis[:, None]
    # one call per x_n row so that empty sigma segments are dropped
    for k, t in enumerate(grid.times):
        if t <= 0:
            continue
        tt = np.full(nx, t)
        for j, z in enumerate(grid.xn_axis):
            v, _ = half_space_grid(phi, xq, np.full(nx, z), tt, derivative, panels=1, estimate=False)
            vals[:, j, k] = v[:, 0] if v.ndim == 2 else v
    vals = vals.reshape(nx * nn, -1)
    pts = np.column_stack([xp, xn])
    return GridFunction(vals, pts, W, grid.times)


def _trace_field(phi, grid: HalfSpaceGrid):
    vals = np.column_stack([phi(grid.xp_axis[:, None], t) for t in grid.times])
    return GridFunction(vals, grid.xp_axis[:, None], grid.xp_weights, grid.times)


def run_ratio_theorem2(spec: ExperimentSpec) -> RatioTable:
    """Half-space ratio experiments.

    i:   ||u||_{L_q W^alpha_p} / ||phi||_{L_q L_p}
    ii:  ||D_x' u||_{L_q L_p} / ||phi||_{L_q W^{1-1/p}_p}
    iii: ||d_xn u||_{L_q L_p} / ||phi||_{W^{1-1/p, 1/2-1/2p}_{p,q}}
    """
    if spec.n != 2:
        raise ConfigurationError("half-space ratio experiments run on R^2_+")
    p, q, T = spec.norm.p, spec.norm.q, spec.horizon
    family = halfspace_family(spec.family_size, spec.seed, spec.n - 1)
    table = RatioTable(spec.kind)
    if spec.kind == "halfspace_ratio_i":
        alphas = spec.alphas or (spec.norm.alpha,)
        table.reference_constant = halfspace_constant(p, T)
        # a sweep (or any fractional order) runs on the coarser grid, all alphas alike
        grid = HalfSpaceGrid.default(T, coarse=len(alphas) > 1 or alphas[0] > 0)
        param_list = [NormParams(r=alpha, s=0.0, p=p, q=q) for alpha in alphas]

        def member(phi):
            u = _halfspace_field(phi, grid, "none")
            den = lpq_norm(_trace_field(phi, grid), p, q)
            return [(wrs_norm(u, prm).total, den) for prm in param_list]

        results = _family_map(member, family, spec.threads)
        for a, alpha in enumerate(alphas):
            for k, res in enumerate(results):
                table.rows.append(_ratio_row(k, 0, alpha, "", *res[a]))
        return table

    grid = HalfSpaceGrid.default(T)
    deriv = "tangential" if spec.kind == "halfspace_ratio_ii" else "normal"
    if spec.kind == "halfspace_ratio_ii":
        den_params = NormParams(r=1 - 1 / p, s=0.0, p=p, q=q)
        regime = ""
    else:
        den_params = NormParams(r=1 - 1 / p, s=0.5 - 0.5 / p, p=p, q=q)
        regime = "q<=p" if q <= p else "q>p"

    def member(phi):
        num = lpq_norm(_halfspace_field(phi, grid, deriv), p, q)
        return num, wrs_norm(_trace_field(phi, grid), den_params).total

    for k, (num, den) in enumerate(_family_map(member, family, spec.threads)):
        table.rows.append(_ratio_row(k, 0, 0.0, regime, num, den))
    return table


def _family_map(fn, family, threads: int):
    """Map over family members; results come back in member order."""
    if threads <= 1:
        return [fn(phi) for phi in family]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, family))


def _ratio_row(member, level, alpha, regime, num, den):
    ratio = num / den if den > 0 else 0.0
    return {"member": member, "level": level, "alpha": float(alpha), "regime": regime,
            "numerator": float(num), "denominator": float(den), "ratio": float(ratio)}


def polar_grid(radius: float, n_r: int = 16, n_theta: int = 48):
    """Midpoint rule in r and theta; the outer ring sits half a cell inside S."""
    r = (np.arange(n_r) + 0.5) / n_r * radius
    wr = np.full(n_r, radius / n_r)
    th = 2 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    R, TH = np.meshgrid(r, th, indexing="ij")
    pts = np.column_stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()])
    W = np.outer(wr * r, np.full(n_theta, 2 * np.pi / n_theta)).ravel()
    return pts, W


def run_ratio_theorem3(spec: ExperimentSpec, scale: float = 1.0) -> RatioTable:
    """||u||_{L_q W^1_p(Omega)} / (||phi||_{L_q L_p(S)} + ||phi||_{W^{1-1/p,1/2-1/2p}_{p,q}(S^T)}) on the circle."""
    if spec.geometry != "circle":
        raise ConfigurationError("bounded-domain ratio experiment is implemented for the circle")
    p, q, T = spec.norm.p, spec.norm.q, spec.horizon
    family = [b.scaled(scale) if scale != 1.0 else b for b in circle_family(spec.family_size, spec.seed, spec.radius)]
    pts, W = polar_grid(spec.radius)
    bparams = NormParams(r=1 - 1 / p, s=0.5 - 0.5 / p, p=p, q=q)
    uparams = NormParams(r=1.0, s=0.0, p=p, q=q)
    cfg = SolverConfig(tolerance=spec.tolerance)
    table = RatioTable(spec.kind)
    for level, (M, K) in enumerate(spec.ladder):
        b, quad = build_boundary("circle", M, radius=spec.radius)
        tgrid = TimeGrid(T, K)
        base = build_kernel_table(quad, tgrid, threads=spec.threads)
        ev = GridEvaluator.build(pts, b, quad, tgrid, gradient=True, include_value=True)
        mus, phis = [], []
        for phi in family:
            sol = solve_dirichlet(phi, quad, tgrid, cfg, base=base)
            mus.append(sol.mu.values)
            phis.append(sol.phi.values)
        mus = np.array(mus)
        V = ev.apply(mus)
        for k in range(len(family)):
            f = GridFunction(V[k, :, 0], pts, W, tgrid.nodes, derivatives={(1, 0): V[k, :, 1], (0, 1): V[k, :, 2]})
            num = wrs_norm(f, uparams).total
            trace = GridFunction(phis[k], quad.nodes, quad.weights, tgrid.nodes, dim=1)
            den = lpq_norm(trace, p, q) + boundary_wrs_norm(phis[k], b, quad, tgrid.nodes, bparams).total
            table.rows.append(_ratio_row(k, level, 0.0, "", num, den))
    return table


def ratio_stability(table: RatioTable) -> float:
    """Relative change of the family maximum between the last two levels."""
    levels = sorted({r["level"] for r in table.rows})
    a, b = max(table.ratios(levels[-2])), max(table.ratios(levels[-1]))
    return abs(b - a) / max(abs(b), 1e-300)


# ---------------------------------------------------------------------------
# half-space erfc benchmark


@dataclass
class ErfcBenchmark:
    points: np.ndarray  # (N, 2): x_n, t
    values: np.ndarray
    erfc: np.ndarray
    reference: np.ndarray

    @property
    def erfc_deviation(self) -> float:
        return float(np.max(np.abs(self.values - self.erfc)))

    @property
    def reference_deviation(self) -> float:
        return float(np.max(np.abs(self.values - self.reference)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_n", "t", "value", "erfc", "ramped_reference"])
            for (xn, t), v, e, r in zip(self.points, self.values, self.erfc, self.reference):
                w.writerow([repr(float(xn)), repr(float(t)), repr(float(v)), repr(float(e)), repr(float(r))])


def erfc_sample_points(count: int = 20, seed: int = 0, t_range=(0.1, 1.0), xn_range=(0.05, 2.5)) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(*xn_range, count), rng.uniform(*t_range, count)])


def run_erfc_benchmark(points: np.ndarray, ramp_time: float = 0.01, x_prime: float = 0.0) -> ErfcBenchmark:
    phi = ConstantRamp(1.0, ramp_time)
    xn, t = points[:, 0], points[:, 1]
    vals, _ = half_space_grid(phi, np.full((len(xn), 1), x_prime), xn, t)
    ex = erfc(xn / (2 * np.sqrt(t)))
    ref = np.array([ramped_erfc_reference(a, b, ramp_time) for a, b in points])
    return ErfcBenchmark(points, vals, ex, ref)
