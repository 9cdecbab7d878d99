"""Command-line front end.

    heatlayer solve     --config run.ini [--out DIR] [--threads N]
    heatlayer halfspace --config run.ini
    heatlayer verify EXPERIMENT --config run.ini
    heatlayer norms     --config run.ini

Configuration is an INI file.  Every run writes CSV artifacts plus
``summary.json`` into the output directory; the exit status is 0 exactly
when every check of the run passes.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import verify
from .bie_solver import SolverConfig, solve_dirichlet
from .data import ConstantRamp, GaussianBump, HeatSourceTrace, Steady, ZeroData
from .errors import ConfigurationError, HeatLayerError
from .geometry import build_boundary
from .grids import TimeGrid
from .norms import GridFunction, NormParams, boundary_wrs_norm, lpq_norm, validate_norm_params, write_norms_csv
from .potential_eval import EvaluationRequest, evaluate_interior, half_space_grid, ramped_erfc_reference

log = logging.getLogger("heatlayer")

SUBCOMMANDS = ("solve", "halfspace", "verify", "norms")
EXPERIMENTS = (
    "identities",
    "flat",
    "manufactured",
    "erfc",
    "crosscheck",
    "halfspace_ratio_i",
    "halfspace_ratio_ii",
    "halfspace_ratio_iii",
    "bounded_ratio",
)
DATA_TYPES = ("zero", "heat_source", "constant", "gaussian", "steady")
COMPATIBILITY_TOL = 1e-8
SEED_ENV = "HEATLAYER_SEED"


# ---------------------------------------------------------------------------
# configuration


class ConfigErrors(ConfigurationError):
    """All violations found in one configuration."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _float_or_inf(text: str) -> float:
    return math.inf if text.strip().lower() in ("inf", "infinity") else float(text)


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


def _ladder(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        m, k = item.lower().split("x")
        out.append((int(m), int(k)))
    return tuple(out)


def _points(text: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_floats(p) for p in text.split(";") if p.strip())


# section -> key -> (converter, default); a default of ... marks a required key
SCHEMA: dict[str, dict[str, tuple]] = {
    "geometry": {
        "kind": (str, ...),
        "R": (float, 1.0),
        "n": (_optional_int, None),
        "half_width": (float, 4.0),
    },
    "discretization": {"M": (int, 32), "K": (int, 32), "T": (float, 0.5)},
    "solver": {
        "tolerance": (float, 1e-8),
        "max_iterations": (int, 200),
        "l": (_optional_int, None),
        "method": (str, "neumann_series"),
    },
    "norm": {
        "r": (float, 0.0),
        "s": (float, 0.0),
        "p": (float, 2.0),
        "q": (_float_or_inf, 2.0),
        "alpha": (float, 0.0),
    },
    "experiment": {
        "seed": (int, 0),
        "family_size": (int, 10),
        "ladder": (_ladder, ((32, 32), (64, 64))),
        "source": (_floats, (2.0, 0.0)),
        "alphas": (_floats, ()),
        "error_tolerance": (float, 0.02),
        "samples": (int, 20),
    },
    "data": {
        "type": (str, "zero"),
        "value": (float, 1.0),
        "ramp_time": (float, 0.0),
        "center": (_floats, ()),
        "width": (float, 0.3),
        "amplitude": (float, 1.0),
        "source": (_floats, (2.0, 0.0)),
    },
    "evaluation": {
        "points": (_points, ()),
        "times": (_floats, ()),
        "derivative": (str, "none"),
        "tolerance": (float, 1e-6),
    },
    "halfspace": {
        "xn": (_floats, (0.1, 0.5, 1.0, 2.0)),
        "t": (_floats, (0.1, 0.5, 1.0)),
        "x_prime": (_floats, ()),
        "derivative": (str, "none"),
        "truncation_radius": (_optional_float, None),
        "tolerance": (float, 1e-3),
    },
    "io": {"output": (str, "")},
}


@dataclass(frozen=True)
class GeometryBlock:
    kind: str
    R: float
    n: int
    half_width: float


@dataclass(frozen=True)
class DiscretizationBlock:
    M: int
    K: int
    T: float


@dataclass(frozen=True)
class ExperimentBlock:
    seed: int
    family_size: int
    ladder: tuple
    source: tuple
    alphas: tuple
    error_tolerance: float
    samples: int


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryBlock
    discretization: DiscretizationBlock
    solver: SolverConfig
    norm: NormParams
    experiment: ExperimentBlock
    data: dict
    evaluation: dict
    halfspace: dict
    io: dict
    subcommand: Optional[str] = None
    target: Optional[str] = None


def _read_raw(text: str, errors: list[str]) -> dict[str, dict[str, object]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigErrors([f"malformed configuration: {exc}"]) from exc

    raw: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            errors.append(f"{section}: unknown section")
            continue
        for key in parser[section]:
            if key not in SCHEMA[section]:
                errors.append(f"{section}.{key}: unknown key")
    for section, keys in SCHEMA.items():
        raw[section] = {}
        for key, (conv, default) in keys.items():
            if parser.has_option(section, key):
                text_value = parser.get(section, key)
                try:
                    raw[section][key] = conv(text_value)
                except ValueError:
                    errors.append(f"{section}.{key}: cannot parse {text_value!r}")
                    raw[section][key] = None if default is ... else default
            elif default is ...:
                errors.append(f"{section}.{key}: missing required key")
                raw[section][key] = None
            else:
                raw[section][key] = default
    return raw


def _validate(raw, subcommand: Optional[str], errors: list[str]) -> None:
    g = raw["geometry"]
    kind = g["kind"]
    if kind is not None and kind not in ("circle", "sphere", "slab"):
        errors.append(f"geometry.kind: unsupported kind {kind!r}")
    elif kind is not None:
        default_n = {"circle": 2, "sphere": 3}.get(kind, 2)
        if g["n"] is None:
            g["n"] = default_n
        allowed = {"circle": (2,), "sphere": (3,)}.get(kind, (2, 3))
        if g["n"] not in allowed:
            errors.append(f"geometry.n: n={g['n']} is not supported for {kind}")
    if not g["R"] > 0:
        errors.append("geometry.R must be > 0")
    if not g["half_width"] > 0:
        errors.append("geometry.half_width must be > 0")

    d = raw["discretization"]
    if d["M"] < 4:
        errors.append("discretization.M must be >= 4")
    if d["K"] < 2:
        errors.append("discretization.K must be >= 2")
    if not d["T"] > 0:
        errors.append("discretization.T must be > 0")

    s = raw["solver"]
    if not s["tolerance"] > 0:
        errors.append("solver.tolerance must be > 0")
    if s["max_iterations"] < 1:
        errors.append("solver.max_iterations must be >= 1")
    if s["l"] is not None and s["l"] < 1:
        errors.append("solver.l must be >= 1")
    if s["method"] not in ("neumann_series", "time_marching"):
        errors.append(f"solver.method: expected neumann_series or time_marching, got {s['method']!r}")

    nm = raw["norm"]
    errors.extend(validate_norm_params(nm["r"], nm["s"], nm["p"], nm["q"], nm["alpha"], prefix="norm."))

    e = raw["experiment"]
    if e["family_size"] < 1:
        errors.append("experiment.family_size must be >= 1")
    if e["samples"] < 1:
        errors.append("experiment.samples must be >= 1")
    if not e["error_tolerance"] > 0:
        errors.append("experiment.error_tolerance must be > 0")
    if any(m < 4 or k < 2 for m, k in e["ladder"]):
        errors.append("experiment.ladder: every level needs M >= 4 and K >= 2")
    if any(not 0 <= a for a in e["alphas"]) or any(not a < 1 / nm["p"] for a in e["alphas"] if nm["p"] >= 1):
        errors.append(f"experiment.alphas: every alpha must satisfy 0 <= alpha < 1/p = {1 / nm['p']:g}")

    dt = raw["data"]
    if dt["type"] not in DATA_TYPES:
        errors.append(f"data.type: expected one of {', '.join(DATA_TYPES)}, got {dt['type']!r}")
    if dt["ramp_time"] < 0:
        errors.append("data.ramp_time must be >= 0")
    if not dt["width"] > 0:
        errors.append("data.width must be > 0")
    n = g["n"]
    if dt["type"] == "heat_source" and n is not None and len(dt["source"]) != n:
        errors.append(f"data.source must have {n} coordinates")
    if dt["type"] == "gaussian" and dt["center"] and n is not None:
        want = n - 1 if subcommand == "halfspace" else n
        if len(dt["center"]) != want:
            errors.append(f"data.center must have {want} coordinates")

    ev = raw["evaluation"]
    if ev["derivative"] not in ("none", "gradient"):
        errors.append("evaluation.derivative must be none or gradient")
    if n is not None and any(len(p) != n for p in ev["points"]):
        errors.append(f"evaluation.points must have {n} coordinates each")
    if any(t <= 0 or t > d["T"] for t in ev["times"]):
        errors.append("evaluation.times must lie in (0, T]")
    if not ev["tolerance"] > 0:
        errors.append("evaluation.tolerance must be > 0")

    hs = raw["halfspace"]
    if any(x <= 0 for x in hs["xn"]):
        errors.append("halfspace.xn values must be > 0")
    if any(t <= 0 for t in hs["t"]):
        errors.append("halfspace.t values must be > 0")
    if hs["derivative"] not in ("none", "tangential", "normal"):
        errors.append("halfspace.derivative must be none, tangential or normal")
    if hs["truncation_radius"] is not None and not hs["truncation_radius"] > 0:
        errors.append("halfspace.truncation_radius must be > 0")
    if not hs["tolerance"] > 0:
        errors.append("halfspace.tolerance must be > 0")
    if n is not None and hs["x_prime"] and len(hs["x_prime"]) != n - 1:
        errors.append(f"halfspace.x_prime must have {n - 1} coordinates")


def parse_config(text: str, subcommand: Optional[str] = None, target: Optional[str] = None) -> RunConfig:
    """Parse and validate; raises ConfigErrors listing every violation."""
    errors: list[str] = []
    raw = _read_raw(text, errors)
    _validate(raw, subcommand, errors)
    if errors:
        raise ConfigErrors(errors)
    g, d, s, nm, e = (raw[k] for k in ("geometry", "discretization", "solver", "norm", "experiment"))
    return RunConfig(
        geometry=GeometryBlock(g["kind"], g["R"], g["n"], g["half_width"]),
        discretization=DiscretizationBlock(d["M"], d["K"], d["T"]),
        solver=SolverConfig(s["tolerance"], s["max_iterations"], s["l"], s["method"]),
        norm=NormParams(nm["r"], nm["s"], nm["p"], nm["q"], nm["alpha"]),
        experiment=ExperimentBlock(**e),
        data=raw["data"],
        evaluation=raw["evaluation"],
        halfspace=raw["halfspace"],
        io=raw["io"],
        subcommand=subcommand,
        target=target,
    )


# ---------------------------------------------------------------------------
# run bookkeeping


@dataclass
class RunSummary:
    subcommand: str
    target: Optional[str] = None
    checks: list[dict] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    info: dict = field(default_factory=dict)
    error: Optional[str] = None

    def check(self, name: str, passed: bool, value=None, threshold=None) -> bool:
        self.checks.append(
            {"name": name, "status": "PASS" if passed else "FAIL", "value": _jsonable(value), "threshold": _jsonable(threshold)}
        )
        return passed

    @property
    def passed(self) -> bool:
        return self.error is None and all(c["status"] == "PASS" for c in self.checks)

    def write(self, out: Path) -> None:
        body = asdict(self)
        body["status"] = "PASS" if self.passed else ("ERROR" if self.error else "FAIL")
        (out / "summary.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    if v is None or isinstance(v, (bool, int, str)):
        return v
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _make_data(cfg: RunConfig, halfspace: bool = False):
    d = cfg.data
    n = cfg.geometry.n
    kind = d["type"]
    if kind == "zero":
        return ZeroData()
    if kind == "heat_source":
        return HeatSourceTrace(tuple(d["source"]))
    if kind == "constant":
        return ConstantRamp(d["value"], d["ramp_time"])
    if kind == "steady":
        return Steady(d["value"])
    dim = n - 1 if halfspace else n
    center = tuple(d["center"]) if d["center"] else (0.0,) * dim
    return GaussianBump(center, d["width"], d["amplitude"], d["ramp_time"])


def _check_compatibility(data, points) -> None:
    first = np.max(np.abs(data(points, 0.0))) if len(points) else 0.0
    if first > COMPATIBILITY_TOL:
        raise ConfigurationError(
            f"data.type: boundary data must vanish at t = 0 (max |phi(., 0)| = {first:.3e})"
        )


def _write_grid_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else repr(float(v)) if not isinstance(v, int) else str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def run_solve(cfg: RunConfig, out: Path, summary: RunSummary, threads: int) -> None:
    g, dz = cfg.geometry, cfg.discretization
    b, quad = build_boundary(g.kind, dz.M, n=g.n, radius=g.R, half_width=g.half_width)
    tgrid = TimeGrid(dz.T, dz.K)
    data = _make_data(cfg)
    _check_compatibility(data, quad.nodes)
    sol = solve_dirichlet(data, quad, tgrid, cfg.solver, threads=threads)

    dims = [f"x{k + 1}" for k in range(quad.dim)]
    rows = (
        [j, *quad.nodes[j], t, sol.mu.values[j, m]]
        for j in range(quad.node_count)
        for m, t in enumerate(tgrid.nodes)
    )
    _write_grid_csv(out / "density.csv", ["node", *dims, "t", "mu"], rows)
    summary.artifacts.append("density.csv")
    if sol.report is not None:
        sol.report.to_csv(out / "convergence.csv")
        summary.artifacts.append("convergence.csv")
        summary.check("picard_converged", sol.report.converged, sol.report.iterations, cfg.solver.max_iterations)
        summary.check("increment_bound", sol.report.bound_holds())
    summary.info.update(nodes=quad.node_count, steps=tgrid.steps, level=cfg.solver.level_for(quad.dim))

    ev = cfg.evaluation
    if ev["points"]:
        pts = np.array(ev["points"], dtype=float)
        times = ev["times"] or (tgrid.horizon,)
        P = np.repeat(pts, len(times), axis=0)
        T = np.tile(np.array(times, dtype=float), len(pts))
        res = evaluate_interior(sol.mu, b, quad, tgrid, EvaluationRequest(P, T, ev["derivative"], ev["tolerance"]))
        res.to_csv(out / "potential.csv")
        summary.artifacts.append("potential.csv")
        summary.check("refinement_converged", not res.warnings, len(res.warnings), 0)
        if isinstance(data, HeatSourceTrace) and ev["derivative"] == "none":
            exact = data.exact(P, T)
            err = float(np.max(np.abs(res.values - exact)) / max(np.max(np.abs(exact)), 1e-300))
            summary.info["manufactured_relative_error"] = err


def run_halfspace(cfg: RunConfig, out: Path, summary: RunSummary) -> None:
    n = cfg.geometry.n
    hs = cfg.halfspace
    phi = _make_data(cfg, halfspace=True)
    xp0 = np.array(hs["x_prime"] or (0.0,) * (n - 1), dtype=float)
    _check_compatibility(phi, xp0[None])
    XN, TT = np.meshgrid(np.array(hs["xn"]), np.array(hs["t"]), indexing="ij")
    xn, t = XN.ravel(), TT.ravel()
    vals, est = half_space_grid(
        phi, np.broadcast_to(xp0, (xn.size, n - 1)), xn, t, hs["derivative"], truncation_radius=hs["truncation_radius"]
    )
    vals = vals.reshape(xn.size, -1)
    est = est.reshape(xn.size, -1)
    cols = ["value"] if vals.shape[1] == 1 else [f"value_{k + 1}" for k in range(vals.shape[1])]
    header = [f"x{k + 1}" for k in range(n - 1)] + ["x_n", "t"] + cols + ["est_error"]
    rows = ([*xp0, a, b, *v, float(np.max(e))] for a, b, v, e in zip(xn, t, vals, est))
    _write_grid_csv(out / "halfspace.csv", header, rows)
    summary.artifacts.append("halfspace.csv")
    summary.check("quadrature_estimate", float(np.max(est)) <= hs["tolerance"], float(np.max(est)), hs["tolerance"])
    if isinstance(phi, ConstantRamp) and hs["derivative"] == "none":
        ref = np.array([ramped_erfc_reference(a, b, phi.ramp_time) for a, b in zip(xn, t)]) * phi.value
        dev = float(np.max(np.abs(vals[:, 0] - ref)))
        summary.check("similarity_solution", dev <= hs["tolerance"], dev, hs["tolerance"])


def run_norms(cfg: RunConfig, out: Path, summary: RunSummary) -> None:
    g, dz = cfg.geometry, cfg.discretization
    b, quad = build_boundary(g.kind, dz.M, n=g.n, radius=g.R, half_width=g.half_width)
    tgrid = TimeGrid(dz.T, dz.K)
    data = _make_data(cfg)
    _check_compatibility(data, quad.nodes)
    vals = np.column_stack([data(quad.nodes, t) for t in tgrid.nodes])
    trace = GridFunction(vals, quad.nodes, quad.weights, tgrid.nodes, dim=g.n - 1)
    bd = boundary_wrs_norm(vals, b, quad, tgrid.nodes, cfg.norm)
    lpq = lpq_norm(trace, cfg.norm.p, cfg.norm.q)
    write_norms_csv(out / "norms.csv", [bd], labels=["boundary"])
    summary.artifacts.append("norms.csv")
    summary.info["lpq_norm"] = lpq
    summary.check("norm_finite", math.isfinite(bd.total), bd.total)


def _spec(cfg: RunConfig, kind: str, threads: int) -> verify.ExperimentSpec:
    e = cfg.experiment
    return verify.ExperimentSpec(
        kind=kind,
        geometry=cfg.geometry.kind,
        radius=cfg.geometry.R,
        n=cfg.geometry.n,
        horizon=cfg.discretization.T,
        norm=cfg.norm,
        seed=e.seed,
        family_size=e.family_size,
        ladder=e.ladder,
        source=e.source,
        tolerance=cfg.solver.tolerance,
        alphas=e.alphas,
        threads=threads,
    )


def run_verify(cfg: RunConfig, out: Path, summary: RunSummary, threads: int) -> None:
    exp = cfg.target
    e = cfg.experiment
    if exp == "identities":
        rep = verify.run_identities()
        rep.to_csv(out / "identities.csv")
        summary.artifacts.append("identities.csv")
        for c in rep.checks:
            summary.check(c.name, c.passed, c.error, c.tolerance)
    elif exp == "flat":
        fc = verify.run_flat_check(cfg.geometry.n, cfg.discretization.M, cfg.discretization.K, cfg.discretization.T)
        summary.check("kernel_zero", fc.kernel_max == 0.0, fc.kernel_max, 0.0)
        summary.check("single_iteration", fc.iterations == 1, fc.iterations, 1)
        summary.check("density_is_minus_two_phi", fc.density_error <= 1e-14, fc.density_error, 1e-14)
    elif exp == "manufactured":
        table = verify.run_manufactured(_spec(cfg, "manufactured", threads))
        table.to_csv(out / "manufactured.csv")
        summary.artifacts.append("manufactured.csv")
        final = table.max_errors[-1]
        summary.check("finest_error", final <= e.error_tolerance, final, e.error_tolerance)
        for k, ratio in enumerate(table.improvement()):
            summary.check(f"improvement_{k}", ratio >= 1.5, ratio, 1.5)
    elif exp == "erfc":
        bench = verify.run_erfc_benchmark(verify.erfc_sample_points(e.samples, e.seed))
        bench.to_csv(out / "erfc.csv")
        summary.artifacts.append("erfc.csv")
        summary.check("erfc_deviation", bench.erfc_deviation <= 2e-3, bench.erfc_deviation, 2e-3)
        summary.check("ramped_reference", bench.reference_deviation <= 1e-6, bench.reference_deviation, 1e-6)
    elif exp == "crosscheck":
        src = e.source
        cc = verify.run_solver_crosscheck(
            cfg.discretization.M, cfg.discretization.K, cfg.discretization.T, src, cfg.solver.tolerance, e.seed
        )
        cc.report.to_csv(out / "convergence.csv")
        summary.artifacts.append("convergence.csv")
        summary.check("increment_bound", cc.bound_holds)
        summary.check("picard_vs_march", cc.picard_vs_march <= 1e-6, cc.picard_vs_march, 1e-6)
        limit = 10 * cfg.solver.tolerance
        summary.check("initial_guess_spread", cc.initial_guess_spread <= limit, cc.initial_guess_spread, limit)
    elif exp.startswith("halfspace_ratio"):
        table = verify.run_ratio_theorem2(_spec(cfg, exp, threads))
        table.to_csv(out / f"{exp}.csv")
        summary.artifacts.append(f"{exp}.csv")
        summary.check("ratios_finite", all(math.isfinite(r) for r in table.ratios()), table.max_ratio)
        if table.reference_constant is not None:
            limit = 1.05 * table.reference_constant
            summary.info["reference_constant"] = table.reference_constant
            worst = max(table.ratios(alpha=0.0), default=0.0)
            summary.check("ratio_below_constant", worst <= limit, worst, limit)
    elif exp == "bounded_ratio":
        table = verify.run_ratio_theorem3(_spec(cfg, exp, threads))
        table.to_csv(out / "bounded_ratio.csv")
        summary.artifacts.append("bounded_ratio.csv")
        change = verify.ratio_stability(table)
        summary.check("refinement_stability", change < 0.1, change, 0.1)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigurationError(f"unknown experiment {exp!r}")


# ---------------------------------------------------------------------------
# entry point


def _arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatlayer", description="Double-layer heat potential solver and checks.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="INI configuration file")
    common.add_argument("--out", type=Path, default=None, help="output directory (default ./out)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("solve", parents=[common], help="solve for the density")
    sub.add_parser("halfspace", parents=[common], help="evaluate the half-space solution")
    vp = sub.add_parser("verify", parents=[common], help="run a verification experiment")
    vp.add_argument("experiment", choices=EXPERIMENTS)
    sub.add_parser("norms", parents=[common], help="norms of the boundary data")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = _arg_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    target = getattr(args, "experiment", None)
    summary = RunSummary(args.subcommand, target)

    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, args.subcommand, target)
    except ConfigErrors as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2

    seed_env = os.environ.get(SEED_ENV)
    if seed_env is not None:
        try:
            seed = int(seed_env)
        except ValueError:
            print(f"error: {SEED_ENV} must be an integer", file=sys.stderr)
            return 2
        cfg = RunConfig(**{**cfg.__dict__, "experiment": ExperimentBlock(**{**asdict(cfg.experiment), "seed": seed})})

    out = args.out or Path(cfg.io["output"] or "out")
    out.mkdir(parents=True, exist_ok=True)
    threads = args.threads or os.cpu_count() or 1
    summary.info["threads"] = threads

    try:
        with threadpool_limits(limits=threads):
            if args.subcommand == "solve":
                run_solve(cfg, out, summary, threads)
            elif args.subcommand == "halfspace":
                run_halfspace(cfg, out, summary)
            elif args.subcommand == "norms":
                run_norms(cfg, out, summary)
            else:
                run_verify(cfg, out, summary, threads)
    except HeatLayerError as exc:
        summary.error = f"{type(exc).__name__}: {exc}"
        report = getattr(exc, "report", None)
        if report is not None:
            report.to_csv(out / "convergence.csv")
            summary.artifacts.append("convergence.csv")

    summary.info.pop("threads")  # keep summary.json independent of the thread count
    summary.write(out)
    for c in summary.checks:
        print(f"{c['status']} {c['name']}")
    if summary.error:
        print(f"ERROR {summary.error}", file=sys.stderr)
    return 0 if summary.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
