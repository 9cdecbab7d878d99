"""Heat equation Dirichlet problems via double-layer potentials."""
from .bie_solver import ConvergenceReport, DiscreteOperator, SolverConfig, Solution, solve_dirichlet
from .errors import (
    AccuracyError,
    AccuracyWarning,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    ExtrapolationError,
    HeatLayerError,
    StepSizeError,
)
from .geometry import Boundary, SurfaceQuadrature, build_boundary
from .grids import DensityField, TimeGrid
from .kernels import KernelTable, build_kernel_table, gamma
from .norms import GridFunction, NormParams, wrs_norm

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "AccuracyWarning",
    "Boundary",
    "ConfigurationError",
    "ConvergenceError",
    "ConvergenceReport",
    "DensityField",
    "DiscreteOperator",
    "DomainError",
    "ExtrapolationError",
    "GridFunction",
    "HeatLayerError",
    "KernelTable",
    "NormParams",
    "Solution",
    "SolverConfig",
    "StepSizeError",
    "SurfaceQuadrature",
    "TimeGrid",
    "build_boundary",
    "build_kernel_table",
    "gamma",
    "solve_dirichlet",
    "wrs_norm",
]
