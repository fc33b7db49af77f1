"""Stochastic SQP methods for nonsmooth objectives built from smooth pieces.

The solver minimizes an expectation of pointwise minima of smooth functions
over a convex set, optionally subject to smooth equality constraints, using
sampled subgradients, a proximal quadratic subproblem and an l1 merit line
search.  Supporting pieces (dense QP and LP solvers, sampling strategies,
stationarity diagnostics, benchmark problems) live in their own modules.
"""

from .diagnostics import (
    StationarityReport,
    export_trace,
    reference_stationarity,
    stationarity_error,
    write_run_csv,
)
from .driver import (
    IterationTrace,
    SolverConfig,
    run_algorithm1,
    run_algorithm2,
)
from .lp import LpProblem, LpSolution, LpStatus, solve_lp, verify_lp
from .model import (
    ConstrainedStochasticProblem,
    LocalModel,
    merit_value,
    model_value,
    predicted_decrease,
    predicted_decrease_with_step,
    upper_c2_gap,
)
from .qp import BoxPolyhedron, QpProblem, QpSolution, QpStatus, solve_qp
from .sampling import (
    AdaptiveSize,
    FixedSize,
    PolynomialSize,
    SampleStats,
    aggregate,
    draw_scenarios,
    next_sample_size,
    variance_test,
)

__all__ = [
    "AdaptiveSize",
    "BoxPolyhedron",
    "ConstrainedStochasticProblem",
    "FixedSize",
    "IterationTrace",
    "LocalModel",
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "PolynomialSize",
    "QpProblem",
    "QpSolution",
    "QpStatus",
    "SampleStats",
    "SolverConfig",
    "StationarityReport",
    "aggregate",
    "draw_scenarios",
    "export_trace",
    "merit_value",
    "model_value",
    "next_sample_size",
    "predicted_decrease",
    "predicted_decrease_with_step",
    "reference_stationarity",
    "run_algorithm1",
    "run_algorithm2",
    "solve_lp",
    "solve_qp",
    "stationarity_error",
    "upper_c2_gap",
    "variance_test",
    "verify_lp",
    "write_run_csv",
]

__version__ = "0.1.0"
