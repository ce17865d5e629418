"""Sparse optimal scoring discriminant analysis.

Two families of solvers for the elastic-net optimal scoring problem: the
classical deflationary block-coordinate method, which computes scoring and
discriminant vector pairs one at a time, and a deflation-free splitting
method that estimates all of them jointly under a global orthogonality
constraint.
"""

from .core import (
    Dataset,
    FitTrace,
    IndicatorMatrix,
    Method,
    SolverConfig,
    SosModel,
    build_indicator,
    center_columns,
    sos_objective,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FitTrace",
    "IndicatorMatrix",
    "Method",
    "SolverConfig",
    "SosModel",
    "build_indicator",
    "center_columns",
    "sos_objective",
    "__version__",
]
