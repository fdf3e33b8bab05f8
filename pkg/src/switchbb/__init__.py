"""Certified global optimization for switching linear regression and
bounded-error (saturated-loss) estimation via branch-and-bound."""

from .bnb import SolveOptions, solve
from .berr import (
    Decomposition,
    cost_be0,
    cost_be2,
    decompose,
    descent_heuristic,
    solve_be,
)
from .core import (
    BoxRegion,
    Dataset,
    LossKind,
    SolveReport,
    SwitchingModel,
    canonicalize,
    load_dataset_csv,
    save_dataset_csv,
)
from .swreg import classify, cost_sw, cost_sw_assigned, klinreg, solve_switching

__version__ = "0.1.0"

__all__ = [
    "BoxRegion",
    "Dataset",
    "Decomposition",
    "LossKind",
    "SolveOptions",
    "SolveReport",
    "SwitchingModel",
    "canonicalize",
    "classify",
    "cost_be0",
    "cost_be2",
    "cost_sw",
    "cost_sw_assigned",
    "decompose",
    "descent_heuristic",
    "klinreg",
    "load_dataset_csv",
    "save_dataset_csv",
    "solve",
    "solve_be",
    "solve_switching",
    "__version__",
]
