"""Internal LP/MILP engine."""
from .mip import (
    LPResult,
    QuadUnsupported,
    SolveControls,
    SolveOutcome,
    Status,
    rationalize,
    rounding_heuristic,
    solve_lp,
    solve_mip,
)
from .simplex import LPStatus

__all__ = [
    "LPResult", "LPStatus", "QuadUnsupported", "SolveControls", "SolveOutcome", "Status",
    "rationalize", "rounding_heuristic", "solve_lp", "solve_mip",
]
