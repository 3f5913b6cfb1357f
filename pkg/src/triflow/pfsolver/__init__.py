"""Power-flow solvers (Newton on the IV system, radial sweep oracle) and
conversions between variable spaces."""

from triflow.pfsolver.convert import (
    branch_flows,
    end_currents,
    iv_from_rect,
    iv_to_polar,
    iv_to_rect,
    lift,
    polar_from_rect,
    rect_from_polar,
)
from triflow.pfsolver.newton import IVSystem, solve_newton
from triflow.pfsolver.options import SolveOptions, SolveTrace
from triflow.pfsolver.sweep import solve_sweep

__all__ = [
    "SolveOptions", "SolveTrace", "IVSystem", "solve_newton", "solve_sweep",
    "lift", "iv_to_polar", "iv_to_rect", "polar_from_rect", "rect_from_polar",
    "iv_from_rect", "branch_flows", "end_currents",
]
