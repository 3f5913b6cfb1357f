"""Residual evaluators for the IV, polar, rectangular, lifted bus-injection
and lifted branch-flow formulations, plus bound margins."""

from triflow.formulations.bounds import (
    bounds_margins,
    pad_margins_lifted,
    pad_margins_polar,
    pad_margins_rect,
    vad_margins_bfm,
    vad_margins_lifted,
    vad_margins_polar,
    vad_margins_rect,
    vad_status,
)
from triflow.formulations.report import FeasibilityReport, Margin, ResidualReport
from triflow.formulations.residual_bim import residual_polar, residual_rect
from triflow.formulations.residual_iv import residual_iv
from triflow.formulations.residual_lifted import (
    branch_losses,
    residual_bfm_lifted,
    residual_bim_lifted,
)
from triflow.formulations.states import (
    IVState,
    LiftedState,
    PolarState,
    RectState,
    state_from_per_unit,
    state_to_per_unit,
)

__all__ = [
    "IVState", "PolarState", "RectState", "LiftedState",
    "ResidualReport", "FeasibilityReport", "Margin",
    "residual_iv", "residual_polar", "residual_rect",
    "residual_bim_lifted", "residual_bfm_lifted", "branch_losses",
    "bounds_margins", "vad_margins_polar", "vad_margins_rect", "vad_margins_lifted",
    "vad_margins_bfm", "vad_status", "pad_margins_polar", "pad_margins_rect",
    "pad_margins_lifted", "state_to_per_unit", "state_from_per_unit",
]
