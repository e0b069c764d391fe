"""Coupled heat flow: semi-implicit stepper and chart Picard iteration."""

from .flow import (
    EnergyLedger,
    FlowState,
    LedgerSample,
    SlackReport,
    StabilityBoundExceeded,
    Trajectory,
    curvature_source,
    energy_inequality_check,
    evolve,
    initial_flux_compatibility,
    semi_implicit_step,
    step_dissipation,
)
from .picard import ChartExit, NoContraction, PicardResult, holder_proxy_norm, picard_chart_solve

__all__ = [
    "EnergyLedger", "FlowState", "LedgerSample", "SlackReport", "StabilityBoundExceeded",
    "Trajectory", "curvature_source", "energy_inequality_check", "evolve",
    "initial_flux_compatibility", "semi_implicit_step", "step_dissipation", "ChartExit",
    "NoContraction", "PicardResult", "holder_proxy_norm", "picard_chart_solve",
]
