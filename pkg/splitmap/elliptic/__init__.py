"""Energy minimizers in the admissible class and comparison constructions."""

from .descent import (
    DescentLedger,
    DescentRecord,
    StepFailure,
    energy_gradient,
    first_variation,
    initialize_admissible,
    minimize,
    retract,
    tangent_space,
)
from .extensions import (
    CylinderData,
    CylinderExtension,
    OscillationTooLarge,
    PolarExtension,
    half_circle_points,
    homogeneous_cylinder_extension,
    interpolation_extension_2d,
    radial_comparison,
)
from .flux import flux_residual
from .problem import AdmissibilityReport, AdmissibleProblem, Violation

__all__ = [
    "DescentLedger", "DescentRecord", "StepFailure", "energy_gradient", "first_variation",
    "initialize_admissible", "minimize", "retract", "tangent_space", "CylinderData",
    "CylinderExtension", "OscillationTooLarge", "PolarExtension", "half_circle_points",
    "homogeneous_cylinder_extension", "interpolation_extension_2d", "radial_comparison",
    "flux_residual", "AdmissibilityReport", "AdmissibleProblem", "Violation",
]
