"""Pydantic models for scenario files and run records."""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import GridError
from .grid import SplitGrid


class RunKind(str, Enum):
    minimize = "minimize"
    flow = "flow"
    picard = "picard"
    diagnose = "diagnose"


class ManifoldKind(str, Enum):
    circle = "circle"
    sphere = "sphere"
    equator = "equator"
    torus = "torus"


class InterfaceKind(str, Enum):
    identity = "identity"
    rotation = "rotation"
    scaling = "scaling"


class StepRule(str, Enum):
    fixed = "fixed"
    backtracking = "backtracking"


class DescentMetric(str, Enum):
    h1 = "h1"
    l2 = "l2"


class InitializerKind(str, Enum):
    harmonic = "harmonic"
    homogeneous = "homogeneous"


BOUNDARY_FORMS = ("constant", "angle_linear", "geodesic_1d", "harmonic_angle", "radial", "sweep", "tilt")

# (ambient dimension, manifold dimension)
MANIFOLD_DIMS = {
    ManifoldKind.circle: (2, 1),
    ManifoldKind.sphere: (3, 2),
    ManifoldKind.equator: (3, 1),
    ManifoldKind.torus: (3, 2),
}


class GridSpec(BaseModel):
    """Split box grid."""

    dim: int = Field(..., ge=1, le=3, description="Space dimension n")
    spacing: float = Field(..., gt=0, description="Grid spacing h")
    extents: Optional[list[tuple[float, float]]] = Field(None, description="Box extents, default [-1, 1]^n")

    @model_validator(mode="after")
    def check_grid(self):
        """Spacing must divide the extents and x_n = 0 must be a grid plane."""
        try:
            self.to_grid()
        except GridError as exc:
            raise ValueError(exc.message) from exc
        return self

    def to_grid(self) -> SplitGrid:
        return SplitGrid(self.dim, self.spacing,
                         tuple(tuple(e) for e in self.extents) if self.extents else None)


class ManifoldSpec(BaseModel):
    """Built-in analytic target manifold."""

    kind: ManifoldKind = Field(..., description="Manifold family")
    radius: float = Field(1.0, gt=0, description="Radius (circle, sphere, equator)")
    major: float = Field(2.0, gt=0, description="Torus major radius")
    minor: float = Field(0.5, gt=0, description="Torus minor radius")

    @model_validator(mode="after")
    def check_torus(self):
        if self.kind == ManifoldKind.torus and self.minor >= self.major:
            raise ValueError("Torus minor radius must be smaller than the major radius")
        return self

    @property
    def dims(self) -> tuple[int, int]:
        return MANIFOLD_DIMS[self.kind]


class SideSpec(BaseModel):
    """Target N of one side and its interface submanifold M (None: M = N)."""

    target: ManifoldSpec
    slice: Optional[ManifoldSpec] = Field(None, description="Interface submanifold M")


class InterfaceSpec(BaseModel):
    """Matching map Φ⁺: M⁺ → M⁻."""

    kind: InterfaceKind = Field(InterfaceKind.identity, description="Map family")
    angle: float = Field(0.0, description="Rotation angle β")
    plane: tuple[int, int] = Field((0, 1), description="Rotation plane axes")
    factor: float = Field(1.0, gt=0, description="Scaling factor")


class BoundarySpec(BaseModel):
    """Named closed-form boundary data."""

    form: str = Field(..., description="Form name")
    params: dict[str, float] = Field(default_factory=dict, description="Form parameters")

    @field_validator("form")
    @classmethod
    def known_form(cls, v):
        if v not in BOUNDARY_FORMS:
            raise ValueError(f"Unknown boundary form '{v}', expected one of {', '.join(BOUNDARY_FORMS)}")
        return v


class MinimizeOptions(BaseModel):
    """Constrained descent controls."""

    max_iterations: int = Field(500, ge=1, description="Iteration cap")
    energy_tol: float = Field(1e-12, gt=0, description="Relative energy decrease stop")
    gradient_tol: float = Field(1e-7, gt=0, description="Mass-scaled tangential gradient stop")
    step_rule: StepRule = Field(StepRule.backtracking, description="Fixed step or Armijo backtracking")
    metric: DescentMetric = Field(DescentMetric.h1, description="Descent metric")
    constraint_tol: float = Field(1e-9, gt=0, description="Admissibility tolerance")
    armijo: float = Field(1e-4, gt=0, lt=1, description="Armijo sufficient-decrease constant")
    max_backtracks: int = Field(40, ge=1, description="Step halvings before failure")


class FlowOptions(BaseModel):
    """Semi-implicit heat flow controls."""

    t_end: float = Field(0.1, gt=0, description="Final time")
    dt: Optional[float] = Field(None, gt=0, description="Time step, default stability_factor*h^2")
    stability_factor: Optional[float] = Field(None, gt=0, description="Override of the settings value")
    stride: int = Field(10, ge=1, description="Frame and ledger stride")
    energy_constant: float = Field(0.0, ge=0, description="Interface constant C of the energy inequality")
    tol_constant: float = Field(10.0, gt=0, description="C' in the discrete slack tolerance C'(h^2+dt)(t-s)")


class PicardConfig(BaseModel):
    """Chart Picard iteration controls."""

    horizon: float = Field(0.01, gt=0, description="Time horizon T")
    dt: Optional[float] = Field(None, gt=0, description="Time step, default stability_factor*h^2")
    alpha: float = Field(0.5, gt=0, lt=1, description="Hölder exponent of the proxy norm")
    theta_target: float = Field(0.9, gt=0, lt=1, description="Required contraction ratio")
    max_sweeps: int = Field(50, ge=1, description="Picard sweep cap")
    tol: float = Field(1e-10, gt=0, description="Cauchy tolerance in the proxy norm")
    chart_radius: float = Field(0.5, gt=0, description="Chart radius r0")
    chart_center: Optional[list[float]] = Field(None, description="Chart centre on M+, default the mean trace")
    max_recenters: int = Field(3, ge=0, description="Chart re-centerings after an iterate leaves its chart")


class DiagnosticsOptions(BaseModel):
    """Monotonicity, detector and decay settings."""

    centers: Optional[list[list[float]]] = Field(None, description="Centres on Γ, default the origin")
    radii: list[float] = Field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8], description="Ball radii")
    distortion_constant: float = Field(0.0, ge=0, description="Constant C of the monotone quantity")
    epsilon0: float = Field(0.5, gt=0, description="Small-energy threshold ε0")
    detector_radius: Optional[float] = Field(None, gt=0, description="Detector scale r, default 4h")
    theta: float = Field(0.5, gt=0, lt=1, description="Decay ratio scale factor")
    struwe_radii: Optional[list[float]] = Field(None, description="Radii R of the parabolic quantity")

    @field_validator("radii")
    @classmethod
    def increasing(cls, v):
        if not v or any(b <= a for a, b in zip(v, v[1:])) or v[0] <= 0:
            raise ValueError("Radii must be positive and strictly increasing")
        return v


class Scenario(BaseModel):
    """One run definition."""

    name: str = Field(..., min_length=1, max_length=100, description="Scenario name")
    kind: RunKind = Field(RunKind.minimize, description="Pipeline to run")
    seed: int = Field(0, ge=0, description="Random seed")
    initializer: InitializerKind = Field(InitializerKind.harmonic, description="Initial field construction")
    grid: GridSpec
    plus: SideSpec
    minus: SideSpec
    interface: InterfaceSpec = Field(default_factory=InterfaceSpec)
    boundary: BoundarySpec
    initial: Optional[BoundarySpec] = Field(None, description="Initial data form for flows (default: initializer)")
    output_dir: Optional[str] = Field(None, description="Artifact directory")
    field_path: Optional[str] = Field(None, description="Saved field.csv for diagnose runs")
    minimize: MinimizeOptions = Field(default_factory=MinimizeOptions)
    flow: FlowOptions = Field(default_factory=FlowOptions)
    picard: PicardConfig = Field(default_factory=PicardConfig)
    diagnostics: DiagnosticsOptions = Field(default_factory=DiagnosticsOptions)

    @model_validator(mode="after")
    def equal_dimensions(self):
        """Targets and slices must have equal dimensions on both sides."""
        if self.plus.target.dims != self.minus.target.dims:
            raise ValueError("Targets N+ and N- must have the same ambient and manifold dimension")
        sp = (self.plus.slice or self.plus.target).dims
        sm = (self.minus.slice or self.minus.target).dims
        if sp != sm:
            raise ValueError("Slices M+ and M- must have the same dimension")
        if sp[0] != self.plus.target.dims[0]:
            raise ValueError("Slice and target must share the ambient space")
        return self


class RunManifest(BaseModel):
    """Everything needed to re-run a scenario exactly."""

    scenario: dict
    config_hash: str
    versions: dict[str, str]
    constants: dict[str, float] = Field(default_factory=dict)
    artifacts: list[str] = Field(default_factory=list)


class ValidationReport(BaseModel):
    """Result of the validate verb."""

    ok: bool
    compatibility_residual: float
    violations: list[dict] = Field(default_factory=list)
    boundary_distance: float = 0.0
    flux_compatibility: Optional[float] = None
    warnings: list[str] = Field(default_factory=list)
