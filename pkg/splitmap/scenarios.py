"""Scenario loading and wiring: named boundary forms, targets, interface maps, problems."""

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from pydantic import ValidationError

from .config import get_settings
from .elliptic import AdmissibleProblem, initialize_admissible
from .errors import ConfigError
from .geometry import IdentityMap, InterfaceMap, Manifold, RotationMap, ScalingMap, Sphere, SubmanifoldPair, Torus
from .grid import CoupledField, Side
from .models import BoundarySpec, InterfaceKind, ManifoldKind, ManifoldSpec, Scenario, SideSpec
from .oracle import geodesic_slope

logger = logging.getLogger(__name__)

Form = Callable[[np.ndarray], np.ndarray]


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a TOML scenario file."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"Scenario file not found: {path}", field="config") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"Scenario file is not valid TOML: {exc}", field="config") from exc
    return parse_scenario(raw)


def parse_scenario(raw: dict) -> Scenario:
    try:
        return Scenario.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(p) for p in first["loc"]) or "scenario"
        raise ConfigError(f"Invalid scenario: {location}: {first['msg']}", field=location,
                          errors=len(exc.errors())) from exc


def build_manifold(spec: ManifoldSpec) -> Manifold:
    factor = get_settings().membership_factor
    if spec.kind == ManifoldKind.circle:
        return Sphere(spec.radius, ambient_dim=2, membership_factor=factor)
    if spec.kind == ManifoldKind.sphere:
        return Sphere(spec.radius, ambient_dim=3, membership_factor=factor)
    if spec.kind == ManifoldKind.equator:
        return Sphere(spec.radius, ambient_dim=3, span=2, membership_factor=factor)
    return Torus(spec.major, spec.minor, membership_factor=factor)


def build_side(spec: SideSpec) -> SubmanifoldPair:
    target = build_manifold(spec.target)
    return SubmanifoldPair(target, build_manifold(spec.slice) if spec.slice else None)


def build_interface(scenario: Scenario, plus: SubmanifoldPair, minus: SubmanifoldPair) -> InterfaceMap:
    spec = scenario.interface
    if spec.kind == InterfaceKind.identity:
        return IdentityMap(plus.inner)
    if spec.kind == InterfaceKind.rotation:
        return RotationMap(plus.inner, minus.inner, spec.angle, tuple(spec.plane))
    return ScalingMap(plus.inner, minus.inner, spec.factor)


def _circle_point(theta: np.ndarray, radius: float, ambient_dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape + (ambient_dim,))
    out[..., 0] = radius * np.cos(theta)
    out[..., 1] = radius * np.sin(theta)
    return out


def _reach(manifold: Manifold) -> float:
    """Distance from the rotation axis of the angle forms' base circle."""
    if isinstance(manifold, Torus):
        return manifold.major + manifold.minor
    return manifold.radius


def _angle_form(angle: Callable[[np.ndarray], np.ndarray], manifold: Manifold) -> Form:
    return lambda x: _circle_point(angle(x), _reach(manifold), manifold.ambient_dim)


def boundary_forms(spec: BoundarySpec, scenario: Scenario, plus: SubmanifoldPair,
                   minus: SubmanifoldPair, interface: InterfaceMap) -> tuple[Form, Form]:
    """(g⁺, g⁻) closed forms sampled at node coordinates.

    Unless the form prescribes both sides, g⁻ = Φ⁺ ∘ g⁺; the built-in interface maps are
    linear in the ambient space, so this stays on N⁻.
    """
    p = spec.params
    n = scenario.grid.dim
    target = plus.inner
    if spec.form == "constant":
        theta = p.get("angle", 0.0)
        g_plus = _angle_form(lambda x: np.full(x.shape[:-1], theta), target)
    elif spec.form == "angle_linear":
        g_plus = _angle_form(lambda x: p.get("theta0", 0.0) + sum(
            p.get(f"slope{i}", 1.0 if i == 0 else 0.0) * x[..., i] for i in range(n)), target)
    elif spec.form == "geodesic_1d":
        beta = scenario.interface.angle if scenario.interface.kind == InterfaceKind.rotation else 0.0
        theta0, theta1 = p.get("theta0", 0.0), p.get("theta1", 0.5 * np.pi)
        s = geodesic_slope(theta0, theta1, beta)
        g_plus = _angle_form(lambda x: theta0 + s * (x[..., 0] + 1.0), target)
        g_minus = _angle_form(lambda x: theta1 + s * (x[..., 0] - 1.0), minus.inner)
        return g_plus, g_minus
    elif spec.form == "harmonic_angle":
        def angle(x):
            y = x[..., -1] if n > 1 else 0.0
            return (p.get("theta0", 0.0) + p.get("a", 1.0) * x[..., 0]
                    + p.get("b", 0.5) * x[..., 0] * y + p.get("c", 0.0) * (x[..., 0] ** 2 - y ** 2))
        g_plus = _angle_form(angle, target)
    elif spec.form == "radial":
        ambient = plus.ambient
        if ambient.ambient_dim != n:
            raise ConfigError(f"Radial data need targets in R^{n}", field="boundary.form")

        def g_plus(x):
            r = np.linalg.norm(x, axis=-1, keepdims=True)
            e0 = np.zeros(n)
            e0[0] = 1.0
            unit = np.where(r > 0, x / np.where(r > 0, r, 1.0), e0)
            return getattr(ambient, "radius", 1.0) * unit
    elif spec.form == "sweep":
        freq = p.get("freq", 1.0)
        g_plus = _angle_form(lambda x: p.get("theta0", 0.0) + freq * x[..., 0], target)
    else:
        g_plus = _angle_form(lambda x: p.get("theta0", 0.0) + p.get("slope", 0.5) * x[..., 0]
                             + p.get("amp", 0.3) * np.sin(np.pi * (x[..., 0] + 1.0) / 2), target)
    return g_plus, lambda x: interface.forward(g_plus(x))


def build_problem(scenario: Scenario) -> AdmissibleProblem:
    grid = scenario.grid.to_grid()
    plus = build_side(scenario.plus)
    minus = build_side(scenario.minus)
    interface = build_interface(scenario, plus, minus)
    g_plus, g_minus = boundary_forms(scenario.boundary, scenario, plus, minus, interface)
    problem = AdmissibleProblem.from_forms(grid, plus, minus, interface, g_plus, g_minus,
                                           constraint_tol=scenario.minimize.constraint_tol)
    logger.info(f"Scenario '{scenario.name}': n={grid.dim}, h={grid.spacing}, "
                f"{grid.n_nodes(Side.plus) + grid.n_nodes(Side.minus)} nodes, targets "
                f"{plus.ambient.name}/{minus.ambient.name}")
    return problem


def initial_field(scenario: Scenario, problem: AdmissibleProblem,
                  seed_field: Optional[CoupledField] = None) -> CoupledField:
    """Initial admissible field: a saved seed, the `initial` form, or the initializer."""
    if seed_field is None and scenario.initial is not None:
        f_plus, f_minus = boundary_forms(scenario.initial, scenario, problem.plus, problem.minus,
                                         problem.interface)
        seed_field = CoupledField.from_functions(problem.grid, f_plus, f_minus)
    return initialize_admissible(problem, scenario.initializer, seed=seed_field)
