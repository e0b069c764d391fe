"""Target manifolds, interface maps and charts."""

from .charts import (
    AngleChart,
    Chart,
    GraphChart,
    SingularMetric,
    SliceChart,
    chart_pair,
    christoffel_eval,
)
from .interface import (
    DiffeomorphismMap,
    IdentityMap,
    InterfaceMap,
    RotationMap,
    ScalingMap,
    interface_flux_transfer,
)
from .manifolds import (
    GraphSurface,
    Manifold,
    NonTangentInput,
    ProjectedManifold,
    Sphere,
    SubmanifoldPair,
    Torus,
    circle,
    equator,
    project_to_manifold,
    second_form_eval,
    sphere,
)

__all__ = [
    "AngleChart", "Chart", "GraphChart", "SingularMetric", "SliceChart", "chart_pair",
    "christoffel_eval", "DiffeomorphismMap", "IdentityMap", "InterfaceMap", "RotationMap",
    "ScalingMap", "interface_flux_transfer", "GraphSurface", "Manifold", "NonTangentInput",
    "ProjectedManifold", "Sphere", "SubmanifoldPair", "Torus", "circle", "equator",
    "project_to_manifold", "second_form_eval", "sphere",
]
