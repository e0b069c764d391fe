"""Exception hierarchy shared across modules."""

from typing import Any, Optional


class SplitmapError(Exception):
    """Base error for all solver and diagnostic failures."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> dict:
        """Machine-readable form used by the CLI."""
        return {
            "error": type(self).__name__,
            "message": self.message,
            "context": {k: _plain(v) for k, v in self.context.items()},
        }


def _plain(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


class ConfigError(SplitmapError):
    """Scenario configuration is invalid."""

    def __init__(self, message: str, field: Optional[str] = None, **context: Any):
        super().__init__(message, field=field, **context)
        self.field = field


class GridError(SplitmapError):
    """Grid parameters do not describe a valid split grid."""
    pass


class OutsideTubularNeighborhood(SplitmapError):
    """Point is too far from the manifold for the nearest-point projection."""
    pass


class ProjectionFailure(SplitmapError):
    """A filled or updated field left the tubular neighborhood of its target."""
    pass


class BallExceedsDomain(SplitmapError):
    """Requested ball is not contained in the computational box."""
    pass


class CompatibilityError(SplitmapError):
    """Boundary data violate the matching condition at the interface edge."""
    pass


class NotAdmissible(SplitmapError):
    """Field violates target, trace or matching constraints."""
    pass
