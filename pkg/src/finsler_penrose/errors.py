"""Exception hierarchy shared by all modules."""

import numpy as np


class GeometryToolkitError(Exception):
    """Base class for every error raised by the package."""


class DomainError(GeometryToolkitError, ValueError):
    """A point or vector lies outside the domain where L is smooth and defined."""


class ChartExitError(DomainError):
    """A point left the coordinate chart of the model."""


class DegeneracyError(GeometryToolkitError):
    """A bilinear form that must be nondegenerate is numerically degenerate."""

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = None if spectrum is None else np.asarray(spectrum, dtype=float)


class UnsupportedOrderError(GeometryToolkitError, ValueError):
    pass


class FrameError(GeometryToolkitError):
    """An orthonormal frame could not be built."""


class GeometryError(GeometryToolkitError):
    """A geometric construction gave an unexpected result (e.g. wrong number of null normals)."""


class SpanError(GeometryToolkitError, ValueError):
    """A requested parameter window is not covered by the computed path."""


class InputError(GeometryToolkitError, ValueError):
    """User supplied data violates a precondition."""


class ScenarioError(GeometryToolkitError, ValueError):
    """Scenario file could not be parsed or validated."""

    def __init__(self, message, line=None, path=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if path:
            loc.append(f"at {path}")
        super().__init__(message + (f" ({', '.join(loc)})" if loc else ""))
        self.line = line
        self.path = path
