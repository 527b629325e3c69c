"""Exception hierarchy shared by all subsystems."""


class VemError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(VemError):
    """Degenerate or invalid polygon geometry."""


class MeshError(VemError):
    """Mesh fails a structural invariant (tiling, orientation, indices)."""


class MeshParseError(MeshError):
    """Malformed mesh file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParameterError(VemError, ValueError):
    """Out-of-range generator or solver parameter."""


class ElementError(VemError):
    """Local element computation failed for a specific cell."""

    def __init__(self, message, cell=None):
        self.cell = cell
        if cell is not None:
            message = f"cell {cell}: {message}"
        super().__init__(message)


class MatrixError(VemError):
    """Matrix does not have the structure the solver needs (e.g. B not SPD)."""


class ConvergenceError(VemError):
    """Iterative eigensolver failed to reach the requested residual."""

    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class ConsistencyError(VemError):
    """Shifted spectrum violates lambda >= 1."""


class FitError(VemError):
    """Convergence-order fit is ill-posed for the given sequence."""


class ConfigError(VemError, ValueError):
    """Invalid study or run configuration."""


class FieldError(VemError):
    """Derived field is undefined for the requested mode (e.g. omega = 0)."""
