"""Exception hierarchy shared by all heatshape modules."""


class HeatShapeError(Exception):
    """Base class for every error raised by the package."""


class DomainError(HeatShapeError, ValueError):
    """Argument outside the domain of a kernel or special function."""


class GeometryError(HeatShapeError):
    """Degenerate or invalid curve data."""


class AdmissibilityError(GeometryError):
    def __init__(self, verdict):
        super().__init__(f"shape map not admissible: {verdict.reason} ({verdict.detail})")
        self.verdict = verdict


class ClearanceError(HeatShapeError):
    """Evaluation target too close to a boundary curve."""


class SolverError(HeatShapeError):
    """Singular or ill-conditioned time-step system."""


class StagnationError(HeatShapeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class OracleError(HeatShapeError):
    """A verification oracle could not be evaluated as requested."""


class ScenarioError(HeatShapeError):
    """Malformed or inconsistent scenario file."""
