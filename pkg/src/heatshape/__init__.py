"""Shape sensitivity of the heat-equation Dirichlet-to-Neumann map on perturbed annuli."""

from .errors import (AdmissibilityError, ClearanceError, DomainError, GeometryError,
                     HeatShapeError, OracleError, ScenarioError, SolverError, StagnationError)
from .geometry import ClosedCurve, PerturbationField, ShapeMap, validate_admissible
from .potentials import TimeGrid

__all__ = [
    "AdmissibilityError", "ClearanceError", "DomainError", "GeometryError", "HeatShapeError",
    "OracleError", "ScenarioError", "SolverError", "StagnationError",
    "ClosedCurve", "PerturbationField", "ShapeMap", "validate_admissible", "TimeGrid",
]
