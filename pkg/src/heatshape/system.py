"""Boundary-integral system for the Dirichlet problem in a perturbed annulus.

The solution is represented as the sum of a single layer on the outer curve
and a single layer on the mapped inner curve ``phi(dOmega_i)``.  The inner
density is stored on the reference curve, so the inner layer is integrated
with weights ``|(phi o gamma)'|``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ClearanceError
from .geometry import validate_admissible
from .potentials import (CausalBlockOperator, CrossKernels, CurveKernels,
                         DEFAULT_CLEARANCE, TimeGrid, eval_field, near_refinement,
                         _check_clearance)


class DensityPair(NamedTuple):
    outer: np.ndarray
    inner: np.ndarray


@dataclass
class AnnulusProblem:
    """Geometry, time grid and Dirichlet data ``(g_outer, g_inner)``.

    ``g_inner`` lives on the reference inner nodes (pulled back through phi).
    """

    outer: object
    shape: object
    grid: TimeGrid
    g_outer: np.ndarray = None
    g_inner: np.ndarray = None
    clearance: float = 1e-2

    def __post_init__(self):
        validate_admissible(self.shape, self.outer, self.clearance).raise_if_rejected()
        rows = self.grid.steps + 1
        if self.g_outer is None:
            self.g_outer = np.zeros((rows, self.outer.n_nodes))
        if self.g_inner is None:
            self.g_inner = np.zeros((rows, self.shape.reference.n_nodes))
        self.g_outer = np.asarray(self.g_outer, dtype=float)
        self.g_inner = np.asarray(self.g_inner, dtype=float)
        if self.g_outer.shape != (rows, self.outer.n_nodes):
            raise ValueError(f"g_outer must have shape {(rows, self.outer.n_nodes)}")
        if self.g_inner.shape != (rows, self.shape.reference.n_nodes):
            raise ValueError(f"g_inner must have shape {(rows, self.shape.reference.n_nodes)}")
        if np.any(self.g_outer[0] != 0.0) or np.any(self.g_inner[0] != 0.0):
            raise ValueError("boundary data must vanish at t = 0")

    @property
    def inner(self):
        return self.shape.image

    def with_shape(self, shape):
        return AnnulusProblem(self.outer, shape, self.grid, self.g_outer, self.g_inner, self.clearance)

    def with_data(self, g_outer, g_inner):
        return AnnulusProblem(self.outer, self.shape, self.grid, g_outer, g_inner, self.clearance)


class AnnulusOperators:
    """All lag-block tables needed at one shape, built once and reused.

    ``hessian=True`` additionally tabulates second derivatives of the inner
    layer at the outer nodes (needed for shape differentials of the trace).
    """

    def __init__(self, outer, shape, grid, hessian=False):
        self.outer = outer
        self.shape = shape
        self.grid = grid
        inner = shape.image
        self.inner = inner
        # refinement fixed by shape-independent geometry so that nearby shapes
        # share one discretization
        self.k_outer = CurveKernels(outer, grid, near_refinement(outer, grid))
        self.k_inner = CurveKernels(inner, grid, near_refinement(shape.reference, grid))
        self.k_io = CrossKernels(inner, outer.points, grid, hessian=hessian)
        self.k_oi = CrossKernels(outer, inner.points, grid)
        self.V_outer = self.k_outer.scalar_blocks()
        self.V1 = self.k_inner.scalar_blocks()
        self.V2 = self.k_io.single_layer()
        self.V3 = self.k_oi.single_layer()
        self.W_outer = self.k_outer.normal_derivative_blocks()
        self.M = CausalBlockOperator.block([[self.V_outer, self.V2], [self.V3, self.V1]])

    @classmethod
    def for_problem(cls, problem, hessian=False):
        return cls(problem.outer, problem.shape, problem.grid, hessian=hessian)

    @property
    def n_outer(self):
        return self.outer.n_nodes

    def split(self, stacked):
        return DensityPair(stacked[:, :self.n_outer], stacked[:, self.n_outer:])

    def solve(self, g_outer, g_inner, cond_limit=1e12):
        return self.split(self.M.solve(np.hstack([g_outer, g_inner]), cond_limit))

    def apply(self, mu_outer, mu_inner):
        return self.split(self.M.apply(np.hstack([mu_outer, mu_inner])))

    def dtn(self, densities):
        mu_o, mu_i = densities
        inner_part = self.k_io.gradient_along(self.outer.normal)
        return 0.5 * mu_o + self.W_outer.apply(mu_o) + inner_part.apply(mu_i)


def assemble_M(problem):
    """Block operator ``[[V_outer, V2], [V3, V1]]`` at the problem's shape."""
    return AnnulusOperators.for_problem(problem).M


def solve_densities(M, g_outer, g_inner, cond_limit=1e12):
    """Causal solve of ``M (mu_outer, mu_inner) = (g_outer, g_inner)``."""
    g_outer = np.asarray(g_outer, dtype=float)
    g_inner = np.asarray(g_inner, dtype=float)
    if np.any(g_outer[0] != 0.0) or np.any(g_inner[0] != 0.0):
        raise ValueError("boundary data must vanish at t = 0")
    mu = M.solve(np.hstack([g_outer, g_inner]), cond_limit)
    n = g_outer.shape[1]
    return DensityPair(mu[:, :n], mu[:, n:])


def eval_solution(problem, densities, times, points, clearance=DEFAULT_CLEARANCE):
    """Represented solution at space-time targets in the annulus."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_clearance(problem.outer, points, clearance)
    _check_clearance(problem.inner, points, clearance)
    inside = _inside(problem.outer, points) & ~_inside(problem.inner, points)
    if not np.all(inside):
        raise ClearanceError("targets must lie in the open annulus")
    return (eval_field(problem.outer, densities.outer, problem.grid, times, points, clearance=0)
            + eval_field(problem.inner, densities.inner, problem.grid, times, points, clearance=0))


def _inside(curve, points):
    from .geometry import winding_numbers
    return winding_numbers(curve.sample(max(4 * curve.n_nodes, 256)), points) == 1


def dtn_trace(problem, densities, operators=None):
    """Outer normal derivative of the represented solution on the grid."""
    ops = operators or AnnulusOperators.for_problem(problem)
    return ops.dtn(densities)


def solve_problem(problem, hessian=False):
    """Convenience: assemble, solve and return ``(operators, densities)``."""
    ops = AnnulusOperators.for_problem(problem, hessian=hessian)
    return ops, ops.solve(problem.g_outer, problem.g_inner)


def grid_norms(values, grid, curve):
    """Grid max norm and space-time L2 norm of a trace on ``curve``."""
    values = np.asarray(values)
    l2 = np.sqrt(np.sum(values[1:] ** 2 * curve.weights[None, :]) * grid.dt)
    return float(np.max(np.abs(values))), float(l2)
