"""Gauss-Newton reconstruction of the inner boundary from outer Cauchy data.

The unknown is the coefficient vector of ``phi o gamma`` (a trigonometric
polynomial of fixed degree); Jacobian columns are shape differentials of
the Neumann trace along the coordinate directions.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError, StagnationError
from .geometry import PerturbationField, ShapeMap, validate_admissible
from .shape import dtn_shape_diff_formula, solve_base, solve_dmu
from .system import AnnulusOperators, AnnulusProblem

log = logging.getLogger(__name__)


@dataclass
class CauchyData:
    """Outer Dirichlet data and measured outer flux on one grid.

    ``g_inner`` is the pulled-back inner data; ``None`` means zero (the
    usual case, where it does not depend on the unknown parametrization).
    """

    outer: object
    grid: object
    g_outer: np.ndarray
    flux: np.ndarray
    g_inner: np.ndarray = None

    def inner_data(self, shape):
        if self.g_inner is None:
            return np.zeros((self.grid.steps + 1, shape.reference.n_nodes))
        return self.g_inner

    def problem(self, shape, clearance=1e-2):
        return AnnulusProblem(self.outer, shape, self.grid, self.g_outer, self.inner_data(shape), clearance)


def resample_trace(values, grid_from, grid_to, n_to):
    """Move a periodic space-time trace to another grid.

    Trigonometric interpolation in space and the time basis in time.
    """
    values = np.asarray(values, dtype=float)
    n_from = values.shape[1]
    spec = np.fft.rfft(values, axis=1)
    keep = min(spec.shape[1], n_to // 2 + 1)
    out_spec = np.zeros((values.shape[0], n_to // 2 + 1), dtype=complex)
    out_spec[:, :keep] = spec[:, :keep]
    if n_from % 2 == 0 and keep == n_from // 2 + 1 and n_to > n_from:
        out_spec[:, keep - 1] *= 0.5
    space = np.fft.irfft(out_spec * (n_to / n_from), n=n_to, axis=1)
    return np.array([grid_from.interpolate(space, t) for t in grid_to.times])


def coordinate_directions(degree):
    """Unit perturbation fields for every free coefficient (no ``sin 0`` terms)."""
    dirs, labels = [], []
    names = ("cos_x", "sin_x", "cos_y", "sin_y")
    for row, name in enumerate(names):
        for k in range(degree + 1):
            if name.startswith("sin") and k == 0:
                continue
            c = np.zeros((4, degree + 1))
            c[row, k] = 1.0
            dirs.append(PerturbationField(c))
            labels.append(f"{name}[{k}]")
    return dirs, labels


def _pad(coeffs, degree):
    out = np.zeros((4, degree + 1))
    d = min(coeffs.shape[1], degree + 1)
    out[:, :d] = coeffs[:, :d]
    return out


def boundary_distance(curve_a, curve_b, samples=2048):
    """Symmetric max distance between two closed curves (dense sampling)."""
    pa, pb = curve_a.sample(samples), curve_b.sample(samples)
    d = np.sqrt(np.sum((pa[:, None, :] - pb[None, :, :]) ** 2, axis=-1))
    return float(max(np.max(np.min(d, axis=1)), np.max(np.min(d, axis=0))))


@dataclass
class Reconstruction:
    shape: ShapeMap
    coefficients: np.ndarray
    residuals: list
    steps: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    @property
    def iterations(self):
        return len(self.residuals) - 1


def _residual(data, shape, clearance):
    ops = AnnulusOperators(data.outer, shape, data.grid)
    return ops.dtn(ops.solve(data.g_outer, data.inner_data(shape))) - data.flux


def reconstruct(data, initial, degree=4, max_iter=20, reg=1e-4, tol=1e-10,
                max_halvings=8, clearance=1e-2, step_tol=1e-10, stall_tol=1e-4):
    """Gauss-Newton with a Tikhonov penalty on the step.

    Minimizes ``||Lambda[phi] - flux||^2`` over trigonometric shape maps of
    the given degree.  The step solves ``(J^T J + lam I) d = -J^T r`` with
    ``lam = reg * ||r_0||^2``; candidates that are inadmissible or do not
    decrease the residual are halved.  Iteration stops once the relative
    decrease falls below ``stall_tol`` (model-error floor reached).  Raises
    StagnationError when no halving succeeds before convergence.
    """
    shape = ShapeMap(initial.reference, _pad(initial.coeffs, degree))
    validate_admissible(shape, data.outer, clearance).raise_if_rejected()
    dirs, _ = coordinate_directions(degree)
    mask = np.ones((4, degree + 1), dtype=bool)
    mask[1, 0] = mask[3, 0] = False

    r = _residual(data, shape, clearance)
    res = [float(np.linalg.norm(r))]
    lam = reg * res[0] ** 2
    result = Reconstruction(shape, shape.coeffs[mask], res)
    log.info("iteration 0: residual %.6e", res[0])
    for it in range(1, max_iter + 1):
        if res[-1] <= tol * max(res[0], 1e-300):
            result.converged, result.reason = True, "residual below tolerance"
            break
        base = solve_base(data.problem(shape, clearance))
        J = np.stack([dtn_shape_diff_formula(base, h, solve_dmu(base, h)).ravel() for h in dirs], axis=1)
        step = np.linalg.solve(J.T @ J + lam * np.eye(J.shape[1]), -J.T @ r.ravel())
        t = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            c = shape.coeffs.copy()
            c[mask] += t * step
            cand = ShapeMap(shape.reference, c)
            if validate_admissible(cand, data.outer, clearance):
                try:
                    r_new = _residual(data, cand, clearance)
                except SolverError:
                    r_new = None
                if r_new is not None and np.linalg.norm(r_new) < res[-1]:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            result.reason = "no decrease after step halving"
            raise StagnationError(f"Gauss-Newton stalled at iteration {it}: {result.reason}", result)
        shape, r = cand, r_new
        res.append(float(np.linalg.norm(r)))
        result.shape, result.coefficients = shape, shape.coeffs[mask]
        result.steps.append(t)
        log.info("iteration %d: residual %.6e (step %.3g)", it, res[-1], t)
        if t * np.linalg.norm(step) <= step_tol:
            result.converged, result.reason = True, "step below tolerance"
            break
        if res[-2] - res[-1] <= stall_tol * res[-2]:
            result.converged, result.reason = True, "residual stationary"
            break
    else:
        if res[-1] <= tol * max(res[0], 1e-300):
            result.converged, result.reason = True, "residual below tolerance"
        else:
            result.reason = "iteration limit reached"
    return result


def synthetic_twin(outer_truth, truth_shape, grid_truth, g_outer_fn, outer_recon, grid_recon,
                   noise=0.0, rng=None):
    """Flux for a true inner shape, computed on its own grid and resampled.

    ``g_outer_fn(t, curve)`` gives the outer Dirichlet data at the curve's
    nodes; inner data are zero.  ``noise`` is a relative level of seeded
    multiplicative Gaussian noise.
    """
    def sample(outer, grid):
        return np.array([g_outer_fn(t, outer) if t > 0 else np.zeros(outer.n_nodes)
                         for t in grid.times])

    n_inner = truth_shape.reference.n_nodes
    prob = AnnulusProblem(outer_truth, truth_shape, grid_truth, sample(outer_truth, grid_truth),
                          np.zeros((grid_truth.steps + 1, n_inner)))
    ops = AnnulusOperators.for_problem(prob)
    flux = ops.dtn(ops.solve(prob.g_outer, prob.g_inner))
    flux = resample_trace(flux, grid_truth, grid_recon, outer_recon.n_nodes)
    if noise:
        rng = rng or np.random.default_rng(0)
        flux = flux * (1.0 + noise * rng.standard_normal(flux.shape))
    return CauchyData(outer_recon, grid_recon, sample(outer_recon, grid_recon), flux)
