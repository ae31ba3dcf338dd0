"""Shape differentials of the layer operators, the densities and the Neumann trace.

A direction ``h`` is a PerturbationField sampled on the reference inner nodes
(``H = h o gamma``); the base image is ``P = phi0 o gamma``.  All operators
below are exact derivatives of the discrete operators built in
:mod:`heatshape.system`, so central differences in ``phi`` reproduce them up
to ``O(eps^2)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import HeatShapeError
from .geometry import surface_jacobian_diff
from .system import AnnulusOperators, DensityPair


@dataclass
class BaseSolve:
    """Operators and densities of the unperturbed problem."""

    problem: object
    operators: AnnulusOperators
    densities: DensityPair

    @property
    def dtn(self):
        return self.operators.dtn(self.densities)


def solve_base(problem, cond_limit=1e12):
    """Assemble with Hessian tables and solve the base problem."""
    ops = AnnulusOperators.for_problem(problem, hessian=True)
    return BaseSolve(problem, ops, ops.solve(problem.g_outer, problem.g_inner, cond_limit))


@dataclass
class ShapeDirectionalData:
    """Base point, direction, base densities, derived right side and densities."""

    shape: object
    direction: object
    base: DensityPair
    rhs: DensityPair
    densities: DensityPair


def _direction_samples(shape, h):
    th = shape.reference.theta
    return h.values(th, 0), h.values(th, 1)


def jacobian_weight_diff(shape, h):
    """Derivative of the inner quadrature weight ``|P'|``: ``P' . H' / |P'|``."""
    return surface_jacobian_diff(shape, h) * shape.reference.speed


def _ops(problem_or_ops, hessian=False):
    if isinstance(problem_or_ops, AnnulusOperators):
        return problem_or_ops
    return AnnulusOperators.for_problem(problem_or_ops, hessian=hessian)


def dphi_V1_operator(ops, h):
    """Derivative of the inner-curve trace ``V1`` along ``h`` as a block operator."""
    img = ops.inner
    H, dH = _direction_samples(ops.shape, h)
    lim = np.sum(img.velocity * dH, axis=-1) / img.speed**2
    grad = ops.k_inner.gradient_blocks(H, H, lim, img.speed)
    return grad + ops.k_inner.scalar_blocks(jacobian_weight_diff(ops.shape, h))


def dphi_V2_operator(ops, h):
    """Derivative of the inner-to-outer trace ``V2`` along ``h``."""
    img = ops.inner
    H, _ = _direction_samples(ops.shape, h)
    xv = -np.einsum("ijk,jk->ij", ops.k_io.sep, H)
    return (ops.k_io.gradient(xv, img.speed)
            + ops.k_io.single_layer(jacobian_weight_diff(ops.shape, h)))


def dphi_V3_operator(ops, h):
    """Derivative of the outer-to-inner trace ``V3`` along ``h``."""
    H, _ = _direction_samples(ops.shape, h)
    return ops.k_oi.gradient_along(H, ops.outer.speed)


def dphi_V1(problem, mu_inner, h):
    return dphi_V1_operator(_ops(problem), h).apply(mu_inner)


def dphi_V2(problem, mu_inner, h):
    return dphi_V2_operator(_ops(problem), h).apply(mu_inner)


def dphi_V3(problem, mu_outer, h):
    return dphi_V3_operator(_ops(problem), h).apply(mu_outer)


def rhs_tilde(ops, densities, h):
    """Right side ``(-dV2 mu_i, -dV3 mu_o - dV1 mu_i)`` of the perturbed-density system."""
    mu_o, mu_i = densities
    g_o = -dphi_V2_operator(ops, h).apply(mu_i)
    g_i = -dphi_V3_operator(ops, h).apply(mu_o) - dphi_V1_operator(ops, h).apply(mu_i)
    return DensityPair(g_o, g_i)


def solve_dmu(base, h, cond_limit=1e12):
    """Directional derivative of the densities; reuses the base factorization."""
    rhs = rhs_tilde(base.operators, base.densities, h)
    mu = base.operators.solve(rhs.outer, rhs.inner, cond_limit)
    return ShapeDirectionalData(base.problem.shape, h, base.densities, rhs, mu)


def dtn_shape_diff_formula(base, h, data=None):
    """Shape differential of the outer Neumann trace by differentiating the representation.

    Sum of the trace of the perturbed densities and the two explicit terms
    from moving the inner layer: the weight change ``P' . H' / |P'|`` and the
    kernel shift ``-nu . D^2 S H``.
    """
    ops = base.operators
    if ops.k_io.hess_xx is None:
        raise HeatShapeError("base operators were built without Hessian tables")
    data = data or solve_dmu(base, h)
    mu_o1, mu_i1 = data.densities
    mu_i0 = base.densities.inner
    nu = ops.outer.normal
    H, _ = _direction_samples(ops.shape, h)
    out = ops.dtn((mu_o1, mu_i1))
    out += ops.k_io.gradient_along(nu, jacobian_weight_diff(ops.shape, h)).apply(mu_i0)
    out -= ops.k_io.hessian(nu, H, ops.inner.speed).apply(mu_i0)
    return out


def periodic_derivative(values):
    """Spectral ``d/dtheta`` of samples along the last axis (Nyquist mode dropped)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    k = np.fft.fftfreq(n, 1.0 / n)
    k[n // 2] = 0.0
    return np.real(np.fft.ifft(1j * k * np.fft.fft(values, axis=-1), axis=-1))


def inner_boundary_gradient(base):
    """Gradient of the base solution on the inner curve, limit from the annulus side.

    Normal part from the jump relation ``-mu/2 + W* mu`` of the inner layer plus
    the outer layer's gradient; tangential part from the outer layer's gradient
    and the arclength derivative of the inner trace.  Shape ``(M + 1, N_i, 2)``.
    """
    ops = base.operators
    mu_o, mu_i = base.densities
    img = ops.inner
    gx, gy = ops.k_oi.gradient_components(ops.outer.speed)
    outer_grad = np.stack([gx.apply(mu_o), gy.apply(mu_o)], axis=-1)
    w_inner = ops.k_inner.normal_derivative_blocks()
    d_nu = np.sum(outer_grad * img.normal, axis=-1) - 0.5 * mu_i + w_inner.apply(mu_i)
    d_tau = np.sum(outer_grad * img.tangent, axis=-1) + periodic_derivative(ops.V1.apply(mu_i)) / img.speed
    return d_nu[..., None] * img.normal + d_tau[..., None] * img.tangent


def bvp_inner_data(base, h):
    """Inner Dirichlet data ``-H . grad u`` of the auxiliary problem."""
    H, _ = _direction_samples(base.operators.shape, h)
    return -np.einsum("kjd,jd->kj", inner_boundary_gradient(base), H)


def cky_inner_data(base, h):
    """Normal-component-only data ``-(H . nu) du/dnu``; requires zero inner data."""
    if np.any(base.problem.g_inner != 0.0):
        raise HeatShapeError("normal-only inner data requires g_inner = 0")
    img = base.operators.inner
    H, _ = _direction_samples(base.operators.shape, h)
    grad = inner_boundary_gradient(base)
    d_nu = np.sum(grad * img.normal, axis=-1)
    return -np.sum(H * img.normal, axis=-1)[None, :] * d_nu


def dtn_shape_diff_bvp(base, h, inner_data=None):
    """Shape differential of the Neumann trace through the auxiliary boundary value problem.

    Solves the annulus problem with zero outer data and inner data
    ``-H . grad u`` (or the supplied ``inner_data``) and returns its trace.
    """
    ops = base.operators
    g_i = bvp_inner_data(base, h) if inner_data is None else inner_data
    g_o = np.zeros((ops.grid.steps + 1, ops.n_outer))
    return ops.dtn(ops.solve(g_o, g_i))
