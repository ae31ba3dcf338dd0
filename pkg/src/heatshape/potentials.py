"""Discrete single-layer heat potentials on closed curves.

Densities live on a uniform time grid ``t_k = k dt`` and on the curve nodes.
They are stored as arrays of shape ``(steps + 1, N)`` whose row 0 (t = 0)
is identically zero.  Two time bases are available:

``"constant"``
    value ``mu[k]`` on the slab ``(t_{k-1}, t_k]``;
``"linear"``
    hat functions centred at ``t_k`` (piecewise-linear interpolation).

Either way the collocated operators are block lower-triangular and
block-Toeplitz in time: ``(A mu)[k] = sum_{l < k} A_l mu[k - l]``.

On-curve blocks use Kress product quadrature for the log-singular part of
time segments starting at ``s = 0``; everything else is smooth and uses the
periodic trapezoid rule.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from . import heatkernel as hk
from .errors import ClearanceError, SolverError

BASES = ("linear", "constant")
DEFAULT_CLEARANCE = 1e-3


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int
    basis: str = "linear"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        if self.basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}")

    @property
    def dt(self):
        return self.horizon / self.steps

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.dt

    def lag_segments(self, lag):
        """Segments ``(a, b, alpha, beta)`` in elapsed time for one lag block."""
        dt = self.dt
        if self.basis == "constant":
            return [(lag * dt, (lag + 1) * dt, 1.0, 0.0)]
        segs = [(lag * dt, (lag + 1) * dt, lag + 1.0, -1.0 / dt)]
        if lag >= 1:
            segs.append(((lag - 1) * dt, lag * dt, 1.0 - lag, 1.0 / dt))
        return segs

    def segments_at(self, t):
        """List of ``(m, segments)`` giving the time weights of basis ``m`` at time ``t``."""
        dt = self.dt
        tiny = 1e-12 * dt
        out = []
        for m in range(1, self.steps + 1):
            lo, mid = (m - 1) * dt, m * dt
            segs = []
            if t > lo + tiny:
                a = max(t - mid, 0.0)
                a = 0.0 if a < tiny else a
                if self.basis == "constant":
                    segs.append((a, t - lo, 1.0, 0.0))
                else:
                    segs.append((a, t - lo, (t - lo) / dt, -1.0 / dt))
            if self.basis == "linear" and t > mid + tiny:
                a = max(t - (m + 1) * dt, 0.0)
                a = 0.0 if a < tiny else a
                segs.append((a, t - mid, ((m + 1) * dt - t) / dt, 1.0 / dt))
            if segs:
                out.append((m, segs))
        return out

    def interpolate(self, values, t):
        """Density value at time ``t`` in the chosen basis."""
        values = np.asarray(values)
        pos = t / self.dt
        if self.basis == "constant":
            k = min(max(int(np.ceil(pos - 1e-12)), 0), self.steps)
            return values[k]
        k = min(int(np.floor(pos)), self.steps - 1)
        w = pos - k
        return (1.0 - w) * values[k] + w * values[k + 1]


class CausalBlockOperator:
    """Lower block-triangular, block-Toeplitz space-time operator.

    ``blocks[l]`` maps source nodes to target nodes for time lag ``l``.
    """

    def __init__(self, blocks):
        self.blocks = np.asarray(blocks, dtype=float)
        if self.blocks.ndim != 3:
            raise ValueError("blocks must have shape (steps, n_target, n_source)")
        self._lu = None

    @property
    def steps(self):
        return self.blocks.shape[0]

    @property
    def shape(self):
        return self.blocks.shape[1:]

    def apply(self, mu):
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (self.steps + 1, self.shape[1]):
            raise ValueError(f"density shape {mu.shape} does not match operator")
        out = np.zeros((self.steps + 1, self.shape[0]))
        for lag, block in enumerate(self.blocks):
            out[lag + 1:] += mu[1:self.steps + 1 - lag] @ block.T
        return out

    __call__ = apply

    def __add__(self, other):
        return CausalBlockOperator(self.blocks + other.blocks)

    def __sub__(self, other):
        return CausalBlockOperator(self.blocks - other.blocks)

    def __mul__(self, scalar):
        return CausalBlockOperator(self.blocks * scalar)

    __rmul__ = __mul__

    @staticmethod
    def block(rows):
        """Assemble a block matrix of operators (2D nested list)."""
        return CausalBlockOperator(np.concatenate(
            [np.concatenate([op.blocks for op in row], axis=2) for row in rows], axis=1))

    def condition_number(self):
        return float(np.linalg.cond(self.blocks[0]))

    def factorize(self, cond_limit=1e12):
        if self._lu is None:
            if self.shape[0] != self.shape[1]:
                raise SolverError("only square operators can be inverted")
            cond = self.condition_number()
            if not cond <= cond_limit:
                raise SolverError(f"lag-0 block ill-conditioned: cond = {cond:.3e} > {cond_limit:.1e}")
            self._lu = scipy.linalg.lu_factor(self.blocks[0])
            self.cond = cond
        return self._lu

    def solve(self, rhs, cond_limit=1e12):
        """Causal time march solving ``A mu = rhs``; ``rhs[0]`` must vanish."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.steps + 1, self.shape[0]):
            raise ValueError(f"right-hand side shape {rhs.shape} does not match operator")
        lu = self.factorize(cond_limit)
        mu = np.zeros_like(rhs)
        for k in range(1, self.steps + 1):
            hist = np.einsum("lij,lj->i", self.blocks[1:k], mu[k - 1:0:-1]) if k > 1 else 0.0
            mu[k] = scipy.linalg.lu_solve(lu, rhs[k] - hist)
        return mu


def kress_weights(n):
    """Product-quadrature weights for ``int ln(4 sin^2((t - s)/2)) f(s) ds``.

    Exact for trigonometric polynomials of degree < n/2; returns ``R[i, j]``.
    """
    half = n // 2
    d = 2.0 * np.pi * np.arange(n) / n
    m = np.arange(1, half)
    r = -(4.0 * np.pi / n) * (np.cos(np.outer(d, m)) @ (1.0 / m)) \
        - (4.0 * np.pi / n**2) * np.cos(half * d)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return r[idx]


def _log_sin(n):
    d = 2.0 * np.pi * ((np.arange(n)[:, None] - np.arange(n)[None, :]) % n) / n
    with np.errstate(divide="ignore"):
        out = np.log(4.0 * np.sin(d / 2.0) ** 2)
    np.fill_diagonal(out, 0.0)
    return out


class _BreakpointE1:
    """Cache of ``E1(c / (j dt))`` shared by neighbouring lag segments."""

    def __init__(self, c, dt):
        self.c = c
        self.dt = dt
        self._cache = {}

    def __call__(self, s):
        j = int(round(s / self.dt))
        if j not in self._cache:
            with np.errstate(divide="ignore", invalid="ignore"):
                self._cache[j] = hk._e1(self.c / s) if s > 0.0 else np.zeros_like(self.c)
        return self._cache[j]

    def diff(self, a, b):
        with np.errstate(invalid="ignore"):
            return self(b) - self(a)


def _seg_scalar(c, e1, a, b, al, be):
    """Scalar segment integral using cached E1 values (limit at c = 0, a > 0)."""
    de1 = e1.diff(a, b)
    with np.errstate(invalid="ignore", over="ignore", under="ignore"):
        gb = b * np.exp(-np.minimum(c / b, hk.UNDERFLOW))
        gb = np.where(c / b > hk.UNDERFLOW, 0.0, gb)
        if a > 0.0:
            ga = a * np.exp(-np.minimum(c / a, hk.UNDERFLOW))
            ga = np.where(c / a > hk.UNDERFLOW, 0.0, ga)
        else:
            ga = 0.0
        out = (al * de1 + be * ((gb - ga) - c * de1)) / (4.0 * np.pi)
    if a > 0.0:
        out = np.where(c == 0.0, (al * np.log(b / a) + be * (b - a)) / (4.0 * np.pi), out)
    return out


def _seg_grad(c, e1, a, b, al, be):
    de1 = e1.diff(a, b)
    if a > 0.0:
        de1 = np.where(c == 0.0, np.log(b / a), de1)
    return -(al * hk._gauss_diff_over_c(c, a, b) + be * de1) / (8.0 * np.pi)


def trig_interpolation_matrix(n, q):
    """Matrix mapping values at ``n`` equispaced nodes to ``q * n`` nodes.

    Band-limited interpolation with the Nyquist mode split symmetrically, so
    the result is real and fine node ``q * i`` reproduces coarse node ``i``.
    """
    if q == 1:
        return np.eye(n)
    spec = np.fft.fft(np.eye(n), axis=0)
    fine = np.zeros((q * n, n), dtype=complex)
    half = n // 2
    fine[:half] = spec[:half]
    fine[-half + 1:] = spec[half + 1:]
    fine[half] = 0.5 * spec[half]
    fine[-half] = 0.5 * spec[half]
    return np.real(np.fft.ifft(fine, axis=0)) * q


def near_refinement(curve, grid, ratio=4.0, cap=32):
    """Source refinement factor for segments starting at zero elapsed time.

    Their smooth part varies on the length scale ``sqrt(dt)``; the factor is
    the smallest power of two (at least 2) with ``dt / h_arc^2 >= ratio``.
    """
    h_arc = np.max(curve.speed) * curve.h
    q = 2
    while q < cap and grid.dt / (h_arc / q) ** 2 < ratio:
        q *= 2
    return q


class CurveKernels:
    """Lag-block kernel tables for sources and targets on the same curve.

    Segments starting at zero elapsed time are log-singular; they use a
    log-exact product quadrature on a refined source grid contracted back to
    the nodes by trigonometric interpolation.  ``scalar_blocks(weight)`` gives
    the single-layer trace and ``gradient_blocks`` operators with kernel
    ``(x_i - y_j) . (u_i - v_j)`` times the gradient factor.
    """

    def __init__(self, curve, grid, refine=None):
        self.curve = curve
        self.grid = grid
        n = curve.n_nodes
        q = near_refinement(curve, grid) if refine is None else int(refine)
        self.refine = q
        self.sep = curve.points[:, None, :] - curve.points[None, :, :]
        c = np.sum(self.sep**2, axis=-1) / 4.0
        e1 = _BreakpointE1(c, grid.dt)
        M = grid.steps
        self._scalar = np.zeros((M, n, n))
        self._grad = np.zeros((M, 2, n, n))
        self._near_alpha = np.zeros(M)
        self._near_grad = []
        self._interp = trig_interpolation_matrix(n, q)
        near = {}
        for lag in range(M):
            for a, b, al, be in grid.lag_segments(lag):
                if a == 0.0:
                    near.setdefault(b, []).append((lag, al, be))
                    self._near_alpha[lag] += al
                    continue
                with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                    self._scalar[lag] += curve.h * _seg_scalar(c, e1, a, b, al, be)
                    g = curve.h * _seg_grad(c, e1, a, b, al, be)
                self._grad[lag] += g[None] * np.moveaxis(self.sep, -1, 0)
        if near:
            self._add_near(near, q)

    def _add_near(self, near, q):
        cv = self.curve
        n = cv.n_nodes
        fine = cv.with_nodes(q * n)
        rows = q * np.arange(n)
        sep = cv.points[:, None, :] - fine.points[None, :, :]
        c = np.sum(sep**2, axis=-1) / 4.0
        R = kress_weights(q * n)[rows]
        Lg = _log_sin(q * n)[rows]
        hf = fine.h
        diag = (np.arange(n), rows)
        log_speed = np.log(cv.speed)
        P = trig_interpolation_matrix(n, q)
        sep_k = np.moveaxis(sep, -1, 0)
        for b, terms in near.items():
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                e1b = hk._e1(c / b)
                gb = b * np.exp(-c / b)
                gauss = np.exp(-c / b) / c
            for lag, al, be in terms:
                p = (al - be * c) / (4.0 * np.pi)
                with np.errstate(invalid="ignore"):
                    val = (al * e1b + be * (gb - c * e1b)) / (4.0 * np.pi)
                C = val + p * Lg
                C[diag] = al / (4.0 * np.pi) * (-hk.EULER_GAMMA + np.log(4.0 * b) - 2.0 * log_speed) \
                    + be * b / (4.0 * np.pi)
                self._scalar[lag] += (-p * R + hf * C) @ P
                with np.errstate(invalid="ignore"):
                    g = -hf * (al * gauss + be * e1b) / (8.0 * np.pi) + be / (8.0 * np.pi) * (R - hf * Lg)
                g[diag] = 0.0
                self._near_grad.append((lag, g[None] * sep_k))

    def scalar_blocks(self, weight=None):
        w = self.curve.speed if weight is None else weight
        return CausalBlockOperator(self._scalar * w[None, None, :])

    def gradient_blocks(self, target_vec=None, source_vec=None, diag_limit=None, weight=None):
        """Operator with kernel ``(x_i - y_j) . (u_i - v_j)`` times the gradient factor.

        ``diag_limit`` is ``lim (x - y) . (u - v) / |x - y|^2`` at each node.
        """
        w = self.curve.speed if weight is None else weight
        n = self.curve.n_nodes
        P = self._interp
        blocks = np.zeros(self._scalar.shape)
        for k in range(2):
            if target_vec is not None:
                blocks += self._grad[:, k] * target_vec[None, :, k, None]
            if source_vec is not None:
                blocks -= self._grad[:, k] * source_vec[None, None, :, k]
        # near-field tables live on the refined source grid; source vectors
        # are interpolated there (exact for trigonometric fields)
        for lag, G in self._near_grad:
            fine = np.zeros(G.shape[1:])
            for k in range(2):
                if target_vec is not None:
                    fine += G[k] * target_vec[:, k, None]
                if source_vec is not None:
                    fine -= G[k] * (P @ source_vec[:, k])[None, :]
            blocks[lag] += fine @ P
        blocks *= w[None, None, :]
        if diag_limit is not None:
            idx = np.arange(n)
            blocks[:, idx, idx] -= np.outer(self._near_alpha, diag_limit * w) / (self.refine * n)
        return CausalBlockOperator(blocks)

    def normal_limit(self):
        """``lim (x - y) . nu(x) / |x - y|^2 = -gamma'' . nu / (2 |gamma'|^2)``."""
        cv = self.curve
        return -np.sum(cv.acceleration * cv.normal, axis=-1) / (2.0 * cv.speed**2)

    def normal_derivative_blocks(self, weight=None):
        return self.gradient_blocks(self.curve.normal, None, self.normal_limit(), weight)


def assemble_trace_V(curve, grid):
    """Single-layer trace operator on ``curve``."""
    return CurveKernels(curve, grid).scalar_blocks()


def assemble_Wstar(curve, grid, kernels=None):
    """Normal-derivative operator ``W*`` (direct value, without the jump term)."""
    kernels = kernels or CurveKernels(curve, grid)
    return kernels.normal_derivative_blocks()


class CrossKernels:
    """Smooth lag-block kernel tables from a source curve to off-curve targets.

    Trapezoid factor ``2 pi / N`` is included; per-node source weights are
    applied by the operator builders.
    """

    def __init__(self, source, targets, grid, hessian=False):
        self.source = source
        self.grid = grid
        self.targets = np.asarray(targets, dtype=float)
        self.sep = self.targets[:, None, :] - source.points[None, :, :]
        c = np.sum(self.sep**2, axis=-1) / 4.0
        if np.any(c == 0.0):
            raise ClearanceError("target coincides with a source node")
        e1 = _BreakpointE1(c, grid.dt)
        h = source.h
        M = grid.steps
        shape = (M,) + c.shape
        self.scalar = np.zeros(shape)
        self.grad = np.zeros(shape)
        self.hess_xx = np.zeros(shape) if hessian else None
        self.hess_id = np.zeros(shape) if hessian else None
        for lag in range(M):
            for a, b, al, be in grid.lag_segments(lag):
                self.scalar[lag] += h * _seg_scalar(c, e1, a, b, al, be)
                self.grad[lag] += h * _seg_grad(c, e1, a, b, al, be)
                if hessian:
                    fxx, fid = hk.segment_hessian_factors(c, a, b, al, be)
                    self.hess_xx[lag] += h * fxx
                    self.hess_id[lag] += h * fid

    def single_layer(self, weight=None):
        w = self.source.speed if weight is None else weight
        return CausalBlockOperator(self.scalar * w[None, None, :])

    def gradient(self, xv, weight=None):
        """Operator with kernel ``(x - y) . v`` times the gradient factor."""
        w = self.source.speed if weight is None else weight
        return CausalBlockOperator(self.grad * (xv * w[None, :])[None])

    def gradient_along(self, vectors, weight=None):
        """``v_i . grad`` with one vector per target."""
        return self.gradient(np.einsum("ijk,ik->ij", self.sep, vectors), weight)

    def gradient_components(self, weight=None):
        return [self.gradient(self.sep[..., d], weight) for d in range(2)]

    def hessian(self, u_target, v_source, weight=None):
        """Operator with kernel ``u_i . D^2 S . v_j``."""
        if self.hess_xx is None:
            raise ValueError("kernels were built without Hessian tables")
        w = self.source.speed if weight is None else weight
        xu = np.einsum("ijk,ik->ij", self.sep, u_target)
        xv = np.einsum("ijk,jk->ij", self.sep, v_source)
        uv = u_target @ v_source.T
        return CausalBlockOperator((self.hess_xx * (xu * xv)[None] + self.hess_id * uv[None])
                                   * w[None, None, :])


def _check_clearance(curve, points, clearance):
    poly = curve.sample(max(4 * curve.n_nodes, 256))
    d = points[:, None, :] - poly[None, :, :]
    dist = np.sqrt(np.min(np.sum(d * d, axis=-1), axis=1))
    need = clearance * curve.diameter
    if np.any(dist < need):
        raise ClearanceError(f"{int(np.sum(dist < need))} target(s) closer than {need:.3g} to the curve")


class _PointCache:
    """``E1(c/s)`` and ``e^{-c/s}`` at elapsed-time breakpoints, computed once each."""

    def __init__(self, c):
        self.c = c
        self._e1 = {}
        self._g = {}

    def _key(self, s):
        return round(s, 12)

    def e1(self, s):
        k = self._key(s)
        if k not in self._e1:
            self._e1[k] = np.zeros_like(self.c) if s == 0.0 else hk._e1(self.c / s)
        return self._e1[k]

    def gauss(self, s):
        k = self._key(s)
        if k not in self._g:
            with np.errstate(under="ignore"):
                self._g[k] = np.zeros_like(self.c) if s == 0.0 else \
                    np.where(self.c / s > hk.UNDERFLOW, 0.0, np.exp(-np.minimum(self.c / s, hk.UNDERFLOW)))
        return self._g[k]

    def scalar(self, a, b, al, be):
        de1 = self.e1(b) - self.e1(a)
        dg = b * self.gauss(b) - (a * self.gauss(a) if a > 0.0 else 0.0)
        return (al * de1 + be * (dg - self.c * de1)) / (4.0 * np.pi)

    def grad(self, a, b, al, be):
        de1 = self.e1(b) - self.e1(a)
        return -(al * (self.gauss(b) - self.gauss(a)) / self.c + be * de1) / (8.0 * np.pi)


def _eval(curve, mu, grid, times, points, weight, clearance, kind):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    times = np.broadcast_to(times, (points.shape[0],))
    mu = np.asarray(mu, dtype=float)
    if np.any(mu[0] != 0.0):
        raise ValueError("density must vanish at t = 0")
    if clearance:
        _check_clearance(curve, points, clearance)
    w = (curve.speed if weight is None else weight) * curve.h
    out = np.zeros((points.shape[0],) if kind == "value" else (points.shape[0], 2))
    for t in np.unique(times):
        sel = times == t
        sep = points[sel][:, None, :] - curve.points[None, :, :]
        c = np.sum(sep**2, axis=-1) / 4.0
        if np.any(c == 0.0):
            raise ClearanceError("target coincides with a source node")
        cache = _PointCache(c)
        seg = cache.scalar if kind == "value" else cache.grad
        acc = np.zeros(c.shape)
        for m, segs in grid.segments_at(t):
            f = 0.0
            for a, b, al, be in segs:
                f = f + seg(a, b, al, be)
            acc += f * mu[m][None, :]
        if kind == "value":
            out[sel] = acc @ w
        else:
            out[sel] = np.einsum("tj,tjk->tk", acc * w[None, :], sep)
    return out


def eval_field(curve, mu, grid, times, points, weight=None, clearance=DEFAULT_CLEARANCE):
    """Single-layer potential at off-curve space-time targets.

    ``weight`` replaces the arc-length density ``|gamma'|`` (used for
    pulled-back densities).  ``clearance`` is relative to the curve diameter.
    """
    return _eval(curve, mu, grid, times, points, weight, clearance, "value")


def eval_field_grad(curve, mu, grid, times, points, weight=None, clearance=DEFAULT_CLEARANCE):
    """Spatial gradient of :func:`eval_field`; returns shape ``(n_targets, 2)``."""
    return _eval(curve, mu, grid, times, points, weight, clearance, "grad")
