"""Independent oracles: manufactured caloric fields, finite differences, convergence.

Manufactured fields are built from point sources placed inside the hole,
``u*(t, x) = sum_m int_0^t S_2(t - tau, x - z_m) a_m(tau) dtau``, with
polynomial profiles ``a_m`` vanishing to second order at ``t = 0``.  They are
evaluated from closed-form time moments only, never through the solver.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import heatkernel as hk
from .errors import ClearanceError, GeometryError, OracleError
from .geometry import validate_admissible, winding_numbers


@dataclass
class ManufacturedSolution:
    """Point sources ``z_m`` with profiles ``a_m(t) = sum_q coeffs[m, q] t^q``.

    Coefficients of ``t^0`` and ``t^1`` must be zero.
    """

    sources: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.sources = np.atleast_2d(np.asarray(self.sources, dtype=float))
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if self.coeffs.shape[0] != self.sources.shape[0]:
            raise ValueError("one coefficient row per source")
        if self.coeffs.shape[1] > 2 and np.any(self.coeffs[:, :2] != 0.0):
            raise ValueError("profiles must vanish with their derivative at t = 0")
        if self.coeffs.shape[1] <= 2 and np.any(self.coeffs != 0.0):
            raise ValueError("profiles must vanish with their derivative at t = 0")

    @classmethod
    def default(cls, shape):
        """Two sources inside the image of ``shape`` with ``t^2`` / ``t^2 (1 + t)`` profiles."""
        img = shape.image
        centre = np.mean(img.points, axis=0)
        r = 0.3 * np.min(np.linalg.norm(img.points - centre, axis=1))
        sources = [centre + [0.5 * r, 0.2 * r], centre + [-0.4 * r, -0.5 * r]]
        return cls(np.array(sources), np.array([[0, 0, 1.0, 0.0], [0, 0, 0.6, 0.8]]))

    def check(self, shape, clearance=1e-2):
        img = shape.image
        poly = img.sample(max(4 * img.n_nodes, 256))
        if np.any(winding_numbers(poly, self.sources) != 1):
            raise GeometryError("manufactured sources must lie inside the hole")
        d = self.sources[:, None, :] - poly[None, :, :]
        if np.sqrt(np.min(np.sum(d * d, axis=-1))) < clearance * img.diameter:
            raise ClearanceError("manufactured source too close to the inner curve")

    def _expansion(self, t):
        """Weights ``w[m, k]`` such that ``u = sum_{m,k} w[m, k] * moment_k``."""
        q_max = self.coeffs.shape[1] - 1
        w = np.zeros((self.sources.shape[0], q_max + 1))
        for q in range(q_max + 1):
            for k in range(q + 1):
                w[:, k] += self.coeffs[:, q] * math.comb(q, k) * t ** (q - k) * (-1.0) ** k
        return w

    def value(self, t, points):
        points = np.atleast_2d(points)
        if t <= 0.0:
            return np.zeros(points.shape[0])
        sep = points[:, None, :] - self.sources[None, :, :]
        c = np.sum(sep**2, axis=-1) / 4.0
        w = self._expansion(t)
        out = np.zeros(points.shape[0])
        for k in range(w.shape[1]):
            out += hk.source_moment(c, t, k) @ w[:, k]
        return out

    def gradient(self, t, points):
        points = np.atleast_2d(points)
        if t <= 0.0:
            return np.zeros(points.shape)
        sep = points[:, None, :] - self.sources[None, :, :]
        c = np.sum(sep**2, axis=-1) / 4.0
        w = self._expansion(t)
        g = np.zeros(c.shape)
        for k in range(w.shape[1]):
            g += hk.source_moment_grad_factor(c, t, k) * w[None, :, k]
        return np.einsum("pm,pmk->pk", g, sep)

    def value_by_quadrature(self, t, point):
        """Adaptive time quadrature of the defining integral (oracle)."""
        point = np.asarray(point, dtype=float)
        total = 0.0
        for z, coef in zip(self.sources, self.coeffs):
            r2 = float(np.sum((point - z) ** 2))

            def integrand(s):
                a = np.polyval(coef[::-1], t - s)
                return hk.heat_kernel(2, s, np.array([np.sqrt(r2), 0.0])) * a

            total += quad(integrand, 0.0, t, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        return total


@dataclass
class ManufacturedData:
    g_outer: np.ndarray
    g_inner: np.ndarray
    dtn: np.ndarray
    inner_gradient: np.ndarray
    solution: ManufacturedSolution = field(repr=False)

    def interior(self, t, points):
        return self.solution.value(t, points)


def manufactured_data(ms, outer, shape, grid, clearance=1e-2):
    """Boundary data, exact outer normal derivative and exact inner gradient."""
    ms.check(shape, clearance)
    inner = shape.image
    rows = grid.steps + 1
    g_o = np.zeros((rows, outer.n_nodes))
    g_i = np.zeros((rows, inner.n_nodes))
    dtn = np.zeros((rows, outer.n_nodes))
    grad_i = np.zeros((rows, inner.n_nodes, 2))
    for k, t in enumerate(grid.times):
        if k == 0:
            continue
        g_o[k] = ms.value(t, outer.points)
        g_i[k] = ms.value(t, inner.points)
        dtn[k] = np.sum(ms.gradient(t, outer.points) * outer.normal, axis=-1)
        grad_i[k] = ms.gradient(t, inner.points)
    return ManufacturedData(g_o, g_i, dtn, grad_i, ms)


@dataclass
class FiniteDifference:
    eps: tuple
    derivatives: list
    errors: list = None
    ratio: float = None
    slope: float = None


def fd_directional(fn, shape, h, eps=(1e-3, 5e-4), outer=None, exact=None, clearance=1e-2):
    """Central differences of ``fn`` along ``h`` at two step sizes.

    ``fn`` maps a ShapeMap to an array.  With ``exact`` given, errors against it
    are returned together with their ratio and the observed order; if both
    errors are at round-off level (linear maps) the ratio is left unset.
    """
    derivs = []
    for e in eps:
        plus, minus = shape.perturbed(h, e), shape.perturbed(h, -e)
        if outer is not None:
            for cand in (plus, minus):
                verdict = validate_admissible(cand, outer, clearance)
                if not verdict:
                    raise OracleError(f"perturbed map inadmissible ({verdict.reason}); use a smaller step")
        derivs.append((np.asarray(fn(plus)) - np.asarray(fn(minus))) / (2.0 * e))
    result = FiniteDifference(tuple(eps), derivs)
    if exact is not None:
        exact = np.asarray(exact)
        scale = max(float(np.max(np.abs(exact))), 1e-300)
        errs = [float(np.max(np.abs(d - exact))) for d in derivs]
        result.errors = errs
        if min(errs) > 1e-11 * scale:
            result.ratio = errs[0] / errs[1]
            result.slope = math.log(result.ratio) / math.log(eps[0] / eps[1])
    return result


@dataclass
class ConvergenceTable:
    """Error metrics per refinement rung with pairwise and fitted orders.

    Orders are measured against the parameter step ``2 pi / n_outer``.
    """

    rows: list
    metrics: tuple
    pairwise: list
    fitted: dict

    def monotone(self, key):
        vals = [r[key] for r in self.rows]
        return all(b < a for a, b in zip(vals, vals[1:]))

    def header(self):
        cols = ["n_outer", "n_inner", "steps"] + list(self.metrics)
        return cols + [f"order_{m}" for m in self.metrics]

    def table(self):
        """Rows as lists (orders empty on the first rung)."""
        out = []
        for i, r in enumerate(self.rows):
            orders = [self.pairwise[i - 1][m] if i else None for m in self.metrics]
            out.append([r["n_outer"], r["n_inner"], r["steps"]] + [r[m] for m in self.metrics] + orders)
        return out


def fitted_order(steps, errs):
    """Least-squares slope of ``log(err)`` against ``log(step)``; None if undefined."""
    steps, errs = np.asarray(steps, float), np.asarray(errs, float)
    if len(steps) < 2 or np.any(errs <= 0) or not np.all(np.isfinite(errs)):
        return None
    return float(np.polyfit(np.log(steps), np.log(errs), 1)[0])


def convergence_study(run, ladder, metrics=("err_max", "err_l2")):
    """Run ``run(n_outer, n_inner, steps) -> dict`` over a refinement ladder.

    Rungs are ``(n, steps)`` or ``(n_outer, n_inner, steps)``.
    """
    rows = []
    for rung in ladder:
        n_o, n_i, m = rung if len(rung) == 3 else (rung[0], rung[0], rung[1])
        row = dict(n_outer=n_o, n_inner=n_i, steps=m)
        row.update(run(n_o, n_i, m))
        rows.append(row)
    pairwise = []
    for prev, cur in zip(rows, rows[1:]):
        ratio = prev["n_outer"] / cur["n_outer"]
        pw = {}
        for key in metrics:
            if prev[key] > 0.0 and cur[key] > 0.0 and ratio != 1.0:
                pw[key] = math.log(cur[key] / prev[key]) / math.log(ratio)
            else:
                pw[key] = None
        pairwise.append(pw)
    h = [2.0 * np.pi / r["n_outer"] for r in rows]
    fitted = {key: fitted_order(h, [r[key] for r in rows]) for key in metrics}
    return ConvergenceTable(rows, tuple(metrics), pairwise, fitted)


def manufactured_run(outer, shape, grid, ms=None, interior=None, clearance=1e-2):
    """Solve the annulus problem with manufactured data and measure the errors.

    Returns absolute max / L2 errors of the outer Neumann trace, the same
    relative to the exact trace, and the relative max error of interior
    values at ``interior = (times, points)``.
    """
    from .system import AnnulusProblem, eval_solution, grid_norms, solve_problem

    ms = ms or ManufacturedSolution.default(shape)
    data = manufactured_data(ms, outer, shape, grid, clearance)
    problem = AnnulusProblem(outer, shape, grid, data.g_outer, data.g_inner, clearance)
    ops, mu = solve_problem(problem)
    err = ops.dtn(mu) - data.dtn
    e_max, e_l2 = grid_norms(err, grid, outer)
    s_max, s_l2 = grid_norms(data.dtn, grid, outer)
    out = dict(err_max=e_max, err_l2=e_l2, rel_max=e_max / s_max, rel_l2=e_l2 / s_l2)
    if interior is not None:
        times, points = interior
        u = eval_solution(problem, mu, times, points)
        exact = np.array([ms.value(t, p[None])[0] for t, p in zip(np.broadcast_to(times, len(points)), points)])
        out["interior_rel"] = float(np.max(np.abs(u - exact)) / np.max(np.abs(exact)))
    return out


def default_interior_targets(outer, shape, horizon, count=6):
    """Points midway between the curves (by ray from the inner centroid) at ``T/2`` and ``T``."""
    img = shape.image
    centre = np.mean(img.points, axis=0)
    ang = 2.0 * np.pi * (np.arange(count) + 0.25) / count
    pts = []
    for a in ang:
        d = np.array([np.cos(a), np.sin(a)])
        r_in = _ray_hit(img, centre, d)
        r_out = _ray_hit(outer, centre, d)
        pts.append(centre + 0.5 * (r_in + r_out) * d)
    pts = np.array(pts)
    times = np.where(np.arange(count) % 2 == 0, horizon, 0.5 * horizon)
    return times, pts


def _ray_hit(curve, origin, direction, samples=4096):
    p = curve.sample(samples) - origin
    ang = np.arctan2(p[:, 1], p[:, 0])
    target = math.atan2(direction[1], direction[0])
    diff = np.abs(np.angle(np.exp(1j * (ang - target))))
    return float(np.linalg.norm(p[np.argmin(diff)]))


@dataclass
class JumpResult:
    interior: float
    exterior: float


def jump_relation_errors(curve, grid, mu, offsets=(1.0, 2.0, 3.0), refine=4, nodes=None):
    """Extrapolated one-sided normal derivatives against ``+-mu/2 + W* mu`` at the final time.

    The normal derivative of the layer is evaluated at ``x -+ m delta nu``
    (``delta`` = parameter step times arclength speed) for the three offsets,
    with the density interpolated to a ``refine``-times finer source grid, and
    extrapolated quadratically to the curve.  Errors are relative max norms
    over ``nodes`` (default: all).  Interior is the side opposite to the normal.
    """
    from .potentials import assemble_Wstar, eval_field_grad, trig_interpolation_matrix

    n = curve.n_nodes
    idx = np.arange(n) if nodes is None else np.asarray(nodes)
    W = assemble_Wstar(curve, grid).apply(mu)[-1]
    P = trig_interpolation_matrix(n, refine)
    fine = curve.with_nodes(refine * n)
    mu_f = np.asarray(mu) @ P.T
    delta = curve.h * curve.speed[idx]
    x, nu = curve.points[idx], curve.normal[idx]
    m = np.asarray(offsets, dtype=float)
    # Lagrange weights for extrapolation to zero offset
    lw = np.array([np.prod([mj / (mj - mk) for mj in m if mj != mk]) for mk in m])
    errs = []
    for sign in (-1.0, 1.0):
        vals = []
        for mk in m:
            pts = x + sign * mk * delta[:, None] * nu
            g = eval_field_grad(fine, mu_f, grid, grid.horizon, pts, clearance=0)
            vals.append(np.sum(g * nu, axis=1))
        extrap = lw @ np.array(vals)
        pred = -sign * 0.5 * np.asarray(mu)[-1, idx] + W[idx]
        errs.append(float(np.max(np.abs(extrap - pred)) / np.max(np.abs(pred))))
    return JumpResult(*errs)


def smooth_random_density(curve, grid, rng, modes=4):
    """``t (1 + t) f(theta)`` with random Fourier coefficients up to ``modes - 1``."""
    a = rng.normal(size=(2, modes))
    k = np.arange(modes)
    th = curve.theta
    f = np.cos(np.outer(th, k)) @ a[0] + np.sin(np.outer(th, k)) @ a[1]
    t = grid.times
    return np.outer(t * (1.0 + t), f)
