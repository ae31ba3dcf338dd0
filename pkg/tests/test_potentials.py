import numpy as np
import pytest
from scipy.integrate import quad

from heatshape import heatkernel as hk
from heatshape.errors import ClearanceError
from heatshape.geometry import ClosedCurve
from heatshape.potentials import (CausalBlockOperator, TimeGrid, assemble_trace_V, assemble_Wstar,
                                  eval_field, eval_field_grad, kress_weights, trig_interpolation_matrix)
from heatshape.verify import smooth_random_density

from conftest import wavy_shape


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 4, "cubic")


@pytest.mark.parametrize("basis", ["linear", "constant"])
def test_time_weights_reproduce_lag_segments(basis):
    # weights at grid times must agree with the lag-block segments
    g = TimeGrid(1.0, 5, basis)
    k = 4
    by_lag = {}
    for m, segs in g.segments_at(g.times[k]):
        by_lag[k - m] = sorted(segs)
    for lag in range(k):
        want = sorted(g.lag_segments(lag))
        assert np.allclose(np.array(by_lag[lag]), np.array(want), atol=1e-14)


def test_kress_weights_integrate_log():
    # int_0^{2pi} ln(4 sin^2(t/2)) dt = 0 and against cos(t): -2 pi
    n = 32
    R = kress_weights(n)
    th = 2 * np.pi * np.arange(n) / n
    assert np.sum(R[0]) == pytest.approx(0.0, abs=1e-13)
    assert R[0] @ np.cos(th) == pytest.approx(-2 * np.pi, rel=1e-13)


def test_trig_interpolation_matrix():
    n, q = 16, 4
    P = trig_interpolation_matrix(n, q)
    th_f = 2 * np.pi * np.arange(q * n) / (q * n)
    th = th_f[::q]
    f = lambda t: np.cos(3 * t) - 0.4 * np.sin(7 * t) + 0.2
    assert np.max(np.abs(P @ f(th) - f(th_f))) <= 1e-13
    assert np.allclose(P[::q], np.eye(n), atol=1e-14)


def test_causal_operator_solve_roundtrip(rng):
    blocks = rng.normal(size=(5, 6, 6))
    blocks[0] += 6 * np.eye(6)
    op = CausalBlockOperator(blocks)
    mu = rng.normal(size=(6, 6))
    mu[0] = 0.0
    assert np.max(np.abs(op.solve(op.apply(mu)) - mu)) <= 1e-12


def test_causality(rng):
    cv = wavy_shape(16).reference
    g = TimeGrid(1.0, 8)
    V = assemble_trace_V(cv, g)
    mu = smooth_random_density(cv, g, rng)
    base = V.apply(mu)
    k = 5
    mu2 = mu.copy()
    mu2[k:] += rng.normal(size=mu2[k:].shape)
    out = V.apply(mu2)
    assert np.array_equal(out[:k], base[:k])
    assert not np.allclose(out[k], base[k])


def test_zero_density():
    cv = ClosedCurve.circle(1.0, 16)
    g = TimeGrid(1.0, 4)
    z = np.zeros((5, 16))
    assert np.all(assemble_trace_V(cv, g).apply(z) == 0.0)
    assert np.all(assemble_Wstar(cv, g).apply(z) == 0.0)
    pts = np.array([[2.0, 0.0], [0.1, 0.2]])
    assert np.all(eval_field(cv, z, g, 1.0, pts) == 0.0)
    assert np.all(eval_field_grad(cv, z, g, 1.0, pts) == 0.0)


def test_field_vanishes_at_time_zero(rng):
    cv = ClosedCurve.circle(1.0, 16)
    g = TimeGrid(1.0, 4)
    mu = smooth_random_density(cv, g, rng)
    assert np.all(eval_field(cv, mu, g, 0.0, np.array([[2.0, 0.5]])) == 0.0)


def test_linearity(rng):
    cv = wavy_shape(16).reference
    g = TimeGrid(1.0, 6)
    V, W = assemble_trace_V(cv, g), assemble_Wstar(cv, g)
    a, b = smooth_random_density(cv, g, rng), smooth_random_density(cv, g, rng)
    for op in (V, W):
        lhs = op.apply(2.0 * a - 3.0 * b)
        rhs = 2.0 * op.apply(a) - 3.0 * op.apply(b)
        assert np.max(np.abs(lhs - rhs)) <= 1e-13 * np.max(np.abs(lhs))


def test_rotation_equivariance_on_circle(rng):
    n = 32
    cv = ClosedCurve.circle(1.3, n)
    g = TimeGrid(1.0, 8)
    mu = smooth_random_density(cv, g, rng)
    for op in (assemble_trace_V(cv, g), assemble_Wstar(cv, g)):
        rolled = op.apply(np.roll(mu, 3, axis=1))
        assert np.max(np.abs(rolled - np.roll(op.apply(mu), 3, axis=1))) <= 1e-12


def _brute_force_V_of_t(T):
    """int_0^T int_circle S_2(T - tau, x - y) tau dsigma dtau at x = (1, 0), nested adaptive quadrature."""
    def time_integral(th):
        r2 = 4.0 * np.sin(th / 2) ** 2
        f = lambda tau: tau * hk.heat_kernel(2, T - tau, np.array([np.sqrt(r2), 0.0]))
        # the kernel concentrates near tau = T when r is small
        brk = [max(T - 10.0 * r2, 0.0)] if r2 < 0.1 * T else None
        return quad(f, 0.0, T, points=brk, epsabs=1e-15, epsrel=1e-11, limit=400)[0]

    return 2.0 * quad(time_integral, 0.0, np.pi, epsabs=1e-13, epsrel=1e-10, limit=400)[0]


def test_trace_against_space_time_quadrature():
    T = 1.0
    oracle = _brute_force_V_of_t(T)
    cv = ClosedCurve.circle(1.0, 64)
    g = TimeGrid(T, 64)
    V = assemble_trace_V(cv, g)
    val = V.apply(np.outer(g.times, np.ones(64)))[-1]
    assert np.max(np.abs(val / oracle - 1.0)) <= 1e-3


def test_clearance_error(rng):
    cv = ClosedCurve.circle(1.0, 16)
    g = TimeGrid(1.0, 4)
    mu = smooth_random_density(cv, g, rng)
    with pytest.raises(ClearanceError):
        eval_field(cv, mu, g, 1.0, np.array([[1.0 + 1e-5, 0.0]]))


def test_field_solves_heat_equation(rng):
    cv = ClosedCurve.circle(1.0, 64)
    g = TimeGrid(1.0, 64)
    mu = smooth_random_density(cv, g, rng)
    x = np.array([[1.6, 0.4], [0.3, -0.2], [-0.5, 1.7]])
    t, d, dt = 0.71, 1e-3, 1e-4

    def f(tt, p):
        return eval_field(cv, mu, g, tt, p)

    u = f(t, x)
    ut = (f(t + dt, x) - f(t - dt, x)) / (2 * dt)
    lap = sum((f(t, x + d * e) - 2 * u + f(t, x - d * e)) / d**2 for e in np.eye(2))
    assert np.max(np.abs(ut - lap)) <= 1e-4


def test_gradient_matches_finite_difference(rng):
    cv = wavy_shape(32).reference
    g = TimeGrid(1.0, 16)
    mu = smooth_random_density(cv, g, rng)
    x = np.array([[2.1, 0.4], [0.05, -0.1], [-0.4, 1.6]])
    t = np.array([1.0, 0.63, 0.4])
    gr = eval_field_grad(cv, mu, g, t, x)
    d = 1e-6
    fd = np.stack([(eval_field(cv, mu, g, t, x + d * e) - eval_field(cv, mu, g, t, x - d * e)) / (2 * d)
                   for e in np.eye(2)], axis=1)
    assert np.max(np.abs(gr - fd)) <= 1e-5 * np.max(np.abs(gr))


def test_gradient_jump_across_curve(rng):
    # grad v (inside) - grad v (outside) -> mu nu, extrapolated along the normal
    n = 128
    cv = ClosedCurve.circle(1.0, n)
    g = TimeGrid(1.0, 128)
    mu = smooth_random_density(cv, g, rng)
    idx = np.arange(0, n, n // 16)
    P = trig_interpolation_matrix(n, 4)
    fine, mu_f = cv.with_nodes(4 * n), mu @ P.T
    delta = cv.h * cv.speed[idx]
    m = np.array([1.0, 2.0, 3.0])
    lw = np.array([np.prod([mj / (mj - mk) for mj in m if mj != mk]) for mk in m])

    def side(sign):
        vals = [eval_field_grad(fine, mu_f, g, g.horizon,
                                cv.points[idx] + sign * mk * delta[:, None] * cv.normal[idx], clearance=0)
                for mk in m]
        return np.tensordot(lw, np.array(vals), axes=1)

    jump = side(-1.0) - side(1.0)
    pred = mu[-1, idx][:, None] * cv.normal[idx]
    assert np.max(np.abs(jump - pred)) <= 1e-2 * np.max(np.abs(pred))
