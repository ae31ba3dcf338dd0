import numpy as np
import pytest

from heatshape.errors import AdmissibilityError, StagnationError
from heatshape.geometry import ClosedCurve, ShapeMap
from heatshape.inverse import (CauchyData, boundary_distance, coordinate_directions, reconstruct,
                               resample_trace, synthetic_twin)
from heatshape.potentials import TimeGrid
from heatshape.system import AnnulusOperators


def g_outer(t, curve):
    return t**2 * (1.0 + 0.3 * np.cos(curve.theta))


def test_coordinate_directions():
    dirs, labels = coordinate_directions(4)
    assert len(dirs) == 2 * (2 * 4 + 1) == len(labels)
    assert "sin_x[0]" not in labels and "cos_y[0]" in labels


def test_boundary_distance():
    a = ClosedCurve.circle(1.0, 32)
    b = ClosedCurve.circle(1.2, 32, center=(0.1, 0.0))
    assert boundary_distance(a, a) == 0.0
    assert boundary_distance(a, b) == pytest.approx(0.3, abs=1e-4)


def test_resample_trace_exact_for_smooth_data():
    g1, g2 = TimeGrid(1.0, 8), TimeGrid(1.0, 4)
    th16 = 2 * np.pi * np.arange(16) / 16
    th8 = th16[::2]
    vals = np.outer(g1.times, np.cos(2 * th16) + 0.5)
    out = resample_trace(vals, g1, g2, 8)
    assert np.allclose(out, np.outer(g2.times, np.cos(2 * th8) + 0.5), atol=1e-14)
    up = resample_trace(out, g2, g1, 16)
    assert np.allclose(up, vals, atol=1e-14)


def test_fixed_point_needs_no_iterations():
    outer = ClosedCurve.circle(2.0, 32)
    grid = TimeGrid(2.0, 8)
    guess = ShapeMap.identity(ClosedCurve.circle(0.9, 16, center=(0.1, 0.0)))
    g_o = np.array([g_outer(t, outer) for t in grid.times])
    ops = AnnulusOperators(outer, guess, grid)
    flux = ops.dtn(ops.solve(g_o, np.zeros((9, 16))))
    res = reconstruct(CauchyData(outer, grid, g_o, flux), guess, degree=2)
    assert res.iterations <= 1
    assert res.converged
    assert res.residuals[-1] <= 1e-12 * np.max(np.abs(flux))
    assert boundary_distance(res.shape.image, guess.image) <= 1e-10


def test_inadmissible_guess_rejected():
    outer = ClosedCurve.circle(2.0, 32)
    grid = TimeGrid(2.0, 4)
    g_o = np.array([g_outer(t, outer) for t in grid.times])
    data = CauchyData(outer, grid, g_o, np.zeros_like(g_o))
    with pytest.raises(AdmissibilityError):
        reconstruct(data, ShapeMap.identity(ClosedCurve.circle(2.5, 16)))


def test_residual_monotone_and_converges_coarse():
    truth = ShapeMap.identity(ClosedCurve.circle(1.0, 48, center=(0.1, 0.0)))
    outer_r = ClosedCurve.circle(2.0, 32)
    data = synthetic_twin(ClosedCurve.circle(2.0, 48), truth, TimeGrid(2.0, 24), g_outer,
                          outer_r, TimeGrid(2.0, 16))
    guess = ShapeMap.identity(ClosedCurve.circle(0.85, 16))
    res = reconstruct(data, guess, degree=2, max_iter=10)
    assert all(b < a for a, b in zip(res.residuals, res.residuals[1:]))
    assert boundary_distance(res.shape.image, truth.image) <= 0.02 * outer_r.diameter


def test_stagnation_returns_last_iterate():
    outer = ClosedCurve.circle(2.0, 32)
    grid = TimeGrid(2.0, 8)
    g_o = np.array([g_outer(t, outer) for t in grid.times])
    # flux from a different data set: no shape reproduces it, and no step can be accepted
    rng = np.random.default_rng(0)
    flux = rng.normal(size=g_o.shape)
    flux[0] = 0.0
    guess = ShapeMap.identity(ClosedCurve.circle(1.0, 16))
    with pytest.raises(StagnationError) as exc:
        reconstruct(CauchyData(outer, grid, g_o, flux), guess, degree=1, max_iter=30, max_halvings=0,
                    stall_tol=0.0, step_tol=0.0)
    assert exc.value.result.shape is not None
    assert exc.value.result.residuals


def test_noise_is_seeded():
    truth = ShapeMap.identity(ClosedCurve.circle(1.0, 16))
    args = (ClosedCurve.circle(2.0, 16), truth, TimeGrid(2.0, 4), g_outer,
            ClosedCurve.circle(2.0, 16), TimeGrid(2.0, 4))
    a = synthetic_twin(*args, noise=0.01, rng=np.random.default_rng(7))
    b = synthetic_twin(*args, noise=0.01, rng=np.random.default_rng(7))
    c = synthetic_twin(*args)
    assert np.array_equal(a.flux, b.flux)
    assert not np.array_equal(a.flux, c.flux)
    assert np.max(np.abs(a.flux - c.flux)) <= 0.1 * np.max(np.abs(c.flux))


def test_noisy_data_residual_plateaus_at_noise_level():
    truth = ShapeMap.identity(ClosedCurve.circle(1.0, 48, center=(0.1, 0.0)))
    outer_r = ClosedCurve.circle(2.0, 32)
    args = (ClosedCurve.circle(2.0, 48), truth, TimeGrid(2.0, 24), g_outer, outer_r, TimeGrid(2.0, 16))
    clean = synthetic_twin(*args)
    noisy = synthetic_twin(*args, noise=0.01, rng=np.random.default_rng(4))
    level = np.linalg.norm(noisy.flux - clean.flux)
    res = reconstruct(noisy, ShapeMap.identity(ClosedCurve.circle(0.85, 16)), degree=2, max_iter=10)
    assert 0.5 * level <= res.residuals[-1] <= 2.0 * level
    assert boundary_distance(res.shape.image, truth.image) <= 0.025 * outer_r.diameter
