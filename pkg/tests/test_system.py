import numpy as np
import pytest

from heatshape.errors import AdmissibilityError, ClearanceError, SolverError
from heatshape.geometry import ClosedCurve, ShapeMap
from heatshape.potentials import TimeGrid, assemble_trace_V
from heatshape.system import (AnnulusOperators, AnnulusProblem, assemble_M, dtn_trace, eval_solution,
                              grid_norms, solve_densities, solve_problem)
from heatshape.verify import ManufacturedSolution, default_interior_targets, manufactured_data, \
    smooth_random_density

from conftest import wavy_shape


def circles(n=32, steps=8):
    outer = ClosedCurve.circle(3.0, n)
    shape = ShapeMap.identity(ClosedCurve.circle(1.0, n))
    return outer, shape, TimeGrid(1.0, steps)


def smooth_data(curve, grid, rng):
    return smooth_random_density(curve, grid, rng)


def test_problem_validation():
    outer, shape, grid = circles()
    with pytest.raises(ValueError):
        AnnulusProblem(outer, shape, grid, np.ones((9, 32)), None)
    with pytest.raises(ValueError):
        AnnulusProblem(outer, shape, grid, np.zeros((8, 32)), None)
    big = ShapeMap(shape.reference, 3.5 * shape.reference.coeffs)
    with pytest.raises(AdmissibilityError):
        AnnulusProblem(outer, big, grid)


def test_zero_data_gives_zero():
    outer, shape, grid = circles()
    prob = AnnulusProblem(outer, shape, grid)
    ops, mu = solve_problem(prob)
    assert np.all(mu.outer == 0.0) and np.all(mu.inner == 0.0)
    assert np.all(ops.dtn(mu) == 0.0)
    assert np.all(ops.apply(mu.outer, mu.inner).outer == 0.0)
    assert np.all(eval_solution(prob, mu, 1.0, np.array([[2.0, 0.0]])) == 0.0)


def test_identity_block_matches_trace():
    outer = ClosedCurve.circle(2.0, 32)
    shape = wavy_shape(32)
    grid = TimeGrid(1.0, 8)
    ops = AnnulusOperators(outer, shape, grid)
    V = assemble_trace_V(shape.reference, grid)
    assert np.array_equal(ops.V1.blocks, V.blocks)
    assert np.array_equal(ops.V_outer.blocks, assemble_trace_V(outer, grid).blocks)


def test_block_rotation_equivariance(rng):
    outer, shape, grid = circles(32, 8)
    M = assemble_M(AnnulusProblem(outer, shape, grid))
    mu = np.hstack([smooth_data(outer, grid, rng), smooth_data(shape.reference, grid, rng)])
    roll = lambda a: np.hstack([np.roll(a[:, :32], 5, axis=1), np.roll(a[:, 32:], 5, axis=1)])
    assert np.max(np.abs(M.apply(roll(mu)) - roll(M.apply(mu)))) <= 1e-12


def test_dtn_rotation_equivariance(rng):
    outer, shape, grid = circles(32, 8)
    g_o, g_i = smooth_data(outer, grid, rng), smooth_data(shape.reference, grid, rng)
    ops = AnnulusOperators(outer, shape, grid)
    lam = ops.dtn(ops.solve(g_o, g_i))
    lam_r = ops.dtn(ops.solve(np.roll(g_o, 7, axis=1), np.roll(g_i, 7, axis=1)))
    assert np.max(np.abs(lam_r - np.roll(lam, 7, axis=1))) <= 1e-10 * np.max(np.abs(lam))


def test_solve_residual_and_recovery(rng):
    outer = ClosedCurve.circle(2.0, 32)
    shape = wavy_shape(32)
    grid = TimeGrid(1.0, 16)
    ops = AnnulusOperators(outer, shape, grid)
    g_o, g_i = smooth_data(outer, grid, rng), smooth_data(shape.reference, grid, rng)
    mu = solve_densities(ops.M, g_o, g_i)
    res = ops.apply(mu.outer, mu.inner)
    scale = max(np.max(np.abs(g_o)), np.max(np.abs(g_i)))
    assert np.max(np.abs(res.outer - g_o)) <= 1e-10 * scale
    assert np.max(np.abs(res.inner - g_i)) <= 1e-10 * scale
    known = (smooth_data(outer, grid, rng), smooth_data(shape.reference, grid, rng))
    data = ops.apply(*known)
    back = ops.solve(data.outer, data.inner)
    assert np.max(np.abs(back.outer - known[0])) <= 1e-10 * np.max(np.abs(known[0]))
    assert np.max(np.abs(back.inner - known[1])) <= 1e-10 * np.max(np.abs(known[1]))


def test_data_must_vanish_initially():
    outer, shape, grid = circles()
    M = assemble_M(AnnulusProblem(outer, shape, grid))
    bad = np.ones((9, 32))
    with pytest.raises(ValueError):
        solve_densities(M, bad, np.zeros((9, 32)))


def test_condition_guard():
    outer, shape, grid = circles()
    ops = AnnulusOperators(outer, shape, grid)
    with pytest.raises(SolverError):
        ops.solve(np.zeros((9, 32)), np.zeros((9, 32)), cond_limit=1.0)


def test_dtn_linear_in_data(rng):
    outer = ClosedCurve.circle(2.0, 32)
    shape = wavy_shape(32)
    grid = TimeGrid(1.0, 8)
    ops = AnnulusOperators(outer, shape, grid)
    a = (smooth_data(outer, grid, rng), smooth_data(shape.reference, grid, rng))
    b = (smooth_data(outer, grid, rng), smooth_data(shape.reference, grid, rng))
    lam = lambda d: ops.dtn(ops.solve(*d))
    combo = lam((2 * a[0] - b[0], 2 * a[1] - b[1]))
    assert np.max(np.abs(combo - (2 * lam(a) - lam(b)))) <= 1e-12 * np.max(np.abs(combo))


def test_pipeline_causality(rng):
    outer = ClosedCurve.circle(2.0, 32)
    shape = wavy_shape(32)
    grid = TimeGrid(1.0, 10)
    g_o, g_i = smooth_data(outer, grid, rng), smooth_data(shape.reference, grid, rng)
    prob = AnnulusProblem(outer, shape, grid, g_o, g_i)
    ops, mu = solve_problem(prob)
    lam = ops.dtn(mu)
    k = 6
    g_o2, g_i2 = g_o.copy(), g_i.copy()
    g_o2[k + 1:] = 0.0
    g_i2[k + 1:] = 0.0
    lam2 = dtn_trace(prob.with_data(g_o2, g_i2), ops.solve(g_o2, g_i2), ops)
    assert np.array_equal(lam[:k + 1], lam2[:k + 1])


def test_manufactured_solution_at_64():
    outer = ClosedCurve.circle(2.0, 64)
    shape = wavy_shape(64)
    grid = TimeGrid(2.0, 64)
    ms = ManufacturedSolution.default(shape)
    md = manufactured_data(ms, outer, shape, grid)
    prob = AnnulusProblem(outer, shape, grid, md.g_outer, md.g_inner)
    ops, mu = solve_problem(prob)
    times, pts = default_interior_targets(outer, shape, grid.horizon)
    u = eval_solution(prob, mu, times, pts)
    exact = np.array([ms.value(t, p[None])[0] for t, p in zip(times, pts)])
    assert np.max(np.abs(u - exact)) <= 1e-3 * np.max(np.abs(exact))
    err = grid_norms(ops.dtn(mu) - md.dtn, grid, outer)
    ref = grid_norms(md.dtn, grid, outer)
    assert err[0] <= 1e-2 * ref[0] and err[1] <= 1e-2 * ref[1]
    assert np.all(eval_solution(prob, mu, 0.0, pts) == 0.0)


def test_eval_solution_rejects_points_outside_annulus(rng):
    outer, shape, grid = circles()
    prob = AnnulusProblem(outer, shape, grid, smooth_data(outer, grid, rng), None)
    ops, mu = solve_problem(prob)
    with pytest.raises(ClearanceError):
        eval_solution(prob, mu, 1.0, np.array([[0.2, 0.1]]))
    with pytest.raises(ClearanceError):
        eval_solution(prob, mu, 1.0, np.array([[1.0 + 1e-6, 0.0]]))
