import numpy as np
import pytest

from heatshape.errors import ClearanceError, GeometryError
from heatshape.geometry import ClosedCurve, ShapeMap, surface_jacobian, surface_jacobian_diff
from heatshape.potentials import TimeGrid
from heatshape.verify import (ManufacturedSolution, convergence_study, fd_directional, fitted_order,
                              jump_relation_errors, manufactured_data, manufactured_run,
                              smooth_random_density)

from conftest import random_field, random_map, wavy_shape


def test_profiles_must_vanish_to_second_order():
    with pytest.raises(ValueError):
        ManufacturedSolution([[0.0, 0.0]], [[0.0, 1.0, 1.0]])
    with pytest.raises(ValueError):
        ManufacturedSolution([[0.0, 0.0]], [[1.0]])
    with pytest.raises(ValueError):
        ManufacturedSolution([[0.0, 0.0], [0.1, 0.0]], [[0.0, 0.0, 1.0]])


def test_values_against_time_quadrature():
    ms = ManufacturedSolution([[0.1, -0.05], [-0.2, 0.1]], [[0, 0, 1.0, 0.0], [0, 0, 0.6, 0.8]])
    for t, p in [(0.5, (1.4, 0.3)), (2.0, (-0.3, 1.7)), (1.1, (0.0, -1.2))]:
        got = ms.value(t, np.array([p]))[0]
        assert got == pytest.approx(ms.value_by_quadrature(t, p), rel=1e-9)


def test_gradient_matches_finite_difference():
    ms = ManufacturedSolution([[0.1, -0.05]], [[0, 0, 1.0, 0.5]])
    x = np.array([[1.3, 0.4], [-0.7, 1.1]])
    d = 1e-6
    fd = np.stack([(ms.value(1.2, x + d * e) - ms.value(1.2, x - d * e)) / (2 * d) for e in np.eye(2)], 1)
    g = ms.gradient(1.2, x)
    assert np.max(np.abs(g - fd)) <= 1e-7 * np.max(np.abs(g))


def test_zero_profiles_and_initial_time():
    outer = ClosedCurve.circle(2.0, 16)
    shape = ShapeMap.identity(ClosedCurve.circle(1.0, 16))
    grid = TimeGrid(1.0, 4)
    md = manufactured_data(ManufacturedSolution([[0.1, 0.0]], [[0.0, 0.0, 0.0]]), outer, shape, grid)
    for arr in (md.g_outer, md.g_inner, md.dtn, md.inner_gradient):
        assert np.all(arr == 0.0)
    md = manufactured_data(ManufacturedSolution.default(shape), outer, shape, grid)
    for arr in (md.g_outer, md.g_inner, md.dtn, md.inner_gradient):
        assert np.all(arr[0] == 0.0)
        assert np.any(arr[1:] != 0.0)


def test_source_placement_checked():
    outer = ClosedCurve.circle(2.0, 16)
    shape = ShapeMap.identity(ClosedCurve.circle(1.0, 16))
    grid = TimeGrid(1.0, 4)
    with pytest.raises(GeometryError):
        manufactured_data(ManufacturedSolution([[1.5, 0.0]], [[0, 0, 1.0]]), outer, shape, grid)
    with pytest.raises(ClearanceError):
        manufactured_data(ManufacturedSolution([[0.999, 0.0]], [[0, 0, 1.0]]), outer, shape, grid)


def test_fd_linear_map_is_exact():
    shape = wavy_shape(16)
    h = random_field(np.random.default_rng(3), size=0.1)
    fn = lambda phi: 3.0 * phi.image.points
    exact = 3.0 * h.values(shape.reference.theta)
    r = fd_directional(fn, shape, h, exact=exact)
    assert max(r.errors) <= 1e-9
    assert r.ratio is None and r.slope is None


def test_fd_surface_jacobian():
    rng = np.random.default_rng(5)
    phi = random_map(wavy_shape(32), rng)
    h = random_field(rng, size=0.3)
    r = fd_directional(surface_jacobian, phi, h, (1e-2, 5e-3), exact=surface_jacobian_diff(phi, h))
    assert 3.5 <= r.ratio <= 4.5
    assert r.slope == pytest.approx(2.0, abs=0.1)


def test_convergence_study_bookkeeping():
    table = convergence_study(lambda a, b, m: {"err_max": 0.0}, [(16, 8), (32, 16)], ("err_max",))
    assert [r["err_max"] for r in table.rows] == [0.0, 0.0]
    assert table.fitted["err_max"] is None
    single = convergence_study(lambda a, b, m: {"err_max": 1.0 / a}, [(16, 8)], ("err_max",))
    assert len(single.rows) == 1 and single.pairwise == [] and single.fitted["err_max"] is None
    quad = convergence_study(lambda a, b, m: {"err_max": a ** -2.0}, [(8, 4), (16, 8), (32, 8, 16)],
                             ("err_max",))
    assert quad.fitted["err_max"] == pytest.approx(2.0)
    assert quad.monotone("err_max")
    assert quad.rows[2]["n_inner"] == 8
    assert len(quad.table()) == 3 and quad.table()[0][-1] is None


def test_fitted_order():
    assert fitted_order([1.0, 0.5, 0.25], [1.0, 0.25, 0.0625]) == pytest.approx(2.0)
    assert fitted_order([1.0], [1.0]) is None


def test_manufactured_run_coarse_ladder():
    outer = ClosedCurve.circle(2.0, 16)
    errs = []
    for n in (16, 32):
        shape = wavy_shape(n)
        res = manufactured_run(outer.with_nodes(n), shape, TimeGrid(2.0, n))
        errs.append(res["err_max"])
        assert set(res) >= {"err_max", "err_l2", "rel_max", "rel_l2"}
    assert errs[1] < errs[0]


def test_jump_relation_errors_small():
    cv = ClosedCurve.circle(1.0, 64)
    grid = TimeGrid(1.0, 64)
    mu = smooth_random_density(cv, grid, np.random.default_rng(2))
    res = jump_relation_errors(cv, grid, mu, nodes=np.arange(0, 64, 8))
    assert res.interior < 1e-2 and res.exterior < 5e-2
