import math

import numpy as np
import pytest

from spectraforge import geometry as geo
from spectraforge import jet as jt
from spectraforge.errors import GeometryError

SQUARE = geo.Rectangle(0.0, 1.0, 0.0, 1.0)
DISK = geo.Disk(1.0)
ANN = geo.Annulus(0.4, 1.0)
TAU = geo.domain_from_preset("annulus(tau=3.5)")
BELL = geo.Dumbbell()
CUBE = geo.Box3()


def _random_inside(domain, n, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = domain.bbox
    pts = rng.uniform(lo, hi, size=(4 * n, domain.dim))
    return pts[domain.contains(pts)][:n]


def test_presets():
    assert TAU.r_in == pytest.approx(1 / 3.5)
    assert geo.domain_from_preset("annulus(0.4,1)") == ANN
    assert geo.domain_from_preset("unit_cube").dim == 3
    assert geo.domain_from_preset("unit_disk") == DISK
    with pytest.raises(GeometryError):
        geo.domain_from_preset("hexagon")


def test_invariants_rejected():
    with pytest.raises(GeometryError):
        geo.Annulus(1.0, 0.5)
    with pytest.raises(GeometryError):
        geo.Rectangle(1.0, 0.0, 0.0, 1.0)


def test_closed_form_measures():
    assert ANN.measure == pytest.approx(math.pi * (1 - 0.16))
    assert DISK.boundary_measure == pytest.approx(2 * math.pi)
    assert SQUARE.boundary_measure == 4.0


def test_strict_filter_on_3x3():
    s = geo.sample_interior(SQUARE, (3, 3))
    np.testing.assert_array_equal(s.points, [[0.5, 0.5]])


def test_annulus_count_matches_scan():
    s = geo.sample_interior(TAU, (50, 50))
    ax = np.linspace(-1, 1, 50)
    count = sum(1 for x in ax for y in ax if 1 / 3.5 < math.hypot(x, y) < 1)
    assert s.n == count


def test_dumbbell_area_grid_refinement():
    def area(n):
        pts = geo.grid_points(BELL, (3 * n, n))
        return BELL.contains(pts).mean() * 6 * 2

    coarse, fine = area(60), area(600)
    assert coarse == pytest.approx(fine, rel=0.02)
    assert fine == pytest.approx(BELL.measure, rel=5e-3)


@pytest.mark.parametrize("domain,grid", [(SQUARE, 50), (DISK, 50), (TAU, 50), (BELL, (60, 60)), (CUBE, 40)])
def test_quadrature_weights_sum_to_measure(domain, grid):
    s = geo.sample_interior(domain, grid)
    assert s.weights.sum() == pytest.approx(domain.measure, rel=1e-12)
    if isinstance(domain, (geo.Rectangle, geo.Box3)):
        return
    # node count times cell volume tracks the measure
    assert _cell_estimate(domain, grid) == pytest.approx(domain.measure, rel=0.02)


def _cell_estimate(domain, grid):
    s = geo.sample_interior(domain, grid)
    lo, hi = domain.bbox
    return s.n * np.prod((hi - lo) / (np.array(s.grid_shape) - 1))


@pytest.mark.parametrize("domain", [SQUARE, DISK, TAU])
def test_quadrature_converges_under_refinement(domain):
    errs = [abs(_cell_estimate(domain, n) - domain.measure) for n in (25, 50, 100, 200)]
    assert errs[-1] < errs[0] / 4


def test_empty_grid_raises():
    with pytest.raises(GeometryError):
        geo.sample_interior(SQUARE, (2, 2))


def test_disk_boundary_four_points():
    b = geo.sample_boundary(DISK, 4)
    np.testing.assert_allclose(b.points, [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=0)
    np.testing.assert_array_equal(b.curvature, 1.0)
    np.testing.assert_array_equal(b.normals, b.points)


def test_square_boundary():
    b = geo.sample_boundary(SQUARE, 37)
    assert b.n == 37
    np.testing.assert_array_equal(b.curvature, 0.0)
    np.testing.assert_allclose(np.linalg.norm(b.normals, axis=1), 1.0)
    on_edge = np.isclose(b.points, 0.0) | np.isclose(b.points, 1.0)
    assert np.all(on_edge.sum(axis=1) == 1)  # corners excluded


def test_annulus_boundary_geometry():
    b = geo.sample_boundary(ANN, 70)
    r = np.linalg.norm(b.points, axis=1)
    inner = r < 0.7
    np.testing.assert_allclose(r[inner], 0.4, atol=1e-12)
    np.testing.assert_allclose(r[~inner], 1.0, atol=1e-12)
    np.testing.assert_allclose(b.normals[inner], -b.points[inner] / 0.4, atol=1e-12)
    np.testing.assert_allclose(b.curvature[inner], -2.5)


def test_boundary_sampling_unsupported():
    with pytest.raises(GeometryError):
        geo.sample_boundary(BELL, 16)
    with pytest.raises(GeometryError):
        geo.sample_boundary(DISK, 3)


def test_second_order_fields_examples():
    ell = geo.boundary_fn_second(TAU)
    assert geo.eval_field(ell, [[TAU.r_in, 0.0]])[0] == pytest.approx(0.0, abs=1e-15)
    assert geo.eval_field(geo.boundary_fn_second(CUBE), [[0.5, 0.5, 0.5]])[0] == pytest.approx(1.0)
    assert geo.eval_field(geo.boundary_fn_second(BELL), [[0.0, 0.3]])[0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("domain", [SQUARE, DISK, TAU, ANN, BELL, CUBE])
def test_second_order_fields_positive_and_vanishing(domain):
    ell = geo.boundary_fn_second(domain)
    assert geo.eval_field(ell, _random_inside(domain, 10_000)).min() > 0
    if domain in (SQUARE, DISK, ANN):
        b = geo.sample_boundary(domain, 128)
        assert np.abs(geo.eval_field(ell, b.points)).max() < 1e-10


def test_dumbbell_field_vanishes_on_boundary():
    ell = geo.boundary_fn_second(BELL)
    t = np.linspace(0, 2 * np.pi, 400)
    circ = np.stack([2 + np.cos(t), np.sin(t)], axis=1)
    circ = circ[~((np.abs(circ[:, 1]) < 0.3) & (circ[:, 0] < 2))]
    bar = np.stack([np.linspace(-1.0, 1.0, 50), np.full(50, 0.3)], axis=1)
    assert np.abs(geo.eval_field(ell, np.vstack([circ, bar]))).max() < 1e-10


def test_fourth_order_examples():
    f = geo.boundary_fn_fourth(DISK)
    j = geo.eval_field(f, [[1.0, 0.0]], jet=True)
    assert j.value[0] == 0 and j.dirderiv([1.0, 0.0])[0] == 0
    assert geo.eval_field(geo.boundary_fn_fourth(SQUARE), [[0.5, 0.5]])[0] == pytest.approx(1.0)
    a = geo.eval_field(geo.boundary_fn_fourth(ANN), [[0.0, 0.4]], jet=True)
    assert abs(a.value[0]) < 1e-15 and abs(a.dirderiv([0.0, -1.0])[0]) < 1e-15


@pytest.mark.parametrize("domain", [SQUARE, DISK, ANN])
def test_fourth_order_normal_derivative(domain):
    b = geo.sample_boundary(domain, 200)
    j = geo.eval_field(geo.boundary_fn_fourth(domain), b.points, jet=True)
    assert np.abs(j.value).max() < 1e-10
    assert np.abs(j.dirderiv(b.normals.T)).max() < 1e-8
    assert geo.eval_field(geo.boundary_fn_fourth(domain), _random_inside(domain, 10_000)).min() > 0


def test_signed_distance_examples():
    assert geo.signed_distance(DISK, [[0.0, 0.0]])[0] == 1.0
    assert geo.signed_distance(ANN, [[0.7, 0.0]])[0] == pytest.approx(0.3)
    for dom in (DISK, ANN, SQUARE):
        b = geo.sample_boundary(dom, 64)
        assert np.abs(geo.signed_distance(dom, b.points)).max() < 1e-12
    assert geo.signed_distance(SQUARE, [[1.5, 0.5]])[0] == pytest.approx(-0.5)
    assert geo.signed_distance(CUBE, [[0.5, 0.5, 0.2]])[0] == pytest.approx(0.2)
    with pytest.raises(GeometryError):
        geo.signed_distance(BELL)


def test_signed_distance_jets_are_unit_gradient():
    pts = _random_inside(ANN, 50)
    j = geo.eval_field(geo.signed_distance(ANN), pts, jet=True, order=1)
    np.testing.assert_allclose(np.linalg.norm(j.grad, axis=0), 1.0, rtol=1e-12)
    assert isinstance(j, jt.Jet2)
