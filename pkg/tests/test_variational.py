import json

import numpy as np
import pytest

from finsler_penrose import jets, models
from finsler_penrose import submanifold as sm
from finsler_penrose.errors import InputError, SpanError
from finsler_penrose.geodesic import GeodesicTolerances, integrate_geodesic
from finsler_penrose.variational import (check_focal_bound, find_focal_points, focal_null_vector, index_form,
                                         jacobi_field_coefficients, p_jacobi_init, point_jacobi_init,
                                         solve_jacobi, tangency_residual, variation_crosscheck)


def p_system(model, patch, u, which, T):
    pair = sm.null_normals(model, patch, u)
    z = getattr(pair, which)
    path = integrate_geodesic(model, pair.x, z, T)
    return solve_jacobi(model, path, p_jacobi_init(model, patch, u, z))


@pytest.fixture(scope="module")
def mink_sphere():
    m = models.minkowski()
    p = sm.sphere_patch(radius=2.0, grid=(2, 2))
    return p_system(m, p, p.grid[1], "minus", 3.0)


def test_minkowski_sphere_focal_point_at_center(mink_sphere, tmp_path):
    sys_ = mink_sphere
    np.testing.assert_allclose(sys_.init.S, -0.5 * np.eye(2), atol=1e-14)
    rep = find_focal_points(sys_, geodesic_id="mink")
    assert len(rep.focal) == 1
    f = rep.focal[0]
    assert abs(f.r - 2.0) < 1e-6 * 2.0
    assert f.multiplicity == 2
    assert sys_.lagrange_drift() < 1e-12
    assert sys_.frame_gram_drift() < 1e-12
    check_focal_bound(rep, 0.5, 1e-4, True)
    assert rep.bound["status"] == "satisfied"
    rep.write_json(tmp_path / "f.json")
    assert json.load(open(tmp_path / "f.json"))["focal_points"][0]["multiplicity"] == 2
    sys_.write_csv(tmp_path / "j.csv", samples=20)
    header = open(tmp_path / "j.csv").readline().strip().split(",")
    assert header == ["t", "x0", "x1", "x2", "x3", "detA", "sigma_min"]


def test_outgoing_and_plane_have_no_focal_points():
    m = models.minkowski()
    p = sm.sphere_patch(radius=2.0, grid=(2, 2))
    out = p_system(m, p, p.grid[0], "plus", 5.0)
    assert find_focal_points(out).focal == []
    pl = sm.plane_patch(grid=(2, 2))
    flat = p_system(m, pl, pl.grid[0], "minus", 5.0)
    rep = find_focal_points(flat)
    assert rep.focal == []
    check_focal_bound(rep, 0.0, 1e-4, True)
    assert rep.bound["status"] == "hypothesis-not-met"


def test_photon_sphere_conjugate_point_after_half_orbit():
    # great circles on r = 3M through a point refocus at the antipode (angle pi, affine 9 pi)
    m = models.schwarzschild(1.0)
    x0 = np.array([0.0, 3.0, 0.0, 0.0])
    v0 = np.array([1 / np.sqrt(3), 0.0, 1 / 3, 0.0])
    path = integrate_geodesic(m, x0, v0, 32.0, GeodesicTolerances(rtol=1e-12, atol=1e-13))
    sys_ = solve_jacobi(m, path, point_jacobi_init(m, x0, v0), tol=GeodesicTolerances(rtol=1e-11, atol=1e-12))
    rep = find_focal_points(sys_)
    assert rep.first == pytest.approx(9 * np.pi, rel=1e-6)
    assert rep.focal[0].multiplicity == 1
    assert sys_.lagrange_drift() < 1e-8


def test_schwarzschild_lagrange_identity_and_tangency():
    m = models.schwarzschild(1.0)
    p = sm.sphere_patch(radius=3.0, grid=(2, 2))
    sys_ = p_system(m, p, p.grid[0], "minus", 1.5)
    assert sys_.lagrange_drift() < 1e-9
    assert sys_.frame_gram_drift() < 1e-8
    assert sys_.jacobi_residual(0.7) < 1e-5
    rep = find_focal_points(sys_)
    assert rep.focal == []  # the focal point is the centre, at 9/5
    rng = np.random.default_rng(0)
    for _ in range(3):
        c = np.r_[rng.standard_normal(2), 0.0, 0.0]
        assert tangency_residual(sys_, c, 0.01, 1.4) > 1e-3


def test_index_form_closed_forms(mink_sphere):
    m = models.minkowski()
    x0 = np.zeros(4)
    v0 = np.array([1.0, 1.0, 0.0, 0.0])
    path = integrate_geodesic(m, x0, v0, 3.0)
    pt = solve_jacobi(m, path, point_jacobi_init(m, x0, v0))
    b = 3.0

    def V(t):
        s = jets.sin(np.pi * t / b)
        return [s, 0.0 * t, 0.0 * t, 0.0 * t]

    assert index_form(pt, V, V, b) == pytest.approx(-np.pi ** 2 / (2 * b), rel=1e-13)
    # the P-Jacobi field vanishing at the focal point has zero index
    sys_ = mink_sphere
    r = find_focal_points(sys_).first
    c = focal_null_vector(sys_, r)
    J = jacobi_field_coefficients(sys_, c)
    assert abs(index_form(sys_, J, J, r, breaks=list(sys_.ts), orth_tol=1e-7)) < 1e-8
    # a field that does not vanish at the end is rejected
    with pytest.raises(InputError):
        index_form(pt, lambda t: [1.0 + 0.0 * t, 0.0 * t, 0.0 * t, 0.0 * t],
                   lambda t: [1.0 + 0.0 * t, 0.0 * t, 0.0 * t, 0.0 * t], b)
    with pytest.raises(SpanError):
        index_form(pt, V, V, 10.0)


def test_variation_crosscheck_flat_and_curved():
    m = models.minkowski()
    x0 = np.zeros(4)
    v0 = np.array([1.0, 0.6, 0.8, 0.0])
    path = integrate_geodesic(m, x0, v0, 2.0)
    flat = solve_jacobi(m, path, point_jacobi_init(m, x0, v0))
    V = lambda t: [t * t, 0.5 * t, 0.0 * t, 0.0 * t]
    A = lambda t: [0.0 * t] * 4
    rep = variation_crosscheck(flat, V, A)
    assert max(rep.first_residual) < 1e-8
    s = models.schwarzschild(1.0)
    p = sm.sphere_patch(radius=3.0, grid=(2, 2))
    sys_ = p_system(s, p, p.grid[0], "minus", 1.5)
    V = lambda t: [jets.sin(t), 0.3 * t * t, 0.2 * t, 0.0 * t]
    A = lambda t: [0.1 * t, 0.2 + 0.0 * t, 0.0 * t, 0.1 * t * t]
    rep = variation_crosscheck(sys_, V, A, hs=(0.01, 0.005, 0.0025))
    for ratio in rep.first_ratios + rep.second_ratios:
        assert 3.5 <= ratio <= 4.5


def test_window_beyond_span_rejected(mink_sphere):
    with pytest.raises(SpanError):
        find_focal_points(mink_sphere, window=(0.1, 10.0))


def test_close_focal_pair_in_flat_randers_is_resolved():
    # constant one-form: the spray vanishes, Jacobi coefficients are I + t S and
    # the focal parameters are -1/lambda for the eigenvalues of S (here 1.3e-3 apart)
    m = models.randers_static(4, 1.0, b0=[0.05, 0.03, -0.02])
    p = sm.sphere_patch(radius=1.0, grid=(1, 2))
    sys_ = p_system(m, p, p.grid[1], "minus", 1.05)
    expect = np.sort(-1.0 / np.linalg.eigvals(sys_.init.S).real)
    assert expect[1] - expect[0] > 1e-3
    rep = find_focal_points(sys_)
    got = [f.r for f in rep.focal]
    np.testing.assert_allclose(got, expect, rtol=1e-9)
    assert [f.multiplicity for f in rep.focal] == [1, 1]
