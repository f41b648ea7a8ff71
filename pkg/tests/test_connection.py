import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import sample_points
from finsler_penrose import models
from finsler_penrose.connection import (chern_christoffel, flag_curvature, jacobi_operator, null_ricci_scan,
                                        ricci_scalar, spray)
from finsler_penrose.spacetime import metric_matrix, sample_null_vectors, sample_timelike_vectors


def test_schwarzschild_spray_and_chern_match_levi_civita(ks):
    m = models.schwarzschild(1.0)
    rng = np.random.default_rng(0)
    for x in sample_points("schwarzschild", 8, rng):
        Gam = ks.christoffel(x)
        for v in sample_timelike_vectors(m, x, 2, rng):
            G = spray(m, x, v).G
            np.testing.assert_allclose(G, 0.5 * np.einsum("ijk,j,k->i", Gam, v, v), atol=1e-10)
            np.testing.assert_allclose(chern_christoffel(m, x, v), Gam, atol=1e-10)


def test_schwarzschild_jacobi_operator_matches_riemann(ks):
    m = models.schwarzschild(1.0)
    rng = np.random.default_rng(1)
    for x in sample_points("schwarzschild", 6, rng):
        vs = list(sample_timelike_vectors(m, x, 2, rng)) + list(sample_null_vectors(m, x, 2, rng))
        for v in vs:
            J = jacobi_operator(m, x, v).matrix
            for w in np.eye(4):
                np.testing.assert_allclose(J @ w, ks.jacobi(x, v, w), atol=1e-8)


def test_vacuum_ricci_vanishes_and_conformal_model_is_negative():
    m = models.schwarzschild(1.0)
    rep = null_ricci_scan(m, [np.array([0.0, 3.0, 1.0, -0.5]), np.array([0.0, 0.7, 0.2, 0.1])], 6, 0)
    assert rep.passed and abs(rep.minimum) < 1e-8
    timelike = sample_timelike_vectors(m, [0.0, 3.0, 1.0, -0.5], 3, np.random.default_rng(0))
    for v in timelike:
        assert abs(ricci_scalar(m, [0.0, 3.0, 1.0, -0.5], v)) < 1e-8
    bad = null_ricci_scan(models.conformal_minkowski(4, 0.5), [np.array([0.0, 0.1, 0.0, 0.0])], 6, 0)
    assert not bad.passed and bad.minimum < 0


def test_minkowski_is_flat():
    m = models.minkowski()
    x = np.array([1.0, 2.0, -1.0, 0.5])
    v = np.array([2.0, 0.3, 0.5, -0.2])
    assert np.all(spray(m, x, v).G == 0)
    assert np.max(np.abs(jacobi_operator(m, x, v).matrix)) == 0
    assert flag_curvature(m, x, v, [0.0, 1.0, 0.0, 0.0]) == 0


def test_randers_constant_form_is_flat():
    # constant one-form: the spray vanishes identically
    m = models.randers_static(4, 1.0, b0=[0.4, 0.1, -0.2])
    rng = np.random.default_rng(2)
    x = np.array([0.0, 1.0, 0.5, 0.2])
    for v in sample_timelike_vectors(m, x, 4, rng):
        assert np.max(np.abs(spray(m, x, v).G)) < 1e-12
        assert np.max(np.abs(jacobi_operator(m, x, v).matrix)) < 1e-10


def test_randers_spray_satisfies_euler_lagrange():
    # 2 G^i = g^{ij} (d2L/dv^j dx^k v^k - dL/dx^j) / 2 checked against finite differences of L
    m = models.randers_static(4, 1.0, b0=[0.2, 0.0, 0.1], B=np.diag([0.1, -0.05, 0.08]))
    rng = np.random.default_rng(3)
    x = np.array([0.0, 0.8, -0.4, 0.3])
    h = 1e-5
    for v in sample_timelike_vectors(m, x, 3, rng):
        g = metric_matrix(m, x, v)
        dLdx = np.array([(m.L(x + h * e, v) - m.L(x - h * e, v)) / (2 * h) for e in np.eye(4)])

        def dLdv(xx):
            return np.array([(m.L(xx, v + h * e) - m.L(xx, v - h * e)) / (2 * h) for e in np.eye(4)])

        mixed = np.array([(dLdv(x + h * e) - dLdv(x - h * e)) / (2 * h) for e in np.eye(4)]).T
        G_fd = 0.25 * np.linalg.solve(g, mixed @ v - dLdx)
        np.testing.assert_allclose(spray(m, x, v).G, G_fd, atol=1e-5)


@pytest.mark.parametrize("name", ["schwarzschild", "randers_static"])
def test_jacobi_operator_identities(builtin_models, name):
    m = builtin_models[name]
    rng = np.random.default_rng(4)
    for x in sample_points(name, 4, rng):
        for v in sample_timelike_vectors(m, x, 3, rng):
            J = jacobi_operator(m, x, v)
            scale = max(1.0, np.abs(J.matrix).max())
            # R(v, v)v = 0 and g_v(R(v, w)v, v) = 0
            assert np.max(np.abs(J.matrix @ v)) < 1e-9 * scale * np.linalg.norm(v)
            assert np.max(np.abs(v @ J.g @ J.matrix)) < 1e-9 * scale * np.linalg.norm(v) ** 2
            # self-adjoint for g_v
            S = J.g @ J.matrix
            np.testing.assert_allclose(S, S.T, atol=1e-9 * scale)


@given(st.floats(0.2, 4.0), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_spray_and_jacobi_homogeneity(lam, seed):
    m = models.schwarzschild_randers(1.0, 0.05)
    rng = np.random.default_rng(seed)
    x = sample_points("schwarzschild", 1, rng)[0]
    v = sample_timelike_vectors(m, x, 1, rng)[0]
    G1, G2 = spray(m, x, v).G, spray(m, x, lam * v).G
    np.testing.assert_allclose(G2, lam ** 2 * G1, atol=1e-10 * max(1.0, lam ** 2 * np.abs(G1).max()))
    J1, J2 = jacobi_operator(m, x, v).matrix, jacobi_operator(m, x, lam * v).matrix
    np.testing.assert_allclose(J2, lam ** 2 * J1, atol=1e-8 * max(1.0, lam ** 2 * np.abs(J1).max()))
