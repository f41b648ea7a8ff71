import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import randers_oracle, sample_points
from finsler_penrose import models
from finsler_penrose.errors import DegeneracyError, DomainError
from finsler_penrose.spacetime import (AxiomSampler, cartan_tensor, classify_vector, fiber_derivatives,
                                       fundamental_tensor, metric_matrix, reverse_inequality_check,
                                       sample_null_vectors, sample_timelike_vectors, validate_axioms)


def test_minkowski_fundamental_tensor_is_eta():
    m = models.minkowski()
    g = fundamental_tensor(m, np.zeros(4), [2.0, 0.3, -0.1, 0.5])
    np.testing.assert_array_equal(g.matrix, np.diag([1.0, -1, -1, -1]))
    assert g.signature == (1, 3)


def test_schwarzschild_fundamental_tensor_matches_symbolic_metric(ks):
    m = models.schwarzschild(1.0)
    rng = np.random.default_rng(0)
    for x in sample_points("schwarzschild", 10, rng):
        for v in sample_timelike_vectors(m, x, 3, rng):
            g = fundamental_tensor(m, x, v).matrix
            np.testing.assert_allclose(g, ks.metric(x), atol=1e-10)
            assert np.max(np.abs(cartan_tensor(m, x, v).components)) < 1e-10


def test_randers_tensors_match_symbolic_hessian():
    b0 = (0.3, -0.2, 0.1)
    L, g_sym, C_sym = randers_oracle(4, b0)
    m = models.randers_static(4, 1.0, b0=list(b0))
    rng = np.random.default_rng(1)
    x = np.array([0.0, 0.5, 0.2, -0.3])
    for v in list(sample_timelike_vectors(m, x, 5, rng)) + list(sample_null_vectors(m, x, 5, rng)):
        assert m.L(x, v) == pytest.approx(L(v), abs=1e-12)
        np.testing.assert_allclose(metric_matrix(m, x, v), g_sym(v), atol=1e-11)
        np.testing.assert_allclose(cartan_tensor(m, x, v).components, C_sym(v), atol=1e-10)


@pytest.mark.parametrize("name", ["minkowski", "schwarzschild", "randers_static"])
def test_euler_relations_and_cartan_contraction(builtin_models, name):
    m = builtin_models[name]
    rng = np.random.default_rng(2)
    for x in sample_points(name, 5, rng):
        for v in sample_timelike_vectors(m, x, 4, rng):
            d = fiber_derivatives(m, x, v, 3)
            L0, dL, ddL, dddL = float(d[0]), np.asarray(d[1]), np.asarray(d[2]), np.asarray(d[3])
            g = 0.5 * ddL
            assert float(dL @ v) == pytest.approx(2 * L0, rel=1e-12, abs=1e-12)
            np.testing.assert_allclose(g @ v, 0.5 * dL, atol=1e-11 * max(1, np.abs(dL).max()))
            assert float(v @ g @ v) == pytest.approx(L0, rel=1e-11, abs=1e-12)
            C = 0.25 * dddL
            assert np.max(np.abs(np.einsum("ijk,i->jk", C, v))) < 1e-10 * max(1.0, np.abs(C).max())


@pytest.mark.parametrize("name", ["minkowski", "schwarzschild", "randers_static"])
def test_cone_tangency_orthogonality(builtin_models, name):
    # for null z, the cone's tangent space at z is g_z-orthogonal to z
    m = builtin_models[name]
    rng = np.random.default_rng(3)
    for x in sample_points(name, 4, rng):
        for z in sample_null_vectors(m, x, 6, rng):
            dL = np.asarray(fiber_derivatives(m, x, z, 1)[1])
            g = metric_matrix(m, x, z)
            # tangent vectors: kernel of dL
            _, _, vt = np.linalg.svd(dL[None, :])
            for t in vt[1:]:
                assert abs(float(z @ g @ t)) < 1e-10 * max(1.0, np.linalg.norm(z) ** 2)
            assert abs(float(z @ g @ z)) < 1e-8


@pytest.mark.parametrize("name", ["minkowski", "schwarzschild", "randers_static"])
def test_index_is_n_minus_one_on_causal_vectors(builtin_models, name):
    m = builtin_models[name]
    rng = np.random.default_rng(4)
    for x in sample_points(name, 5, rng):
        vs = list(sample_timelike_vectors(m, x, 5, rng)) + list(sample_null_vectors(m, x, 5, rng))
        for v in vs:
            ev = np.linalg.eigvalsh(metric_matrix(m, x, v))
            assert (np.sum(ev > 0), np.sum(ev < 0)) == (1, 3)


def test_classify_vector():
    m = models.minkowski()
    x = np.zeros(4)
    assert classify_vector(m, x, [1, 0, 0, 0]).causal == "timelike"
    assert classify_vector(m, x, [-1, 0.1, 0, 0]).orientation == "past"
    assert classify_vector(m, x, [1, 1, 0, 0]) .causal == "lightlike"
    assert classify_vector(m, x, [0, 1, 0, 0]).causal == "spacelike"
    with pytest.raises(DomainError):
        classify_vector(m, x, [0, 0, 0, 0])


@pytest.mark.parametrize("name", ["minkowski", "schwarzschild", "randers_static"])
def test_reverse_inequalities_on_thousand_pairs(builtin_models, name):
    m = builtin_models[name]
    rng = np.random.default_rng(5)
    count = 0
    for x in sample_points(name, 10, rng):
        vs = sample_timelike_vectors(m, x, 60, rng)
        ws = np.concatenate([sample_timelike_vectors(m, x, 40, rng), sample_null_vectors(m, x, 20, rng)])
        for v, w in zip(vs, ws):
            rep = reverse_inequality_check(m, x, v, w)
            assert rep.residual >= -1e-9 * max(1.0, abs(rep.g_vw))
            # reverse triangle inequality F(v + w) >= F(v) + F(w)
            fvw = np.sqrt(max(m.L(x, v + w), 0.0))
            assert fvw >= rep.F_v + rep.F_w - 1e-9 * max(1.0, fvw)
            count += 1
    assert count >= 600
    # equality on collinear pairs
    x = sample_points(name, 1, rng)[0]
    v = sample_timelike_vectors(m, x, 1, rng)[0]
    rep = reverse_inequality_check(m, x, v, 2.5 * v)
    assert rep.equality and abs(rep.residual) < 1e-9 * rep.g_vw


def test_degenerate_tensor_raises():
    m = models.expression_model("v0**2 - v1**2 - v2**2 - 0*v3**2", 4)
    with pytest.raises(DegeneracyError):
        fundamental_tensor(m, np.zeros(4), [1.0, 0.1, 0.0, 0.0])


def test_validate_axioms_outcomes():
    pts = ((0.0, 0.5, 1.0, 1.5), (0.0, 2.0, -1.0, 0.5))
    ok = validate_axioms(models.minkowski(), AxiomSampler(pts, 10, 0))
    assert ok.passed
    bad = validate_axioms(models.sign_flipped(models.minkowski()), AxiomSampler(pts, 10, 0))
    assert not bad.passed and "signature" in bad.failed()
    big = validate_axioms(models.randers_static(4, b0=[1.3, 0.0, 0.0]), AxiomSampler(pts, 20, 5))
    assert "cone" in big.failed()


@given(st.floats(0.1, 5.0), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_lagrangian_is_two_homogeneous(lam, seed):
    rng = np.random.default_rng(seed)
    m = models.schwarzschild_randers(1.0, 0.05)
    x = sample_points("schwarzschild", 1, rng)[0]
    v = sample_timelike_vectors(m, x, 1, rng)[0]
    assert m.L(x, lam * v) == pytest.approx(lam * lam * m.L(x, v), rel=1e-12)
    np.testing.assert_allclose(metric_matrix(m, x, lam * v), metric_matrix(m, x, v), atol=1e-10)
