import csv

import numpy as np
import pytest

from conftest import sample_points
from finsler_penrose import models
from finsler_penrose.errors import InputError
from finsler_penrose.geodesic import (GeodesicTolerances, completeness_probe, exp_map, integrate_geodesic,
                                      parallel_transport)
from finsler_penrose.spacetime import metric_matrix, sample_null_vectors, sample_timelike_vectors


def test_minkowski_straight_line_and_csv(tmp_path):
    m = models.minkowski()
    x0 = np.array([0.5, -1.0, 2.0, 0.0])
    v0 = np.array([1.0, 0.6, 0.8, 0.0])
    path = integrate_geodesic(m, x0, v0, 5.0)
    assert path.termination == "reached-T"
    for t in np.linspace(0, 5, 11):
        x, v = path(t)
        np.testing.assert_allclose(x, x0 + t * v0, atol=1e-10)
        np.testing.assert_allclose(v, v0, atol=1e-10)
    out = tmp_path / "line.csv"
    path.write_csv(out, ricci=True)
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["t", "x0", "x1", "x2", "x3", "v0", "v1", "v2", "v3", "L", "Ric"]
    last = [float(a) for a in rows[-1]]
    np.testing.assert_allclose(last[1:5], x0 + 5.0 * v0, atol=1e-10)
    assert last[-1] == 0.0
    np.testing.assert_allclose(exp_map(m, x0, v0), x0 + v0, atol=1e-12)


def test_schwarzschild_geodesics_match_levi_civita_integration(ks):
    m = models.schwarzschild(1.0)
    rng = np.random.default_rng(0)
    ts = np.linspace(0, 4.0, 9)
    for x0 in sample_points("schwarzschild", 3, rng):
        x0 = x0 * (4.0 / np.linalg.norm(x0[1:])) * np.array([0, 1, 1, 1]) + np.array([x0[0], 0, 0, 0])
        for v0 in list(sample_timelike_vectors(m, x0, 1, rng)) + list(sample_null_vectors(m, x0, 1, rng)):
            v0 = v0 / np.linalg.norm(v0)
            path = integrate_geodesic(m, x0, v0, 4.0, GeodesicTolerances(rtol=1e-12, atol=1e-13))
            if path.termination != "reached-T":
                continue
            ref = ks.geodesic(x0, v0, 4.0, ts)
            for i, t in enumerate(ts):
                np.testing.assert_allclose(path(t)[0], ref.y[:4, i], atol=1e-7)


def test_photon_sphere_orbit_stays_at_three_M():
    m = models.schwarzschild(1.0)
    x0 = np.array([0.0, 3.0, 0.0, 0.0])
    v0 = np.array([1 / np.sqrt(3), 0.0, 1 / 3, 0.0])
    assert abs(m.L(x0, v0)) < 1e-15
    T = 3 * 2 * np.pi * 9  # three orbits: angular rate 1/9 at r = 3
    # the orbit is unstable with affine Lyapunov rate 1/9, so local errors grow by e^19
    path = integrate_geodesic(m, x0, v0, T, GeodesicTolerances(rtol=1e-14, atol=1e-15))
    assert path.termination == "reached-T"
    r = np.linalg.norm(path.xs[:, 1:], axis=1)
    assert np.max(np.abs(r - 3.0)) < 1e-6


def test_randers_null_geodesic_conserves_L():
    m = models.randers_static(4, 1.0, b0=[0.2, -0.1, 0.05], B=np.diag([0.1, 0.05, -0.08]))
    x0 = np.array([0.0, 0.3, -0.2, 0.1])
    z = sample_null_vectors(m, x0, 1, np.random.default_rng(1))[0]
    path = integrate_geodesic(m, x0, z, 3.0)
    assert path.termination == "reached-T"
    assert np.max(np.abs(path.L_log)) < 1e-8


@pytest.mark.parametrize("name", ["minkowski", "schwarzschild", "randers_static"])
def test_parallel_transport_gram_drift_and_self_parallelism(builtin_models, name):
    m = builtin_models[name]
    rng = np.random.default_rng(2)
    x0 = sample_points(name, 1, rng)[0]
    if name == "schwarzschild":
        x0[1:] *= 4.0 / np.linalg.norm(x0[1:])
    v0 = sample_timelike_vectors(m, x0, 1, rng)[0]
    v0 = v0 / np.sqrt(m.L(x0, v0))
    path = integrate_geodesic(m, x0, v0, 2.0)
    g = metric_matrix(m, x0, v0)
    # g_v-orthonormal frame starting with v0
    E = [v0]
    for w in rng.standard_normal((3, 4)):
        for e in E:
            w = w - float(w @ g @ e) / float(e @ g @ e) * e
        E.append(w / np.sqrt(abs(float(w @ g @ w))))
    E = np.array(E).T
    pf = parallel_transport(m, path, E)
    assert pf.gram_drift() < 1e-8
    for t in (0.5, 1.0, 2.0):
        _, v, X = pf(t)
        np.testing.assert_allclose(X[:, 0], path(t)[1], atol=1e-9)
        if name == "minkowski":
            np.testing.assert_allclose(X, E, atol=1e-12)


def test_probe_outcomes():
    mk = models.minkowski()
    res = completeness_probe(mk, np.zeros(4), [1.0, 1.0, 0.0, 0.0], 1e6)
    assert res.kind == "complete-up-to-budget"
    # ingoing principal null ray from r = M reaches r = 0 at affine parameter M
    s = models.schwarzschild(1.0)
    res = completeness_probe(s, [0.0, 1.0, 0.0, 0.0], [1.0, -1.0, 0.0, 0.0], 10.0)
    assert res.kind == "incomplete"
    assert abs(res.T_star - 1.0) < 0.01
    # a chart of radius 5 around the origin
    ball = models.minkowski(chart_radius=5.0)
    res = completeness_probe(ball, np.zeros(4), [1.0, 0.0, 1.0, 0.0], 100.0)
    assert res.kind == "left-chart"
    assert res.T_star == pytest.approx(5 / np.sqrt(2), rel=1e-3)
    with pytest.raises(InputError):
        completeness_probe(mk, np.zeros(4), [1.0, 0.0, 0.0, 0.0], 1.0)
