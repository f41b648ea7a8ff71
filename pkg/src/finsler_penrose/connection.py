"""Spray, Chern connection, Jacobi operator and Ricci curvature.

Index convention for Taylor tensors of L: z = (x, v), base indices 0..n-1,
fiber indices n..2n-1.  With g = L_vv / 2 and h = g^-1,

    G^i = 1/4 h^il (L_{x^k v^l} v^k - L_{x^l}),     geodesics: x'' + 2 G(x, x') = 0.

First and second derivatives of G in z follow by differentiating this
expression, which needs Taylor data of L up to order 4.  The Jacobi
operator along a geodesic with velocity v is minus the spray curvature

    R^i_k = 2 G^i_{x^k} - v^j G^i_{x^j v^k} + 2 G^j G^i_{v^j v^k} - G^i_{v^j} G^j_{v^k},

so that Jacobi fields in a parallel frame satisfy J'' = Jop J.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import jets
from .errors import DomainError, FrameError
from .spacetime import (SpacetimeModel, check_nondegenerate, lagrangian_taylor, metric_matrix,
                        sample_null_vectors, section_frame)

Array = np.ndarray


@dataclass(frozen=True)
class SprayCoefficients:
    x: Array
    v: Array
    G: Array
    g: Array
    dG: Optional[Array] = None  # (n, 2n): derivatives in z = (x, v)
    ddG: Optional[Array] = None  # (n, 2n, 2n)

    @property
    def N(self) -> Array:
        """Nonlinear connection N^i_j = dG^i / dv^j."""
        n = self.x.shape[0]
        return self.dG[:, n:]


def _pieces(T, v, n, order):
    """g, h, b and their z-derivatives up to ``order`` from Taylor tensors."""
    X, V = slice(0, n), slice(n, 2 * n)
    T1, T2 = T[1], T[2]
    g = 0.5 * T2[V, V]
    h = np.linalg.inv(g)
    b = T2[X, V].T @ v - T1[X]
    out = {"g": g, "h": h, "b": b}
    if order >= 1:
        T3 = T[3]
        gd = 0.5 * T3[V, V, :]
        E = np.zeros((n, 2 * n))
        E[:, n:] = T2[X, V].T
        bd = np.einsum("kla,k->la", T3[X, V, :], v) + E - T2[X, :]
        Q = np.einsum("ip,pqa->iqa", h, gd)
        hd = -np.einsum("iqa,qj->ija", Q, h)
        out.update(gd=gd, bd=bd, Q=Q, hd=hd)
    if order >= 2:
        T4 = T[4]
        gdd = 0.5 * T4[V, V, :, :]
        F = np.zeros((n, 2 * n, 2 * n))
        F[:, :, n:] = np.transpose(T3[X, V, :], (1, 2, 0))
        bdd = np.einsum("klab,k->lab", T4[X, V, :, :], v) + F + F.transpose(0, 2, 1) - T3[X, :, :]
        hQQ = np.einsum("ipa,pqb,qj->ijab", Q, Q, h)
        hdd = hQQ + hQQ.transpose(0, 1, 3, 2) - np.einsum("ip,pqab,qj->ijab", h, gdd, h)
        out.update(gdd=gdd, bdd=bdd, hdd=hdd)
    return out


def spray(model: SpacetimeModel, x, v, order: int = 0) -> SprayCoefficients:
    """Spray coefficients G(x, v); ``order`` 1 or 2 adds z-derivatives."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = model.dim
    T = lagrangian_taylor(model, x, v, order + 2)
    check_nondegenerate(0.5 * T[2][n:, n:], model.eps_deg)
    p = _pieces(T, v, n, order)
    G = 0.25 * p["h"] @ p["b"]
    dG = ddG = None
    if order >= 1:
        dG = 0.25 * (np.einsum("ila,l->ia", p["hd"], p["b"]) + p["h"] @ p["bd"])
    if order >= 2:
        t = np.einsum("ila,lb->iab", p["hd"], p["bd"])
        ddG = 0.25 * (np.einsum("ilab,l->iab", p["hdd"], p["b"]) + t + t.transpose(0, 2, 1)
                      + np.einsum("il,lab->iab", p["h"], p["bdd"]))
    return SprayCoefficients(x, v, G, p["g"], dG, ddG)


def geodesic_acceleration(model, x, v) -> Array:
    return -2.0 * spray(model, x, v).G


# ---------------------------------------------------------------------------
# Jacobi operator


@dataclass(frozen=True)
class JacobiOperator:
    x: Array
    v: Array
    matrix: Array  # w -> R_v(v, w) v
    g: Array

    def __call__(self, w) -> Array:
        return self.matrix @ np.asarray(w)


def _jop_from_spray(sp: SprayCoefficients) -> Array:
    n = sp.x.shape[0]
    v = sp.v
    Gx = sp.dG[:, :n]
    Gv = sp.dG[:, n:]
    Gxv = sp.ddG[:, :n, n:]
    Gvv = sp.ddG[:, n:, n:]
    R = 2 * Gx - np.einsum("j,ijk->ik", v, Gxv) + 2 * np.einsum("j,ijk->ik", sp.G, Gvv) - Gv @ Gv
    return -R


def jacobi_operator(model: SpacetimeModel, x, v) -> JacobiOperator:
    sp = spray(model, x, v, order=2)
    return JacobiOperator(sp.x, sp.v, _jop_from_spray(sp), sp.g)


def flag_curvature(model, x, v, w) -> float:
    """K_v(w) = g_v(R_v(v,w)w, v) / (L(v) g_v(w,w) - g_v(v,w)^2)."""
    J = jacobi_operator(model, x, v)
    w = np.asarray(w, dtype=float)
    g = J.g
    v = J.v
    den = float(v @ g @ v) * float(w @ g @ w) - float(v @ g @ w) ** 2
    if abs(den) < 1e-14 * max(1.0, float(w @ w) * float(v @ v)):
        raise DomainError("degenerate flag: span{v, w} is degenerate for g_v")
    return -float(w @ g @ J.matrix @ w) / den


# ---------------------------------------------------------------------------
# Chern connection


def _chern_parts(model, x, y, order):
    n = model.dim
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    T = lagrangian_taylor(model, x, y, order + 3)
    check_nondegenerate(0.5 * T[2][n:, n:], model.eps_deg)
    p = _pieces(T, y, n, order + 1)
    G = 0.25 * p["h"] @ p["b"]
    dG = 0.25 * (np.einsum("ila,l->ia", p["hd"], p["b"]) + p["h"] @ p["bd"])
    N = dG[:, n:]
    gd = p["gd"]
    # delta_j g_lk = d_{x^j} g_lk - N^m_j d_{y^m} g_lk, stored dg[l, k, j]
    dg = gd[:, :, :n] - np.einsum("mj,lkm->lkj", N, gd[:, :, n:])
    S = dg.transpose(0, 2, 1) + dg.transpose(1, 0, 2) - dg.transpose(2, 0, 1)
    # S[l, j, k] = dg[l,k,j] + dg[j,l,k] - dg[j,k,l]
    gamma = 0.5 * np.einsum("il,ljk->ijk", p["h"], S)
    return p, G, dG, N, dg, S, gamma


def chern_christoffel(model: SpacetimeModel, x, y) -> Array:
    """Gamma^i_jk(x, y) of the Chern connection with reference vector y."""
    return _chern_parts(model, x, y, 0)[-1]


def chern_christoffel_derivative(model: SpacetimeModel, x, y):
    """(Gamma, dGamma) with dGamma[i, j, k, a] = d Gamma^i_jk / d z_a, z = (x, y)."""
    n = model.dim
    p, G, dG, N, dg, S, gamma = _chern_parts(model, x, y, 1)
    t = np.einsum("ila,lb->iab", p["hd"], p["bd"])
    ddG = 0.25 * (np.einsum("ilab,l->iab", p["hdd"], p["b"]) + t + t.transpose(0, 2, 1)
                  + np.einsum("il,lab->iab", p["h"], p["bdd"]))
    Nd = ddG[:, n:, :]  # d N^m_j / d z_a
    gd, gdd = p["gd"], p["gdd"]
    dgd = (gdd[:, :, :n, :] - np.einsum("mja,lkm->lkja", Nd, gd[:, :, n:])
           - np.einsum("mj,lkma->lkja", N, gdd[:, :, n:, :]))
    Sd = dgd.transpose(0, 2, 1, 3) + dgd.transpose(1, 0, 2, 3) - dgd.transpose(2, 0, 1, 3)
    dgamma = 0.5 * (np.einsum("ila,ljk->ijka", p["hd"], S) + np.einsum("il,ljka->ijka", p["h"], Sd))
    return gamma, dgamma


def _derivative_along(curve: Callable, t: float):
    """Value and t-derivative of a jet-compatible curve t -> sequence."""
    T = jets.taylor_tensors(lambda s: curve(s[0]), [t], 1)
    return np.asarray(T[0], dtype=float), np.asarray(T[1], dtype=float)[:, 0]


def covariant_derivative(model: SpacetimeModel, gamma: Callable, W: Callable, X: Callable, t: float) -> Array:
    """D^W_gamma X at t: X' + Gamma(gamma, W)(gamma', X).

    ``gamma``, ``W``, ``X`` are callables of the curve parameter built from
    arithmetic and jets functions, so that t-derivatives are exact.
    """
    x, xd = _derivative_along(gamma, t)
    w = np.asarray([jets.value(c) for c in W(float(t))], dtype=float)
    Xv, Xd = _derivative_along(X, t)
    if not model.smooth(x, w):
        raise DomainError(f"reference field leaves the smooth domain at t = {t}")
    G = chern_christoffel(model, x, w)
    return Xd + np.einsum("ijk,j,k->i", G, xd, Xv)


# ---------------------------------------------------------------------------
# Ricci


def orthonormal_complement(g: Array, z: Array, rng: np.random.Generator, lightlike: bool) -> Array:
    """Columns e_i with g(e_i, e_j) = -delta_ij spanning a complement of z in z^perp.

    For lightlike z this is the n-2 dimensional spacelike frame orthogonal to
    z; for timelike z it spans the n-1 dimensional g-orthogonal complement.
    Gram-Schmidt on random seeds, re-seeding when a pivot is below 1e-10.
    """
    n = z.shape[0]
    k = n - 2 if lightlike else n - 1
    gz = g @ z
    # helper vector with g(z, a) != 0 to project onto z^perp
    a = gz / float(gz @ gz)
    a_dot = float(gz @ a)
    scale = float(np.abs(g).max())
    frame = []
    for _ in range(50 * n):
        if len(frame) == k:
            break
        w = rng.standard_normal(n)
        w = w - (float(gz @ w) / a_dot) * a
        for e in frame:
            w = w + float(w @ g @ e) * e
        q = float(w @ g @ w)
        if q >= -1e-10 * scale * float(w @ w):
            continue
        frame.append(w / np.sqrt(-q))
    if len(frame) < k:
        raise FrameError("could not build an orthonormal spacelike frame orthogonal to z")
    return np.array(frame).T


def ricci_scalar(model: SpacetimeModel, x, v, rng: np.random.Generator | None = None,
                 method: str = "auto") -> float:
    """Ric(v): trace of w -> R_v(v, w) v.

    For lightlike v (method 'auto' or 'frame') it is the frame sum
    sum_i g_v(Jop e_i, e_i) over a g_v-orthonormal spacelike frame orthogonal
    to v; otherwise (or method 'trace') the matrix trace.  The value scales
    like lambda^2 under v -> lambda v.
    """
    J = jacobi_operator(model, x, v)
    if method == "trace":
        return -float(np.trace(J.matrix))
    lv = float(J.v @ J.g @ J.v)
    scale = float(J.v @ J.v) * float(np.abs(J.g).max())
    lightlike = abs(lv) <= model.eps_cone * max(scale, 1e-300) * 10
    if method == "auto" and not lightlike:
        return -float(np.trace(J.matrix))
    if not lightlike:
        raise DomainError("frame formula requires a lightlike vector")
    rng = np.random.default_rng(0) if rng is None else rng
    E = orthonormal_complement(J.g, J.v, rng, lightlike=True)
    return float(np.einsum("ia,ij,jk,ka->", E, J.g, J.matrix, E))


@dataclass
class RicciScanReport:
    model: str
    passed: bool
    minimum: float
    mean: float
    samples: int
    worst: dict
    tolerance: float

    def to_dict(self):
        return {"model": self.model, "passed": self.passed, "min": self.minimum, "mean": self.mean,
                "samples": self.samples, "worst": self.worst, "tolerance": self.tolerance}


def null_ricci_scan(model: SpacetimeModel, points, rays_per_point: int = 8, seed: int = 0,
                    eps_ric: float = 1e-8) -> RicciScanReport:
    """Ric on random future null vectors (normalized theta(z) = 1) at each point."""
    rng = np.random.default_rng(seed)
    vals = []
    worst = {}
    best = np.inf
    for x in points:
        x = np.asarray(x, dtype=float)
        zs = sample_null_vectors(model, x, rays_per_point, rng)
        for z in zs:
            r = ricci_scalar(model, x, z, rng=rng)
            vals.append(r)
            if r < best:
                best = r
                worst = {"x": x.tolist(), "z": z.tolist(), "ric": r}
    vals = np.array(vals)
    mn = float(vals.min()) if vals.size else 0.0
    return RicciScanReport(model.name, bool(mn >= -eps_ric), mn, float(vals.mean()) if vals.size else 0.0,
                           int(vals.size), worst, eps_ric)
