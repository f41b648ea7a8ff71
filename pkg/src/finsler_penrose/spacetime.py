"""Lorentz-Finsler models on a single chart.

A model is a function L(x, v) that is positively 2-homogeneous in v, together
with a reference future timelike field tau(x) and a future covector theta(x)
whose level set theta(v) = 1 cuts the future cone in a compact section.
Everything geometric is derived from the Taylor tensors of L in z = (x, v).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import jets
from .errors import ChartExitError, DegeneracyError, DomainError

Array = np.ndarray


def _always(*args):
    return True


@dataclass(frozen=True, eq=False)
class SpacetimeModel:
    """Chart-based Finsler spacetime.

    ``lagrangian(x, v)`` receives two lists of numbers (floats or jets) and
    must only use arithmetic and the functions of :mod:`finsler_penrose.jets`.
    ``tau(x)`` is a future timelike vector, ``time_covector(x)`` a covector
    positive on the future cone.  ``smooth(x, v)`` marks where L is smooth
    (static examples exclude the timelike axis) and ``in_chart(x)`` the chart.
    """

    name: str
    dim: int
    lagrangian: Callable
    tau: Callable
    time_covector: Callable
    smooth: Callable = _always
    in_chart: Callable = _always
    reversible: bool = True
    eps_cone: float = 1e-9
    eps_deg: float = 1e-10
    params: dict = field(default_factory=dict)
    asserted: dict = field(default_factory=dict)
    lorentz_metric: Optional[Callable] = None  # set when L is a quadratic form q_x(v, v)

    def L(self, x, v) -> float:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return float(jets.value(self.lagrangian(list(x), list(v))))

    def tau_at(self, x) -> Array:
        return np.asarray(self.tau(np.asarray(x, dtype=float)), dtype=float)

    def theta_at(self, x) -> Array:
        return np.asarray(self.time_covector(np.asarray(x, dtype=float)), dtype=float)

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            raise DomainError(f"point must be a finite vector of length {self.dim}")
        if not self.in_chart(x):
            raise ChartExitError(f"point {x.tolist()} is outside the chart of model {self.name}")

    def check_smooth(self, x, v):
        self.check_point(x)
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,) or not np.all(np.isfinite(v)) or not np.any(v):
            raise DomainError("vector must be finite, nonzero and of the model dimension")
        if not self.smooth(np.asarray(x, dtype=float), v):
            raise DomainError(f"L is not smooth at v = {v.tolist()}")

    # cone membership -------------------------------------------------------
    def cone_membership(self, x, v) -> str:
        """'interior', 'boundary' or 'outside' of the future cone closure."""
        v = np.asarray(v, dtype=float)
        lv = self.L(x, v)
        band = self.eps_cone * float(v @ v)
        if float(self.theta_at(x) @ v) <= 0:
            return "outside"
        if abs(lv) <= band:
            return "boundary"
        return "interior" if lv > 0 else "outside"


# ---------------------------------------------------------------------------
# Taylor data of L


def _readonly(arrs):
    for a in arrs:
        a.setflags(write=False)
    return arrs


@lru_cache(maxsize=4096)
def _taylor_cached(model, xb: bytes, vb: bytes, order: int):
    x = np.frombuffer(xb)
    v = np.frombuffer(vb)
    n = model.dim

    def f(z):
        return model.lagrangian(z[:n], z[n:])

    return tuple(_readonly(jets.taylor_tensors(f, np.concatenate([x, v]), order)))


def lagrangian_taylor(model: SpacetimeModel, x, v, order: int):
    """Tensors [L, dL, d2L, ...] in z = (x, v) (indices 0..n-1 base, n..2n-1 fiber)."""
    x = np.ascontiguousarray(x, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    model.check_smooth(x, v)
    return _taylor_cached(model, x.tobytes(), v.tobytes(), order)


def fiber_derivatives(model, x, v, order):
    """Pure fiber derivatives of L up to ``order`` (list of tensors)."""
    T = lagrangian_taylor(model, x, v, order)
    n = model.dim
    s = slice(n, 2 * n)
    out = [T[0]]
    for k in range(1, order + 1):
        out.append(T[k][(s,) * k])
    return out


def check_nondegenerate(g: Array, eps: float, what="fundamental tensor"):
    ev = np.linalg.eigvalsh(g)
    scale = max(1.0, float(np.max(np.abs(ev))))
    if float(np.min(np.abs(ev))) < eps * scale:
        raise DegeneracyError(f"{what} is numerically degenerate", spectrum=ev)
    return ev


# ---------------------------------------------------------------------------
# tensors


@dataclass(frozen=True)
class FundamentalTensor:
    x: Array
    v: Array
    matrix: Array

    def __call__(self, a, b) -> float:
        return float(np.asarray(a) @ self.matrix @ np.asarray(b))

    @property
    def signature(self):
        ev = np.linalg.eigvalsh(self.matrix)
        return int(np.sum(ev > 0)), int(np.sum(ev < 0))


@dataclass(frozen=True)
class CartanTensor:
    x: Array
    v: Array
    components: Array

    def __call__(self, a, b, c) -> float:
        return float(np.einsum("ijk,i,j,k->", self.components, a, b, c))


def metric_matrix(model, x, v, check=True) -> Array:
    """g_v = Hessian of L/2 in the fiber, without causality precondition."""
    g = 0.5 * np.array(fiber_derivatives(model, x, v, 2)[2])
    if check:
        check_nondegenerate(g, model.eps_deg)
    return g


def _require_causal(model, x, v):
    v = np.asarray(v, dtype=float)
    m1 = model.cone_membership(x, v)
    m2 = model.cone_membership(x, -v)
    if m1 == "outside" and m2 == "outside":
        raise DomainError(f"vector {v.tolist()} is not causal")


def fundamental_tensor(model: SpacetimeModel, x, v) -> FundamentalTensor:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    model.check_smooth(x, v)
    _require_causal(model, x, v)
    return FundamentalTensor(x, v, metric_matrix(model, x, v))


def cartan_tensor(model: SpacetimeModel, x, v) -> CartanTensor:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    model.check_smooth(x, v)
    _require_causal(model, x, v)
    d = fiber_derivatives(model, x, v, 3)
    check_nondegenerate(0.5 * np.array(d[2]), model.eps_deg)
    return CartanTensor(x, v, 0.25 * np.array(d[3]))


# ---------------------------------------------------------------------------
# causal classification


@dataclass(frozen=True)
class VectorClass:
    causal: str  # timelike | lightlike | spacelike
    orientation: str  # future | past | n/a
    note: str = ""


def classify_vector(model: SpacetimeModel, x, v) -> VectorClass:
    """Causal character of v from cone membership of v and -v.

    Every vector in the boundary of the cone closure is lightlike here,
    because L is smooth across the cone; there is no separate class for
    boundary vectors that are not lightlike.
    """
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise DomainError("the zero vector has no causal character")
    plus = model.cone_membership(x, v)
    minus = model.cone_membership(x, -v)
    if plus == "interior":
        return VectorClass("timelike", "future")
    if minus == "interior":
        return VectorClass("timelike", "past")
    note = ""
    for w, mem, orient in ((v, plus, "future"), (-v, minus, "past")):
        if mem == "boundary":
            lv = model.L(x, w)
            if lv != 0.0:
                note = f"within cone tolerance band: L = {lv:.3e}"
            return VectorClass("lightlike", orient, note)
    return VectorClass("spacelike", "n/a")


# ---------------------------------------------------------------------------
# cone sections


def section_frame(model, x):
    """Center c (theta(c) = 1, inside the cone) and orthonormal basis of ker theta."""
    theta = model.theta_at(x)
    tau = model.tau_at(x)
    c = tau / float(theta @ tau)
    _, _, vt = np.linalg.svd(theta[None, :])
    return c, vt[1:].T


def section_radius(model, x, c, u, s_max=1e6):
    """Distance along u from c to the cone boundary on the section, or None."""
    def f(s):
        return model.L(x, c + s * u)

    lo, hi = 0.0, 1.0
    flo = f(lo)
    if flo <= 0:
        return None
    while f(hi) > 0:
        lo, hi = hi, 2 * hi
        if hi > s_max:
            return None
    return brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)


def sample_null_vectors(model, x, k: int, rng: np.random.Generator) -> Array:
    """k future null vectors on the section theta(z) = 1, random directions."""
    x = np.asarray(x, dtype=float)
    c, basis = section_frame(model, x)
    out = []
    tries = 0
    while len(out) < k:
        tries += 1
        if tries > 20 * k + 20:
            raise DomainError("could not sample null directions: cone section unbounded or empty")
        d = rng.standard_normal(basis.shape[1])
        u = basis @ (d / np.linalg.norm(d))
        s = section_radius(model, x, c, u)
        if s is None:
            continue
        z = c + s * u
        if model.smooth(x, z):
            out.append(z)
    return np.array(out)


def sample_timelike_vectors(model, x, k: int, rng: np.random.Generator):
    """Future timelike vectors c + s u (s inside the section) times random scale."""
    c, basis = section_frame(model, x)
    out = []
    tries = 0
    while len(out) < k and tries < 50 * k:
        tries += 1
        d = rng.standard_normal(basis.shape[1])
        u = basis @ (d / np.linalg.norm(d))
        s = section_radius(model, x, c, u)
        if s is None:
            continue
        v = (c + rng.uniform(0.0, 0.95) * s * u) * np.exp(rng.uniform(-1, 1))
        if model.smooth(x, v):
            out.append(v)
    return np.array(out)


# ---------------------------------------------------------------------------
# reverse inequalities


@dataclass(frozen=True)
class ReverseInequalityReport:
    residual: float
    equality: bool
    g_vw: float
    F_v: float
    F_w: float


def finsler_norm(model, x, v) -> float:
    return float(np.sqrt(max(model.L(x, v), 0.0)))


def reverse_inequality_check(model, x, v, w, tol=1e-9) -> ReverseInequalityReport:
    """g_v(v, w) - F(v) F(w) for future causal v, w (nonnegative up to tol)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    for name, vec in (("v", v), ("w", w)):
        if model.cone_membership(x, vec) == "outside":
            raise DomainError(f"{name} is not future causal")
    model.check_smooth(x, v)
    g = metric_matrix(model, x, v)
    gvw = float(v @ g @ w)
    fv, fw = finsler_norm(model, x, v), finsler_norm(model, x, w)
    res = gvw - fv * fw
    lam = float(v @ w) / float(v @ v)
    perp = np.linalg.norm(w - lam * v)
    equal = lam > 0 and perp <= 1e-9 * np.linalg.norm(w)
    return ReverseInequalityReport(res, bool(equal), gvw, fv, fw)


# ---------------------------------------------------------------------------
# axiom validation


@dataclass
class AxiomResult:
    passed: bool
    checked: int
    worst: float
    witnesses: list = field(default_factory=list)

    def to_dict(self):
        return {"passed": self.passed, "checked": self.checked, "worst": self.worst,
                "witnesses": self.witnesses[:5]}


@dataclass
class ValidationReport:
    model: str
    results: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def failed(self):
        return [k for k, r in self.results.items() if not r.passed]

    def to_dict(self):
        return {"model": self.model, "passed": self.passed,
                "axioms": {k: r.to_dict() for k, r in sorted(self.results.items())}}


@dataclass(frozen=True)
class AxiomSampler:
    points: tuple
    vectors_per_point: int = 20
    seed: int = 0
    tol: float = 1e-9


def _tolist(a):
    return [float(t) for t in np.ravel(a)]


def validate_axioms(model: SpacetimeModel, sampler: AxiomSampler) -> ValidationReport:
    """Sampled checks of homogeneity, cone shape, signature and indicatrix convexity."""
    rng = np.random.default_rng(sampler.seed)
    tol = sampler.tol
    res = {k: AxiomResult(True, 0, 0.0) for k in
           ("homogeneity", "cone", "boundary", "salience", "signature", "indicatrix_convexity")}

    def fail(key, value, witness):
        r = res[key]
        r.passed = False
        r.witnesses.append(witness)
        r.worst = max(r.worst, value)

    n = model.dim
    for x in sampler.points:
        x = np.asarray(x, dtype=float)
        try:
            model.check_point(x)
        except DomainError as exc:
            fail("cone", np.inf, {"x": _tolist(x), "error": str(exc)})
            continue
        theta = model.theta_at(x)
        tau = model.tau_at(x)
        if not (model.L(x, tau) > 0 and float(theta @ tau) > 0):
            fail("cone", np.inf, {"x": _tolist(x), "reason": "tau is not future timelike"})
            # look for signature witnesses among vectors with L > 0 anyway
            for _ in range(sampler.vectors_per_point):
                v = rng.standard_normal(n)
                if model.L(x, v) <= 0 or not model.smooth(x, v):
                    continue
                res["signature"].checked += 1
                ev = np.linalg.eigvalsh(metric_matrix(model, x, v, check=False))
                if (int(np.sum(ev > 0)), int(np.sum(ev < 0))) != (1, n - 1):
                    fail("signature", 1.0, {"x": _tolist(x), "v": _tolist(v), "eigenvalues": _tolist(ev)})
            continue
        c, basis = section_frame(model, x)
        # boundary points of the section along random rays
        bnd = []
        for _ in range(sampler.vectors_per_point):
            d = rng.standard_normal(n - 1)
            u = basis @ (d / np.linalg.norm(d))
            s = section_radius(model, x, c, u)
            res["cone"].checked += 1
            if s is None:
                fail("cone", np.inf, {"x": _tolist(x), "direction": _tolist(u),
                                      "reason": "cone section unbounded along direction"})
                continue
            bnd.append((u, s))
        inner = []
        for u, s in bnd:
            v = (c + rng.uniform(0.05, 0.95) * s * u) * np.exp(rng.uniform(-1, 1))
            if model.smooth(x, v):
                inner.append(v)
        # homogeneity
        for v in inner:
            lam = float(np.exp(rng.uniform(-2, 2)))
            lv = model.L(x, v)
            r = abs(model.L(x, lam * v) - lam * lam * lv) / max(1.0, abs(lam * lam * lv))
            res["homogeneity"].checked += 1
            res["homogeneity"].worst = max(res["homogeneity"].worst, r)
            if r > tol:
                fail("homogeneity", r, {"x": _tolist(x), "v": _tolist(v), "lambda": lam})
        # interior positivity and convexity of the cone
        for i, v in enumerate(inner):
            res["cone"].checked += 1
            if model.cone_membership(x, v) != "interior":
                fail("cone", 1.0, {"x": _tolist(x), "v": _tolist(v), "reason": "sampled interior vector not in cone"})
            w = inner[(i + 1) % len(inner)]
            a = rng.uniform(0.1, 0.9)
            m = a * v + (1 - a) * w
            if model.cone_membership(x, m) != "interior":
                fail("cone", 1.0, {"x": _tolist(x), "v": _tolist(v), "w": _tolist(w),
                                   "reason": "convex combination leaves the cone", "L": model.L(x, m)})
        # random pairs across the whole sampling box, for non-convex witnesses
        for _ in range(sampler.vectors_per_point):
            v1 = c + basis @ rng.uniform(-3, 3, n - 1)
            v2 = c + basis @ rng.uniform(-3, 3, n - 1)
            if model.cone_membership(x, v1) == "interior" and model.cone_membership(x, v2) == "interior":
                m = 0.5 * (v1 + v2)
                res["cone"].checked += 1
                if model.cone_membership(x, m) != "interior":
                    fail("cone", 1.0, {"x": _tolist(x), "v": _tolist(v1), "w": _tolist(v2),
                                       "reason": "convex combination leaves the cone", "L": model.L(x, m)})
        # midpoints of section boundary points stay in the closed cone; reaches far-out
        # non-convex regions that the box above misses
        for i in range(len(bnd)):
            for j in range(i + 1, len(bnd)):
                (u1, s1), (u2, s2) = bnd[i], bnd[j]
                m = c + 0.5 * (s1 * u1 + s2 * u2)
                res["cone"].checked += 1
                if model.smooth(x, m) and model.cone_membership(x, m) == "outside":
                    fail("cone", 1.0, {"x": _tolist(x), "v": _tolist(c + s1 * u1), "w": _tolist(c + s2 * u2),
                                       "reason": "midpoint of boundary points leaves the cone", "L": model.L(x, m)})
        # boundary: L ~ 0 and dL != 0
        for u, s in bnd:
            z = c + s * u
            if not model.smooth(x, z):
                continue
            res["boundary"].checked += 1
            lz = model.L(x, z)
            dl = np.array(fiber_derivatives(model, x, z, 1)[1])
            nz = float(z @ z)
            if abs(lz) > model.eps_cone * nz or np.linalg.norm(dl) < 1e-8 * np.sqrt(nz):
                fail("boundary", abs(lz), {"x": _tolist(x), "z": _tolist(z), "L": lz,
                                           "|dL|": float(np.linalg.norm(dl))})
        # salience: -v never in the closed future cone
        for v in inner + [c + s * u for u, s in bnd]:
            res["salience"].checked += 1
            if model.cone_membership(x, -v) != "outside":
                fail("salience", 1.0, {"x": _tolist(x), "v": _tolist(v)})
        # signature (one positive, n-1 negative) on causal vectors
        for v in inner + [c + s * u for u, s in bnd if model.smooth(x, c + s * u)]:
            res["signature"].checked += 1
            g = metric_matrix(model, x, v, check=False)
            ev = np.linalg.eigvalsh(g)
            scale = max(1.0, float(np.max(np.abs(ev))))
            npos = int(np.sum(ev > model.eps_deg * scale))
            nneg = int(np.sum(ev < -model.eps_deg * scale))
            if (npos, nneg) != (1, n - 1):
                fail("signature", 1.0, {"x": _tolist(x), "v": _tolist(v), "eigenvalues": _tolist(ev)})
        # indicatrix convexity on 2-D sections through v
        for v in inner:
            lv = model.L(x, v)
            if lv <= 0:
                continue
            g = metric_matrix(model, x, v, check=False)
            w = rng.standard_normal(n)
            w = w - (v @ g @ w) / (v @ g @ v) * v
            res["indicatrix_convexity"].checked += 1
            gww = float(w @ g @ w) / float(w @ w)
            if gww >= -tol:
                fail("indicatrix_convexity", gww, {"x": _tolist(x), "v": _tolist(v), "w": _tolist(w),
                                                   "g_v(w,w)": gww})
                continue
            # two unit points in span{v, w}; their midpoint lies in {L >= 1}
            e1 = v / np.sqrt(lv)
            w2 = e1 + 0.3 * w / np.sqrt(-float(w @ g @ w))
            if model.cone_membership(x, w2) != "interior" or not model.smooth(x, w2):
                continue
            e2 = w2 / np.sqrt(model.L(x, w2))
            mid = 0.5 * (e1 + e2)
            lm = model.L(x, mid)
            if lm < 1 - tol:
                fail("indicatrix_convexity", 1 - lm, {"x": _tolist(x), "v": _tolist(e1), "w": _tolist(e2),
                                                      "L(midpoint)": lm})
    return ValidationReport(model.name, res)
