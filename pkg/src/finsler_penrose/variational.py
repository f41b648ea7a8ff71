"""Jacobi fields, focal points, the index form and energy-variation checks.

Jacobi fields are integrated in a parallel frame E(t) (columns transported
by E' = -N E along the geodesic).  Writing J = E a, the Jacobi equation
J'' = R(sigma', J) sigma' becomes the matrix ODE a'' = E^{-1} Jop E a.

Frame layout for a P-type system (P of dimension r = n - 2):
  columns 0..r-1  g_z-orthonormal tangent basis T of P (g_z(T_a, T_b) = -delta)
  column  r       z = sigma'(0)
  column  r+1     w, the g_z-null vector orthogonal to P with g_z(z, w) = 1
For a point-type system the first n-2 columns are any g_z-orthonormal
spacelike complement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import jets
from .connection import _jop_from_spray, chern_christoffel_derivative, jacobi_operator, orthonormal_complement, spray
from .errors import DegeneracyError, DomainError, FrameError, InputError, SpanError
from .geodesic import GeodesicPath, GeodesicTolerances
from .ode import ODEResult, dopri5
from .spacetime import SpacetimeModel, metric_matrix
from .submanifold import SurfacePatch, normal_second_fundamental_form, second_fundamental_form

Array = np.ndarray


@dataclass
class JacobiInit:
    """Initial data in the frame E0: J(0) = E0 Y0, J'(0) = E0 Yp0."""

    kind: str  # 'P' or 'point'
    E0: Array
    Y0: Array
    Yp0: Array
    r: int
    S: Optional[Array] = None  # S~ on the tangent basis T (r x r)
    boundary: Optional[Array] = None  # g_z(z, S(T_a, T_b))
    u: Optional[tuple] = None


def _null_partner(g: Array, z: Array, T: Array) -> Array:
    """g-null w orthogonal to the g-orthonormal spacelike columns of T, g(z, w) = 1."""
    n = z.shape[0]
    # projections of coordinate axes onto the complement of span T
    Y = np.eye(n) + T @ (T.T @ g)
    gz = Y.T @ g @ z
    k = int(np.argmax(np.abs(gz)))
    y, gzy = Y[:, k], float(gz[k])
    if abs(gzy) < 1e-12 * np.linalg.norm(y) * np.linalg.norm(g @ z):
        raise FrameError("normal plane of P is degenerate for g_z")
    return y / gzy - float(y @ g @ y) / (2 * gzy * gzy) * z


def p_jacobi_init(model: SpacetimeModel, patch: SurfacePatch, u, z) -> JacobiInit:
    """P-Jacobi data at patch point u along the null normal z."""
    x, X = patch.derivatives(u, 1)
    z = np.asarray(z, dtype=float)
    n, r = X.shape
    g = metric_matrix(model, x, z)
    h = X.T @ g @ X
    try:
        Lc = np.linalg.cholesky(-h)
    except np.linalg.LinAlgError:
        raise FrameError("induced metric on P is not negative definite") from None
    C = np.linalg.inv(Lc).T
    T = X @ C
    St = normal_second_fundamental_form(model, patch, u, z) @ C
    S = -(T.T @ g @ St)
    sff = second_fundamental_form(model, patch, u, z)
    B = C.T @ sff.normal_pairing() @ C
    w = _null_partner(g, z, T)
    E0 = np.concatenate([T, z[:, None], w[:, None]], axis=1)
    Y0 = np.zeros((n, n))
    Y0[:r, :r] = np.eye(r)
    Yp0 = np.zeros((n, n))
    Yp0[:r, :r] = S
    Yp0[r:, r:] = np.eye(2)
    return JacobiInit("P", E0, Y0, Yp0, r, S, B, tuple(float(a) for a in np.atleast_1d(u)))


def point_jacobi_init(model: SpacetimeModel, x, v, seed: int = 0) -> JacobiInit:
    """Jacobi fields vanishing at the start (P a single point)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = x.shape[0]
    g = metric_matrix(model, x, v)
    lv = float(v @ g @ v)
    if abs(lv) > 1e-8 * float(v @ v):
        raise InputError("point-type systems are built for lightlike initial velocities")
    T = orthonormal_complement(g, v, np.random.default_rng(seed), lightlike=True)
    w = _null_partner(g, v, T)
    E0 = np.concatenate([T, v[:, None], w[:, None]], axis=1)
    return JacobiInit("point", E0, np.zeros((n, n)), np.eye(n), 0)


def _jacobi_rhs(model, n, m):
    def rhs(t, y):
        x, v = y[:n], y[n:2 * n]
        E = y[2 * n:2 * n + n * n].reshape(n, n)
        Y = y[2 * n + n * n:2 * n + n * n + n * m].reshape(n, m)
        Yp = y[2 * n + n * n + n * m:].reshape(n, m)
        sp = spray(model, x, v, order=2)
        K = np.linalg.solve(E, _jop_from_spray(sp) @ E)
        return np.concatenate([v, -2.0 * sp.G, (-sp.N @ E).ravel(), Yp.ravel(), (K @ Y).ravel()])

    return rhs


@dataclass
class JacobiSystem:
    """Dense matrix solution of the Jacobi equation along a geodesic."""

    model: SpacetimeModel
    path: GeodesicPath
    init: JacobiInit
    solution: ODEResult
    status: str

    @property
    def n(self) -> int:
        return self.model.dim

    @property
    def t_end(self) -> float:
        return self.solution.t_end

    @property
    def ts(self) -> Array:
        return self.solution.t

    def state(self, t):
        n = self.n
        m = self.init.Y0.shape[1]
        y = self.solution(t)
        x, v = y[:n], y[n:2 * n]
        E = y[2 * n:2 * n + n * n].reshape(n, n)
        Y = y[2 * n + n * n:2 * n + n * n + n * m].reshape(n, m)
        Yp = y[2 * n + n * n + n * m:].reshape(n, m)
        return x, v, E, Y, Yp

    def fields(self, t):
        """(J, J') as n x m matrices of coordinate components at t."""
        _, _, E, Y, Yp = self.state(t)
        return E @ Y, E @ Yp

    def focal_matrix(self, t) -> Array:
        """A(t) in frame coefficients; columns vanishing at 0 are divided by t."""
        _, _, _, Y, _ = self.state(t)
        A = Y.copy()
        if t > 0:
            zero_start = np.all(self.init.Y0 == 0, axis=0)
            A[:, zero_start] /= t
        return A

    def screen_matrix(self, t) -> Array:
        """Spacelike rows and columns of A(t).

        The z column is the field t sigma' and orthogonal fields have no
        w component, so A(t) is block triangular and singular exactly when
        this (n-2) x (n-2) block is.
        """
        k = self.n - 2
        return self.focal_matrix(t)[:k, :k]

    def lagrange_form(self, t) -> Array:
        """Omega_ij = g(J_i, J_j') - g(J_i', J_j); constant along the geodesic."""
        x, v, E, Y, Yp = self.state(t)
        g = metric_matrix(self.model, x, v, check=False)
        G = E.T @ g @ E
        return Y.T @ G @ Yp - Yp.T @ G @ Y

    def lagrange_drift(self, ts=None) -> float:
        ts = self.ts if ts is None else ts
        W0 = self.lagrange_form(ts[0])
        return float(max(np.max(np.abs(self.lagrange_form(t) - W0)) for t in ts))

    def frame_gram_drift(self) -> float:
        x, v, E, _, _ = self.state(self.ts[0])
        G0 = self.init.E0.T @ metric_matrix(self.model, x, v) @ self.init.E0
        worst = 0.0
        for t in self.ts:
            x, v, E, _, _ = self.state(t)
            worst = max(worst, float(np.max(np.abs(E.T @ metric_matrix(self.model, x, v, check=False) @ E - G0))))
        return worst

    def jacobi_residual(self, t, h: float = 1e-4) -> float:
        """|a'' - K a| with a'' from central differences of the dense solution."""
        x, v, E, Y, Yp = self.state(t)
        Ypp = (self.state(t + h)[4] - self.state(t - h)[4]) / (2 * h)
        K = np.linalg.solve(E, jacobi_operator(self.model, x, v).matrix @ E)
        return float(np.max(np.abs(Ypp - K @ Y)))

    def write_csv(self, path, samples: int = 200):
        import csv

        ts = np.linspace(0.0, self.t_end, samples)
        n = self.n
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}" for i in range(n)] + ["detA", "sigma_min"])
            for t in ts:
                x = self.state(t)[0]
                A = self.focal_matrix(t)
                sv = np.linalg.svd(A, compute_uv=False)
                w.writerow([repr(float(t))] + [repr(float(a)) for a in x]
                           + [repr(float(np.linalg.det(A))), repr(float(sv[-1] / sv[0]))])


def solve_jacobi(model: SpacetimeModel, path: GeodesicPath, init: JacobiInit,
                 tol: GeodesicTolerances | None = None, t_end: float | None = None) -> JacobiSystem:
    """Integrate geodesic, parallel frame and Jacobi matrix jointly on [0, t_end]."""
    tol = tol or GeodesicTolerances()
    n = model.dim
    E0 = np.asarray(init.E0, dtype=float)
    if abs(np.linalg.det(E0)) < 1e-12 * np.prod(np.linalg.norm(E0, axis=0)):
        raise FrameError("initial frame is degenerate")
    v0 = np.asarray(path.v0, dtype=float)
    if init.kind == "P" and np.linalg.norm(E0[:, init.r] - v0) > 1e-9 * np.linalg.norm(v0):
        raise InputError("path initial velocity must equal the null normal used for the P-Jacobi data")
    T = path.t_end if t_end is None else float(t_end)
    if T > path.t_end * (1 + 1e-12):
        raise SpanError(f"requested t_end {T} beyond geodesic span {path.t_end}")
    m = init.Y0.shape[1]
    y0 = np.concatenate([path.x0, v0, E0.ravel(), np.asarray(init.Y0, float).ravel(), np.asarray(init.Yp0, float).ravel()])
    sol = dopri5(_jacobi_rhs(model, n, m), 0.0, y0, T, rtol=tol.rtol, atol=tol.atol, h_max=tol.h_max,
                 max_steps=tol.max_steps)
    if len(sol.ts) < 2:
        raise DomainError(f"Jacobi integration failed at the start: {sol.message}")
    return JacobiSystem(model, path, init, sol, sol.status)


# ---------------------------------------------------------------------------
# focal points


@dataclass
class FocalPoint:
    r: float
    multiplicity: int
    method: str  # det-sign-change | sigma-min | breakdown-extrapolation
    bracket: tuple
    sigma: float

    def to_dict(self):
        return {"r": self.r, "multiplicity": self.multiplicity, "method": self.method,
                "bracket": list(self.bracket), "sigma_min": self.sigma}


@dataclass
class FocalReport:
    geodesic_id: str
    window: tuple
    delta0: float
    focal: list
    sign_changes: list
    sigma_minima: list
    t_end: float
    status: str
    bound: dict = field(default_factory=dict)

    @property
    def first(self) -> Optional[float]:
        return self.focal[0].r if self.focal else None

    def to_dict(self):
        return {"geodesic_id": self.geodesic_id, "window": list(self.window), "delta0": self.delta0,
                "focal_points": [f.to_dict() for f in self.focal],
                "diagnostics": {"det_sign_changes": self.sign_changes, "sigma_min_dips": self.sigma_minima,
                                "t_end": self.t_end, "integration_status": self.status},
                "bound": self.bound}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _indicators(system, t):
    """(scaled det, scaled singular values) of the screen block of A(t)."""
    A = system.screen_matrix(t)
    sv = np.linalg.svd(A, compute_uv=False)
    scale = max(1.0, sv[0])
    return np.linalg.det(A / scale), sv / scale


def find_focal_points(system: JacobiSystem, window=None, eps_focal: float = 1e-8,
                      rank_tol: float = 1e-8, subdivide: int = 4, geodesic_id: str = "",
                      breakdown_T: float | None = None, breakdown_tol: float = 1e-3) -> FocalReport:
    """Parameters in the window where A(t) drops rank.

    Candidates come from sign changes of det A (refined by brentq) and from
    local minima of the relative smallest singular value (refined by a
    bounded scalar minimization); a candidate is focal when that value is
    below ``rank_tol``.  The start-exclusion zone is 1e-3 of the span.
    When the geodesic breaks down at ``breakdown_T`` before the window ends,
    a linear extrapolation of sigma_min to zero within ``breakdown_tol``
    (relative) of breakdown_T is reported as a focal point at breakdown_T.
    """
    if system.init.kind not in ("P", "point"):
        raise InputError("focal search needs P-type or point-type initial data")
    span = system.path.t_end
    delta0 = 1e-3 * span
    a, b = (delta0, system.t_end) if window is None else (max(float(window[0]), delta0), float(window[1]))
    if b > system.t_end * (1 + 1e-12):
        raise SpanError(f"window end {b} beyond the Jacobi solution span {system.t_end}")
    ts = [t for t in system.ts if a < t < b]
    grid = [a]
    for t in ts + [b]:
        prev = grid[-1]
        for k in range(1, subdivide + 1):
            grid.append(prev + (t - prev) * k / subdivide)
    grid = np.unique(np.array(grid))
    dets, sigs, raw = [], [], []
    for t in grid:
        d, sv = _indicators(system, t)
        dets.append(d)
        sigs.append(sv[-1])
        raw.append(np.linalg.svd(system.screen_matrix(t), compute_uv=False))
    dets, sigs = np.array(dets), np.array(sigs)
    cands = []
    changes = []
    for i in range(len(grid) - 1):
        if dets[i] == 0.0:
            cands.append((grid[i], grid[i], grid[i], "det-sign-change"))
        elif dets[i] * dets[i + 1] < 0:
            t0 = brentq(lambda t: _indicators(system, t)[0], grid[i], grid[i + 1],
                        xtol=min(eps_focal / 4, 1e-12 * max(1.0, grid[i + 1])), rtol=4 * np.finfo(float).eps)
            changes.append(float(t0))
            cands.append((t0, grid[i], grid[i + 1], "det-sign-change"))
    minima = []
    sig = lambda t: _indicators(system, t)[1][-1]

    def dips(lo, hi, depth):
        # a rank drop inside a grid cell can hide a second one nearby (two
        # roots between samples leave det A with the same sign), so the
        # cell is searched again on both sides of every confirmed dip
        res = minimize_scalar(sig, bounds=(lo, hi), method="bounded",
                              options={"xatol": min(eps_focal / 4, 1e-12 * max(1.0, hi))})
        tm, fm = _polish_v(sig, float(res.x), float(res.fun), lo, hi)
        minima.append({"t": tm, "sigma_min": fm})
        cands.append((tm, lo, hi, "sigma-min"))
        if fm > rank_tol or depth == 0:
            return
        gap = max(10 * eps_focal, 1e-6 * abs(tm))
        if tm - gap - lo > gap:
            dips(lo, tm - gap, depth - 1)
        if hi - tm - gap > gap:
            dips(tm + gap, hi, depth - 1)

    last = len(grid) - 1
    for i in range(0, len(grid)):
        lo_ok = i == 0 or sigs[i] <= sigs[i - 1]
        hi_ok = i == last or sigs[i] <= sigs[i + 1]
        if lo_ok and hi_ok and sigs[i] < 0.5:
            dips(grid[max(i - 1, 0)], grid[min(i + 1, last)], 3)
    focal = []
    for t0, lo, hi, method in sorted(cands):
        _, sv = _indicators(system, t0)
        if sv[-1] > rank_tol:
            continue
        mult = int(np.sum(sv < max(rank_tol, 1e3 * sv[-1])))
        if focal and abs(focal[-1].r - t0) < max(10 * eps_focal, 1e-6 * abs(t0)):
            if method == "det-sign-change":
                focal[-1].method = method
            continue
        half = min(eps_focal / 4, 1e-12 * max(1.0, hi))
        focal.append(FocalPoint(float(t0), mult, method, (float(t0 - half), float(t0 + half)), float(sv[-1])))
    if breakdown_T is not None and (window is None or b >= system.t_end * (1 - 1e-12)):
        ext = _breakdown_focal(grid, np.array(raw), breakdown_T, breakdown_tol)
        if ext is not None and not focal:
            focal.append(ext)
    return FocalReport(geodesic_id, (float(a), float(b)), float(delta0), focal, changes, minima,
                       system.t_end, system.status)


def _polish_v(fun, t, f, lo, hi, rounds: int = 3):
    """Refine a minimum of sigma(t) ~ a |t - t0| by intersecting the two branches.

    The bounded scalar minimizer stops at about 1e-8 relative accuracy; the
    smallest singular value is locally V-shaped at a transversal zero, so
    two samples straddling t locate t0 to second order in their spacing.
    """
    d = max(1e-4 * (hi - lo), 10 * f)
    for _ in range(rounds):
        tl, tr = max(lo, t - d), min(hi, t + d)
        fl, fr = fun(tl), fun(tr)
        if fl + fr <= 0 or tr <= tl:
            break
        a = (fl + fr) / (tr - tl)
        tn = min(max(tl + fl / a, lo), hi)
        fn = fun(tn)
        if fn >= f:
            break
        t, f = tn, fn
        d = max(d * 1e-3, 10 * f, 1e-15 * max(1.0, abs(t)))
    return float(t), float(f)


def _breakdown_focal(grid, sigs, T, tol):
    """Screen singular values extrapolated linearly to zero over the last tenth.

    A focal point at the breakdown parameter T is reported when the
    smallest one reaches zero within tol * T of T; the multiplicity counts
    all singular values that do.
    """
    m = grid >= grid[0] + 0.9 * (grid[-1] - grid[0])
    if np.sum(m) < 4:
        return None
    mult = 0
    for j in range(sigs.shape[1]):
        p = np.polyfit(grid[m], sigs[m, j], 1)
        if p[0] < 0 and abs(-p[1] / p[0] - T) <= tol * T:
            mult += 1
    if mult == 0:
        return None
    return FocalPoint(float(T), mult, "breakdown-extrapolation", (float(grid[-1]), float(T)), float(sigs[-1, -1]))


def check_focal_bound(report: FocalReport, k_mean: float, eps_focal: float, ricci_ok: bool,
                      breakdown_T: float | None = None) -> dict:
    """Record for the bound r <= 1/k (k the mean null expansion, see README)."""
    rec = {"k_mean": k_mean, "inv_k": (1.0 / k_mean) if k_mean > 0 else None,
           "first_focal": report.first, "ricci_nonnegative": ricci_ok}
    if k_mean <= 0 or not ricci_ok:
        rec["status"] = "hypothesis-not-met"
    elif report.first is not None:
        rec["status"] = "satisfied" if report.first <= 1.0 / k_mean + eps_focal else "violated"
    elif breakdown_T is not None and breakdown_T < 1.0 / k_mean:
        rec["status"] = "not-applicable (geodesic breaks down before 1/k)"
    elif report.t_end < 1.0 / k_mean:
        rec["status"] = "not-applicable (geodesic not integrated up to 1/k)"
    else:
        rec["status"] = "violated"
    report.bound = rec
    return rec


def tangency_residual(system: JacobiSystem, c, t0: float, t1: float, samples: int = 200) -> float:
    """min over (t0, t1) of sin(angle) between J = E Y c and sigma'.

    Diagnostic for the statement that a P-Jacobi field with J(0) != 0
    vanishing first at r is never tangent to the geodesic on (0, r).
    """
    c = np.asarray(c, dtype=float)
    out = np.inf
    for t in np.linspace(t0, t1, samples + 2)[1:-1]:
        x, v, E, Y, _ = system.state(t)
        J = E @ (Y @ c)
        nj, nv = np.linalg.norm(J), np.linalg.norm(v)
        if nj == 0:
            return 0.0
        cos = abs(float(J @ v)) / (nj * nv)
        out = min(out, float(np.sqrt(max(0.0, 1 - cos * cos))))
    return out


def focal_null_vector(system: JacobiSystem, r: float) -> Array:
    """Coefficient vector c with A(r) c ~ 0 (as a combination of the Jacobi columns)."""
    A = system.focal_matrix(r)
    _, _, vt = np.linalg.svd(A)
    c = vt[-1].copy()
    zero_start = np.all(system.init.Y0 == 0, axis=0)
    c[zero_start] /= r
    return c


# ---------------------------------------------------------------------------
# index form


def _coeffs(f: Callable, t: float):
    T = jets.taylor_tensors(lambda s: f(s[0]), [float(t)], 1)
    return np.asarray(T[0], dtype=float), np.asarray(T[1], dtype=float)[:, 0]


def index_form(system: JacobiSystem, V: Callable, W: Callable, b: float | None = None,
               breaks: Sequence[float] = (), nodes: int = 24, orth_tol: float = 1e-9) -> float:
    """I(V, W) = int_0^b [g(V', W') + g(Jop V, W)] du - g(z, S(V(0), W(0))).

    V and W are callables u -> frame coefficients (length n) built from jets
    arithmetic, so V = E f and V' = E f'.  Admissibility is checked: V(b) = 0,
    V(0) tangent to P (or zero for point-type data) and g(V, sigma') = 0,
    which in the frame means the w-coefficient vanishes.
    """
    init = system.init
    n = system.n
    b = system.t_end if b is None else float(b)
    if b > system.t_end * (1 + 1e-12):
        raise SpanError(f"b = {b} beyond the Jacobi solution span {system.t_end}")
    r = init.r
    for F in (V, W):
        f0, _ = _coeffs(F, 0.0)
        fb, _ = _coeffs(F, b)
        if np.max(np.abs(fb)) > orth_tol:
            raise InputError("variation field must vanish at the endpoint")
        lim = r if init.kind == "P" else 0
        if np.max(np.abs(f0[lim:]), initial=0.0) > orth_tol:
            raise InputError("variation field at 0 must be tangent to P")
    pts = np.unique(np.concatenate([[0.0], [t for t in breaks if 0 < t < b], [b]]))
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        for xi, wi in zip(xg, wg):
            t = 0.5 * (hi - lo) * xi + 0.5 * (hi + lo)
            fv, dfv = _coeffs(V, t)
            fw, dfw = _coeffs(W, t)
            if abs(fv[n - 1]) > orth_tol or abs(fw[n - 1]) > orth_tol:
                raise InputError(f"variation field not g-orthogonal to the geodesic at u = {t}")
            x, v, E, _, _ = system.state(t)
            J = jacobi_operator(system.model, x, v)
            G = E.T @ J.g @ E
            val = float(dfv @ G @ dfw) + float(fw @ E.T @ J.g @ J.matrix @ E @ fv)
            total += 0.5 * (hi - lo) * wi * val
    if init.kind == "P" and r > 0:
        fv0, _ = _coeffs(V, 0.0)
        fw0, _ = _coeffs(W, 0.0)
        total -= float(fv0[:r] @ init.boundary @ fw0[:r])
    return total


def jacobi_field_coefficients(system: JacobiSystem, c) -> Callable:
    """Frame coefficients of the Jacobi field E Y c as a jets-compatible callable.

    Uses the cubic Hermite interpolant of (Y c, Y' c) on each accepted step,
    so the derivative is consistent with the Jacobi data.
    """
    c = np.asarray(c, dtype=float)
    ts = system.ts
    vals = [system.state(t) for t in ts]
    a = [s[3] @ c for s in vals]
    ap = [s[4] @ c for s in vals]

    def f(t):
        tv = jets.value(t)
        i = int(min(max(np.searchsorted(ts, tv) - 1, 0), len(ts) - 2))
        h = ts[i + 1] - ts[i]
        s = (t - ts[i]) / h
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return [h00 * a[i][k] + h10 * h * ap[i][k] + h01 * a[i + 1][k] + h11 * h * ap[i + 1][k]
                for k in range(len(c))]

    return f


# ---------------------------------------------------------------------------
# variations of energy


@dataclass
class VariationReport:
    hs: list
    first_residual: list
    second_residual: list
    first_ratios: list
    second_ratios: list
    samples: list

    def to_dict(self):
        return {"h": self.hs, "first_variation_residual": self.first_residual,
                "second_variation_residual": self.second_residual,
                "first_ratio": self.first_ratios, "second_ratio": self.second_ratios, "u": self.samples}


def _variation_data(system: JacobiSystem, V: Callable, A: Callable, u: float):
    """Coordinate data of the variation x(u, s) = sigma + s V + s^2/2 B at u.

    B = A - Gamma(sigma, sigma')(V, V) so that the covariant acceleration of
    the transversal curves at s = 0 equals A.  Returns the s-polynomial
    coefficients of position and velocity, plus the analytic first and
    second derivatives of f(s) = L(velocity).
    """
    model = system.model
    x, v, E, _, _ = system.state(u)
    f, df = _coeffs(V, u)
    a, da = _coeffs(A, u)
    sp = spray(model, x, v, order=1)
    N = sp.N
    acc = -2.0 * sp.G
    gam, dgam = chern_christoffel_derivative(model, x, v)
    Ed = -N @ E
    Vc = E @ f
    Vd = Ed @ f + E @ df
    Ac = E @ a
    Ad = Ed @ a + E @ da
    GVV = np.einsum("ijk,j,k->i", gam, Vc, Vc)
    dGVV = (np.einsum("ijka,j,k,a->i", dgam[..., :model.dim], Vc, Vc, v)
            + np.einsum("ijka,j,k,a->i", dgam[..., model.dim:], Vc, Vc, acc)
            + 2 * np.einsum("ijk,j,k->i", gam, Vd, Vc))
    B = Ac - GVV
    Bd = Ad - dGVV
    g = sp.g
    J = jacobi_operator(model, x, v).matrix
    Vp = E @ df
    Ap = E @ da
    first = 2.0 * float(Vp @ g @ v)
    second = 2.0 * (float(Ap @ g @ v) + float(Vc @ g @ J @ Vc) + float(Vp @ g @ Vp))
    return (x, Vc, B), (v, Vd, Bd), first, second


def variation_crosscheck(system: JacobiSystem, V: Callable, A: Callable, hs=(0.04, 0.02, 0.01),
                         samples: Sequence[float] | None = None) -> VariationReport:
    """Finite differences of f(u, s) = L(d/du x(u, s)) against the analytic variations.

    first:  1/2 df/ds   = g(V', sigma')
    second: 1/2 d2f/ds2 = g(A', sigma') + g(Jop V, V) + g(V', V')
    with Jop V = R(sigma', V) sigma'.  Residuals are maxima over the sample
    parameters; ratios compare consecutive step sizes.
    """
    model = system.model
    T = system.t_end
    us = list(np.linspace(0.05 * T, 0.95 * T, 7)) if samples is None else [float(s) for s in samples]
    data = [_variation_data(system, V, A, u) for u in us]
    r1, r2 = [], []
    for h in hs:
        e1 = e2 = 0.0
        for (P, Q, first, second) in data:
            vals = []
            for s in (-h, 0.0, h):
                xs = P[0] + s * P[1] + 0.5 * s * s * P[2]
                vs = Q[0] + s * Q[1] + 0.5 * s * s * Q[2]
                if not model.smooth(xs, vs):
                    raise DomainError("variation leaves the smooth domain; use smaller steps")
                vals.append(model.L(xs, vs))
            d1 = (vals[2] - vals[0]) / (2 * h)
            d2 = (vals[2] - 2 * vals[1] + vals[0]) / (h * h)
            e1 = max(e1, abs(d1 - first))
            e2 = max(e2, abs(d2 - second))
        r1.append(e1)
        r2.append(e2)
    rat = lambda r: [r[i] / r[i + 1] if r[i + 1] > 0 else float("inf") for i in range(len(r) - 1)]
    return VariationReport(list(hs), r1, r2, rat(r1), rat(r2), us)
