"""Spacelike codimension-2 patches: null normals, fundamental forms, trapped test."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import jets
from .connection import chern_christoffel
from .errors import DegeneracyError, DomainError, GeometryError, InputError
from .spacetime import SpacetimeModel, classify_vector, lagrangian_taylor, metric_matrix, section_frame, section_radius

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class SurfacePatch:
    """Parametrized codimension-2 patch u -> x(u) in chart coordinates.

    ``embedding`` maps a list of r = n - 2 parameters (floats or jets) to a
    list of n coordinates.  ``closed`` is user-asserted compactness.
    """

    name: str
    n: int
    embedding: Callable
    grid: tuple
    closed: bool = False
    params: dict = field(default_factory=dict)

    @property
    def r(self) -> int:
        return self.n - 2

    def point(self, u) -> Array:
        return np.array([jets.value(c) for c in self.embedding([float(a) for a in u])])

    def derivatives(self, u, order: int = 2):
        """x(u), tangent matrix X (n x r), second derivatives Xuu (n x r x r)."""
        T = jets.taylor_tensors(lambda s: self.embedding(s), np.asarray(u, dtype=float), order)
        out = [np.asarray(T[0], dtype=float)]
        out += [np.asarray(t, dtype=float) for t in T[1:]]
        return out


def sphere_patch(center=(0.0, 0.0, 0.0), radius: float = 1.0, t0: float = 0.0, grid=(4, 8)) -> SurfacePatch:
    """Round 2-sphere {t = t0, |x - center| = radius} in a 4-dimensional chart."""
    c = [float(a) for a in center]
    rho = float(radius)

    def emb(u):
        th, ph = u
        s = jets.sin(th)
        return [t0 + 0.0 * th, c[0] + rho * s * jets.cos(ph), c[1] + rho * s * jets.sin(ph), c[2] + rho * jets.cos(th)]

    nt, nphi = grid
    pts = tuple((np.pi * (i + 0.5) / nt, 2 * np.pi * j / nphi) for i in range(nt) for j in range(nphi))
    return SurfacePatch("sphere", 4, emb, pts, closed=True,
                        params={"center": c, "radius": rho, "t0": t0, "grid": list(grid)})


def circle_patch(center=(0.0, 0.0), radius: float = 1.0, t0: float = 0.0, grid: int = 8) -> SurfacePatch:
    """Circle {t = t0, |x - center| = radius} in a 3-dimensional chart."""
    c = [float(a) for a in center]
    rho = float(radius)

    def emb(u):
        (a,) = u
        return [t0 + 0.0 * a, c[0] + rho * jets.cos(a), c[1] + rho * jets.sin(a)]

    pts = tuple((2 * np.pi * j / grid,) for j in range(grid))
    return SurfacePatch("circle", 3, emb, pts, closed=True,
                        params={"center": c, "radius": rho, "t0": t0, "grid": grid})


def plane_patch(n: int = 4, t0: float = 0.0, offset: float = 0.0, grid=(3, 3), extent: float = 1.0) -> SurfacePatch:
    """Flat plane {t = t0, x^{n-1} = offset} parametrized by the remaining coordinates."""

    def emb(u):
        return [t0 + 0.0 * u[0]] + list(u) + [offset + 0.0 * u[0]]

    axes = [np.linspace(-extent, extent, k) for k in grid]
    pts = tuple(tuple(p) for p in np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(grid), -1).T)
    return SurfacePatch("plane", n, emb, pts, closed=False, params={"t0": t0, "offset": offset})


def torus_patch(R: float = 2.0, a: float = 0.5, t0: float = 0.0, center=(0.0, 0.0, 0.0), grid=(4, 6)) -> SurfacePatch:
    """Coordinate torus of radii (R, a) in the slice t = t0 of a 4-dimensional chart."""
    c = [float(s) for s in center]

    def emb(u):
        p, q = u
        w = R + a * jets.cos(p)
        return [t0 + 0.0 * p, c[0] + w * jets.cos(q), c[1] + w * jets.sin(q), c[2] + a * jets.sin(p)]

    n1, n2 = grid
    pts = tuple((2 * np.pi * (i + 0.25) / n1, 2 * np.pi * j / n2) for i in range(n1) for j in range(n2))
    return SurfacePatch("torus", 4, emb, pts, closed=True, params={"R": R, "a": a, "t0": t0, "center": c})


def expression_patch(components, n: int, grid_points, params=None, closed: bool = False,
                     name: str = "expression") -> SurfacePatch:
    """Patch from n expression strings in u0..u{n-3}."""
    from .models import compile_expression

    if len(components) != n:
        raise InputError(f"embedding needs {n} components")
    names = [f"u{i}" for i in range(n - 2)]
    fns = [compile_expression(str(c), names, params or {}) for c in components]

    def emb(u):
        return [f(list(u)) + 0.0 * u[0] for f in fns]

    return SurfacePatch(name, n, emb, tuple(tuple(float(a) for a in p) for p in grid_points), closed=closed,
                        params={"components": list(components)})


# ---------------------------------------------------------------------------
# tangent / normal splitting


def _euclidean_normal(X: Array) -> Array:
    """Spatial direction normal to the spatial projection of the tangent space.

    Oriented so that (N, X_1, ..., X_r) is positively oriented in space; for
    the sphere and circle patches above this is the outward radial.
    """
    Xs = X[1:, :]
    m = Xs.shape[0]
    N = np.zeros(m)
    for i in range(m):
        # cofactors along the first column of [N | Xs]
        N[i] = (-1) ** i * np.linalg.det(np.delete(Xs, i, axis=0))
    return N / np.linalg.norm(N)


@dataclass
class NullNormalPair:
    """The two future null normals at a patch point, normalized g_z(z, tau) = 1.

    ``plus`` has the larger component along the spatial outward normal
    (outgoing for round spheres), ``minus`` the smaller (ingoing).
    """

    u: tuple
    x: Array
    X: Array
    plus: Array
    minus: Array
    residual: float
    seeds: int
    raw_count: int

    def as_tuple(self):
        return self.plus, self.minus


def _null_normal_system(model, x, X, theta, c, basis):
    n = model.dim

    def F(y):
        z = c + basis @ y
        g = metric_matrix(model, x, z, check=False)
        lz = float(z @ g @ z)
        res = np.concatenate([X.T @ g @ z, [lz]])
        jac = np.vstack([(g @ X).T @ basis, 2 * (g @ z) @ basis])
        return res, jac, z

    return F


def null_normals(model: SpacetimeModel, patch: SurfacePatch, u, seeds: int | None = None,
                 rng: np.random.Generator | None = None, tol: float = 1e-12) -> NullNormalPair:
    """Future null directions orthogonal to the patch at u.

    Solves g_z(z, X_a) = 0, L(z) = 0 on the section theta(z) = 1 by damped
    Newton from multistart seeds on the section boundary and deduplicates.
    """
    x, X = patch.derivatives(u, 1)
    n = model.dim
    if X.shape != (n, n - 2):
        raise InputError("patch must have dimension n - 2")
    if np.linalg.matrix_rank(X, tol=1e-10 * max(1.0, np.abs(X).max())) < n - 2:
        raise GeometryError(f"embedding derivative is rank deficient at u = {tuple(u)}")
    for a in range(n - 2):
        if classify_vector(model, x, X[:, a]).causal != "spacelike":
            raise GeometryError(f"tangent vector {a} is not spacelike at u = {tuple(u)}")
    theta = model.theta_at(x)
    c, basis = section_frame(model, x)
    F = _null_normal_system(model, x, X, theta, c, basis)
    rng = np.random.default_rng(12345) if rng is None else rng
    nseed = max(2 * (n - 2) + 2, seeds or 0)
    starts = []
    for k in range(n - 1):
        for sgn in (1, -1):
            starts.append(sgn * basis[:, k])
    while len(starts) < nseed:
        d = rng.standard_normal(n - 1)
        starts.append(basis @ (d / np.linalg.norm(d)))
    sols = []
    for dvec in starts:
        s = section_radius(model, x, c, dvec)
        if s is None:
            continue
        y = basis.T @ (s * dvec)
        y = _damped_newton(F, y, model, x, tol)
        if y is not None:
            sols.append(y)
    uniq = []
    for y in sols:
        if all(np.linalg.norm(y - w) > 1e-6 * max(1.0, np.linalg.norm(w)) for w in uniq):
            uniq.append(y)
    if len(uniq) != 2:
        raise GeometryError(f"found {len(uniq)} null normal directions at u = {tuple(u)} (expected 2)")
    zs = []
    worst = 0.0
    tau = model.tau_at(x)
    for y in uniq:
        z = c + basis @ y
        g = metric_matrix(model, x, z)
        z = z / float(z @ g @ tau)
        res, _, _ = F(basis.T @ (z / float(theta @ z) - c))
        worst = max(worst, float(np.max(np.abs(res))))
        zs.append(z)
    N = _euclidean_normal(X)
    zs.sort(key=lambda z: float(N @ z[1:] / z[0]) if z[0] != 0 else float(N @ z[1:]), reverse=True)
    return NullNormalPair(tuple(float(a) for a in u), x, X, zs[0], zs[1], worst, len(starts), len(sols))


def _damped_newton(F, y, model, x, tol, maxit=60):
    res, jac, z = F(y)
    nr = np.linalg.norm(res)
    for _ in range(maxit):
        if nr < tol * max(1.0, float(z @ z)):
            return y
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while lam > 1e-6:
            yt = y + lam * step
            zt_ok = True
            try:
                rt, jt, zt = F(yt)
            except (DomainError, DegeneracyError):
                zt_ok = False
            if zt_ok and np.linalg.norm(rt) < (1 - 0.25 * lam) * nr:
                y, res, jac, z, nr = yt, rt, jt, zt, np.linalg.norm(rt)
                break
            lam *= 0.5
        else:
            return y if nr < 1e3 * tol * max(1.0, float(z @ z)) else None
    return y if nr < 1e3 * tol * max(1.0, float(z @ z)) else None


# ---------------------------------------------------------------------------
# second fundamental forms


@dataclass
class SecondFundamentalForm:
    u: tuple
    z: Array
    X: Array
    g: Array  # g_z
    h: Array  # induced metric on the tangent basis
    components: Array  # (n, r, r): S_z(X_a, X_b)

    def __call__(self, a, b) -> Array:
        """S_z(a, b) for tangent coefficient vectors a, b."""
        return np.einsum("iab,a,b->i", self.components, a, b)

    def normal_pairing(self) -> Array:
        """Matrix g_z(z, S(X_a, X_b))."""
        return np.einsum("i,ij,jab->ab", self.z, self.g, self.components)


def _split(model, x, X, z):
    g = metric_matrix(model, x, z)
    h = X.T @ g @ X
    ev = np.linalg.eigvalsh(h)
    if np.min(np.abs(ev)) < 1e-12 * max(1.0, np.max(np.abs(ev))):
        raise DegeneracyError("g_z restricted to the tangent space is degenerate", spectrum=ev)
    hinv = np.linalg.inv(h)

    def tan(V):
        return X @ (hinv @ (X.T @ (g @ V)))

    return g, h, hinv, tan


def _check_normal(g, X, z, tol=1e-8):
    r = np.abs(X.T @ g @ z)
    if np.max(r) > tol * max(1.0, np.linalg.norm(z) * np.linalg.norm(X)):
        raise InputError(f"z is not g_z-orthogonal to the patch (residual {np.max(r):.2e})")


def second_fundamental_form(model: SpacetimeModel, patch: SurfacePatch, u, z) -> SecondFundamentalForm:
    """S_z(X_a, X_b) = nor_z(d_a d_b x + Gamma(x, z)(X_a, X_b))."""
    x, X, Xuu = patch.derivatives(u, 2)
    z = np.asarray(z, dtype=float)
    g, h, hinv, tan = _split(model, x, X, z)
    _check_normal(g, X, z)
    Gam = chern_christoffel(model, x, z)
    V = Xuu + np.einsum("ijk,ja,kb->iab", Gam, X, X)
    r = X.shape[1]
    S = np.empty_like(V)
    for a in range(r):
        for b in range(r):
            S[:, a, b] = V[:, a, b] - tan(V[:, a, b])
    return SecondFundamentalForm(tuple(np.atleast_1d(u)), z, X, g, h, S)


def mean_curvature(model: SpacetimeModel, patch: SurfacePatch, u, z) -> Array:
    """H_z: trace of S_z with respect to the induced metric."""
    S = second_fundamental_form(model, patch, u, z)
    return np.einsum("ab,iab->i", np.linalg.inv(S.h), S.components)


def normal_second_fundamental_form(model: SpacetimeModel, patch: SurfacePatch, u, z) -> Array:
    """Columns S~_z(X_a) = tan_z(D_{X_a} Z) for a normal field Z through z.

    Z(u) is the solution of g_Z(Z, X_a) = 0, L(Z) = 0, theta0(Z) = theta0(z)
    with theta0 frozen at the base point; the tangential part of the
    derivative does not depend on how the normal field is scaled.
    """
    x, X, Xuu = patch.derivatives(u, 2)
    z = np.asarray(z, dtype=float)
    n, r = X.shape
    g, h, hinv, tan = _split(model, x, X, z)
    _check_normal(g, X, z)
    theta = model.theta_at(x)
    T = lagrangian_taylor(model, x, z, 2)
    T1, T2 = np.asarray(T[1]), np.asarray(T[2])
    Jz = np.vstack([(g @ X).T, 2 * (g @ z)[None, :], theta[None, :]])
    Gam = chern_christoffel(model, x, z)
    out = np.empty((n, r))
    for b in range(r):
        Fb = np.empty(n)
        for a in range(r):
            Fb[a] = 0.5 * X[:, b] @ T2[:n, n:] @ X[:, a] + float(z @ g @ Xuu[:, a, b])
        Fb[r] = float(T1[:n] @ X[:, b])
        Fb[r + 1] = 0.0
        dZ = -np.linalg.solve(Jz, Fb)
        out[:, b] = tan(dZ + np.einsum("ijk,j,k->i", Gam, X[:, b], z))
    return out


# ---------------------------------------------------------------------------
# trapped test


@dataclass
class TrappedPoint:
    u: tuple
    x: list
    z_plus: list
    z_minus: list
    k_plus: float
    k_minus: float

    def to_dict(self, codim_factor):
        return {"u": list(self.u), "x": self.x, "z_plus": self.z_plus, "z_minus": self.z_minus,
                "k_plus": self.k_plus, "k_minus": self.k_minus,
                "k_mean_plus": self.k_plus / codim_factor, "k_mean_minus": self.k_minus / codim_factor}


@dataclass
class TrappedReport:
    patch: str
    trapped: bool
    k_min: float
    eps_trap: float
    points: list
    errors: list
    r: int

    def to_dict(self):
        return {"patch": self.patch, "trapped": self.trapped, "k_min": self.k_min, "eps_trap": self.eps_trap,
                "k_convention": "k = g_z(H, z) with H the trace of S_z; k_mean = k / (n - 2); z normalized g_z(z, tau) = 1",
                "points": [p.to_dict(self.r) for p in self.points], "errors": self.errors}

    def focal_bound(self, i: int, which: str) -> Optional[float]:
        """1/k_mean at grid point i for normal 'plus' or 'minus' (None if k <= 0)."""
        k = getattr(self.points[i], f"k_{which}") / self.r
        return 1.0 / k if k > 0 else None


def trapped_test(model: SpacetimeModel, patch: SurfacePatch, grid=None, eps_trap: float = 1e-10) -> TrappedReport:
    """k_z = g_z(H_z, z) for both null normals at every grid point."""
    pts, errs = [], []
    for u in (grid if grid is not None else patch.grid):
        try:
            pair = null_normals(model, patch, u)
            ks = []
            for z in (pair.plus, pair.minus):
                H = mean_curvature(model, patch, u, z)
                g = metric_matrix(model, pair.x, z)
                ks.append(float(H @ g @ z))
            pts.append(TrappedPoint(tuple(float(a) for a in u), pair.x.tolist(), pair.plus.tolist(),
                                    pair.minus.tolist(), ks[0], ks[1]))
        except (GeometryError, DomainError, DegeneracyError) as exc:
            errs.append({"u": [float(a) for a in u], "error": f"{type(exc).__name__}: {exc}"})
    kmin = min([min(p.k_plus, p.k_minus) for p in pts], default=float("nan"))
    trapped = bool(pts) and not errs and kmin > eps_trap
    return TrappedReport(patch.name, trapped, kmin, eps_trap, pts, errs, patch.r)
