"""Geodesics, parallel transport and completeness probing."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .connection import jacobi_operator, spray
from .errors import ChartExitError, DegeneracyError, DomainError, InputError
from .ode import ODEResult, dopri5
from .spacetime import SpacetimeModel, classify_vector

Array = np.ndarray


@dataclass(frozen=True)
class GeodesicTolerances:
    rtol: float = 1e-10
    atol: float = 1e-12
    eps_L: float = 1e-8
    h_max: float = np.inf
    max_steps: int = 200000


def geodesic_rhs(model: SpacetimeModel):
    n = model.dim

    def rhs(t, y):
        x, v = y[:n], y[n:]
        return np.concatenate([v, -2.0 * spray(model, x, v).G])

    return rhs


def transport_rhs(model: SpacetimeModel, m: int):
    """Geodesic plus m vectors with X' = -N(x, v) X (parallel along the geodesic)."""
    n = model.dim

    def rhs(t, y):
        x, v = y[:n], y[n:2 * n]
        X = y[2 * n:].reshape(n, m)
        sp = spray(model, x, v, order=1)
        return np.concatenate([v, -2.0 * sp.G, (-sp.N @ X).ravel()])

    return rhs


def _termination(sol: ODEResult) -> str:
    if sol.status == "finished":
        return "reached-T"
    if sol.status == "error":
        if isinstance(sol.error, ChartExitError):
            return "left-chart"
        if isinstance(sol.error, (DegeneracyError, DomainError)):
            return "degeneracy"
    return "blowup"


def _boundary_estimate(model, x, v, h):
    """Where the straight continuation x + s v leaves the chart (bisection)."""
    lo, hi = 0.0, max(h, 1e-12)
    for _ in range(60):
        if not model.in_chart(x + hi * v):
            break
        lo, hi = hi, 2 * hi
    else:
        return None
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if model.in_chart(x + mid * v):
            lo = mid
        else:
            hi = mid
    return (x + lo * v).tolist()


@dataclass
class GeodesicPath:
    """Numerical geodesic with dense output and an L(x') log."""

    model: SpacetimeModel
    x0: Array
    v0: Array
    T: float
    solution: ODEResult
    termination: str
    message: str = ""
    boundary_point: Optional[list] = None
    L_log: Array = field(default_factory=lambda: np.zeros(0))

    @property
    def ts(self) -> Array:
        return self.solution.t

    @property
    def xs(self) -> Array:
        return self.solution.y[:, : self.model.dim]

    @property
    def vs(self) -> Array:
        return self.solution.y[:, self.model.dim: 2 * self.model.dim]

    @property
    def t_end(self) -> float:
        return self.solution.t_end

    def __call__(self, t):
        y = self.solution(t)
        n = self.model.dim
        return y[:n], y[n:2 * n]

    @property
    def L_drift(self) -> float:
        if self.L_log.size == 0:
            return 0.0
        return float(np.max(np.abs(self.L_log - self.L_log[0])))

    def termination_record(self) -> dict:
        return {
            "model": self.model.name, "x0": self.x0.tolist(), "v0": self.v0.tolist(), "T": self.T,
            "t_end": self.t_end, "termination": self.termination, "message": self.message,
            "boundary_point": self.boundary_point, "steps": len(self.ts) - 1,
            "L0": float(self.L_log[0]) if self.L_log.size else None, "L_drift": self.L_drift,
        }

    def write_csv(self, path, ricci: bool = False):
        from .connection import ricci_scalar

        n = self.model.dim
        header = ["t"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)] + ["L"]
        if ricci:
            header.append("Ric")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, x, v, lv in zip(self.ts, self.xs, self.vs, self.L_log):
                row = [repr(float(t))] + [repr(float(c)) for c in x] + [repr(float(c)) for c in v] + [repr(float(lv))]
                if ricci:
                    try:
                        row.append(repr(ricci_scalar(self.model, x, v, method="trace")))
                    except (DomainError, DegeneracyError):
                        row.append("nan")
                w.writerow(row)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.termination_record(), fh, indent=2, sort_keys=True)


def integrate_geodesic(model: SpacetimeModel, x0, v0, T: float,
                       tol: GeodesicTolerances | None = None) -> GeodesicPath:
    """Solve x'' = -2 G(x, x') on [0, T] with adaptive Dormand-Prince 5(4)."""
    tol = tol or GeodesicTolerances()
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    model.check_smooth(x0, v0)
    spray(model, x0, v0)  # raises on degenerate start
    sol = dopri5(geodesic_rhs(model), 0.0, np.concatenate([x0, v0]), T, rtol=tol.rtol, atol=tol.atol,
                 h_max=tol.h_max, max_steps=tol.max_steps)
    return _finish_path(model, x0, v0, T, sol)


def _finish_path(model, x0, v0, T, sol):
    n = model.dim
    term = _termination(sol)
    bnd = None
    if term == "left-chart":
        y = sol.ys[-1]
        bnd = _boundary_estimate(model, y[:n], y[n:2 * n], sol.last_h)
    L_log = np.array([model.L(y[:n], y[n:2 * n]) for y in sol.ys])
    return GeodesicPath(model, x0, v0, float(T), sol, term, sol.message, bnd, L_log)


def exp_map(model: SpacetimeModel, x, v, tol: GeodesicTolerances | None = None) -> Array:
    """exp_x(v): the geodesic with initial velocity v evaluated at parameter 1."""
    path = integrate_geodesic(model, x, v, 1.0, tol)
    if path.termination != "reached-T":
        raise DomainError(f"exp_x(v) undefined: geodesic stopped ({path.termination}) at t = {path.t_end}")
    return path(1.0)[0]


@dataclass
class ParallelField:
    """Geodesic with m jointly transported vectors (columns)."""

    model: SpacetimeModel
    solution: ODEResult
    m: int

    def __call__(self, t):
        n = self.model.dim
        y = self.solution(t)
        return y[:n], y[n:2 * n], y[2 * n:].reshape(n, self.m)

    @property
    def ts(self):
        return self.solution.t

    def gram(self, t) -> Array:
        x, v, X = self(t)
        g = spray(self.model, x, v).g
        return X.T @ g @ X

    def gram_drift(self) -> float:
        G0 = self.gram(self.ts[0])
        return float(max(np.max(np.abs(self.gram(t) - G0)) for t in self.ts))


def parallel_transport(model: SpacetimeModel, path: GeodesicPath, X0,
                       tol: GeodesicTolerances | None = None) -> ParallelField:
    """Transport X0 (vector or n x m matrix) along the geodesic of ``path``.

    The geodesic is re-integrated together with the vectors so that the
    frame equation sees exact, not interpolated, velocities.
    """
    tol = tol or GeodesicTolerances()
    X0 = np.asarray(X0, dtype=float)
    if X0.ndim == 1:
        X0 = X0[:, None]
    n, m = X0.shape
    y0 = np.concatenate([path.x0, path.v0, X0.ravel()])
    sol = dopri5(transport_rhs(model, m), 0.0, y0, path.t_end, rtol=tol.rtol, atol=tol.atol,
                 h_max=tol.h_max, max_steps=tol.max_steps)
    if sol.status != "finished":
        if isinstance(sol.error, DegeneracyError):
            raise DegeneracyError(f"transport degenerate at t = {sol.t_end}: {sol.message}",
                                  getattr(sol.error, "spectrum", None))
        raise DomainError(f"transport stopped at t = {sol.t_end}: {sol.status} {sol.message}")
    return ParallelField(model, sol, m)


# ---------------------------------------------------------------------------
# completeness


@dataclass
class ProbeResult:
    kind: str  # complete-up-to-budget | incomplete | left-chart
    T_star: Optional[float]
    t_end: float
    x_end: list
    v_end: list
    budget: float
    path: GeodesicPath
    curvature_ts: Array
    curvature: Array
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T_star": self.T_star, "t_end": self.t_end, "x_end": self.x_end,
                "v_end": self.v_end, "budget": self.budget, "termination": self.path.termination,
                "diagnostics": self.diagnostics}


def _extrapolate_breakdown(ts, K, window=12):
    """Fit s(t) = 1 / (d ln K / dt) by a line and return its root and exponent."""
    ts = np.asarray(ts)
    lk = np.log(np.asarray(K))
    if ts.size < 4:
        return None, None
    tm = 0.5 * (ts[1:] + ts[:-1])
    rate = np.diff(lk) / np.diff(ts)
    ok = rate > 0
    tm, rate = tm[ok][-window:], rate[ok][-window:]
    if tm.size < 3:
        return None, None
    s = 1.0 / rate
    b, a = np.polyfit(tm, s, 1)
    if b >= 0:
        return None, None
    return float(-a / b), float(-1.0 / b)


def completeness_probe(model: SpacetimeModel, x0, v0, budget: float,
                       tol: GeodesicTolerances | None = None, eta: float = 0.25,
                       blowup_factor: float = 1e9, diverge_factor: float = 1e3) -> ProbeResult:
    """Follow a future lightlike geodesic until the budget, curvature blowup or chart exit.

    Steps are limited by eta / (d ln|Jop| / dt) so that the approach to a
    curvature singularity is resolved geometrically.  'incomplete' is reported when the
    run stops at finite parameter while |Jop| diverges; T* is then the root
    of a linear fit of (d ln|Jop| / dt)^-1, exact for power-law blowup.
    """
    tol = tol or GeodesicTolerances()
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    cls = classify_vector(model, x0, v0)
    if (cls.causal, cls.orientation) != ("lightlike", "future"):
        raise InputError(f"completeness_probe needs a future lightlike vector, got {cls.causal}/{cls.orientation}")
    n = model.dim
    K0 = float(np.linalg.norm(jacobi_operator(model, x0, v0).matrix))
    K_ref = max(K0, 1.0 / budget ** 2)
    log_t, log_K = [0.0], [K0]
    memo = {}

    def curv(t, y):
        key = (t, y.tobytes())
        if key not in memo:
            memo.clear()
            memo[key] = float(np.linalg.norm(jacobi_operator(model, y[:n], y[n:]).matrix))
        return memo[key]

    def limit(t, y):
        # h <= eta / (d ln K / dt): steps shrink in proportion to the distance
        # to a power-law blowup, so the approach is geometric
        if len(log_K) < 2 or log_K[-1] <= log_K[-2] or log_K[-2] <= 0:
            return np.inf
        rate = (np.log(log_K[-1]) - np.log(log_K[-2])) / (log_t[-1] - log_t[-2])
        return eta / rate

    def stop(t, y):
        try:
            k = curv(t, y)
        except (DomainError, DegeneracyError):
            return True
        log_t.append(t)
        log_K.append(k)
        return k > blowup_factor * K_ref

    sol = dopri5(geodesic_rhs(model), 0.0, np.concatenate([x0, v0]), budget, rtol=tol.rtol, atol=tol.atol,
                 h_max=tol.h_max, max_steps=tol.max_steps, step_limit=limit, stop=stop)
    path = _finish_path(model, x0, v0, budget, sol)
    y_end = sol.ys[-1]
    Ks = np.array(log_K)
    diverging = Ks[-1] > diverge_factor * K_ref and Ks.size >= 4 and Ks[-1] > Ks[-2] > Ks[-3]
    diag = {"status": sol.status, "message": sol.message, "K0": K0, "K_end": float(Ks[-1]),
            "steps": len(sol.ts) - 1, "last_step": sol.last_h, "L_drift": path.L_drift}
    if sol.status == "finished":
        kind, T_star = "complete-up-to-budget", None
    elif path.termination == "left-chart" and not diverging:
        kind, T_star = "left-chart", sol.t_end
        diag["boundary_point"] = path.boundary_point
    elif diverging:
        T_fit, p = _extrapolate_breakdown(log_t, Ks)
        kind = "incomplete"
        T_star = sol.t_end if T_fit is None or T_fit < sol.t_end else T_fit
        diag["blowup_exponent"] = p
        diag["extrapolated"] = T_fit is not None
    else:
        kind, T_star = "left-chart", sol.t_end
        diag["boundary_point"] = path.boundary_point
    return ProbeResult(kind, T_star, sol.t_end, y_end[:n].tolist(), y_end[n:].tolist(), budget, path,
                       np.array(log_t), Ks, diag)
