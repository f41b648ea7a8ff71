"""Built-in models and user models given by expression strings."""

from __future__ import annotations

import ast
import math
from typing import Mapping, Sequence

import numpy as np

from . import jets
from .errors import InputError
from .spacetime import SpacetimeModel

_SMOOTH_AXIS_EPS = 1e-7


def _e0(n):
    e = np.zeros(n)
    e[0] = 1.0
    return e


def minkowski(n: int = 4, chart_radius: float | None = None) -> SpacetimeModel:
    """L = (v^0)^2 - sum (v^i)^2; optional chart |x| < chart_radius."""

    def lag(x, v):
        out = v[0] * v[0]
        for i in range(1, n):
            out = out - v[i] * v[i]
        return out

    eta = np.diag([1.0] + [-1.0] * (n - 1))
    in_chart = (lambda x: True) if chart_radius is None else (lambda x: float(np.linalg.norm(x)) < chart_radius)
    return SpacetimeModel(
        name="minkowski", dim=n, lagrangian=lag,
        tau=lambda x: _e0(n), time_covector=lambda x: _e0(n),
        in_chart=in_chart, params={"n": n, "chart_radius": chart_radius},
        lorentz_metric=lambda x: eta.copy(),
    )


def _radius(xs):
    s = 0.0
    for c in xs:
        s = s + c * c
    return jets.sqrt(s)


def schwarzschild(M: float = 1.0, r_min: float | None = None) -> SpacetimeModel:
    """Schwarzschild in ingoing Kerr-Schild coordinates (t, x, y, z).

    L = vt^2 - |vs|^2 - (2M/r) (vt + xhat . vs)^2, regular across r = 2M;
    t is the ingoing Eddington-Finkelstein time and r = |x| the areal radius.
    """
    r_min = 1e-9 * M if r_min is None else r_min

    def lag(x, v):
        r = _radius(x[1:])
        lv = v[0] + (x[1] * v[1] + x[2] * v[2] + x[3] * v[3]) / r
        return v[0] * v[0] - v[1] * v[1] - v[2] * v[2] - v[3] * v[3] - (2.0 * M / r) * lv * lv

    def tau(x):
        r = float(np.linalg.norm(x[1:]))
        return np.concatenate([[1.0], -(2 * M / (r + 2 * M)) * np.asarray(x[1:]) / r])

    def metric(x):
        r = float(np.linalg.norm(x[1:]))
        l = np.concatenate([[1.0], np.asarray(x[1:]) / r])
        return np.diag([1.0, -1, -1, -1]) - (2 * M / r) * np.outer(l, l)

    return SpacetimeModel(
        name="schwarzschild", dim=4, lagrangian=lag, tau=tau, time_covector=lambda x: _e0(4),
        in_chart=lambda x: float(np.linalg.norm(x[1:])) > r_min,
        params={"M": M}, lorentz_metric=metric,
    )


def _randers_parts(b0, B, n):
    b0 = np.zeros(n - 1) if b0 is None else np.asarray(b0, dtype=float)
    B = np.zeros((n - 1, n - 1)) if B is None else np.asarray(B, dtype=float)
    if b0.shape != (n - 1,) or B.shape != (n - 1, n - 1):
        raise InputError("Randers one-form must have n-1 components (and B shape (n-1, n-1))")
    return b0, B


def _oneform(b0, B, xs):
    out = []
    for i in range(len(b0)):
        bi = float(b0[i])
        for j in range(len(b0)):
            if B[i, j] != 0.0:
                bi = bi + float(B[i, j]) * xs[j]
        out.append(bi)
    return out


def _spatial_smooth(x, v):
    vs = np.asarray(v[1:])
    return float(vs @ vs) > (_SMOOTH_AXIS_EPS ** 2) * float(np.asarray(v) @ np.asarray(v))


def randers_static(n: int = 4, Lambda: float = 1.0, b0=None, B=None) -> SpacetimeModel:
    """Static Finsler spacetime L = Lambda vt^2 - F(vs)^2 with F Randers.

    F(vs) = |vs| + b(x) . vs with b(x) = b0 + B xs.  L is not smooth on the
    timelike axis vs = 0; the smoothness predicate excludes it.  F is a
    Minkowski norm only where |b(x)| < 1; this is not enforced here so that
    validate_axioms can exhibit the failure.
    """
    b0, B = _randers_parts(b0, B, n)
    constant = not np.any(B)

    def lag(x, v):
        vs = v[1:]
        b = _oneform(b0, B, x[1:])
        F = _radius(vs) + jets.dot(b, vs)
        return Lambda * v[0] * v[0] - F * F

    return SpacetimeModel(
        name="randers_static", dim=n, lagrangian=lag,
        tau=lambda x: _e0(n), time_covector=lambda x: _e0(n),
        smooth=_spatial_smooth,
        reversible=not np.any(b0) and constant,
        params={"n": n, "Lambda": Lambda, "b0": b0.tolist(), "B": B.tolist()},
    )


def schwarzschild_randers(M: float = 1.0, eps: float = 0.02, direction=(0.0, 0.0, 1.0),
                          r_min: float | None = None) -> SpacetimeModel:
    """Kerr-Schild form over a flat Randers background.

    L = vt^2 - F(vs)^2 - (2M/r)(vt + xhat . vs)^2 with F(vs) = |vs| + eps d . vs;
    eps = 0 gives Schwarzschild.  Non-smooth on vs = 0 only.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    b = eps * d
    r_min = 1e-9 * M if r_min is None else r_min

    def lag(x, v):
        r = _radius(x[1:])
        vs = v[1:]
        lv = v[0] + (x[1] * v[1] + x[2] * v[2] + x[3] * v[3]) / r
        F = _radius(vs) + jets.dot(list(b), vs)
        return v[0] * v[0] - F * F - (2.0 * M / r) * lv * lv

    def tau(x):
        r = float(np.linalg.norm(x[1:]))
        return np.concatenate([[1.0], -(2 * M / (r + 2 * M)) * np.asarray(x[1:]) / r])

    return SpacetimeModel(
        name="schwarzschild_randers", dim=4, lagrangian=lag, tau=tau, time_covector=lambda x: _e0(4),
        smooth=_spatial_smooth,
        in_chart=lambda x: float(np.linalg.norm(x[1:])) > r_min,
        reversible=eps == 0,
        params={"M": M, "eps": eps, "direction": d.tolist()},
    )


def conformal_minkowski(n: int = 4, eps: float = 0.5) -> SpacetimeModel:
    """L = exp(eps |xs|^2) eta(v, v); negative null Ricci near the origin for eps > 0."""

    def lag(x, v):
        s = 0.0
        for c in x[1:]:
            s = s + c * c
        q = v[0] * v[0]
        for i in range(1, n):
            q = q - v[i] * v[i]
        return jets.exp(eps * s) * q

    def metric(x):
        return math.exp(eps * float(np.sum(np.asarray(x[1:]) ** 2))) * np.diag([1.0] + [-1.0] * (n - 1))

    return SpacetimeModel(
        name="conformal_minkowski", dim=n, lagrangian=lag,
        tau=lambda x: _e0(n), time_covector=lambda x: _e0(n),
        params={"n": n, "eps": eps}, lorentz_metric=metric,
    )


def sign_flipped(model: SpacetimeModel) -> SpacetimeModel:
    """-L with the same tau; used as a counterexample for the signature axiom."""
    lag = model.lagrangian
    return SpacetimeModel(
        name=model.name + "_flipped", dim=model.dim, lagrangian=lambda x, v: -lag(x, v),
        tau=model.tau, time_covector=model.time_covector, smooth=model.smooth,
        in_chart=model.in_chart, reversible=model.reversible, params=dict(model.params),
    )


BUILTINS = {
    "minkowski": minkowski,
    "schwarzschild": schwarzschild,
    "randers_static": randers_static,
    "schwarzschild_randers": schwarzschild_randers,
    "conformal_minkowski": conformal_minkowski,
}


def builtin(name: str, **params) -> SpacetimeModel:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise InputError(f"unknown built-in model {name!r}; known: {sorted(BUILTINS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise InputError(f"bad parameters for model {name!r}: {exc}") from None


# ---------------------------------------------------------------------------
# expression models

_FUNCS = {"sqrt": jets.sqrt, "exp": jets.exp, "log": jets.log, "sin": jets.sin,
          "cos": jets.cos, "tanh": jets.tanh}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def compile_expression(text: str, variables: Sequence[str], params: Mapping[str, float]):
    """Whitelisted arithmetic expression -> callable(values) usable with jets."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse expression {text!r}: {exc.msg} at column {exc.offset}") from None
    allowed = set(variables) | set(params) | set(_FUNCS) | {"pi"}
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Load)):
            continue
        if isinstance(node, ast.BinOp):
            if not isinstance(node.op, _BINOPS):
                raise InputError(f"operator {type(node.op).__name__} not allowed in {text!r}")
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise InputError(f"operator {type(node.op).__name__} not allowed in {text!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise InputError(f"only calls to {sorted(_FUNCS)} are allowed in {text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in allowed:
                raise InputError(f"unknown name {node.id!r} in {text!r}")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise InputError(f"constant {node.value!r} not allowed in {text!r}")
        elif isinstance(node, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)):
            continue
        else:
            raise InputError(f"syntax {type(node).__name__} not allowed in {text!r}")
    code = compile(tree, "<expression>", "eval")
    base = dict(_FUNCS)
    base["pi"] = math.pi
    base.update({k: float(v) for k, v in params.items()})
    names = list(variables)

    def fn(values):
        env = dict(base)
        env.update(zip(names, values))
        return eval(code, {"__builtins__": {}}, env)

    return fn


def expression_model(expression: str, dim: int, params: Mapping[str, float] | None = None,
                     tau=None, time_covector=None, smooth: str | None = None,
                     in_chart: str | None = None, name: str = "expression",
                     reversible: bool = False) -> SpacetimeModel:
    """User model from L(x0..x{n-1}, v0..v{n-1}) given as text.

    ``tau`` / ``time_covector`` are lists of numbers or expressions in x;
    ``smooth`` (in x and v) and ``in_chart`` (in x) are expressions that must
    be positive where L is smooth / inside the chart.
    """
    params = dict(params or {})
    xs = [f"x{i}" for i in range(dim)]
    vs = [f"v{i}" for i in range(dim)]
    fL = compile_expression(expression, xs + vs, params)

    def lag(x, v):
        return fL(list(x) + list(v))

    def field(spec, label):
        if spec is None:
            return lambda x: _e0(dim)
        if len(spec) != dim:
            raise InputError(f"{label} must have {dim} components")
        comps = [compile_expression(str(s), xs, params) for s in spec]
        return lambda x: np.array([float(c(list(x))) for c in comps])

    kw = {}
    if smooth is not None:
        fs = compile_expression(smooth, xs + vs, params)
        kw["smooth"] = lambda x, v: float(fs(list(x) + list(v))) > 0
    if in_chart is not None:
        fc = compile_expression(in_chart, xs, params)
        kw["in_chart"] = lambda x: float(fc(list(x))) > 0
    return SpacetimeModel(
        name=name, dim=dim, lagrangian=lag, tau=field(tau, "tau"),
        time_covector=field(time_covector, "time_covector"), reversible=reversible,
        params={"expression": expression, **params}, **kw,
    )
