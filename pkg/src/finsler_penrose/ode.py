"""Dormand-Prince 5(4) integrator with PI step control and dense output.

Written here rather than taken from scipy because the geodesic code needs
three things solve_ivp does not offer together: right-hand sides that raise
domain errors on trial stages (treated as step rejections), a state-dependent
step limiter (curvature scale), and termination reasons that distinguish
step collapse from the end of the interval.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import GeometryToolkitError

C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# dense output polynomial coefficients (Shampine), same as scipy's RK45
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
ALPHA = 0.7 / 5
BETA = 0.4 / 5


@dataclass
class ODEResult:
    """Accepted steps and their dense-output polynomials.

    status is one of 'finished', 'stopped' (stop callback), 'step-collapse',
    'error' (right-hand side kept raising), 'nonfinite', 'max-steps'.
    """

    ts: list
    ys: list
    polys: list = field(default_factory=list)  # (t_old, h, y_old, Q)
    status: str = "finished"
    message: str = ""
    error: Optional[Exception] = None
    nfev: int = 0
    last_h: float = float("nan")

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.ts)

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.ys)

    @property
    def t_end(self) -> float:
        return float(self.ts[-1])

    def __call__(self, t: float) -> np.ndarray:
        t = float(t)
        if t < self.ts[0] - 1e-12 * max(1.0, abs(self.ts[0])) or t > self.ts[-1] + 1e-12 * max(1.0, abs(self.ts[-1])):
            raise ValueError(f"t = {t} outside the integrated span [{self.ts[0]}, {self.ts[-1]}]")
        if not self.polys:
            return np.array(self.ys[0], copy=True)
        i = min(max(bisect_right(self.ts, t) - 1, 0), len(self.polys) - 1)
        t_old, h, y_old, Q = self.polys[i]
        s = (t - t_old) / h
        p = np.array([s, s * s, s ** 3, s ** 4])
        return y_old + h * (Q @ p)


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def dopri5(fun: Callable, t0: float, y0, t_end: float, rtol: float = 1e-10, atol: float = 1e-12,
           h0: float | None = None, h_max: float = np.inf, h_min: float | None = None,
           max_steps: int = 200000, step_limit: Callable | None = None,
           stop: Callable | None = None) -> ODEResult:
    """Integrate y' = fun(t, y) from t0 to t_end (t_end > t0).

    Exceptions derived from the package error hierarchy raised by ``fun`` on
    a trial step shrink the step; if the step falls below ``h_min`` the
    integration ends with status 'error' and the exception is kept.
    """
    y = np.asarray(y0, dtype=float).copy()
    t = float(t0)
    span = float(t_end) - t
    if span <= 0:
        raise ValueError("t_end must exceed t0")
    res = ODEResult([t], [y.copy()])
    try:
        f = np.asarray(fun(t, y), dtype=float)
    except GeometryToolkitError as exc:
        res.status, res.error, res.message = "error", exc, str(exc)
        return res
    res.nfev += 1
    if h0 is None:
        scale = atol + rtol * np.abs(y)
        d0, d1 = _rms(y / scale), _rms(f / scale)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, abs(span), h_max)
    h = float(h0)
    err_prev = 1e-4
    K = np.empty((7, y.size))
    last_exc = None
    for _ in range(max_steps):
        hmin = h_min if h_min is not None else 1e-13 * max(1.0, abs(t))
        lim = h_max
        if step_limit is not None:
            try:
                lim = min(lim, float(step_limit(t, y)))
            except GeometryToolkitError as exc:
                res.status, res.error, res.message = "error", exc, str(exc)
                return res
        h = min(h, lim, t_end - t)
        rejected = False
        while True:
            if h < hmin and t_end - t > hmin:
                res.last_h = h
                if last_exc is not None:
                    res.status, res.error, res.message = "error", last_exc, str(last_exc)
                else:
                    res.status, res.message = "step-collapse", f"step size {h:.3e} below minimum at t = {t:.12g}"
                return res
            try:
                K[0] = f
                for s in range(1, 6):
                    dy = h * (np.asarray(A[s]) @ K[:s])
                    K[s] = fun(t + C[s] * h, y + dy)
                y_new = y + h * (B @ K[:6])
                f_new = np.asarray(fun(t + h, y_new), dtype=float)
                K[6] = f_new
                res.nfev += 6
            except GeometryToolkitError as exc:
                last_exc = exc
                h *= 0.25
                rejected = True
                continue
            if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
                h *= 0.25
                rejected = True
                last_exc = None
                if h < hmin:
                    res.status, res.message = "nonfinite", f"non-finite state near t = {t:.12g}"
                    return res
                continue
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = _rms(h * (E @ K) / scale)
            if err <= 1.0:
                if err == 0:
                    fac = MAX_FACTOR
                else:
                    fac = min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** -ALPHA * err_prev ** BETA))
                if rejected:
                    fac = min(1.0, fac)
                err_prev = max(err, 1e-4)
                break
            fac = max(MIN_FACTOR, SAFETY * err ** -ALPHA)
            h *= fac
            rejected = True
        last_exc = None
        Q = K.T @ P
        res.polys.append((t, h, y.copy(), Q))
        t = t + h
        y = y_new
        f = f_new
        res.ts.append(t)
        res.ys.append(y.copy())
        res.last_h = h
        if stop is not None and stop(t, y):
            res.status = "stopped"
            return res
        if t >= t_end - 1e-14 * max(1.0, abs(t_end)):
            res.status = "finished"
            return res
        h = h * fac
    res.status, res.message = "max-steps", f"step budget {max_steps} exhausted at t = {t:.12g}"
    return res
