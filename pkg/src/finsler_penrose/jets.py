"""Forward-mode differentiation up to fourth order with nested dual numbers.

A nested dual number of depth d is a first order dual number whose parts are
dual numbers of depth d-1.  Flattened, it is a vector of 2**d components;
component ``s`` (a bit mask) multiplies the product of the infinitesimals
``eps_j`` for the bits ``j`` set in ``s``.  Every ``eps_j`` squares to zero and
they commute, so a product of two numbers is a subset convolution.

To get all mixed partials of order d at once, the engine carries many "lanes"
side by side: each lane is a sorted d-tuple of seed indices and level ``j``
of that lane is seeded with the direction ``tuple[j]``.  The component with
the low ``k`` bits set then holds the k-th mixed derivative along the first
``k`` seeds of the tuple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement, product
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError, UnsupportedOrderError

MAX_ORDER = 4


@lru_cache(maxsize=None)
def _product_table(depth: int):
    size = 1 << depth
    rows, left, right = [], [], []
    for s in range(size):
        t = s
        while True:
            rows.append(s)
            left.append(t)
            right.append(s ^ t)
            if t == 0:
                break
            t = (t - 1) & s
    starts = np.searchsorted(np.array(rows), np.arange(size))
    return np.array(left), np.array(right), starts


def _mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    depth = a.shape[0].bit_length() - 1
    left, right, starts = _product_table(depth)
    return np.add.reduceat(a[left] * b[right], starts, axis=0)


class HyperDual:
    """Flattened nested dual number; ``c`` has shape (2**depth, lanes)."""

    __slots__ = ("c",)
    __array_priority__ = 1000

    def __init__(self, c):
        self.c = c

    @property
    def real(self):
        return self.c[0]

    @property
    def value(self) -> float:
        return float(self.c[0, 0])

    def _other(self, other):
        if isinstance(other, HyperDual):
            return other.c
        return None

    def __add__(self, other):
        oc = self._other(other)
        if oc is None:
            c = self.c.copy()
            c[0] = c[0] + other
            return HyperDual(c)
        return HyperDual(self.c + oc)

    __radd__ = __add__

    def __neg__(self):
        return HyperDual(-self.c)

    def __pos__(self):
        return self

    def __sub__(self, other):
        oc = self._other(other)
        if oc is None:
            c = self.c.copy()
            c[0] = c[0] - other
            return HyperDual(c)
        return HyperDual(self.c - oc)

    def __rsub__(self, other):
        c = -self.c
        c[0] = c[0] + other
        return HyperDual(c)

    def __mul__(self, other):
        oc = self._other(other)
        if oc is None:
            return HyperDual(self.c * other)
        return HyperDual(_mul(self.c, oc))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, HyperDual):
            return self * _recip(other)
        return HyperDual(self.c / other)

    def __rtruediv__(self, other):
        return _recip(self) * other

    def __pow__(self, p):
        if isinstance(p, HyperDual):
            return exp(p * log(self))
        if float(p).is_integer():
            k = int(p)
            if k == 0:
                return self * 0.0 + 1.0
            base = self if k > 0 else _recip(self)
            k = abs(k)
            out = None
            while k:
                if k & 1:
                    out = base if out is None else out * base
                k >>= 1
                if k:
                    base = base * base
            return out
        a0 = self.c[0]
        if np.any(a0 <= 0):
            raise DomainError("non-integer power of a non-positive number")
        return _apply(self, [a0 ** (p - k) * _falling(p, k) for k in range(self.depth + 1)])

    def __rpow__(self, base):
        return exp(self * math.log(base))

    @property
    def depth(self) -> int:
        return self.c.shape[0].bit_length() - 1

    def __float__(self):
        return self.value

    def __repr__(self):
        return f"HyperDual(value={self.value!r}, depth={self.depth})"


def _falling(p, k):
    out = 1.0
    for i in range(k):
        out *= p - i
    return out


def _apply(x: HyperDual, derivs) -> HyperDual:
    """f(x) from the derivative values f^(k)(x0), k = 0..depth."""
    nil = x.c.copy()
    nil[0] = 0.0
    out = np.zeros_like(x.c)
    out[0] = derivs[0]
    term = nil
    for k in range(1, x.depth + 1):
        out = out + term * (derivs[k] / math.factorial(k))
        if k < x.depth:
            term = _mul(term, nil)
    return HyperDual(out)


def _recip(x: HyperDual) -> HyperDual:
    a0 = x.c[0]
    if np.any(a0 == 0):
        raise DomainError("division by zero in jet evaluation")
    return _apply(x, [(-1) ** k * math.factorial(k) * a0 ** (-k - 1) for k in range(x.depth + 1)])


def value(x) -> float:
    """Plain float part of a number or jet."""
    if isinstance(x, HyperDual):
        return x.value
    return float(x)


def sqrt(x):
    if isinstance(x, HyperDual):
        a0 = x.c[0]
        if np.any(a0 <= 0):
            raise DomainError("sqrt of a non-positive number is not differentiable")
        return _apply(x, [_falling(0.5, k) * a0 ** (0.5 - k) for k in range(x.depth + 1)])
    return np.sqrt(x)


def exp(x):
    if isinstance(x, HyperDual):
        e = np.exp(x.c[0])
        return _apply(x, [e] * (x.depth + 1))
    return np.exp(x)


def log(x):
    if isinstance(x, HyperDual):
        a0 = x.c[0]
        if np.any(a0 <= 0):
            raise DomainError("log of a non-positive number")
        ds = [np.log(a0)] + [(-1) ** (k - 1) * math.factorial(k - 1) * a0 ** (-k) for k in range(1, x.depth + 1)]
        return _apply(x, ds)
    return np.log(x)


def sin(x):
    if isinstance(x, HyperDual):
        s, c = np.sin(x.c[0]), np.cos(x.c[0])
        cyc = [s, c, -s, -c]
        return _apply(x, [cyc[k % 4] for k in range(x.depth + 1)])
    return np.sin(x)


def cos(x):
    if isinstance(x, HyperDual):
        s, c = np.sin(x.c[0]), np.cos(x.c[0])
        cyc = [c, -s, -c, s]
        return _apply(x, [cyc[k % 4] for k in range(x.depth + 1)])
    return np.cos(x)


def tanh(x):
    if isinstance(x, HyperDual):
        t = np.tanh(x.c[0])
        s = 1 - t * t
        ds = [t, s, -2 * t * s, s * (6 * t * t - 2), _tanh4(t)]
        return _apply(x, ds[: x.depth + 1])
    return np.tanh(x)


def _tanh4(t):
    # d/dx of s*(6t^2-2) with s = 1-t^2, ds/dx = -2ts, dt/dx = s
    s = 1 - t * t
    return -2 * t * s * (6 * t * t - 2) + s * 12 * t * s


def dot(a: Sequence, b: Sequence):
    out = 0.0
    for x, y in zip(a, b):
        out = out + x * y
    return out


# ---------------------------------------------------------------------------
# lane bookkeeping


@dataclass(frozen=True)
class _Plan:
    nseeds: int
    order: int
    lanes: tuple
    seeding: np.ndarray  # (order, nseeds, nlanes)
    lane_of: dict  # sorted k-tuple -> lane index whose first k entries equal it
    full_index: tuple  # per k: lane index for every k-tuple in product order


@lru_cache(maxsize=64)
def _plan(nseeds: int, order: int) -> _Plan:
    lanes = tuple(combinations_with_replacement(range(nseeds), order))
    seeding = np.zeros((order, nseeds, len(lanes)))
    for li, tup in enumerate(lanes):
        for j, s in enumerate(tup):
            seeding[j, s, li] = 1.0
    index = {tup: i for i, tup in enumerate(lanes)}
    lane_of = {}
    for k in range(1, order + 1):
        for tup in combinations_with_replacement(range(nseeds), k):
            lane_of[tup] = index[tup + (tup[-1],) * (order - k)]
    full = [None]
    for k in range(1, order + 1):
        full.append(np.array([lane_of[tuple(sorted(key))] for key in product(range(nseeds), repeat=k)]))
    return _Plan(nseeds, order, lanes, seeding, lane_of, tuple(full))


def _check_order(order):
    if not isinstance(order, (int, np.integer)) or order < 0:
        raise UnsupportedOrderError(f"order must be a non-negative integer, got {order!r}")
    if order > MAX_ORDER:
        raise UnsupportedOrderError(f"order {order} exceeds the supported maximum {MAX_ORDER}")


def _propagate(f: Callable, point: np.ndarray, dirs: np.ndarray, order: int):
    """Evaluate f on jets seeded along ``dirs`` (rows) at ``point``.

    Returns (plan, components) where components has shape
    (2**order, nlanes) + output shape.
    """
    plan = _plan(dirs.shape[0], order)
    nl = len(plan.lanes)
    size = 1 << order
    args = []
    for i in range(point.shape[0]):
        c = np.zeros((size, nl))
        c[0] = point[i]
        for j in range(order):
            c[1 << j] = dirs[:, i] @ plan.seeding[j]
        args.append(HyperDual(c))
    out = f(args)
    scalar = not isinstance(out, (list, tuple, np.ndarray)) or (isinstance(out, np.ndarray) and out.ndim == 0)
    items = [out] if scalar else list(out)
    comps = np.zeros((size, nl, len(items)))
    for k, item in enumerate(items):
        if isinstance(item, HyperDual):
            comps[:, :, k] = item.c
        else:
            comps[0, :, k] = float(item)
    if not np.all(np.isfinite(comps)):
        raise DomainError("non-finite derivative values")
    return plan, (comps[..., 0] if scalar else comps)


def taylor_tensors(f: Callable, point, order: int) -> list:
    """All partial derivative tensors of f at ``point`` up to ``order``.

    ``f`` maps a list of m numbers (floats or jets) to a number or a sequence.
    Returns [T0, T1, ..., T_order]; for vector output the leading axis of
    every T_k is the output index and the trailing k axes run over inputs.
    """
    _check_order(order)
    point = np.asarray(point, dtype=float)
    m = point.shape[0]
    if order == 0:
        out = f([float(p) for p in point])
        if isinstance(out, (list, tuple, np.ndarray)):
            return [np.array([value(o) for o in out])]
        return [np.array(value(out))]
    plan, comps = _propagate(f, point, np.eye(m), order)
    vec = comps.ndim == 3
    result = [comps[0, 0].copy()]
    for k in range(1, order + 1):
        idx = plan.full_index[k]
        block = comps[(1 << k) - 1][idx]
        if vec:
            result.append(np.moveaxis(block, -1, 0).reshape((comps.shape[2],) + (m,) * k))
        else:
            result.append(block.reshape((m,) * k))
    return result


@dataclass(frozen=True)
class Jet:
    """Mixed directional derivatives of a scalar field.

    ``partials`` maps a sorted tuple of seed indices (a multiset) to the
    derivative along those seeds, so the table is symmetric by construction.
    """

    value: float
    partials: Mapping[tuple, float]
    order: int
    seeds: tuple = field(default=())

    def partial(self, *idx) -> float:
        if len(idx) == 0:
            return self.value
        if len(idx) > self.order:
            raise UnsupportedOrderError(f"jet carries derivatives up to order {self.order}")
        return self.partials[tuple(sorted(idx))]


def evaluate_jet(f: Callable, x, v, seeds: Sequence, order: int, domain: Callable | None = None) -> Jet:
    """Directional derivatives of f(x, v) along seeds up to ``order``.

    ``seeds`` is a list of (slot, direction) with slot 'x' (base point) or
    'v' (fiber).  ``domain(x, v)`` if given must return True on valid input.
    """
    _check_order(order)
    if len(seeds) == 0:
        raise ValueError("at least one seed direction is required")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = x.shape[0]
    if domain is not None and not domain(x, v):
        raise DomainError("(x, v) outside the domain of the field")
    dirs = np.zeros((len(seeds), 2 * n))
    for i, (slot, d) in enumerate(seeds):
        d = np.asarray(d, dtype=float)
        if slot == "x":
            dirs[i, :n] = d
        elif slot == "v":
            dirs[i, n:] = d
        else:
            raise ValueError(f"seed slot must be 'x' or 'v', got {slot!r}")

    def g(z):
        return f(z[:n], z[n:])

    point = np.concatenate([x, v])
    if order == 0:
        return Jet(value(g(list(point))), {}, 0, tuple(seeds))
    plan, comps = _propagate(g, point, dirs, order)
    partials = {}
    for tup, lane in plan.lane_of.items():
        partials[tup] = float(comps[(1 << len(tup)) - 1, lane])
    return Jet(float(comps[0, 0]), partials, order, tuple(seeds))
