"""Built-in parametric coefficient families.

``PowerFamily`` is the piecewise-linear drift/volatility system with power costs

    b(x, u)     = a_pos x^+ - a_neg x^- + b_pos . u^+ - b_neg . u^-
    sigma(x, u) = c_pos x^+ - c_neg x^- + d_pos u^+ - d_neg u^-
    f(x, u)     = |q x|^p + |r u|^p + |q_mix x|^(p/3) |r_mix u|^(2p/3)
    g(x)        = g_plus (x^+)^p + g_minus (x^-)^p

(u^+ and u^- taken componentwise).  With a_pos = a_neg, b_pos = b_neg, c_pos = c_neg,
d = 0 and no mixed term this is the power-LQ system for which the driver infimum
over R^m has a closed form.

``RatioFamily`` keeps the same drift/volatility and uses the cost
(|x|^p + |u|^p) |u|^alpha / |x|^alpha (zero at x = 0).  ``TrigFamily`` has
b = A x sin(|u|/|x|), sigma = C x cos(|u|/|x|) with the ratio cost.

Every array parameter may carry a leading axis of length ``cells``; the horizon is then
split into ``cells`` equal intervals and the coefficients are piecewise constant in
time, the value on [k T/cells, (k+1) T/cells) being row k.
"""

from __future__ import annotations

import math
from operator import mul
from dataclasses import dataclass, field, replace

import numpy as np

from .cones import ConeSpec
from .model import BoundaryCoefficients, FullCoefficients, HomogeneousModel, RegimeParams

__all__ = ["PowerFamily", "RatioFamily", "TrigFamily", "family_from_dict", "build_model"]


def _pos(u):
    return np.maximum(u, 0.0)


def _neg(u):
    return np.maximum(-u, 0.0)


class _TimeCells:
    """Mixin: array parameters with an optional leading time-cell axis."""

    # name -> shape function (m, n) -> base shape
    _shapes: dict = {}

    def _normalise(self):
        K = int(self.cells)
        if K < 1:
            raise ValueError("cells must be >= 1")
        for name, shape_fn in self._shapes.items():
            base = shape_fn(self.m, self.n, self)
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape == base:
                arr = np.broadcast_to(arr, (K, *base)).copy()
            elif arr.shape != (K, *base):
                if arr.size == int(np.prod(base)) and K == 1:
                    arr = arr.reshape((1, *base))
                else:
                    raise ValueError(f"parameter {name!r} has shape {arr.shape}; expected {base} or {(K, *base)}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if "b_pos" in self._shapes:
            # per-cell flags: u^+/u^- split is unnecessary when both sides agree
            object.__setattr__(self, "_sym_b", [bool(np.array_equal(x, y)) for x, y in zip(self.b_pos, self.b_neg)])
            object.__setattr__(self, "_sym_d", [bool(np.array_equal(x, y)) for x, y in zip(self.d_pos, self.d_neg)])

    def cell(self, t: float) -> int:
        K = self.cells
        if K == 1:
            return 0
        # nodes at multiples of T/K belong to the interval on their right
        k = int(math.floor(t / self.T * K * (1 + 1e-12) + 1e-12))
        return min(max(k, 0), K - 1)

    def at(self, name: str, t: float):
        return getattr(self, name)[self.cell(t)]

    def to_dict(self) -> dict:
        out = {"name": self.family_name, "cells": self.cells}
        for name in self._shapes:
            arr = getattr(self, name)
            out[name] = (arr[0] if self.cells == 1 else arr).tolist()
        for name in self._scalars:
            out[name] = getattr(self, name)
        return out


def _vec_m(m, n, fam):
    return (m,)


def _vec_n(m, n, fam):
    return (n,)


def _mat_nm(m, n, fam):
    return (n, m)


def _scalar(m, n, fam):
    return ()


def _rows_m(name):
    def shape(m, n, fam):
        arr = np.asarray(getattr(fam, name), dtype=float)
        return arr.shape[1:] if arr.ndim == 3 else arr.shape
    return shape


_PIECEWISE_LINEAR_SHAPES = {
    "a_pos": _scalar, "a_neg": _scalar,
    "b_pos": _vec_m, "b_neg": _vec_m,
    "c_pos": _vec_n, "c_neg": _vec_n,
    "d_pos": _mat_nm, "d_neg": _mat_nm,
}


@dataclass(frozen=True, eq=False)
class PowerFamily(_TimeCells):
    """Piecewise-linear dynamics with a power cost.

    b = a_+ x^+ - a_- x^- + B u,  sigma = c_+ x^+ - c_- x^- + D u,
    f = |q x|^p + |r u|^p + |q_mix x|^(p/3) |r_mix u|^(2p/3),  g = g_+ (x^+)^p + g_- (x^-)^p.
    B and D may differ on the positive and negative parts of u (b_pos/b_neg, d_pos/d_neg).
    Every coefficient except g may be piecewise constant on ``cells`` equal time cells.
    """

    p: float
    T: float
    m: int
    n: int
    a_pos: object = 0.0
    a_neg: object = 0.0
    b_pos: object = None
    b_neg: object = None
    c_pos: object = None
    c_neg: object = None
    d_pos: object = None
    d_neg: object = None
    q: object = 0.0
    r: object = None
    q_mix: object = 0.0
    r_mix: object = None
    g_plus: float = 1.0
    g_minus: float = 1.0
    cells: int = 1

    family_name = "power"
    _scalars = ("g_plus", "g_minus")
    _shapes = {**_PIECEWISE_LINEAR_SHAPES, "q": _scalar, "r": _rows_m("r"),
               "q_mix": _scalar, "r_mix": _rows_m("r_mix")}

    def __post_init__(self):
        zeros = {"b_pos": (self.m,), "b_neg": (self.m,), "c_pos": (self.n,), "c_neg": (self.n,),
                 "d_pos": (self.n, self.m), "d_neg": (self.n, self.m), "r": (1, self.m), "r_mix": (1, self.m)}
        for name, shape in zeros.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.zeros(shape))
        for name in ("r", "r_mix"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                object.__setattr__(self, name, arr.reshape(1, -1))
        self._normalise()
        object.__setattr__(self, "g_plus", float(self.g_plus))
        object.__setattr__(self, "g_minus", float(self.g_minus))

    @classmethod
    def symmetric(cls, p, T, m, n, A=0.0, B=None, C=None, D=None, Q=0.0, R=None, G=1.0, **kw):
        """b = A x + B.u, sigma = C x + D u, f = |Q x|^p + |R u|^p, g = |G x|^p."""
        B = np.zeros(m) if B is None else B
        C = np.zeros(n) if C is None else C
        D = np.zeros((n, m)) if D is None else D
        gp = abs(float(G)) ** p
        return cls(p=p, T=T, m=m, n=n, a_pos=A, a_neg=A, b_pos=B, b_neg=B, c_pos=C, c_neg=C,
                   d_pos=D, d_neg=D, q=Q, r=R, g_plus=kw.pop("g_plus", gp), g_minus=kw.pop("g_minus", gp), **kw)

    def with_terminal(self, g_plus, g_minus):
        return replace(self, g_plus=g_plus, g_minus=g_minus)

    # restrictions -----------------------------------------------------------
    def _control_drift(self, k, v):
        if self._sym_b[k]:
            return float(self.b_pos[k] @ v)
        return float(self.b_pos[k] @ _pos(v) - self.b_neg[k] @ _neg(v))

    def _control_vol(self, k, v):
        if self._sym_d[k]:
            return self.d_pos[k] @ v
        return self.d_pos[k] @ _pos(v) - self.d_neg[k] @ _neg(v)

    def _cost_u(self, k, v):
        p = self.p
        rv = self.r[k] @ v
        val = float(rv @ rv) ** (0.5 * p)
        if self.q_mix[k] != 0.0:
            mv = self.r_mix[k] @ v
            val += abs(float(self.q_mix[k])) ** (p / 3) * float(mv @ mv) ** (p / 3)
        return val

    def restricted(self, sign: int, t: float):
        """Fast evaluator v -> (b, sigma, f) of the restriction to x = sign at time t.

        Works on plain Python floats (sigma is returned as a list): for the small
        dimensions used here this is several times faster than numpy on tiny arrays.
        """
        k = self.cell(t)
        a = float(self.a_pos[k]) if sign > 0 else -float(self.a_neg[k])
        c = (self.c_pos[k] if sign > 0 else -self.c_neg[k]).tolist()
        bp, bn = self.b_pos[k].tolist(), self.b_neg[k].tolist()
        dp, dn = self.d_pos[k].tolist(), self.d_neg[k].tolist()
        sym_b, sym_d = self._sym_b[k], self._sym_d[k]
        cost = self._cost_fn(k)

        def terms(v):
            v = v.tolist()
            if sym_b and sym_d:
                b = a + sum(map(mul, bp, v))
                sig = [ci + sum(map(mul, row, v)) for ci, row in zip(c, dp)]
                return b, sig, cost(v)
            vp = [x if x > 0.0 else 0.0 for x in v]
            vn = [-x if x < 0.0 else 0.0 for x in v]
            if sym_b:
                b = a + sum(map(mul, bp, v))
            else:
                b = a + sum(map(mul, bp, vp)) - sum(map(mul, bn, vn))
            if sym_d:
                sig = [ci + sum(map(mul, row, v)) for ci, row in zip(c, dp)]
            else:
                sig = [ci + sum(map(mul, rp, vp)) - sum(map(mul, rn, vn))
                       for ci, rp, rn in zip(c, dp, dn)]
            return b, sig, cost(v)

        return terms

    def _cost_fn(self, k):
        """Control part of the running cost at x = +-1 as a function of a list v."""
        p = self.p
        const = abs(float(self.q[k])) ** p
        r = self.r[k].tolist()
        half = 0.5 * p

        def sq(rows, v):
            out = 0.0
            for row in rows:
                z = sum(map(mul, row, v))
                out += z * z
            return out

        if self.q_mix[k] == 0.0:
            return lambda v: const + sq(r, v) ** half
        rm = self.r_mix[k].tolist()
        wmix = abs(float(self.q_mix[k])) ** (p / 3)
        third = p / 3
        return lambda v: const + sq(r, v) ** half + wmix * sq(rm, v) ** third

    def b_plus(self, t, v):
        k = self.cell(t)
        return float(self.a_pos[k]) + self._control_drift(k, v)

    def b_minus(self, t, v):
        k = self.cell(t)
        return -float(self.a_neg[k]) + self._control_drift(k, v)

    def sigma_plus(self, t, v):
        k = self.cell(t)
        return self.c_pos[k] + self._control_vol(k, v)

    def sigma_minus(self, t, v):
        k = self.cell(t)
        return -self.c_neg[k] + self._control_vol(k, v)

    def f_pm(self, t, v):
        k = self.cell(t)
        return abs(float(self.q[k])) ** self.p + self._cost_u(k, v)

    def f_zero(self, v):
        rv = self.r[0] @ v
        return float(rv @ rv) ** (0.5 * self.p)

    # full coefficients --------------------------------------------------------
    def full_b(self, t, x, u):
        k = self.cell(t)
        return float(self.a_pos[k] * max(x, 0) - self.a_neg[k] * max(-x, 0)) + self._control_drift(k, np.asarray(u, float))

    def full_sigma(self, t, x, u):
        k = self.cell(t)
        return self.c_pos[k] * max(x, 0) - self.c_neg[k] * max(-x, 0) + self._control_vol(k, np.asarray(u, float))

    def full_f(self, t, x, u):
        k = self.cell(t)
        p = self.p
        u = np.asarray(u, float)
        val = abs(float(self.q[k]) * x) ** p + float(np.linalg.norm(self.r[k] @ u)) ** p
        if self.q_mix[k] != 0.0:
            val += abs(float(self.q_mix[k]) * x) ** (p / 3) * float(np.linalg.norm(self.r_mix[k] @ u)) ** (2 * p / 3)
        return val

    def full_g(self, x):
        return self.g_plus * max(x, 0.0) ** self.p + self.g_minus * max(-x, 0.0) ** self.p

    def coefficients(self) -> BoundaryCoefficients:
        return BoundaryCoefficients(self.b_plus, self.b_minus, self.sigma_plus, self.sigma_minus,
                                    self.f_pm, self.f_pm, self.f_zero, self.g_plus, self.g_minus)

    def full_coefficients(self) -> FullCoefficients:
        return FullCoefficients(self.full_b, self.full_sigma, self.full_f, self.full_g)

    def lq_params(self, t: float, cone: ConeSpec):
        """Closed-form parameters (A, B, C, Q, R) at time t, or None when the family is not
        the symmetric, control-free-volatility power-LQ system on the full space."""
        if not cone.is_full:
            return None
        k = self.cell(t)
        if not (self.a_pos[k] == self.a_neg[k] and np.array_equal(self.b_pos[k], self.b_neg[k])
                and np.array_equal(self.c_pos[k], self.c_neg[k])):
            return None
        if np.any(self.d_pos[k]) or np.any(self.d_neg[k]):
            return None
        if self.q_mix[k] != 0.0 and np.any(self.r_mix[k]):
            return None
        R = self.r[k]
        if np.linalg.matrix_rank(R.T @ R) < self.m:
            return None
        return {"A": float(self.a_pos[k]), "B": self.b_pos[k], "C": self.c_pos[k],
                "Q": float(self.q[k]), "R": R}


@dataclass(frozen=True, eq=False)
class RatioFamily(_TimeCells):
    """Piecewise-linear dynamics with cost (|x|^p + |u|^p) |u|^alpha / |x|^alpha."""

    p: float
    T: float
    m: int
    n: int
    alpha: float = 2.0
    a_pos: object = 0.0
    a_neg: object = 0.0
    b_pos: object = None
    b_neg: object = None
    c_pos: object = None
    c_neg: object = None
    d_pos: object = None
    d_neg: object = None
    g_plus: float = 1.0
    g_minus: float = 1.0
    cells: int = 1

    family_name = "ratio"
    _scalars = ("alpha", "g_plus", "g_minus")
    _shapes = dict(_PIECEWISE_LINEAR_SHAPES)

    def __post_init__(self):
        zeros = {"b_pos": (self.m,), "b_neg": (self.m,), "c_pos": (self.n,), "c_neg": (self.n,),
                 "d_pos": (self.n, self.m), "d_neg": (self.n, self.m)}
        for name, shape in zeros.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.zeros(shape))
        self._normalise()
        if not self.alpha > 1:
            raise ValueError("alpha must be > 1")

    def with_terminal(self, g_plus, g_minus):
        return replace(self, g_plus=g_plus, g_minus=g_minus)

    b_plus = PowerFamily.b_plus
    b_minus = PowerFamily.b_minus
    sigma_plus = PowerFamily.sigma_plus
    sigma_minus = PowerFamily.sigma_minus
    _control_drift = PowerFamily._control_drift
    _control_vol = PowerFamily._control_vol
    full_b = PowerFamily.full_b
    full_sigma = PowerFamily.full_sigma
    full_g = PowerFamily.full_g
    coefficients = PowerFamily.coefficients
    full_coefficients = PowerFamily.full_coefficients
    restricted = PowerFamily.restricted

    def _cost_fn(self, k):
        p, alpha = self.p, self.alpha

        def cost(v):
            nv = math.sqrt(sum(map(mul, v, v)))
            return (1.0 + nv ** p) * nv ** alpha
        return cost

    def f_pm(self, t, v):
        nv = float(np.linalg.norm(v))
        return (1.0 + nv ** self.p) * nv ** self.alpha

    def f_zero(self, v):
        return 0.0

    def full_f(self, t, x, u):
        if x == 0:
            return 0.0
        nu = float(np.linalg.norm(u))
        return (abs(x) ** self.p + nu ** self.p) * nu ** self.alpha / abs(x) ** self.alpha

    def lq_params(self, t, cone):
        return None


@dataclass(frozen=True, eq=False)
class TrigFamily(_TimeCells):
    """b = A x sin(|u|/|x|), sigma = C x cos(|u|/|x|), ratio cost; bounded volatility."""

    p: float
    T: float
    m: int
    n: int
    alpha: float = 2.0
    A: object = 0.0
    C: object = None
    g_plus: float = 1.0
    g_minus: float = 1.0
    cells: int = 1

    family_name = "trig"
    _scalars = ("alpha", "g_plus", "g_minus")
    _shapes = {"A": _scalar, "C": _vec_n}

    def __post_init__(self):
        if self.C is None:
            object.__setattr__(self, "C", np.zeros(self.n))
        self._normalise()
        if not self.alpha > 1:
            raise ValueError("alpha must be > 1")

    def with_terminal(self, g_plus, g_minus):
        return replace(self, g_plus=g_plus, g_minus=g_minus)

    def b_plus(self, t, v):
        return float(self.at("A", t)) * math.sin(float(np.linalg.norm(v)))

    def b_minus(self, t, v):
        return -self.b_plus(t, v)

    def sigma_plus(self, t, v):
        return self.at("C", t) * math.cos(float(np.linalg.norm(v)))

    def sigma_minus(self, t, v):
        return -self.sigma_plus(t, v)

    f_pm = RatioFamily.f_pm
    f_zero = RatioFamily.f_zero
    _cost_fn = RatioFamily._cost_fn

    def restricted(self, sign: int, t: float):
        k = self.cell(t)
        A = sign * float(self.A[k])
        C = (sign * self.C[k]).tolist()
        cost = self._cost_fn(k)
        sin, cos, sqrt = math.sin, math.cos, math.sqrt

        def terms(v):
            v = v.tolist()
            nv = sqrt(sum(map(mul, v, v)))
            cv = cos(nv)
            return A * sin(nv), [c * cv for c in C], cost(v)

        return terms
    full_f = RatioFamily.full_f
    full_g = PowerFamily.full_g
    coefficients = PowerFamily.coefficients
    full_coefficients = PowerFamily.full_coefficients

    def full_b(self, t, x, u):
        if x == 0:
            return 0.0
        return float(self.at("A", t)) * x * math.sin(float(np.linalg.norm(u)) / abs(x))

    def full_sigma(self, t, x, u):
        if x == 0:
            return np.zeros(self.n)
        return self.at("C", t) * x * math.cos(float(np.linalg.norm(u)) / abs(x))

    def lq_params(self, t, cone):
        return None


_FAMILIES = {"power": PowerFamily, "ratio": RatioFamily, "trig": TrigFamily}


def family_from_dict(spec: dict, *, p, T, m, n):
    spec = dict(spec)
    name = spec.pop("name", "power")
    try:
        cls = _FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; expected one of {sorted(_FAMILIES)}") from None
    return cls(p=p, T=T, m=m, n=n, **spec)


def build_model(family, cone: ConeSpec, regime="I", regime_params: RegimeParams | None = None,
                name: str = "") -> HomogeneousModel:
    """Wrap a parametric family into a :class:`HomogeneousModel`."""
    return HomogeneousModel(
        p=family.p, T=family.T, m=family.m, n=family.n, cone=cone,
        coeffs=family.coefficients(), regime=regime,
        regime_params=regime_params or RegimeParams(), family=family,
        full=family.full_coefficients(), name=name,
    )
