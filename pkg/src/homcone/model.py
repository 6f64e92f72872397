"""Homogeneous control systems encoded by their restrictions at x = +1, -1 and 0.

For b, sigma homogeneous of degree 1 and f homogeneous of degree p in (x, u),

    phi(x, u) = |x|^q * phi(sign x, u / |x|)   (x != 0),   phi(0, u)   (x = 0),

so a model is fully described by the maps v -> b(+-1, v), sigma(+-1, v), f(+-1, v),
f(0, v) and the two numbers g(+1), g(-1).  :func:`extend` rebuilds the full
coefficients from these restrictions.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .cones import ConeSpec, contains, sample_cone
from .errors import ConstraintViolation, DomainError

__all__ = [
    "BoundaryCoefficients",
    "FullCoefficients",
    "Regime",
    "RegimeParams",
    "HomogeneousModel",
    "extend",
    "check_homogeneity",
    "check_regime",
    "default_sample_grid",
    "HomogeneityReport",
    "RegimeDiagnostics",
]

# tolerance used when checking that a control lies in the cone
CONE_TOL = 1e-9


@dataclass(frozen=True)
class BoundaryCoefficients:
    """Restrictions of (b, sigma, f, g) to x = +1, x = -1 and x = 0.

    The time-dependent maps take ``(t, v)`` with ``v`` a length-m array; ``sigma_*``
    return length-n arrays.  ``f_zero`` takes ``v`` only.
    """

    b_plus: Callable
    b_minus: Callable
    sigma_plus: Callable
    sigma_minus: Callable
    f_plus: Callable
    f_minus: Callable
    f_zero: Callable
    g_plus: float
    g_minus: float

    def b(self, sign: int, t, v) -> float:
        return float(self.b_plus(t, v) if sign > 0 else self.b_minus(t, v))

    def sigma(self, sign: int, t, v) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.sigma_plus(t, v) if sign > 0 else self.sigma_minus(t, v), dtype=float))

    def f(self, sign: int, t, v) -> float:
        return float(self.f_plus(t, v) if sign > 0 else self.f_minus(t, v))

    def g(self, sign: int) -> float:
        return float(self.g_plus if sign > 0 else self.g_minus)


class FullCoefficients(NamedTuple):
    """Original (unrestricted) coefficients, kept when a model is built from them.

    ``b``, ``sigma``, ``f`` take ``(t, x, u)``; ``g`` takes ``x``.
    """

    b: Callable
    sigma: Callable
    f: Callable
    g: Callable


class Regime(enum.Enum):
    CASE_I = "I"
    CASE_II = "II"
    CASE_III = "III"

    @classmethod
    def parse(cls, text) -> "Regime":
        if isinstance(text, Regime):
            return text
        key = str(text).strip().upper()
        for prefix in ("CASE", "CASE_", "CASE "):
            if key.startswith(prefix):
                key = key[len(prefix):].strip("_ ")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown regime {text!r}; expected I, II or III") from None


@dataclass(frozen=True)
class RegimeParams:
    """Constants declared with a regime.

    ``delta`` and ``L`` enter cases I and III; case II uses ``L`` as the bound on
    |sigma| and ``eps_table`` as a list of (epsilon, L_epsilon) pairs; case III also
    needs ``eta``.
    """

    delta: float = 1.0
    L: float = 1.0
    eta: float = 0.0
    eps_table: tuple = ()

    def to_dict(self) -> dict:
        return {"delta": self.delta, "L": self.L, "eta": self.eta,
                "eps_table": [list(map(float, row)) for row in self.eps_table]}


@dataclass(frozen=True)
class HomogeneousModel:
    p: float
    T: float
    m: int
    n: int
    cone: ConeSpec
    coeffs: BoundaryCoefficients
    regime: Regime = Regime.CASE_I
    regime_params: RegimeParams = field(default_factory=RegimeParams)
    family: object = None
    full: Optional[FullCoefficients] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime.parse(self.regime))
        if not self.p > 1:
            raise ValueError("degree p must be > 1")
        if not self.T > 0:
            raise ValueError("horizon T must be > 0")
        if self.cone.m != self.m:
            raise ValueError("cone dimension differs from control dimension m")
        if self.n < 1:
            raise ValueError("Brownian dimension n must be >= 1")

    @classmethod
    def from_full(cls, full: FullCoefficients, *, p, T, m, n, cone, **kwargs) -> "HomogeneousModel":
        """Build a model from full coefficient callbacks by restricting them to x = +-1, 0."""
        coeffs = BoundaryCoefficients(
            b_plus=lambda t, v: full.b(t, 1.0, v),
            b_minus=lambda t, v: full.b(t, -1.0, v),
            sigma_plus=lambda t, v: full.sigma(t, 1.0, v),
            sigma_minus=lambda t, v: full.sigma(t, -1.0, v),
            f_plus=lambda t, v: full.f(t, 1.0, v),
            f_minus=lambda t, v: full.f(t, -1.0, v),
            f_zero=lambda v: full.f(0.0, 0.0, v),
            g_plus=float(full.g(1.0)),
            g_minus=float(full.g(-1.0)),
        )
        return cls(p=p, T=T, m=m, n=n, cone=cone, coeffs=coeffs, full=full, **kwargs)

    def with_terminal(self, g_plus=None, g_minus=None) -> "HomogeneousModel":
        coeffs = replace(self.coeffs,
                         g_plus=self.coeffs.g_plus if g_plus is None else float(g_plus),
                         g_minus=self.coeffs.g_minus if g_minus is None else float(g_minus))
        family = self.family
        if family is not None and hasattr(family, "with_terminal"):
            family = family.with_terminal(coeffs.g_plus, coeffs.g_minus)
        return replace(self, coeffs=coeffs, family=family, full=None)

    def describe(self) -> dict:
        out = {
            "name": self.name, "p": self.p, "T": self.T, "m": self.m, "n": self.n,
            "cone": self.cone.to_dict(), "regime": self.regime.value,
            "regime_params": self.regime_params.to_dict(),
        }
        if self.family is not None and hasattr(self.family, "to_dict"):
            out["family"] = self.family.to_dict()
        else:
            out["family"] = "callback"
        return out

    def fingerprint(self) -> str:
        """Stable hash of the model description (callback models hash their name only)."""
        blob = json.dumps(self.describe(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _check_time(model: HomogeneousModel, t):
    if not (0.0 <= t <= model.T):
        raise DomainError(f"t={t} outside [0, {model.T}]")


def extend(model: HomogeneousModel, which: str, t: float, x: float, u) -> float | np.ndarray:
    """Evaluate the full coefficient ``which`` ('b', 'sigma' or 'f') at (t, x, u).

    ``u`` must lie in the control cone.
    """
    _check_time(model, t)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if not contains(model.cone, u, CONE_TOL * (1.0 + float(np.linalg.norm(u)))):
        raise ConstraintViolation(f"control {u} outside the cone")
    c = model.coeffs
    if which == "f":
        if x > 0:
            return x ** model.p * c.f(1, t, u / x)
        if x < 0:
            return (-x) ** model.p * c.f(-1, t, u / -x)
        return float(c.f_zero(u))
    if which == "b":
        if x > 0:
            return x * c.b(1, t, u / x)
        if x < 0:
            return -x * c.b(-1, t, u / -x)
        return 0.0
    if which in ("sigma", "σ"):
        if x > 0:
            return x * c.sigma(1, t, u / x)
        if x < 0:
            return -x * c.sigma(-1, t, u / -x)
        return np.zeros(model.n)
    raise ValueError(f"unknown coefficient {which!r}")


def extend_g(model: HomogeneousModel, x: float) -> float:
    if x > 0:
        return x ** model.p * model.coeffs.g_plus
    if x < 0:
        return (-x) ** model.p * model.coeffs.g_minus
    return 0.0


@dataclass
class HomogeneityReport:
    passed: dict
    worst_relative_error: dict
    worst_case: dict

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def _rel_err(lhs, rhs):
    lhs = np.atleast_1d(lhs)
    rhs = np.atleast_1d(rhs)
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1e-300)
    return float(np.max(np.abs(lhs - rhs))) / scale if scale > 1e-300 else 0.0


def check_homogeneity(model: HomogeneousModel, sample_count: int = 200, seed: int = 0,
                      rtol: float = 1e-10) -> HomogeneityReport:
    """Sample (t, x, u, lambda) and test phi(l x, l u) = l^q phi(x, u) for each coefficient.

    Uses the model's full coefficient callbacks when present; otherwise checks the
    reconstruction performed by :func:`extend`.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    if model.full is not None:
        fb = lambda t, x, u: model.full.b(t, x, u)  # noqa: E731
        fs = lambda t, x, u: model.full.sigma(t, x, u)  # noqa: E731
        ff = lambda t, x, u: model.full.f(t, x, u)  # noqa: E731
        fg = lambda x: model.full.g(x)  # noqa: E731
    else:
        fb = lambda t, x, u: extend(model, "b", t, x, u)  # noqa: E731
        fs = lambda t, x, u: extend(model, "sigma", t, x, u)  # noqa: E731
        ff = lambda t, x, u: extend(model, "f", t, x, u)  # noqa: E731
        fg = lambda x: extend_g(model, x)  # noqa: E731
    checks = {"b": (fb, 1.0), "sigma": (fs, 1.0), "f": (ff, model.p)}
    passed = {k: True for k in (*checks, "g")}
    worst = {k: 0.0 for k in passed}
    where = {k: None for k in passed}
    ts = rng.uniform(0.0, model.T, sample_count)
    xs = rng.standard_normal(sample_count) * 2.0
    us = sample_cone(model.cone, rng, sample_count, scale=2.0)
    # lambda = 2 is always included; it is the canonical witness of a broken degree
    lams = np.concatenate([[2.0], rng.uniform(0.1, 5.0, sample_count - 1)])
    for t, x, u, lam in zip(ts, xs, us, lams):
        for name, (fun, q) in checks.items():
            lhs = fun(t, lam * x, lam * u)
            rhs = lam ** q * np.asarray(fun(t, x, u))
            err = _rel_err(lhs, rhs)
            if err > worst[name]:
                worst[name], where[name] = err, {"t": t, "x": x, "u": list(u), "lambda": lam}
            if err > rtol:
                passed[name] = False
        err = _rel_err(fg(lam * x), lam ** model.p * fg(x))
        if err > worst["g"]:
            worst["g"], where["g"] = err, {"x": x, "lambda": lam}
        if err > rtol:
            passed["g"] = False
    return HomogeneityReport(passed, worst, where)


def default_sample_grid(model: HomogeneousModel, count: int = 200, radius: float = 10.0, seed: int = 0):
    """A finite set of (t, v) points for :func:`check_regime`: the origin, the cone's
    spanning directions at several radii and random cone points."""
    rng = np.random.default_rng(seed)
    dirs = model.cone.spanning_directions()
    vs = [np.zeros(model.m)]
    for r in (0.1, 1.0, radius):
        vs.extend(r * d for d in dirs)
    vs.extend(sample_cone(model.cone, rng, count, scale=radius / 3.0))
    ts = rng.uniform(0.0, model.T, len(vs))
    ts[:3] = [0.0, model.T / 2, model.T]
    return list(zip(ts, vs))


@dataclass
class RegimeDiagnostics:
    regime: Regime
    ok: bool
    violations: list
    checked: int
    messages: list = field(default_factory=list)

    def summary(self) -> str:
        head = f"Case {self.regime.value}: {'pass' if self.ok else 'FAIL'} ({self.checked} sample points)"
        return "\n".join([head, *self.messages])


def check_regime(model: HomogeneousModel, sample_grid: Sequence | None = None, rtol: float = 1e-12) -> RegimeDiagnostics:
    """Evaluate the declared regime's inequalities at every sample point.

    A sampled necessary check only: passing does not prove the assumption.
    """
    grid = sample_grid if sample_grid is not None else default_sample_grid(model)
    prm = model.regime_params
    c = model.coeffs
    violations = []
    messages = []

    def flag(kind, t, v, sign, lhs, rhs):
        violations.append({"kind": kind, "t": float(t), "v": [float(x) for x in np.atleast_1d(v)],
                           "sign": sign, "lhs": float(lhs), "rhs": float(rhs)})

    for sign in (1, -1):
        g = c.g(sign)
        if g < 0:
            flag("terminal-nonnegativity", model.T, [], sign, g, 0.0)
        if model.regime is Regime.CASE_III and not g >= prm.eta:
            flag("eta-positivity", model.T, [], sign, g, prm.eta)
    if model.regime is Regime.CASE_III:
        if not prm.eta > 0:
            flag("eta-positivity", model.T, [], 0, prm.eta, 0.0)
        if not model.p > 1 + 2 * prm.delta:
            flag("degree", 0.0, [], 0, model.p, 1 + 2 * prm.delta)
    if model.regime in (Regime.CASE_I, Regime.CASE_III) and not (prm.delta > 0 and prm.L > 0):
        flag("constants", 0.0, [], 0, min(prm.delta, prm.L), 0.0)
    if model.regime is Regime.CASE_II and not prm.eps_table:
        messages.append("note: no (epsilon, L_epsilon) pairs declared; drift growth not checked")

    for t, v in grid:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        f0 = float(c.f_zero(v))
        if f0 < 0:
            flag("cost-nonnegativity", t, v, 0, f0, 0.0)
        for sign in (1, -1):
            b = c.b(sign, t, v)
            s = c.sigma(sign, t, v)
            f = c.f(sign, t, v)
            s2 = float(s @ s)
            if f < 0:
                flag("cost-nonnegativity", t, v, sign, f, 0.0)
            if model.regime is Regime.CASE_I:
                lhs, rhs = max(b * b, s2), prm.delta * f + prm.L
                if lhs > rhs * (1 + rtol):
                    flag("growth", t, v, sign, lhs, rhs)
            elif model.regime is Regime.CASE_II:
                if math.sqrt(s2) > prm.L * (1 + rtol):
                    flag("sigma-bound", t, v, sign, math.sqrt(s2), prm.L)
                for eps, l_eps in prm.eps_table:
                    if abs(b) > (eps * f + l_eps) * (1 + rtol):
                        flag(f"drift-growth(eps={eps})", t, v, sign, abs(b), eps * f + l_eps)
            else:
                lhs, rhs = abs(b), prm.delta * s2 + prm.L
                if lhs > rhs * (1 + rtol):
                    flag("drift-vs-sigma", t, v, sign, lhs, rhs)

    kinds = sorted({v["kind"] for v in violations})
    for kind in kinds:
        first = next(v for v in violations if v["kind"] == kind)
        count = sum(1 for v in violations if v["kind"] == kind)
        if kind == "eta-positivity":
            messages.append(f"eta-positivity violated: g(+-1) = {first['lhs']} < eta = {first['rhs']} "
                            "(uniform positivity requires g(+1), g(-1) >= eta > 0)")
        else:
            messages.append(f"{kind}: {count} violation(s), first at t={first['t']:.4g}, v={first['v']}, "
                            f"sign={first['sign']}: {first['lhs']:.6g} > {first['rhs']:.6g}")
    return RegimeDiagnostics(model.regime, not violations, violations, len(grid), messages)
