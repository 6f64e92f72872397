"""The BSDE drivers G_1, G_2 and their infima over the control cone.

For a branch sign s (+1 for the positive half-line, -1 for the negative one):

    G_s(v, P, Lam) = f(s, v) + p(p-1)/2 P |sigma(s, v)|^2 + s p P b(s, v) + s p Lam . sigma(s, v)

and G_s^*(P, Lam) = inf over the cone of G_s(., P, Lam).
"""

from __future__ import annotations

import math
from operator import mul
from dataclasses import dataclass

import numpy as np

from .cones import MinimizerConfig, MinimizeResult, Status, contains, minimize
from .errors import ConstraintViolation, IllPosedError
from .model import CONE_TOL, HomogeneousModel, Regime

__all__ = [
    "DriverPoint",
    "eval_G",
    "G_star",
    "DriverMin",
    "closed_form_unconstrained",
    "argmin_bound_check",
    "branch_sign",
]


def branch_sign(branch) -> int:
    if branch in ("plus", "+", 1, "1"):
        return 1
    if branch in ("minus", "-", -1, "-1", "2"):
        return -1
    raise ValueError(f"branch must be 'plus' or 'minus', got {branch!r}")


@dataclass(frozen=True)
class DriverPoint:
    t: float
    P: float
    Lam: np.ndarray

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.Lam, dtype=float))
        object.__setattr__(self, "Lam", lam)
        if not (math.isfinite(self.P) and np.all(np.isfinite(lam))):
            raise ValueError("P and Lambda must be finite")

    @classmethod
    def at(cls, t, P, Lam=0.0, n=1):
        lam = np.zeros(n) if np.ndim(Lam) == 0 and Lam == 0.0 else Lam
        return cls(float(t), float(P), lam)


def _driver(model: HomogeneousModel, sign: int, point: DriverPoint):
    """Objective v -> G_sign(v, P, Lam) without cone checks (used inside the minimiser)."""
    c = model.coeffs
    p = model.p
    t, P, lam = point.t, point.P, point.Lam
    half = 0.5 * p * (p - 1.0) * P
    sp = sign * p
    fast = getattr(model.family, "restricted", None)
    if fast is not None:
        terms = fast(sign, t)
        lam_list = lam.tolist()

        def G_fast(v):
            b, sig, f = terms(v)
            s2 = sum(map(mul, sig, sig))
            cross = sum(map(mul, lam_list, sig))
            return f + half * s2 + sp * (P * b + cross)

        return G_fast
    if sign > 0:
        b, s, f = c.b_plus, c.sigma_plus, c.f_plus
    else:
        b, s, f = c.b_minus, c.sigma_minus, c.f_minus

    def G(v):
        sig = np.atleast_1d(s(t, v))
        return float(f(t, v)) + half * float(sig @ sig) + sp * (P * float(b(t, v)) + float(lam @ sig))

    return G


def eval_G(model: HomogeneousModel, branch, v, point: DriverPoint) -> float:
    """G_1 (branch 'plus') or G_2 (branch 'minus') at control ``v``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not contains(model.cone, v, CONE_TOL * (1.0 + float(np.linalg.norm(v)))):
        raise ConstraintViolation(f"control {v} outside the cone")
    return _driver(model, branch_sign(branch), point)(v)


def closed_form_unconstrained(params: dict, p: float, point: DriverPoint):
    """Infimum and minimiser of the power-LQ driver over R^m (plus branch).

    ``params`` holds A (scalar), B (m), C (n), Q (scalar), R (k x m, R^T R invertible).
    The minus branch of the symmetric system has the same value and minimiser -v.

    Returns
    -------
    (value, argmin)
    """
    A = float(params["A"])
    B = np.atleast_1d(np.asarray(params["B"], dtype=float))
    C = np.atleast_1d(np.asarray(params["C"], dtype=float))
    Q = float(params["Q"])
    R = np.atleast_2d(np.asarray(params["R"], dtype=float))
    M = R.T @ R
    try:
        Minv_B = np.linalg.solve(M, B)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("R^T R is singular") from None
    if np.linalg.cond(M) > 1e14:
        raise np.linalg.LinAlgError("R^T R is singular")
    P = point.P
    kappa = float(B @ Minv_B)
    state_part = abs(Q) ** p + 0.5 * p * (p - 1.0) * P * float(C @ C) + p * P * A + p * float(point.Lam @ C)
    if P == 0.0 or not np.any(B):
        return state_part, np.zeros(B.size)
    # huge |P| overflows to -inf here; callers treat a non-finite value as divergence
    with np.errstate(over="ignore"):
        power = np.float64(abs(P)) ** (p / (p - 1.0))
        value = float((1.0 - p) * kappa ** (p / (2.0 * (p - 1.0))) * power + state_part)
    if p == 2.0:
        scale = -P
    else:
        expo = (p - 2.0) / (p - 1.0)
        scale = -P * abs(P) ** (-expo) * kappa ** (-expo / 2.0)
    return value, scale * Minv_B


@dataclass
class DriverMin:
    value: float
    argmin: np.ndarray
    status: Status
    closed_form: bool = False

    def __iter__(self):
        return iter((self.value, self.argmin, self.status))


def G_star(model: HomogeneousModel, branch, point: DriverPoint, config: MinimizerConfig | None = None,
           *, numeric: bool = False, starts=None, raise_on_divergence: bool = False) -> DriverMin:
    """Infimum of the branch driver over the cone, with its minimiser.

    Uses the closed form when the model is the symmetric power-LQ family on R^m, unless
    ``numeric`` is set.  A ``Status.DIVERGENT`` result means the infimum is -inf; with
    ``raise_on_divergence`` it becomes an :class:`IllPosedError`.
    """
    sign = branch_sign(branch)
    fam = model.family
    if not numeric and fam is not None and hasattr(fam, "lq_params"):
        params = fam.lq_params(point.t, model.cone)
        if params is not None:
            value, v = closed_form_unconstrained(params, model.p, point)
            return DriverMin(value, v if sign > 0 else -v, Status.CONVERGED, True)
    res: MinimizeResult = minimize(model.cone, _driver(model, sign, point), config, starts=starts)
    if res.status is Status.DIVERGENT and raise_on_divergence:
        raise IllPosedError(f"driver infimum is -inf at t={point.t}, P={point.P} (branch {branch})",
                            t=point.t, P=point.P)
    return DriverMin(res.value, res.x, res.status)


@dataclass
class BoundReport:
    regime: Regime
    quantity: str
    values: dict
    c: float


def argmin_bound_check(model: HomogeneousModel, branch, point: DriverPoint, argmin) -> BoundReport:
    """Smallest constant c for which the regime's a-priori bound on the minimiser holds.

    Case I: max(|b|, |sigma|)(s, v) <= c (1 + |Lam|); case II: f(s, v) <= c (1 + |Lam|);
    case III: |sigma(s, v)| <= c (1 + |Lam|).  The constant is reported, not asserted.
    """
    sign = branch_sign(branch)
    v = np.atleast_1d(np.asarray(argmin, dtype=float))
    c = model.coeffs
    t = point.t
    b = abs(c.b(sign, t, v))
    s = float(np.linalg.norm(c.sigma(sign, t, v)))
    f = c.f(sign, t, v)
    denom = 1.0 + float(np.linalg.norm(point.Lam))
    if model.regime is Regime.CASE_I:
        q, name = max(b, s), "max(|b|,|sigma|)"
    elif model.regime is Regime.CASE_II:
        q, name = f, "f"
    else:
        q, name = s, "|sigma|"
    return BoundReport(model.regime, name, {"b": b, "sigma": s, "f": f}, q / denom)
