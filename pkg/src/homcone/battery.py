"""Regression-model battery.

Each entry is a small, well-posed instance chosen to exercise one corner of the
implementation: closed-form and numeric driver minimisation, the three regimes,
full / orthant / ray / generated cones, asymmetric and control-dependent
coefficients, the ratio and trigonometric cost families, and time-dependent
(piecewise-constant) coefficients.
"""

from __future__ import annotations

import numpy as np

from .cones import ConeSpec
from .families import PowerFamily, RatioFamily, TrigFamily, build_model
from .model import HomogeneousModel, RegimeParams

__all__ = ["BATTERY", "battery", "get_model"]


def _lq_scalar():
    fam = PowerFamily.symmetric(p=2.0, T=1.0, m=1, n=1, A=0.1, B=[1.0], C=[0.3], Q=1.0, R=[[1.0]], G=1.0)
    return build_model(fam, ConeSpec.full(1), "I", RegimeParams(delta=4.0, L=4.0), "lq-scalar")


def _lq_2d():
    fam = PowerFamily.symmetric(p=2.0, T=1.0, m=2, n=2, A=-0.2, B=[0.8, -0.5], C=[0.25, 0.1], Q=0.7,
                                R=[[1.0, 0.2], [0.0, 0.9]], G=1.2)
    return build_model(fam, ConeSpec.full(2), "I", RegimeParams(delta=4.0, L=4.0), "lq-2d")


def _power_p3():
    fam = PowerFamily.symmetric(p=3.0, T=1.0, m=1, n=1, A=0.2, B=[0.6], C=[0.4], Q=0.8, R=[[1.0]], G=1.0)
    return build_model(fam, ConeSpec.full(1), "I", RegimeParams(delta=4.0, L=4.0), "power-p3")


def _power_p15():
    # p < 2: drift grows faster than f^(1/2), so the bounded-volatility regime applies
    fam = PowerFamily.symmetric(p=1.5, T=1.0, m=1, n=1, A=0.1, B=[0.5], C=[0.3], Q=1.0, R=[[1.0]], G=1.0)
    return build_model(fam, ConeSpec.full(1), "II", RegimeParams(L=0.3, eps_table=((0.5, 2.0), (0.1, 5.0))),
                       "power-p1.5")


def _orthant_2d():
    fam = PowerFamily.symmetric(p=2.0, T=1.0, m=2, n=1, A=0.1, B=[1.0, -0.6], C=[0.3], Q=1.0,
                                R=[[1.0, 0.0], [0.0, 1.0]], G=1.0)
    return build_model(fam, ConeSpec.orthant(2), "I", RegimeParams(delta=4.0, L=4.0), "orthant-2d")


def _ray_cone():
    fam = PowerFamily.symmetric(p=2.5, T=1.0, m=2, n=1, A=0.05, B=[0.7, 0.4], C=[0.2],
                                D=[[0.2, -0.1]], Q=0.9, R=[[1.0, 0.0], [0.0, 1.0]], G=1.0)
    return build_model(fam, ConeSpec.ray([-1.0, -0.5]), "I", RegimeParams(delta=4.0, L=4.0), "ray-2d")


def _generated_cone():
    fam = PowerFamily.symmetric(p=2.0, T=1.0, m=2, n=1, A=0.0, B=[-0.9, 0.5], C=[0.2], Q=1.0,
                                R=[[1.0, 0.3], [0.0, 1.0]], G=0.8)
    cone = ConeSpec.generated(np.array([[1.0, 0.0], [1.0, 1.0]]).T)
    return build_model(fam, cone, "I", RegimeParams(delta=4.0, L=4.0), "generated-2d")


def _asymmetric():
    # different dynamics on the two half-lines and control-dependent volatility
    fam = PowerFamily(p=2.0, T=1.0, m=1, n=1, a_pos=0.2, a_neg=-0.1, b_pos=[1.0], b_neg=[0.6],
                      c_pos=[0.3], c_neg=[0.1], d_pos=[[0.2]], d_neg=[[0.4]], q=1.0, r=[[1.0]],
                      g_plus=1.0, g_minus=2.0)
    return build_model(fam, ConeSpec.full(1), "I", RegimeParams(delta=4.0, L=4.0), "asymmetric")


def _mixed_cost():
    fam = PowerFamily(p=3.0, T=1.0, m=1, n=1, a_pos=0.1, a_neg=0.1, b_pos=[0.8], b_neg=[0.8],
                      c_pos=[0.2], c_neg=[0.2], d_pos=[[0.1]], d_neg=[[0.1]], q=0.5, r=[[1.0]],
                      q_mix=1.0, r_mix=[[0.5]], g_plus=1.0, g_minus=1.0)
    return build_model(fam, ConeSpec.full(1), "I", RegimeParams(delta=4.0, L=4.0), "mixed-cost")


def _singular():
    # no control cost: coercivity in v comes only from the volatility term (P > 0)
    fam = PowerFamily.symmetric(p=4.0, T=1.0, m=1, n=1, A=0.1, B=[0.5], C=[0.2], D=[[1.0]], Q=1.0,
                                R=[[0.0]], G=1.0)
    return build_model(fam, ConeSpec.full(1), "III", RegimeParams(delta=1.0, L=1.0, eta=0.5), "singular")


def _singular_orthant():
    fam = PowerFamily.symmetric(p=3.5, T=1.0, m=2, n=2, A=-0.1, B=[-0.4, 0.3], C=[0.1, 0.2],
                                D=[[0.8, 0.0], [0.1, 0.6]], Q=0.5, R=[[0.0, 0.0]], G=1.1)
    return build_model(fam, ConeSpec.orthant(2), "III", RegimeParams(delta=1.0, L=1.0, eta=1.0),
                       "singular-orthant")


def _ratio():
    fam = RatioFamily(p=2.0, T=1.0, m=1, n=1, alpha=2.0, a_pos=0.1, a_neg=0.1, b_pos=[1.0], b_neg=[1.0],
                      c_pos=[0.3], c_neg=[0.3], d_pos=[[0.2]], d_neg=[[0.2]], g_plus=1.0, g_minus=1.5)
    return build_model(fam, ConeSpec.full(1), "I", RegimeParams(delta=4.0, L=4.0), "ratio")


def _trig():
    fam = TrigFamily(p=2.0, T=1.0, m=1, n=1, alpha=2.0, A=-0.8, C=[0.4], g_plus=1.0, g_minus=1.0)
    return build_model(fam, ConeSpec.full(1), "II", RegimeParams(L=0.4, eps_table=((0.1, 0.5),)), "trig")


def _time_cells():
    fam = PowerFamily.symmetric(p=2.0, T=1.0, m=1, n=1, A=[0.3, -0.2], B=[[1.0], [0.5]], C=[[0.2], [0.4]],
                                Q=[1.0, 0.5], R=[[[1.0]], [[1.5]]], G=1.0, cells=2)
    return build_model(fam, ConeSpec.full(1), "I", RegimeParams(delta=4.0, L=4.0), "time-cells")


BATTERY = {
    "lq-scalar": _lq_scalar,
    "lq-2d": _lq_2d,
    "power-p3": _power_p3,
    "power-p1.5": _power_p15,
    "orthant-2d": _orthant_2d,
    "ray-2d": _ray_cone,
    "generated-2d": _generated_cone,
    "asymmetric": _asymmetric,
    "mixed-cost": _mixed_cost,
    "singular": _singular,
    "singular-orthant": _singular_orthant,
    "ratio": _ratio,
    "trig": _trig,
    "time-cells": _time_cells,
}


def get_model(name: str) -> HomogeneousModel:
    try:
        return BATTERY[name]()
    except KeyError:
        raise KeyError(f"unknown battery model {name!r}; available: {sorted(BATTERY)}") from None


def battery() -> list:
    return [factory() for factory in BATTERY.values()]
