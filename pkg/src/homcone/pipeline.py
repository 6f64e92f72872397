"""Solve / simulate / verify pipelines shared by the command line and the test-suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bsde import TimeGrid, check_invariants, solve_deterministic, solve_tree, solve_upper_bound
from .cones import ConeSpec, MinimizerConfig, project, sample_cone
from .config import CompetitorSpec
from .control import (FeedbackControl, build_feedback, estimate_cost, expected_cost_exact, simulate_state,
                      value_function)
from .model import HomogeneousModel

__all__ = ["solve_pair", "invariant_reports", "make_competitor", "default_competitors", "Allowance",
           "discretization_allowance", "VerificationRow", "CompetitorRow", "verify_model", "corrupt_feedback"]

Z_LIMIT = 3.0
# relative slack absorbing rounding differences between simulated and exact costs
FP_SLACK = 1e-12


def solve_pair(model: HomogeneousModel, N: int, mode: str = "deterministic",
               config: MinimizerConfig | None = None):
    """Both branch solutions on an N-step grid."""
    grid = TimeGrid(N, model.T)
    if mode == "tree":
        return (solve_tree(model, "plus", grid, config=config), solve_tree(model, "minus", grid, config=config))
    return solve_deterministic(model, "plus", grid, config), solve_deterministic(model, "minus", grid, config)


def invariant_reports(model, sol_plus, sol_minus, tol: float = 1e-8):
    """Invariant reports for the two branches, each checked against its comparison bound."""
    mode = "tree" if sol_plus.is_tree else "deterministic"
    out = []
    for sol in (sol_plus, sol_minus):
        upper = solve_upper_bound(model, sol.branch, sol.grid, mode=mode)
        out.append(check_invariants(sol, model, upper, tol=tol))
    return out


def _unit(v):
    nv = float(np.linalg.norm(v))
    return v / nv if nv > 0 else v


def make_competitor(spec: CompetitorSpec, fb: FeedbackControl, cone: ConeSpec) -> FeedbackControl:
    """Competitor feedback derived from the optimum ``fb``; always cone-valued."""
    V1, V2 = fb.v_hat_plus, fb.v_hat_minus
    if spec.kind == "optimal":
        return fb
    if spec.kind == "zero":
        return FeedbackControl(fb.grid, np.zeros_like(V1), np.zeros_like(V2))
    if spec.kind == "scaled":
        if spec.factor < 0:
            raise ValueError("scaled competitors need a nonnegative factor")
        return FeedbackControl(fb.grid, spec.factor * V1, spec.factor * V2)
    if spec.kind == "negated":
        return corrupt_feedback(fb, cone)
    if spec.kind == "perturbed":
        e = np.zeros(V1.shape[1])
        e[spec.index % e.size] = spec.delta
        return FeedbackControl(fb.grid, _project_rows(cone, V1 + e), _project_rows(cone, V2 + e))
    # random_ray: a fixed random cone direction, with a randomly rescaled optimum magnitude
    rng = np.random.default_rng(spec.seed)
    d = _unit(sample_cone(cone, rng, 1)[0])
    if not np.any(d):
        d = cone.spanning_directions()[0]
    d = d * rng.uniform(0.25, 2.0)
    mags1 = np.linalg.norm(V1, axis=1, keepdims=True)
    mags2 = np.linalg.norm(V2, axis=1, keepdims=True)
    mags1[mags1 == 0] = 1.0
    mags2[mags2 == 0] = 1.0
    return FeedbackControl(fb.grid, mags1 * d, mags2 * d)


def _project_rows(cone, V):
    return np.array([project(cone, v) for v in V])


def corrupt_feedback(fb: FeedbackControl, cone: ConeSpec) -> FeedbackControl:
    """The negated optimum, projected back into the cone (a deliberately wrong control)."""
    return FeedbackControl(fb.grid, _project_rows(cone, -fb.v_hat_plus), _project_rows(cone, -fb.v_hat_minus))


def default_competitors() -> list:
    return [
        CompetitorSpec("zero"),
        CompetitorSpec("scaled", factor=0.5),
        CompetitorSpec("scaled", factor=1.5),
        CompetitorSpec("perturbed", delta=0.1),
        CompetitorSpec("random_ray", seed=1),
        CompetitorSpec("random_ray", seed=2),
    ]


@dataclass
class Allowance:
    """Discretisation allowance for one x0.

    ``slope`` is C in C*dt, estimated from the exact expected discrete cost on the N-grid
    and a coarse M-grid (M = N // 2): C = |E_N - E_M| / (dt_M - dt_N).  ``bias`` is the
    directly computed |E_N - value|.  The allowance is the larger of C*dt and bias.
    """

    x0: float
    expected_N: float
    expected_coarse: float
    slope: float
    bias: float
    dt: float

    @property
    def value(self) -> float:
        return max(self.slope * self.dt, self.bias)


def discretization_allowance(model, fb_fine: FeedbackControl, fb_coarse: FeedbackControl, value: float,
                             x0: float) -> Allowance:
    e_n = expected_cost_exact(fb_fine, model, x0)
    e_m = expected_cost_exact(fb_coarse, model, x0)
    dt_n, dt_m = fb_fine.grid.dt, fb_coarse.grid.dt
    slope = abs(e_n - e_m) / (dt_m - dt_n)
    return Allowance(x0, e_n, e_m, slope, abs(e_n - value), dt_n)


@dataclass
class VerificationRow:
    x0: float
    value: float
    J_mean: float
    J_stderr: float
    allowance: float
    z: float
    passed: bool

    @property
    def gap(self) -> float:
        return self.J_mean - self.value


@dataclass
class CompetitorRow:
    name: str
    x0: float
    value: float
    J_mean: float
    J_stderr: float
    allowance: float
    passed: bool

    @property
    def gap(self) -> float:
        return self.J_mean - self.value


@dataclass
class VerificationReport:
    rows: list
    competitors: list = field(default_factory=list)
    P_plus0: float = math.nan
    P_minus0: float = math.nan

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and all(c.passed for c in self.competitors)


def _z(J, se, value, allowance):
    excess = max(0.0, abs(J - value) - allowance - FP_SLACK * (1.0 + abs(value)))
    if excess == 0.0:
        return 0.0
    return excess / se if se > 0 else math.inf


def verify_model(model: HomogeneousModel, N: int, x0s, paths: int, seed: int, competitors=(),
                 config: MinimizerConfig | None = None, corrupt: str | None = None,
                 antithetic: bool = False, solutions=None) -> VerificationReport:
    """Solve, simulate under the feedback and compare against the value function.

    The z-score is (|J - value| - allowance)^+ / stderr, and a row passes when z <= 3.
    A competitor passes when J + 3 stderr + allowance >= value.  With ``corrupt="negate"``
    the simulated "optimal" feedback is the negated optimum (a negative control); the
    allowance still comes from the genuine optimum, as a property of the scheme.
    """
    sol_plus, sol_minus = solutions or solve_pair(model, N, "deterministic", config)
    coarse_plus, coarse_minus = solve_pair(model, max(1, N // 2), "deterministic", config)
    fb = build_feedback(sol_plus, sol_minus, model.cone)
    fb_coarse = build_feedback(coarse_plus, coarse_minus, model.cone)
    shipped = corrupt_feedback(fb, model.cone) if corrupt == "negate" else fb
    rows, comp_rows = [], []
    for x0 in x0s:
        value = value_function(sol_plus, sol_minus, x0)
        allow = discretization_allowance(model, fb, fb_coarse, value, x0).value
        batch = simulate_state(shipped, model, x0, paths, seed, antithetic=antithetic)
        J, se = estimate_cost(batch, shipped, model)
        z = _z(J, se, value, allow)
        rows.append(VerificationRow(x0, value, J, se, allow, z, z <= Z_LIMIT))
        for spec in competitors:
            comp = make_competitor(spec, fb, model.cone)
            cb = simulate_state(comp, model, x0, paths, seed, antithetic=antithetic)
            Jc, sec = estimate_cost(cb)
            ok = Jc + Z_LIMIT * sec + allow >= value
            comp_rows.append(CompetitorRow(spec.name, x0, value, Jc, sec, allow, ok))
    return VerificationReport(rows, comp_rows, sol_plus.P0, sol_minus.P0)
