"""Optimal feedback u*(t, X) = v1_t X^+ + v2_t X^- and its forward verification.

Under a piecewise-linear feedback the state is a stochastic exponential that never
changes sign:

    X_t = x0 exp( int_0^t (b(s, v) - |sigma(s, v)|^2 / 2) ds + int_0^t sigma(s, v) . dW )

with (s, v) = (+1, v1) for x0 > 0; for x0 < 0 the same holds for |X| with drift
-b(-1, v2) and volatility -sigma(-1, v2).  With v piecewise constant
on the grid, log X is simulated exactly.  Running costs use the left-endpoint rule
with f(X, u*) = |X|^p f(sign, v).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bsde import BsdeSolution, TimeGrid
from .cones import ConeSpec, contains, project
from .errors import ConstraintViolation, GridMismatch
from .model import CONE_TOL, HomogeneousModel
from .rng import step_normals

__all__ = [
    "FeedbackControl",
    "SimulationBatch",
    "build_feedback",
    "simulate_state",
    "estimate_cost",
    "value_function",
    "evaluate_competitor",
    "expected_cost_exact",
]


@dataclass(frozen=True)
class FeedbackControl:
    grid: TimeGrid
    v_hat_plus: np.ndarray   # (N+1, m)
    v_hat_minus: np.ndarray  # (N+1, m)

    def __call__(self, k: int, x: float) -> np.ndarray:
        """u*(t_k, x)."""
        return self.v_hat_plus[k] * max(x, 0.0) + self.v_hat_minus[k] * max(-x, 0.0)

    def branch(self, sign: int) -> np.ndarray:
        return self.v_hat_plus if sign > 0 else self.v_hat_minus


def _validate_in_cone(cone: ConeSpec, V: np.ndarray, label: str):
    for k, v in enumerate(V):
        if not contains(cone, v, CONE_TOL * (1.0 + float(np.linalg.norm(v)))):
            raise ConstraintViolation(f"{label} at node {k} = {v} lies outside the cone")


def build_feedback(sol_plus: BsdeSolution, sol_minus: BsdeSolution, cone: ConeSpec | None = None) -> FeedbackControl:
    """Assemble the feedback from the per-node minimisers of the two branch solutions."""
    if sol_plus.grid != sol_minus.grid:
        raise GridMismatch("the two branch solutions use different grids")
    if sol_plus.branch != "plus" or sol_minus.branch != "minus":
        raise ValueError("expected (plus, minus) branch solutions")
    if sol_plus.is_tree or sol_minus.is_tree:
        raise ValueError("feedback construction needs deterministic-mode solutions")
    v1 = np.array(sol_plus.v_hat, dtype=float)
    v2 = np.array(sol_minus.v_hat, dtype=float)
    if cone is not None:
        _validate_in_cone(cone, v1, "v_hat_plus")
        _validate_in_cone(cone, v2, "v_hat_minus")
    return FeedbackControl(sol_plus.grid, v1, v2)


def value_function(sol_plus: BsdeSolution, sol_minus: BsdeSolution, x0: float) -> float:
    """P_plus(0) (x0^+)^p + P_minus(0) (x0^-)^p."""
    if sol_plus.p != sol_minus.p or math.isnan(sol_plus.p):
        raise ValueError("solutions must carry the same degree p")
    return value_function_p(sol_plus.P0, sol_minus.P0, x0, sol_plus.p)


def value_function_p(P_plus0: float, P_minus0: float, x0: float, p: float) -> float:
    return P_plus0 * max(x0, 0.0) ** p + P_minus0 * max(-x0, 0.0) ** p


@dataclass
class SimulationBatch:
    paths: int
    seed: int
    x0: float
    grid: TimeGrid
    sign: int
    log_x: Optional[np.ndarray]        # (paths, N+1) of log|X|, when recorded
    running_cost: np.ndarray           # (paths,)
    terminal_cost: np.ndarray          # (paths,)
    J_mean: float
    J_stderr: float
    min_abs_x: float = math.nan
    max_abs_x: float = math.nan
    feedback_id: int = 0
    model_id: int = 0

    @property
    def X(self) -> np.ndarray:
        if self.log_x is None:
            raise ValueError("paths were not recorded (simulate with record=True)")
        return self.sign * np.exp(self.log_x)

    def running_cost_paths(self, model: HomogeneousModel, feedback: FeedbackControl) -> np.ndarray:
        """Cumulative running cost along recorded paths, shape (paths, N+1)."""
        V = feedback.branch(self.sign)
        t = self.grid.nodes
        rate = np.array([model.coeffs.f(self.sign, t[k], V[k]) for k in range(self.grid.N)])
        absx_p = np.exp(model.p * self.log_x[:, :-1])
        inc = absx_p * rate[None, :] * self.grid.dt
        out = np.zeros_like(self.log_x)
        out[:, 1:] = np.cumsum(inc, axis=1)
        return out


def _node_rates(model: HomogeneousModel, feedback: FeedbackControl, sign: int):
    """Per-cell log-drift, volatility and running-cost rate at the cell's left node.

    For x < 0, d|X| = -dX, so |X| has drift -b(-1, v) and volatility -sigma(-1, v).
    """
    grid = feedback.grid
    t = grid.nodes
    V = feedback.branch(sign)
    c = model.coeffs
    N = grid.N
    drift = np.empty(N)
    vol = np.empty((N, model.n))
    frate = np.empty(N)
    for k in range(N):
        drift[k] = sign * c.b(sign, t[k], V[k])
        vol[k] = sign * c.sigma(sign, t[k], V[k])
        frate[k] = c.f(sign, t[k], V[k])
    return drift, vol, frate


def _summary(costs: np.ndarray):
    # numpy's sum is pairwise for contiguous float arrays: the reduction is reproducible
    n = costs.size
    mean = float(np.sum(costs) / n)
    if n < 2:
        return mean, 0.0
    var = float(np.sum((costs - mean) ** 2) / (n - 1))
    return mean, math.sqrt(var / n)


def simulate_state(feedback: FeedbackControl, model: HomogeneousModel, x0: float, paths: int,
                   seed: int, record: bool = False, antithetic: bool = False) -> SimulationBatch:
    """Simulate the closed-loop state exactly (log-space, piecewise-constant controls) and
    accumulate per-path running and terminal costs.

    ``record`` keeps the full (paths, N+1) matrix of log|X|.  With ``antithetic`` the
    second half of the paths reuses the negated increments of the first half.
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    if antithetic and paths % 2:
        raise ValueError("antithetic sampling needs an even number of paths")
    grid = feedback.grid
    if abs(grid.T - model.T) > 1e-12 * model.T:
        raise GridMismatch("feedback grid horizon differs from the model horizon")
    N = grid.N
    dt = grid.dt
    sqdt = math.sqrt(dt)
    p = model.p
    if x0 == 0.0:
        zeros = np.zeros(paths)
        log_x = np.full((paths, N + 1), -np.inf) if record else None
        return SimulationBatch(paths, seed, 0.0, grid, 0, log_x, zeros, zeros.copy(), 0.0, 0.0, 0.0, 0.0,
                               id(feedback), id(model))
    sign = 1 if x0 > 0 else -1
    drift, vol, frate = _node_rates(model, feedback, sign)
    log_x = np.full(paths, math.log(abs(x0)))
    running = np.zeros(paths)
    record_arr = np.empty((paths, N + 1)) if record else None
    if record:
        record_arr[:, 0] = log_x
    min_abs = max_abs = abs(x0)
    half = paths // 2 if antithetic else paths
    for k in range(N):
        running += np.exp(p * log_x) * (frate[k] * dt)
        z = step_normals(seed, k, half, model.n)
        if antithetic:
            z = np.concatenate([z, -z])
        mu = (drift[k] - 0.5 * float(vol[k] @ vol[k])) * dt
        log_x = log_x + mu + sqdt * (z @ vol[k])
        if record:
            record_arr[:, k + 1] = log_x
        min_abs = min(min_abs, float(np.exp(np.min(log_x))))
        max_abs = max(max_abs, float(np.exp(np.max(log_x))))
    terminal = np.exp(p * log_x) * model.coeffs.g(sign)
    J_mean, J_stderr = _summary(running + terminal)
    return SimulationBatch(paths, seed, float(x0), grid, sign, record_arr, running, terminal,
                           J_mean, J_stderr, min_abs, max_abs, id(feedback), id(model))


def estimate_cost(batch: SimulationBatch, feedback: FeedbackControl | None = None,
                  model: HomogeneousModel | None = None):
    """Sample mean and standard error of the realised cost of ``batch``."""
    if feedback is not None and batch.feedback_id and id(feedback) != batch.feedback_id:
        raise ValueError("batch was simulated with a different feedback")
    if model is not None and batch.model_id and id(model) != batch.model_id:
        raise ValueError("batch was simulated with a different model")
    return batch.J_mean, batch.J_stderr


def evaluate_competitor(v1, v2, model: HomogeneousModel, x0: float, paths: int, seed: int,
                        grid: TimeGrid | None = None, antithetic: bool = False):
    """Cost of the piecewise-linear feedback u(t, X) = v1_t X^+ + v2_t X^-.

    ``v1`` and ``v2`` are (N+1, m) arrays of cone points (or a single FeedbackControl
    passed as ``v1`` with ``v2=None``).  Returns (J_mean, J_stderr).
    """
    if isinstance(v1, FeedbackControl):
        fb = v1
    else:
        v1 = np.atleast_2d(np.asarray(v1, dtype=float))
        v2 = np.atleast_2d(np.asarray(v2, dtype=float))
        if grid is None:
            grid = TimeGrid(v1.shape[0] - 1, model.T)
        if v1.shape != (grid.N + 1, model.m) or v2.shape != v1.shape:
            raise GridMismatch("competitor arrays must have shape (N+1, m)")
        fb = FeedbackControl(grid, v1, v2)
    _validate_in_cone(model.cone, fb.v_hat_plus, "competitor v1")
    _validate_in_cone(model.cone, fb.v_hat_minus, "competitor v2")
    batch = simulate_state(fb, model, x0, paths, seed, antithetic=antithetic)
    return estimate_cost(batch)


def expected_cost_exact(feedback: FeedbackControl, model: HomogeneousModel, x0: float) -> float:
    """Exact expectation of the simulated (discretised) cost for deterministic controls.

    Uses E|X_k|^p = |x0|^p exp(p sum_j (b_j - |s_j|^2/2) dt + p^2/2 sum_j |s_j|^2 dt);
    this is what :func:`simulate_state` estimates, free of Monte Carlo error.
    """
    if x0 == 0.0:
        return 0.0
    sign = 1 if x0 > 0 else -1
    drift, vol, frate = _node_rates(model, feedback, sign)
    dt = feedback.grid.dt
    p = model.p
    s2 = np.einsum("ij,ij->i", vol, vol)
    incr = (p * (drift - 0.5 * s2) + 0.5 * p * p * s2) * dt
    log_moment = math.log(abs(x0)) * p + np.concatenate([[0.0], np.cumsum(incr)])
    moments = np.exp(log_moment)
    return float(np.sum(moments[:-1] * frate * dt) + moments[-1] * model.coeffs.g(sign))


def project_path(cone: ConeSpec, V) -> np.ndarray:
    return np.array([project(cone, v) for v in np.atleast_2d(V)])
