"""Backward solvers for the two one-dimensional BSDEs

    P_t = g(+-1) + int_t^T G*_{+-}(P_s, Lam_s) ds - int_t^T Lam_s . dW_s.

Two modes are provided:

* deterministic coefficients: Lam = 0 and P solves the terminal-value ODE
  dP/dt = -G*(t, P, 0), integrated backward with classical RK4;
* a recombining binomial tree (one driving Brownian motion) with increments
  +-sqrt(dt), where conditional expectations are exact and Lam is read off the
  two children:  P_k = E[P_{k+1}] + G*(P_k, Lam_k) dt,  Lam_k = E[P_{k+1} xi] / sqrt(dt).
  The implicit dependence on P_k is resolved by fixed-point iteration.

The linear comparison equation (control frozen at v = 0) and an independent Riccati
integrator for the p = 2 unconstrained system are included as oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .cones import MinimizerConfig, Status
from .driver import DriverPoint, G_star, _driver, branch_sign
from .errors import IllPosedError, NonFiniteObjective, SchemeDivergence
from .model import HomogeneousModel, Regime

__all__ = [
    "TimeGrid",
    "BsdeSolution",
    "TreeScenario",
    "solve_deterministic",
    "solve_tree",
    "solve_upper_bound",
    "riccati_oracle",
    "check_invariants",
    "InvariantReport",
]

DEFAULT_TREE_NODE_CAP = 5_000_000


@dataclass(frozen=True)
class TimeGrid:
    N: int
    T: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("grid needs at least one step")
        if not self.T > 0:
            raise ValueError("T must be > 0")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        t = self.T * np.arange(self.N + 1) / self.N
        t[-1] = self.T
        return t


class _Driver:
    """G* evaluations for one solve, memoised on (t, P, Lam) and warm-started."""

    def __init__(self, model, branch, config, frozen_zero=False):
        self.model = model
        self.branch = branch
        self.sign = branch_sign(branch)
        self.config = config
        self.frozen_zero = frozen_zero
        self.cache = {}
        self.last_argmin = None
        self.status_counts = {s.value: 0 for s in Status}
        self.closed_form_hits = 0

    def __call__(self, t, P, lam, model=None):
        model = model or self.model
        key = (t, P, lam.tobytes(), id(model))
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if not (math.isfinite(P) and np.all(np.isfinite(lam))):
            raise SchemeDivergence(f"non-finite state P={P} at t={t:.6g}")
        point = DriverPoint(t, P, lam)
        if self.frozen_zero:
            v = np.zeros(model.m)
            out = (_driver(model, self.sign, point)(v), v)
        else:
            starts = None if self.last_argmin is None else [self.last_argmin]
            try:
                res = G_star(model, self.branch, point, self.config, starts=starts)
            except NonFiniteObjective:
                raise SchemeDivergence(f"driver overflows at t={t:.6g}, P={P:.6g}") from None
            self.status_counts[res.status.value] += 1
            self.closed_form_hits += res.closed_form
            if res.status is Status.DIVERGENT:
                raise IllPosedError(f"driver infimum is -inf at t={t:.6g}, P={P:.6g} "
                                    f"(branch {self.branch}): the problem is ill-posed", t=t, P=P)
            self.last_argmin = res.argmin
            out = (res.value, res.argmin)
        if not math.isfinite(out[0]):
            raise SchemeDivergence(f"non-finite driver value at t={t}, P={P}")
        if len(self.cache) > 200_000:
            self.cache.clear()
        self.cache[key] = out
        return out


@dataclass
class BsdeSolution:
    """Solution of one branch BSDE on a grid.

    In deterministic mode ``P`` has shape (N+1,), ``Lam`` (N+1, n) and ``v_hat``
    (N+1, m).  In tree mode they are lists indexed by layer k holding arrays with k+1
    rows (node j = number of up moves); Lam and v_hat on the terminal layer are zero
    and the terminal minimiser respectively.
    """

    grid: TimeGrid
    mode: str
    branch: str
    P: object
    Lam: object
    v_hat: object
    diagnostics: dict = field(default_factory=dict)
    p: float = math.nan

    @property
    def P0(self) -> float:
        return float(self.P[0]) if self.mode == "deterministic" else float(self.P[0][0])

    @property
    def is_tree(self) -> bool:
        return self.mode.startswith("tree")

    def layer(self, k):
        """(P, Lam, v_hat) arrays on layer k (one row per node)."""
        if self.is_tree:
            return self.P[k], self.Lam[k], self.v_hat[k]
        return np.array([self.P[k]]), self.Lam[k:k + 1], self.v_hat[k:k + 1]

    def all_P(self) -> np.ndarray:
        return np.asarray(self.P) if not self.is_tree else np.concatenate(self.P)


def _stage_times(t_lo, t_hi):
    # keep stage times inside (t_lo, t_hi] so piecewise-constant coefficients use this step's cell
    eps = 1e-9 * (t_hi - t_lo)
    mid = 0.5 * (t_lo + t_hi)
    return t_hi - eps, mid, t_lo


def _rk4_backward(drv: _Driver, model: HomogeneousModel, grid: TimeGrid, terminal: float):
    N = grid.N
    t = grid.nodes
    h = grid.dt
    lam0 = np.zeros(model.n)
    P = np.empty(N + 1)
    V = np.empty((N + 1, model.m))
    P[N] = terminal
    _, V[N] = drv(t[N], terminal, lam0)
    for k in range(N - 1, -1, -1):
        t_hi, t_mid, t_lo = _stage_times(t[k], t[k + 1])
        y = P[k + 1]
        k1, _ = drv(t_hi, y, lam0)
        k2, _ = drv(t_mid, y + 0.5 * h * k1, lam0)
        k3, _ = drv(t_mid, y + 0.5 * h * k2, lam0)
        k4, _ = drv(t_lo, y + h * k3, lam0)
        P[k] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(P[k]):
            raise SchemeDivergence(f"P became non-finite at t={t[k]:.6g}")
        _, V[k] = drv(t[k], P[k], lam0)
    return P, np.zeros((N + 1, model.n)), V


def solve_deterministic(model: HomogeneousModel, branch, grid: TimeGrid,
                        config: MinimizerConfig | None = None) -> BsdeSolution:
    """Integrate dP/dt = -G*(t, P, 0) backward from P(T) = g(+-1) with RK4.

    The stored minimiser at node k is the argmin at (t_k, P_k).

    Raises
    ------
    IllPosedError
        When the driver infimum is -inf at some stage.
    SchemeDivergence
        When P becomes NaN or infinite.
    """
    _check_grid(model, grid)
    drv = _Driver(model, branch, config)
    P, Lam, V = _rk4_backward(drv, model, grid, model.coeffs.g(drv.sign))
    diag = {"status_counts": drv.status_counts, "closed_form_evaluations": drv.closed_form_hits}
    return BsdeSolution(grid, "deterministic", _branch_name(drv.sign), P, Lam, V, diag, model.p)


def solve_upper_bound(model: HomogeneousModel, branch, grid: TimeGrid, mode: str = "deterministic",
                      scenario: "TreeScenario | None" = None) -> BsdeSolution:
    """Solve the linear comparison equation whose driver is G(0, P, Lam) (control frozen at 0).

    Returns a :class:`BsdeSolution` whose ``P`` is the upper-bound path; ``v_hat`` is 0.
    """
    _check_grid(model, grid)
    drv = _Driver(model, branch, None, frozen_zero=True)
    if mode == "deterministic":
        P, Lam, V = _rk4_backward(drv, model, grid, model.coeffs.g(drv.sign))
        return BsdeSolution(grid, "deterministic", _branch_name(drv.sign), P, Lam, V, {"upper_bound": True}, model.p)
    sol = _tree_backward(drv, model, grid, scenario, 1e-12, 100, DEFAULT_TREE_NODE_CAP)
    sol.diagnostics["upper_bound"] = True
    return sol


@dataclass
class TreeScenario:
    """Scenario dependence for tree mode.

    ``terminal(w)`` gives g(+-1) as a function of the terminal Brownian value
    W_T = (2j - N) sqrt(dt); ``model_at(t, w)`` may return a different model
    (piecewise-constant scenario dependence of the coefficients) or None.  Both receive
    the branch sign as a keyword ``sign``.
    """

    terminal: Optional[Callable] = None
    model_at: Optional[Callable] = None


def solve_tree(model: HomogeneousModel, branch, grid: TimeGrid, n: int = 1,
               scenario: TreeScenario | None = None, config: MinimizerConfig | None = None,
               tol: float = 1e-12, max_iter: int = 100, node_cap: int = DEFAULT_TREE_NODE_CAP) -> BsdeSolution:
    """Backward recursion on a recombining binomial tree (single driving noise).

    Raises
    ------
    SchemeDivergence
        When a node's fixed-point iteration stops contracting or does not converge in
        ``max_iter`` iterations.
    IllPosedError
        When the driver infimum is -inf.
    """
    if n != 1 or model.n != 1:
        raise ValueError("tree mode supports a single driving Brownian motion (n = 1)")
    _check_grid(model, grid)
    drv = _Driver(model, branch, config)
    sol = _tree_backward(drv, model, grid, scenario, tol, max_iter, node_cap)
    sol.diagnostics.update({"status_counts": drv.status_counts, "closed_form_evaluations": drv.closed_form_hits})
    return sol


def _tree_backward(drv: _Driver, model, grid, scenario, tol, max_iter, node_cap):
    N = grid.N
    if (N + 1) * (N + 2) // 2 > node_cap:
        raise ValueError(f"tree with {N} steps exceeds the node cap {node_cap}")
    dt = grid.dt
    sq = math.sqrt(dt)
    t = grid.nodes
    sign = drv.sign
    P = [None] * (N + 1)
    Lam = [None] * (N + 1)
    V = [None] * (N + 1)
    w_T = (2.0 * np.arange(N + 1) - N) * sq
    if scenario is not None and scenario.terminal is not None:
        P[N] = np.array([float(scenario.terminal(w, sign=sign)) for w in w_T])
    else:
        P[N] = np.full(N + 1, model.coeffs.g(sign))
    Lam[N] = np.zeros((N + 1, 1))
    V[N] = np.zeros((N + 1, model.m))
    lam0 = np.zeros(1)
    for j in range(N + 1):
        node_model = _node_model(scenario, model, t[N], w_T[j], sign)
        V[N][j] = drv(t[N], float(P[N][j]), lam0, node_model)[1]
    iterations = 0
    for k in range(N - 1, -1, -1):
        nxt = P[k + 1]
        Pk = np.empty(k + 1)
        Lk = np.empty((k + 1, 1))
        Vk = np.empty((k + 1, model.m))
        w = (2.0 * np.arange(k + 1) - k) * sq
        for j in range(k + 1):
            down, up = nxt[j], nxt[j + 1]
            expect = 0.5 * (up + down)
            lam = np.array([(up - down) / (2.0 * sq)])
            node_model = _node_model(scenario, model, t[k], w[j], sign)
            Pk[j], Vk[j], its = _fixed_point(drv, t[k], expect, lam, dt, node_model, tol, max_iter)
            iterations += its
            Lk[j] = lam
        P[k], Lam[k], V[k] = Pk, Lk, Vk
    return BsdeSolution(grid, f"tree({N})", _branch_name(sign), P, Lam, V,
                        {"fixed_point_iterations": iterations}, model.p)


def _node_model(scenario, model, t, w, sign):
    if scenario is None or scenario.model_at is None:
        return model
    return scenario.model_at(t, w, sign=sign) or model


def _fixed_point(drv, t, expect, lam, dt, model, tol, max_iter):
    P = expect
    residuals = []
    argmin = None
    for it in range(1, max_iter + 1):
        g, argmin = drv(t, P, lam, model)
        P_new = expect + dt * g
        if not math.isfinite(P_new):
            raise SchemeDivergence(f"fixed point produced a non-finite value at t={t:.6g}")
        r = abs(P_new - P)
        residuals.append(r)
        P = P_new
        if r <= tol * max(1.0, abs(P)):
            return P, argmin, it
        if len(residuals) > 10 and r > residuals[-11]:
            raise SchemeDivergence(f"fixed-point iteration is not contracting at t={t:.6g} "
                                   f"(residual {r:.3g} after {it} iterations); reduce the step size")
    raise SchemeDivergence(f"fixed-point iteration did not converge in {max_iter} iterations at t={t:.6g}")


def riccati_oracle(lq_params: dict, grid: TimeGrid, rtol: float = 1e-12, atol: float = 1e-14) -> np.ndarray:
    """Integrate the classical LQ Riccati equation for p = 2 on R^m, independently of the driver code.

    dP/dt = P^2 B^T (R^T R)^{-1} B - Q^2 - P |C|^2 - 2 P A,   P(T) = G^2,

    using an adaptive embedded Runge-Kutta pair (DOP853).  ``lq_params`` holds scalars
    A, Q, G, vectors B (m), C (n) and the matrix R (k x m).  Returns P at the grid nodes.
    """
    A = float(lq_params["A"])
    B = np.atleast_1d(np.asarray(lq_params["B"], dtype=float))
    C = np.atleast_1d(np.asarray(lq_params.get("C", 0.0), dtype=float))
    Q = float(lq_params["Q"])
    R = np.atleast_2d(np.asarray(lq_params["R"], dtype=float))
    G = float(lq_params["G"])
    M = R.T @ R
    if np.linalg.matrix_rank(M) < M.shape[0]:
        raise np.linalg.LinAlgError("R^T R is singular")
    kappa = float(B @ np.linalg.solve(M, B))
    c2 = float(C @ C)

    def rhs(_, y):
        P = y[0]
        return [kappa * P * P - Q * Q - P * c2 - 2.0 * A * P]

    nodes = grid.nodes
    sol = solve_ivp(rhs, (grid.T, 0.0), [G * G], method="DOP853", rtol=rtol, atol=atol,
                    t_eval=nodes[::-1], dense_output=False)
    if not sol.success:
        raise RuntimeError(f"Riccati integration failed: {sol.message}")
    out = sol.y[0][::-1].copy()
    out[-1] = G * G
    return out


@dataclass
class InvariantReport:
    terminal_exact: bool
    sign_ok: bool
    min_P: float
    positivity_c: Optional[float]
    upper_bound_ok: Optional[bool]
    upper_bound_gap: Optional[float]
    messages: list

    @property
    def ok(self) -> bool:
        return self.terminal_exact and self.sign_ok and self.upper_bound_ok is not False


def check_invariants(sol: BsdeSolution, model: HomogeneousModel, upper: BsdeSolution | None = None,
                     tol: float = 1e-8, terminal_values=None) -> InvariantReport:
    """Check terminal exactness, nonnegativity (cases I, II) or uniform positivity (case III)
    and the comparison bound P <= P_upper + tol."""
    sign = branch_sign(sol.branch)
    messages = []
    if sol.is_tree:
        last = sol.P[-1]
        expected = np.full_like(last, model.coeffs.g(sign)) if terminal_values is None else np.asarray(terminal_values)
        terminal_exact = bool(np.array_equal(last, expected))
    else:
        terminal_exact = bool(sol.P[-1] == model.coeffs.g(sign))
    if not terminal_exact:
        messages.append("terminal value differs from g")
    allP = sol.all_P()
    min_P = float(np.min(allP))
    positivity_c = None
    if model.regime is Regime.CASE_III:
        eta = model.regime_params.eta
        if min_P > 0 and eta > 0:
            positivity_c = max(0.0, math.log(eta / min_P) / model.T)
            sign_ok = True
        else:
            positivity_c = math.inf
            sign_ok = False
            messages.append(f"uniform positivity fails: min P = {min_P:.6g} (eta = {eta})")
    else:
        sign_ok = min_P >= -tol
        if not sign_ok:
            messages.append(f"nonnegativity fails: min P = {min_P:.6g}")
    upper_ok = gap = None
    if upper is not None:
        gap = float(np.max(allP - upper.all_P()))
        upper_ok = gap <= tol
        if not upper_ok:
            messages.append(f"comparison bound fails: max(P - P_upper) = {gap:.3g}")
    return InvariantReport(terminal_exact, sign_ok, min_P, positivity_c, upper_ok, gap, messages)


def _check_grid(model, grid):
    if abs(grid.T - model.T) > 1e-12 * model.T:
        raise ValueError(f"grid horizon {grid.T} differs from model horizon {model.T}")


def _branch_name(sign):
    return "plus" if sign > 0 else "minus"
