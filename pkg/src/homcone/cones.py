"""Closed convex control cones: membership, projection and minimisation over the cone.

Four finite representations are supported:

- ``ConeSpec.full(m)`` -- the whole space R^m (no constraint);
- ``ConeSpec.orthant(m)`` -- the nonnegative orthant R^m_+;
- ``ConeSpec.ray(d)`` -- the half line {s d : s >= 0};
- ``ConeSpec.generated(D)`` -- {D w : w >= 0} for an m x k generator matrix D.

:func:`minimize` computes inf_{v in cone} objective(v) for a black-box objective with
a multi-started spectral projected gradient method (central-difference gradients,
nonmonotone Armijo backtracking), followed by a projected pattern-search polish that
copes with the kinks produced by x^+/x^- style coefficients.  A radial probe detects
objectives that are unbounded below on the cone.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import nnls

from .errors import NonFiniteObjective

__all__ = [
    "ConeSpec",
    "MinimizerConfig",
    "MinimizeResult",
    "Status",
    "contains",
    "project",
    "minimize",
    "sample_cone",
]

FULL = "full"
ORTHANT = "orthant"
RAY = "ray"
GENERATED = "generated"


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """A closed convex cone in R^m.

    Use the constructors :meth:`full`, :meth:`orthant`, :meth:`ray` and
    :meth:`generated` rather than the raw initialiser.
    """

    kind: str
    m: int
    generators: Optional[np.ndarray] = None  # m x k, columns are generators

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("cone dimension must be >= 1")
        if self.kind in (RAY, GENERATED):
            D = np.asarray(self.generators, dtype=float)
            if D.ndim != 2 or D.shape[0] != self.m or D.shape[1] < 1:
                raise ValueError(f"generator matrix must be {self.m} x k with k >= 1")
            if np.any(np.linalg.norm(D, axis=0) == 0.0):
                raise ValueError("generators must be nonzero")
            D = D.copy()
            D.setflags(write=False)
            object.__setattr__(self, "generators", D)
        elif self.kind not in (FULL, ORTHANT):
            raise ValueError(f"unknown cone kind {self.kind!r}")

    @classmethod
    def full(cls, m: int) -> "ConeSpec":
        return cls(FULL, int(m))

    @classmethod
    def orthant(cls, m: int) -> "ConeSpec":
        return cls(ORTHANT, int(m))

    @classmethod
    def ray(cls, d) -> "ConeSpec":
        d = np.atleast_1d(np.asarray(d, dtype=float))
        return cls(RAY, d.size, d.reshape(-1, 1))

    @classmethod
    def generated(cls, D) -> "ConeSpec":
        D = np.asarray(D, dtype=float)
        if D.ndim == 1:
            D = D.reshape(-1, 1)
        return cls(GENERATED, D.shape[0], D)

    @property
    def is_full(self) -> bool:
        return self.kind == FULL

    @property
    def is_symmetric(self) -> bool:
        """True when -v lies in the cone whenever v does (only R^m among the supported kinds,
        up to generated cones that happen to be subspaces)."""
        if self.kind == FULL:
            return True
        if self.kind == GENERATED:
            return all(contains(self, -g, 1e-9) for g in self.generators.T)
        return False

    @property
    def direction(self) -> np.ndarray:
        if self.kind != RAY:
            raise AttributeError("only a ray cone has a direction")
        return self.generators[:, 0]

    def spanning_directions(self) -> np.ndarray:
        """Unit vectors (rows) that generate the cone; used to seed multistarts and radial probes."""
        if self.kind == FULL:
            eye = np.eye(self.m)
            dirs = np.vstack([eye, -eye])
        elif self.kind == ORTHANT:
            dirs = np.eye(self.m)
        else:
            dirs = self.generators.T
        return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "m": self.m}
        if self.kind == RAY:
            out["direction"] = self.direction.tolist()
        elif self.kind == GENERATED:
            out["generators"] = self.generators.T.tolist()
        return out

    def __eq__(self, other):
        if not isinstance(other, ConeSpec):
            return NotImplemented
        if (self.kind, self.m) != (other.kind, other.m):
            return False
        if self.generators is None:
            return other.generators is None
        return other.generators is not None and np.array_equal(self.generators, other.generators)

    def __hash__(self):
        gen = None if self.generators is None else self.generators.tobytes()
        return hash((self.kind, self.m, gen))


def _as_vector(cone: ConeSpec, v) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (cone.m,):
        raise ValueError(f"expected a vector of dimension {cone.m}, got shape {v.shape}")
    return v


def project(cone: ConeSpec, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the cone."""
    v = _as_vector(cone, v)
    if cone.kind == FULL:
        return v.copy()
    if cone.kind == ORTHANT:
        return np.maximum(v, 0.0)
    if cone.kind == RAY:
        d = cone.direction
        return max(float(d @ v), 0.0) / float(d @ d) * d
    w, _ = nnls(cone.generators, v)
    return cone.generators @ w


def contains(cone: ConeSpec, v, tol: float = 0.0) -> bool:
    """True iff dist(v, cone) <= tol."""
    v = _as_vector(cone, v)
    if cone.kind == FULL:
        return True
    if cone.kind == ORTHANT:
        return float(np.linalg.norm(np.minimum(v, 0.0))) <= tol
    if cone.kind == GENERATED:
        _, residual = nnls(cone.generators, v)
        return residual <= tol
    return float(np.linalg.norm(v - project(cone, v))) <= tol


def sample_cone(cone: ConeSpec, rng: np.random.Generator, size: int, scale: float = 1.0) -> np.ndarray:
    """Draw ``size`` random points of the cone (rows); magnitudes are of order ``scale``."""
    if cone.kind == FULL:
        return scale * rng.standard_normal((size, cone.m))
    if cone.kind == ORTHANT:
        return scale * np.abs(rng.standard_normal((size, cone.m)))
    k = cone.generators.shape[1]
    w = rng.exponential(size=(size, k))
    # occasionally land on a face of the cone
    w[rng.random((size, k)) < 0.2] = 0.0
    pts = w @ cone.generators.T
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return scale * pts / norms * np.abs(rng.standard_normal((size, 1)))


class Status(enum.Enum):
    CONVERGED = "Converged"
    ITERATION_CAP = "IterationCap"
    DIVERGENT = "DivergentToMinusInfinity"


@dataclass(frozen=True)
class MinimizerConfig:
    multistart_count: int = 8
    max_iterations: int = 500
    gradient_step_tolerance: float = 1e-9
    value_tolerance: float = 1e-9
    radial_search_max: float = 1e6
    finite_difference_h: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.multistart_count < 1:
            raise ValueError("multistart_count must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("gradient_step_tolerance", "value_tolerance", "radial_search_max", "finite_difference_h"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be finite and > 0")


@dataclass
class MinimizeResult:
    x: np.ndarray
    value: float
    status: Status
    iterations: int = 0
    evaluations: int = 0

    def __iter__(self):
        # allows ``v, value, status = minimize(...)``
        return iter((self.x, self.value, self.status))


class _Counted:
    def __init__(self, fun):
        self.fun = fun
        self.count = 0

    def __call__(self, v):
        self.count += 1
        return float(self.fun(v))


def _fd_gradient(fun, x, h):
    g = np.empty_like(x)
    for i in range(x.size):
        hi = h * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += hi
        xm[i] -= hi
        g[i] = (fun(xp) - fun(xm)) / (2.0 * hi)
    return g


def _spg(fun, proj, x0, cfg: MinimizerConfig):
    """Spectral projected gradient with a nonmonotone Armijo line search.

    Returns (x, f(x), converged, iterations, escaped); ``escaped`` is set when an
    iterate leaves the ball of radius ``radial_search_max``.
    """
    x = proj(x0)
    fx = fun(x)
    g = _fd_gradient(fun, x, cfg.finite_difference_h)
    alpha = 1.0 / max(1.0, float(np.max(np.abs(g))))
    history = [fx]
    stalls = 0
    best, best_it = fx, 0
    for it in range(1, cfg.max_iterations + 1):
        # projected-gradient stationarity measure with unit step
        pg = proj(x - g) - x
        if float(np.linalg.norm(pg)) <= cfg.gradient_step_tolerance:
            return x, fx, True, it, False
        d = proj(x - alpha * g) - x
        gd = float(g @ d)
        if gd >= 0.0:
            d = pg
            gd = float(g @ d)
        fref = max(history[-10:])
        lam = 1.0
        while True:
            xn = x + lam * d
            fn = fun(xn)
            if fn <= fref + 1e-4 * lam * gd:
                break
            lam *= 0.5
            if lam < 1e-14:
                break
        if lam < 1e-14:
            # line search cannot make progress at the resolution of the FD gradient
            return x, fx, True, it, False
        if float(np.sqrt(xn @ xn)) > cfg.radial_search_max:
            return xn, fn, False, it, True
        gn = _fd_gradient(fun, xn, cfg.finite_difference_h)
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0.0 else 1e10
        alpha = min(max(alpha, 1e-12), 1e12)
        small_step = float(np.linalg.norm(s)) <= cfg.gradient_step_tolerance * (1.0 + float(np.linalg.norm(x)))
        small_change = abs(fn - fx) <= cfg.value_tolerance * (1.0 + abs(fx))
        stalls = stalls + 1 if (small_step and small_change) else 0
        x, fx, g = xn, fn, gn
        history.append(fx)
        if stalls >= 3:
            return x, fx, True, it, False
        if fx < best - cfg.value_tolerance * (1.0 + abs(best)):
            best, best_it = fx, it
        elif it - best_it >= 25:
            # no decrease over many iterations: typical of zig-zagging across a kink
            return x, fx, True, it, False
    return x, fx, False, cfg.max_iterations, False


def _pattern_polish(fun, proj, x, fx, dirs, start_step, min_step):
    """Projected compass search; refines points where the objective has kinks."""
    step = start_step
    while step > min_step:
        improved = False
        for d in dirs:
            for sgn in (1.0, -1.0):
                xn = proj(x + sgn * step * d)
                fn = fun(xn)
                if fn < fx:
                    x, fx, improved = xn, fn, True
        if not improved:
            step *= 0.25
    return x, fx


def _radial_divergence(fun, dirs, cfg: MinimizerConfig, best_value: float):
    """Look for a cone direction along which the objective decreases without bound.

    Returns the offending point or None.  The slope over the last decade of radii must
    be below -value_tolerance and values must decrease monotonically over the last
    three decades.
    """
    rmax = cfg.radial_search_max
    decades = max(int(math.floor(math.log10(rmax))), 1)
    radii = np.array([rmax / 10.0**k for k in range(decades, -1, -1)])
    for d in dirs:
        far = fun(radii[-1] * d)
        if math.isfinite(far) and far >= best_value:
            # cheap rejection: an unbounded decrease would end below the best value found
            continue
        vals = np.array([fun(r * d) for r in radii])
        if not np.all(np.isfinite(vals)):
            if np.any(vals == -np.inf):
                return radii[-1] * d
            continue
        tail = vals[-4:]
        slope = (vals[-1] - vals[-2]) / (radii[-1] - radii[-2])
        if slope < -cfg.value_tolerance and np.all(np.diff(tail) < 0) and vals[-1] < best_value:
            return radii[-1] * d
    return None


def minimize(cone: ConeSpec, objective: Callable[[np.ndarray], float],
             config: MinimizerConfig | None = None, starts=None) -> MinimizeResult:
    """Minimise ``objective`` over the cone.

    Parameters
    ----------
    cone : ConeSpec
    objective : callable
        Maps a length-m array to a float.  Must be finite at the origin.
    config : MinimizerConfig, optional
    starts : sequence of arrays, optional
        Extra starting points (e.g. a warm start from a neighbouring solve).  They are
        tried before the default multistart set {0} + generators + random cone points.

    Returns
    -------
    MinimizeResult
        Unpacks as ``(v_star, value, status)``.  ``value`` never exceeds
        ``objective(0)``.  On ``Status.DIVERGENT`` the value is ``-inf`` and ``x`` is
        the probe point that exposed the unbounded decrease.

    Notes
    -----
    For nonconvex objectives the returned value is only an upper bound of the infimum.
    Among candidates whose values agree to ``value_tolerance`` the one with smallest
    norm (then lexicographically smallest) is returned.
    """
    cfg = config or MinimizerConfig()
    fun = _Counted(objective)
    proj = lambda v: project(cone, v)  # noqa: E731
    zero = np.zeros(cone.m)
    f0 = fun(zero)
    if not math.isfinite(f0):
        raise NonFiniteObjective("objective must be finite at the origin")

    rng = np.random.default_rng(cfg.seed)
    dirs = cone.spanning_directions()
    candidates = [np.asarray(s, dtype=float).reshape(cone.m) for s in (starts or [])]
    candidates.append(zero)
    candidates.extend(dirs)
    n_random = max(cfg.multistart_count - len(candidates), 0)
    if n_random:
        candidates.extend(sample_cone(cone, rng, n_random))
    candidates = candidates[: max(cfg.multistart_count, 1 + len(starts or []))]

    results = [(zero, f0)]
    all_converged = True
    iterations = 0
    for x0 in candidates:
        x, fx, ok, its, escaped = _spg(fun, proj, x0, cfg)
        iterations += its
        if escaped:
            hit = _radial_divergence(fun, [x / np.linalg.norm(x)], cfg, min(r[1] for r in results))
            if hit is not None:
                return MinimizeResult(hit, -math.inf, Status.DIVERGENT, iterations, fun.count)
            all_converged = False
            continue
        all_converged &= ok
        results.append((x, fx))

    best_x, best_f = min(results, key=lambda r: r[1])
    polish_dirs = np.vstack([np.eye(cone.m), dirs, sample_cone(cone, rng, cone.m)])
    norms = np.linalg.norm(polish_dirs, axis=1, keepdims=True)
    polish_dirs = polish_dirs[norms[:, 0] > 0] / norms[norms[:, 0] > 0]
    scale = 1.0 + float(np.linalg.norm(best_x))
    px, pf = _pattern_polish(fun, proj, best_x, best_f, polish_dirs, 1e-4 * scale, 1e-10 * scale)
    results.append((px, pf))

    probe_dirs = list(dirs) + list(sample_cone(cone, rng, 4))
    if float(np.linalg.norm(px)) > 0:
        probe_dirs.insert(0, px / np.linalg.norm(px))
    probe_dirs = [d / np.linalg.norm(d) for d in probe_dirs if np.linalg.norm(d) > 0]
    best_value = min(r[1] for r in results)
    hit = _radial_divergence(fun, probe_dirs, cfg, best_value)
    if hit is not None:
        return MinimizeResult(hit, -math.inf, Status.DIVERGENT, iterations, fun.count)

    x_star, f_star = _select(results, cfg.value_tolerance)
    status = Status.CONVERGED if all_converged else Status.ITERATION_CAP
    return MinimizeResult(x_star, f_star, status, iterations, fun.count)


def _select(results, tol):
    best = min(r[1] for r in results)
    ties = [r for r in results if r[1] <= best + tol * (1.0 + abs(best))]
    pts = np.array([r[0] for r in ties], dtype=float)
    norms = np.linalg.norm(pts, axis=1)
    # norms of separately converged candidates agree only to about sqrt(tol)
    res = math.sqrt(tol) * (1.0 + float(norms.min()))
    # a tie within res of a better point is a less refined copy of the same minimiser
    keep = []
    for i in sorted(range(len(ties)), key=lambda i: (ties[i][1], norms[i])):
        if not keep or float(np.min(np.linalg.norm(pts[keep] - pts[i], axis=1))) > res:
            keep.append(i)
    nmin = min(norms[i] for i in keep)
    small = [(ties[i], float(norms[i])) for i in keep if norms[i] <= nmin + res]
    # lexicographic at the same resolution; exact norm decides among coincident points
    (x, fx), _ = min(small, key=lambda item: (tuple(np.round(item[0][0] / res)), item[1]))
    return np.array(x, dtype=float), float(fx)
