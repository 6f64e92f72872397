"""CSV / JSON export and reload.

CSV dialect: comma-separated, '.' decimal, header row, LF line endings.  Floats are
written with ``repr`` so a reloaded file reproduces the in-memory arrays exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .bsde import BsdeSolution, TimeGrid

__all__ = ["write_solution_csv", "read_solution_csv", "write_json", "write_batch_csv", "write_table_csv"]


def _fmt(x) -> str:
    return repr(float(x))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_solution_csv(sol: BsdeSolution, path) -> Path:
    """Rows ``t, node_index, P, Lambda_1..n, v_hat_1..m``; one row per grid node (per tree node)."""
    path = Path(path)
    t = sol.grid.nodes
    first_lam = np.atleast_2d(sol.layer(0)[1])
    first_v = np.atleast_2d(sol.layer(0)[2])
    n, m = first_lam.shape[1], first_v.shape[1]
    header = ["t", "node_index", "P"] + [f"Lambda_{i + 1}" for i in range(n)] + [f"v_hat_{i + 1}" for i in range(m)]
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        for k in range(sol.grid.N + 1):
            P, L, V = sol.layer(k)
            for j in range(len(P)):
                w.writerow([_fmt(t[k]), j, _fmt(P[j]), *map(_fmt, L[j]), *map(_fmt, V[j])])
    return path


def read_solution_csv(path, branch: str, p: float = math.nan, mode: str | None = None) -> BsdeSolution:
    """Reload a file written by :func:`write_solution_csv`.

    The grid is rebuilt from the time column; tree mode is detected from node indices
    unless ``mode`` is given.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(h.startswith("Lambda_") for h in header)
    m = sum(h.startswith("v_hat_") for h in header)
    data = np.array([[float(x) for x in r] for r in body])
    t, idx = data[:, 0], data[:, 1].astype(int)
    times = []
    for x in t:
        if not times or x != times[-1]:
            times.append(x)
    N = len(times) - 1
    grid = TimeGrid(N, times[-1])
    is_tree = mode.startswith("tree") if mode else bool(np.any(idx > 0))
    P_col, L_cols, V_cols = data[:, 2], data[:, 3:3 + n], data[:, 3 + n:3 + n + m]
    if not is_tree:
        return BsdeSolution(grid, "deterministic", branch, P_col.copy(), L_cols.copy(), V_cols.copy(), {}, p)
    P, L, V = [], [], []
    start = 0
    for k in range(N + 1):
        stop = start + k + 1
        P.append(P_col[start:stop].copy())
        L.append(L_cols[start:stop].copy())
        V.append(V_cols[start:stop].copy())
        start = stop
    return BsdeSolution(grid, f"tree({N})", branch, P, L, V, {}, p)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_batch_csv(batch, model, feedback, path, max_paths: int | None = None) -> Path:
    """Rows ``path_id, t, X, running_cost_so_far`` for the first ``max_paths`` recorded paths."""
    path = Path(path)
    X = batch.X
    cost = batch.running_cost_paths(model, feedback)
    k = X.shape[0] if max_paths is None else min(max_paths, X.shape[0])
    t = batch.grid.nodes
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["path_id", "t", "X", "running_cost_so_far"])
        for i in range(k):
            for j in range(len(t)):
                w.writerow([i, _fmt(t[j]), _fmt(X[i, j]), _fmt(cost[i, j])])
    return path


def write_table_csv(rows, header, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])
    return path
