"""Command-line front end.

    homcone solve    --config exp.toml [--out DIR] [--grid N]
    homcone simulate --config exp.toml [--paths K] [--seed S]
    homcone verify   --config exp.toml
    homcone compare  --config exp.toml
    homcone check    --config exp.toml

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 invariant or regime
violation, 5 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import io
from .config import load_experiment
from .control import build_feedback, estimate_cost, simulate_state, value_function
from .errors import ConfigError, HomconeError
from .model import check_regime
from .pipeline import Z_LIMIT, default_competitors, invariant_reports, make_competitor, solve_pair, verify_model

log = logging.getLogger("homcone")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4
EXIT_VERIFY = 5


def _load(args):
    cfg = load_experiment(args.config)
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.paths is not None:
        overrides["paths"] = args.paths
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.grid is not None:
        overrides["N"] = args.grid
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    try:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {cfg.out_dir!r} is not writable: {exc}") from None
    return cfg


def _out(cfg, name):
    return Path(cfg.out_dir) / name


def _regime_gate(cfg) -> bool:
    diag = check_regime(cfg.model)
    if not diag.ok:
        print(diag.summary(), file=sys.stderr)
    return diag.ok


def cmd_check(cfg) -> int:
    """Check the declared regime conditions on sampled controls."""
    diag = check_regime(cfg.model)
    print(diag.summary())
    if "json" in cfg.formats:
        io.write_json({"model": cfg.model.describe(), "regime": diag.regime.value, "ok": diag.ok,
                       "checked": diag.checked, "messages": diag.messages, "violations": diag.violations},
                      _out(cfg, "regime.json"))
    return EXIT_OK if diag.ok else EXIT_INVARIANT


def cmd_solve(cfg) -> int:
    """Solve both BSDE branches and check their invariants."""
    if not _regime_gate(cfg):
        return EXIT_INVARIANT
    N = cfg.tree_steps if cfg.mode == "tree" else cfg.N
    sol_plus, sol_minus = solve_pair(cfg.model, N, cfg.mode, cfg.minimizer)
    reports = invariant_reports(cfg.model, sol_plus, sol_minus)
    if "csv" in cfg.formats:
        io.write_solution_csv(sol_plus, _out(cfg, "solution_plus.csv"))
        io.write_solution_csv(sol_minus, _out(cfg, "solution_minus.csv"))
    if "json" in cfg.formats:
        io.write_json({
            "model": cfg.model.describe(), "fingerprint": cfg.model.fingerprint(),
            "grid": {"N": N, "T": cfg.model.T, "mode": cfg.mode},
            "P_plus0": sol_plus.P0, "P_minus0": sol_minus.P0,
            "invariants": {sol.branch: dataclasses.asdict(r) for sol, r in zip((sol_plus, sol_minus), reports)},
            "diagnostics": {"plus": sol_plus.diagnostics, "minus": sol_minus.diagnostics},
        }, _out(cfg, "solution.json"))
    print(f"P_plus(0) = {sol_plus.P0!r}  P_minus(0) = {sol_minus.P0!r}")
    bad = [m for r in reports for m in r.messages]
    for m in bad:
        print(f"invariant violation: {m}", file=sys.stderr)
    return EXIT_INVARIANT if any(not r.ok for r in reports) else EXIT_OK


def cmd_simulate(cfg) -> int:
    """Simulate the optimal closed loop and estimate its cost."""
    if not _regime_gate(cfg):
        return EXIT_INVARIANT
    sol_plus, sol_minus = solve_pair(cfg.model, cfg.N, "deterministic", cfg.minimizer)
    fb = build_feedback(sol_plus, sol_minus, cfg.model.cone)
    summaries = []
    for i, x0 in enumerate(cfg.x0):
        record = "csv" in cfg.formats
        batch = simulate_state(fb, cfg.model, x0, cfg.paths, cfg.seed, record=record, antithetic=cfg.antithetic)
        J, se = estimate_cost(batch, fb, cfg.model)
        value = value_function(sol_plus, sol_minus, x0)
        # raw z without the discretisation allowance; verify applies the allowance
        z = abs(J - value) / se if se > 0 else (0.0 if J == value else float("inf"))
        summaries.append({"x0": x0, "J_mean": J, "J_stderr": se, "value": value, "gap": J - value, "z_raw": z,
                          "paths": cfg.paths, "seed": cfg.seed, "min_abs_x": batch.min_abs_x,
                          "max_abs_x": batch.max_abs_x})
        if record:
            io.write_batch_csv(batch, cfg.model, fb, _out(cfg, f"batch_{i}.csv"), cfg.export_paths)
        print(f"x0={x0:g}: J={J:.8g} +- {se:.3g}  value={value:.8g}  z_raw={z:.3f}")
    if "json" in cfg.formats:
        io.write_json({"fingerprint": cfg.model.fingerprint(), "N": cfg.N, "batches": summaries},
                      _out(cfg, "simulation.json"))
    return EXIT_OK


def cmd_verify(cfg) -> int:
    """Compare the simulated optimal cost with the value function."""
    if not _regime_gate(cfg):
        return EXIT_INVARIANT
    solutions = solve_pair(cfg.model, cfg.N, "deterministic", cfg.minimizer)
    reports = invariant_reports(cfg.model, *solutions)
    if any(not r.ok for r in reports):
        for m in (m for r in reports for m in r.messages):
            print(f"invariant violation: {m}", file=sys.stderr)
        return EXIT_INVARIANT
    rep = verify_model(cfg.model, cfg.N, cfg.x0, cfg.paths, cfg.seed, cfg.competitors, cfg.minimizer,
                       corrupt=cfg.corrupt, antithetic=cfg.antithetic, solutions=solutions)
    for r in rep.rows:
        print(f"x0={r.x0:g}: value={r.value:.8g} J={r.J_mean:.8g} +- {r.J_stderr:.3g} "
              f"allowance={r.allowance:.3g} z={r.z:.3f} {'ok' if r.passed else 'FAIL'}")
    for c in rep.competitors:
        print(f"  competitor {c.name} x0={c.x0:g}: J={c.J_mean:.8g} gap={c.gap:.4g} {'ok' if c.passed else 'FAIL'}")
    if "csv" in cfg.formats:
        io.write_table_csv([(r.x0, r.value, r.J_mean, r.J_stderr, r.allowance, r.z, int(r.passed)) for r in rep.rows],
                           ["x0", "value", "J_mean", "J_stderr", "allowance", "z", "passed"],
                           _out(cfg, "verification.csv"))
    if "json" in cfg.formats:
        io.write_json({"fingerprint": cfg.model.fingerprint(), "N": cfg.N, "paths": cfg.paths, "seed": cfg.seed,
                       "z_limit": Z_LIMIT, "passed": rep.passed, "corrupt": cfg.corrupt,
                       "rows": [dict(dataclasses.asdict(r), gap=r.gap) for r in rep.rows],
                       "competitors": [dict(dataclasses.asdict(c), gap=c.gap) for c in rep.competitors]},
                      _out(cfg, "verification.json"))
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_compare(cfg) -> int:
    """Rank competitor feedbacks by simulated cost."""
    if not _regime_gate(cfg):
        return EXIT_INVARIANT
    competitors = cfg.competitors or default_competitors()
    sol_plus, sol_minus = solve_pair(cfg.model, cfg.N, "deterministic", cfg.minimizer)
    fb = build_feedback(sol_plus, sol_minus, cfg.model.cone)
    rows = []
    for x0 in cfg.x0:
        value = value_function(sol_plus, sol_minus, x0)
        for spec in competitors:
            comp = make_competitor(spec, fb, cfg.model.cone)
            J, se = estimate_cost(simulate_state(comp, cfg.model, x0, cfg.paths, cfg.seed, antithetic=cfg.antithetic))
            rows.append((spec.name, x0, value, J, se, J - value))
    rows.sort(key=lambda r: (r[5], r[0], r[1]))
    for r in rows:
        print(f"{r[0]:<28s} x0={r[1]:<6g} J={r[3]:.8g} +- {r[4]:.3g}  gap={r[5]:.6g}")
    if "csv" in cfg.formats:
        io.write_table_csv(rows, ["competitor", "x0", "value", "J_mean", "J_stderr", "gap"], _out(cfg, "compare.csv"))
    if "json" in cfg.formats:
        io.write_json({"fingerprint": cfg.model.fingerprint(), "N": cfg.N,
                       "rows": [dict(zip(("competitor", "x0", "value", "J_mean", "J_stderr", "gap"), r)) for r in rows]},
                      _out(cfg, "compare.json"))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "verify": cmd_verify, "compare": cmd_compare,
            "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homcone", description="Homogeneous cone-constrained stochastic control")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__ or name)
        sp.add_argument("--config", required=True, help="experiment TOML file")
        sp.add_argument("--out", help="output directory (overrides [outputs].directory)")
        sp.add_argument("--paths", type=int, help="number of Monte Carlo paths")
        sp.add_argument("--seed", type=int, help="simulation seed (unsigned 64-bit)")
        sp.add_argument("--grid", type=int, help="number of time steps N")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("configuration error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except (HomconeError, ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
