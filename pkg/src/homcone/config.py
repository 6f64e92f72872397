"""TOML model and experiment configuration.

A model file looks like::

    name = "lq-scalar"
    p = 2.0
    T = 1.0
    m = 1
    n = 1

    [cone]
    kind = "full"            # full | orthant | ray | generated
    # direction = [1.0]      # ray
    # generators = [[1, 0]]  # generated: one row per generator

    [regime]
    case = "I"
    delta = 1.0
    L = 1.0

    [family]
    name = "power"
    symmetric = true
    A = 0.1
    B = [1.0]
    C = [0.3]
    Q = 1.0
    R = [[1.0]]
    G = 1.0

An experiment file either points at a model (``model = "lq.toml"``, relative to the
experiment file) or embeds one as a ``[model]`` table, and adds ``[grid]``,
``[simulation]``, ``[outputs]``, ``[minimizer]``, ``[verify]`` and ``[[competitors]]``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .cones import ConeSpec, MinimizerConfig
from .errors import ConfigError
from .families import PowerFamily, family_from_dict, build_model
from .model import HomogeneousModel, Regime, RegimeParams

__all__ = ["ExperimentConfig", "CompetitorSpec", "load_model", "model_from_dict", "load_experiment",
           "experiment_from_dict"]

COMPETITOR_KINDS = ("zero", "scaled", "perturbed", "random_ray", "optimal", "negated")


def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing key {key!r} in {where}")
    return table[key]


def cone_from_dict(spec: dict, m: int) -> ConeSpec:
    kind = spec.get("kind", "full")
    try:
        if kind == "full":
            cone = ConeSpec.full(m)
        elif kind == "orthant":
            cone = ConeSpec.orthant(m)
        elif kind == "ray":
            cone = ConeSpec.ray(_require(spec, "direction", "[cone]"))
        elif kind == "generated":
            cone = ConeSpec.generated(np.asarray(_require(spec, "generators", "[cone]"), dtype=float).T)
        else:
            raise ConfigError(f"unknown cone kind {kind!r}")
    except ValueError as exc:
        raise ConfigError(f"[cone]: {exc}") from None
    if cone.m != m:
        raise ConfigError(f"[cone] has dimension {cone.m}, model has m = {m}")
    return cone


def model_from_dict(spec: dict) -> HomogeneousModel:
    """Build a model from a parsed TOML table (see the module docstring)."""
    spec = copy.deepcopy(spec)
    try:
        p = float(_require(spec, "p", "model"))
        T = float(_require(spec, "T", "model"))
        m = int(spec.get("m", 1))
        n = int(spec.get("n", 1))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model header: {exc}") from None
    cone = cone_from_dict(spec.get("cone", {}), m)
    reg = dict(spec.get("regime", {}))
    try:
        regime = Regime.parse(reg.pop("case", "I"))
        eps = tuple(tuple(float(x) for x in row) for row in reg.pop("eps_table", ()))
        params = RegimeParams(eps_table=eps, **{k: float(v) for k, v in reg.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[regime]: {exc}") from None
    fam_spec = dict(_require(spec, "family", "model"))
    try:
        if fam_spec.pop("symmetric", False):
            if fam_spec.pop("name", "power") != "power":
                raise ConfigError("symmetric = true is only available for the power family")
            family = PowerFamily.symmetric(p=p, T=T, m=m, n=n, **fam_spec)
        else:
            family = family_from_dict(fam_spec, p=p, T=T, m=m, n=n)
        return build_model(family, cone, regime, params, name=str(spec.get("name", "")))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[family]: {exc}") from None


def load_model(path) -> HomogeneousModel:
    return model_from_dict(_read_toml(path))


@dataclass(frozen=True)
class CompetitorSpec:
    """One competitor feedback, derived from the computed optimum.

    kinds: ``zero``; ``scaled`` (factor * v_hat); ``perturbed`` (v_hat + delta e_index,
    projected into the cone); ``random_ray`` (|v_hat_t| times a fixed random cone
    direction and a random factor in [0.25, 2], seeded); ``optimal`` (v_hat itself); ``negated`` (-v_hat, projected).
    """

    kind: str
    factor: float = 1.0
    delta: float = 0.1
    index: int = 0
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        if self.kind not in COMPETITOR_KINDS:
            raise ConfigError(f"unknown competitor kind {self.kind!r}; expected one of {COMPETITOR_KINDS}")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "scaled":
            return f"scaled({self.factor:g})"
        if self.kind == "perturbed":
            return f"perturbed(delta={self.delta:g},e{self.index + 1})"
        if self.kind == "random_ray":
            return f"random_ray(seed={self.seed})"
        return self.kind


@dataclass
class ExperimentConfig:
    model: HomogeneousModel
    model_path: str = ""
    N: int = 200
    mode: str = "deterministic"
    tree_depth: int | None = None
    paths: int = 100_000
    seed: int = 0
    x0: list = field(default_factory=lambda: [1.0])
    antithetic: bool = False
    out_dir: str = "out"
    formats: tuple = ("csv", "json")
    competitors: list = field(default_factory=list)
    minimizer: MinimizerConfig | None = None
    corrupt: str | None = None
    export_paths: int = 100

    def __post_init__(self):
        if self.N < 2:
            raise ConfigError("grid N must be >= 2")
        if self.mode not in ("deterministic", "tree"):
            raise ConfigError(f"grid mode must be 'deterministic' or 'tree', got {self.mode!r}")
        if self.paths < 1:
            raise ConfigError("simulation paths must be >= 1")
        if not self.x0:
            raise ConfigError("simulation x0 list must be nonempty")
        bad = set(self.formats) - {"csv", "json"}
        if bad:
            raise ConfigError(f"unsupported output formats {sorted(bad)}")
        if self.corrupt not in (None, "negate"):
            raise ConfigError(f"unknown corruption {self.corrupt!r}; only 'negate' is supported")

    @property
    def tree_steps(self) -> int:
        return self.tree_depth if self.tree_depth is not None else self.N


def experiment_from_dict(spec: dict, base_dir: Path | None = None) -> ExperimentConfig:
    base_dir = Path(base_dir or ".")
    model_entry = _require(spec, "model", "experiment")
    if isinstance(model_entry, str):
        model_path = base_dir / model_entry
        model = load_model(model_path)
    elif isinstance(model_entry, dict):
        model_path, model = "", model_from_dict(model_entry)
    else:
        raise ConfigError("'model' must be a file path or a table")
    grid = spec.get("grid", {})
    sim = spec.get("simulation", {})
    outputs = spec.get("outputs", {})
    verify = spec.get("verify", {})
    try:
        minimizer = MinimizerConfig(**spec["minimizer"]) if "minimizer" in spec else None
        competitors = [CompetitorSpec(**c) for c in spec.get("competitors", [])]
        x0 = sim.get("x0", [1.0])
        x0 = [float(x) for x in (x0 if isinstance(x0, list) else [x0])]
        out_dir = outputs.get("directory", "out")
        return ExperimentConfig(
            model=model, model_path=str(model_path),
            N=int(grid.get("N", 200)), mode=str(grid.get("mode", "deterministic")),
            tree_depth=None if grid.get("tree_depth") is None else int(grid["tree_depth"]),
            paths=int(sim.get("paths", 100_000)), seed=int(sim.get("seed", 0)), x0=x0,
            antithetic=bool(sim.get("antithetic", False)),
            out_dir=str(base_dir / out_dir) if not Path(out_dir).is_absolute() else out_dir,
            formats=tuple(outputs.get("formats", ("csv", "json"))),
            competitors=competitors, minimizer=minimizer, corrupt=verify.get("corrupt"),
            export_paths=int(outputs.get("export_paths", 100)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"experiment config: {exc}") from None


def load_experiment(path) -> ExperimentConfig:
    path = Path(path)
    return experiment_from_dict(_read_toml(path), base_dir=path.parent)
