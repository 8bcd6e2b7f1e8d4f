"""Experiment configuration: parsing, scenario presets and validation."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .costs import (
    CostFunctorSpec,
    CostSpec,
    affine_costs,
    constant_costs,
    example_dirac_costs,
    grid_csv_costs,
    polynomial_costs,
)
from .grid import Grid
from .mfg import InitialDistribution
from .network import DomainError

SUITES = ("oracle", "w1", "holder", "dpp", "all")
OUTPUTS = ("value", "residual", "flow", "trajectories", "iterations")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field_: str, message: str) -> None:
        super().__init__(f"{field_}: {message}")
        self.field = field_


@dataclass(frozen=True)
class GeometryConfig:
    num_edges: int
    edge_truncation: float


@dataclass(frozen=True)
class GridConfig:
    dr: float
    dt: float
    horizon: float


@dataclass(frozen=True)
class CostConfig:
    base: dict
    functor: str = "constant"
    congestion_strength: float = 0.0
    kernel_width: float = 1.0


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_iter: int = 50
    particles: int = 200


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    emit: tuple[str, ...] = OUTPUTS


@dataclass(frozen=True)
class VerifyConfig:
    suite: str = "all"
    instances: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig
    grid: GridConfig
    costs: CostConfig
    initial_distribution: dict = field(default_factory=lambda: {"kind": "vertex"})
    solver: SolverConfig = SolverConfig()
    outputs: OutputConfig = OutputConfig()
    verify: VerifyConfig = VerifyConfig()
    scenario: str | None = None
    base_dir: str = field(default=".", compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["outputs"]["emit"] = list(d["outputs"]["emit"])
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def build_grid(self) -> Grid:
        return Grid.build(
            self.geometry.num_edges, self.geometry.edge_truncation, self.grid.dr, self.grid.dt, self.grid.horizon
        )

    def build_costs(self) -> CostSpec:
        return build_cost_spec(self.costs.base, self.geometry.num_edges, self.grid.horizon, Path(self.base_dir))

    def build_functor(self) -> CostFunctorSpec:
        return CostFunctorSpec(
            self.costs.functor, self.build_costs(), self.costs.congestion_strength, self.costs.kernel_width
        )

    def build_initial(self) -> InitialDistribution:
        return build_initial(self.initial_distribution, self.geometry.num_edges)


SCENARIOS: dict[str, dict[str, Any]] = {
    "example_dirac": {
        "description": "two edges, ell_1=-1, ell_2=1, ell_*=-1, g=0, m0 uniform on [0,1/2] of both edges",
        "mfg": True,
        "config": {
            "geometry": {"num_edges": 2, "edge_truncation": 2.5},
            "grid": {"dr": 0.005, "dt": 0.005, "horizon": 1.0},
            "costs": {"functor": "constant", "base": {"kind": "example_dirac"}},
            "initial_distribution": {"kind": "uniform", "radius": 0.5, "edges": [1, 2]},
            "solver": {"tol": 1e-6, "max_iter": 10, "particles": 200},
        },
    },
    "example_all_to_vertex": {
        "description": "two edges, ell_1=ell_2=1, ell_*=-1: the whole population gathers at O",
        "mfg": True,
        "config": {
            "geometry": {"num_edges": 2, "edge_truncation": 2.5},
            "grid": {"dr": 0.005, "dt": 0.005, "horizon": 1.0},
            "costs": {
                "functor": "constant",
                "base": {"kind": "constant", "edge_running": [1.0, 1.0], "vertex_running": -1.0},
            },
            "initial_distribution": {"kind": "uniform", "radius": 0.5, "edges": [1, 2]},
            "solver": {"tol": 1e-6, "max_iter": 10, "particles": 200},
        },
    },
    "constant_zero": {
        "description": "zero costs; resting is optimal for everyone",
        "mfg": True,
        "config": {
            "geometry": {"num_edges": 2, "edge_truncation": 1.0},
            "grid": {"dr": 0.02, "dt": 0.02, "horizon": 1.0},
            "costs": {"functor": "constant", "base": {"kind": "constant", "edge_running": [0.0, 0.0], "vertex_running": 0.0}},
            "initial_distribution": {"kind": "uniform", "radius": 0.5, "edges": [1, 2]},
            "solver": {"tol": 1e-6, "max_iter": 10, "particles": 100},
        },
    },
    "congestion": {
        "description": "Dirac example costs plus tent-kernel congestion (kappa=0.5, eps=0.2)",
        "mfg": True,
        "config": {
            "geometry": {"num_edges": 2, "edge_truncation": 5.5},
            "grid": {"dr": 0.02, "dt": 0.02, "horizon": 1.0},
            "costs": {
                "functor": "congestion",
                "congestion_strength": 0.5,
                "kernel_width": 0.2,
                "base": {"kind": "example_dirac"},
            },
            "initial_distribution": {"kind": "uniform", "radius": 0.5, "edges": [1, 2]},
            "solver": {"tol": 1e-3, "max_iter": 200, "particles": 200},
        },
    },
    "smooth_lq": {
        "description": "ell=0, g_i(r)=r^2/2: smooth value r^2/(2(1+T-t)); HJ benchmark only",
        "mfg": False,
        "config": {
            "geometry": {"num_edges": 2, "edge_truncation": 2.0},
            "grid": {"dr": 0.00625, "dt": 0.025, "horizon": 1.0},
            "costs": {
                "functor": "constant",
                "base": {
                    "kind": "polynomial",
                    "edge_running": [[[0.0]], [[0.0]]],
                    "vertex_running": [0.0],
                    "edge_terminal": [[0.0, 0.0, 0.5], [0.0, 0.0, 0.5]],
                    "vertex_terminal": 0.0,
                },
            },
        },
    },
}


def mfg_scenarios() -> list[str]:
    return [name for name, s in SCENARIOS.items() if s["mfg"]]


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _section(raw: dict, key: str, cls, required: bool = True):
    if key not in raw:
        if required:
            raise ConfigError(key, "missing section")
        return cls()
    sec = raw[key]
    if not isinstance(sec, dict):
        raise ConfigError(key, "must be an object")
    try:
        return cls(**sec)
    except TypeError as exc:
        raise ConfigError(key, str(exc)) from None


def _positive(field_: str, value, integer: bool = False) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
        raise ConfigError(field_, f"must be a positive number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(field_, f"must be an integer, got {value!r}")


def parse_config(raw: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    """Expand a scenario shortcut, then build and validate the configuration."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    name = raw.get("scenario")
    if name is not None:
        if name not in SCENARIOS:
            raise ConfigError("scenario", f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
        raw = _merge(SCENARIOS[name]["config"], raw)
    unknown = set(raw) - {"geometry", "grid", "costs", "initial_distribution", "solver", "outputs", "verify", "scenario"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    outputs = _section(raw, "outputs", OutputConfig, required=False)
    outputs = OutputConfig(outputs.directory, tuple(outputs.emit))
    cfg = ExperimentConfig(
        geometry=_section(raw, "geometry", GeometryConfig),
        grid=_section(raw, "grid", GridConfig),
        costs=_section(raw, "costs", CostConfig),
        initial_distribution=copy.deepcopy(raw.get("initial_distribution", {"kind": "vertex"})),
        solver=_section(raw, "solver", SolverConfig, required=False),
        outputs=outputs,
        verify=_section(raw, "verify", VerifyConfig, required=False),
        scenario=name,
        base_dir=str(base_dir),
    )
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}", exc.msg) from None
    except OSError as exc:
        raise ConfigError(str(path), exc.strerror or "cannot read") from None
    return parse_config(raw, path.parent)


def validate(cfg: ExperimentConfig) -> None:
    _positive("geometry.num_edges", cfg.geometry.num_edges, integer=True)
    if cfg.geometry.num_edges < 2:
        raise ConfigError("geometry.num_edges", "a junction needs at least two edges")
    _positive("geometry.edge_truncation", cfg.geometry.edge_truncation)
    for k in ("dr", "dt", "horizon"):
        _positive(f"grid.{k}", getattr(cfg.grid, k))
    _positive("solver.tol", cfg.solver.tol)
    _positive("solver.max_iter", cfg.solver.max_iter, integer=True)
    _positive("solver.particles", cfg.solver.particles, integer=True)
    _positive("verify.instances", cfg.verify.instances, integer=True)
    if cfg.verify.suite not in SUITES:
        raise ConfigError("verify.suite", f"unknown suite {cfg.verify.suite!r}; known: {', '.join(SUITES)}")
    bad = [e for e in cfg.outputs.emit if e not in OUTPUTS]
    if bad:
        raise ConfigError("outputs.emit", f"unknown output {bad[0]!r}")
    if cfg.costs.functor not in ("constant", "congestion"):
        raise ConfigError("costs.functor", f"unknown functor {cfg.costs.functor!r}")
    if cfg.costs.congestion_strength < 0:
        raise ConfigError("costs.congestion_strength", "must be >= 0")
    _positive("costs.kernel_width", cfg.costs.kernel_width)
    try:
        cfg.build_functor()
    except ConfigError:
        raise
    except (DomainError, TypeError, KeyError, ValueError) as exc:
        raise ConfigError("costs.base", str(exc)) from None
    try:
        cfg.build_initial()
    except ConfigError:
        raise
    except (DomainError, TypeError, KeyError, ValueError) as exc:
        raise ConfigError("initial_distribution", str(exc)) from None


def validate_mfg(cfg: ExperimentConfig) -> dict:
    """Check that the truncation exceeds the reachable radius; returns the quantities used."""
    grid = cfg.build_grid()
    f = cfg.build_functor()
    m0 = cfg.build_initial()
    K, G = f.uniform_bounds(grid)
    T = grid.horizon
    c_bound = math.sqrt(2.0 * (2.0 * K * T + 2.0 * G))
    need = m0.support_radius + c_bound * math.sqrt(T)
    if cfg.geometry.edge_truncation < need - 1e-12:
        raise ConfigError(
            "geometry.edge_truncation",
            f"{cfg.geometry.edge_truncation} is below support radius + C sqrt(T) = {need:.6g} (C = {c_bound:.6g})",
        )
    return {"running_bound": K, "terminal_bound": G, "c_bound": c_bound, "required_truncation": need}


def build_cost_spec(base: dict, num_edges: int, horizon: float, base_dir: Path = Path(".")) -> CostSpec:
    if not isinstance(base, dict) or "kind" not in base:
        raise ConfigError("costs.base.kind", "missing")
    kind = base["kind"]

    def per_edge(key, default):
        vals = base.get(key, [default] * num_edges)
        if len(vals) != num_edges:
            raise ConfigError(f"costs.base.{key}", f"expected {num_edges} entries, got {len(vals)}")
        return vals

    if kind == "example_dirac":
        if num_edges != 2:
            raise ConfigError("costs.base.kind", "example_dirac needs exactly two edges")
        return example_dirac_costs(horizon)
    if kind == "constant":
        return constant_costs(
            per_edge("edge_running", 0.0),
            base.get("vertex_running", 0.0),
            per_edge("edge_terminal", 0.0),
            base.get("vertex_terminal", 0.0),
            horizon,
        )
    if kind == "affine":
        return affine_costs(
            per_edge("edge_running", [0.0, 0.0, 0.0]),
            base.get("vertex_running", [0.0, 0.0]),
            per_edge("edge_terminal", [0.0, 0.0]),
            base.get("vertex_terminal", 0.0),
            horizon,
        )
    if kind == "polynomial":
        return polynomial_costs(
            per_edge("edge_running", [[0.0]]),
            base.get("vertex_running", [0.0]),
            per_edge("edge_terminal", [0.0]),
            base.get("vertex_terminal", 0.0),
            horizon,
        )
    if kind == "grid_csv":
        for key in ("running", "terminal"):
            if key not in base:
                raise ConfigError(f"costs.base.{key}", "missing CSV path")
        return grid_csv_costs(base_dir / base["running"], base_dir / base["terminal"], num_edges, horizon)
    raise ConfigError("costs.base.kind", f"unknown cost kind {kind!r}")


def build_initial(spec: dict, num_edges: int) -> InitialDistribution:
    kind = spec.get("kind")
    if kind == "vertex":
        return InitialDistribution.vertex_dirac(num_edges)
    if kind == "uniform":
        edges = spec.get("edges")
        if edges is not None and any(not 1 <= e <= num_edges for e in edges):
            raise ConfigError("initial_distribution.edges", f"edge indices must lie in 1..{num_edges}")
        _positive("initial_distribution.radius", spec.get("radius"))
        return InitialDistribution.uniform(num_edges, float(spec["radius"]), edges)
    if kind == "histogram":
        if len(spec.get("density", [])) != num_edges:
            raise ConfigError("initial_distribution.density", f"expected one row per edge ({num_edges})")
        return InitialDistribution(spec["bin_edges"], spec["density"], float(spec.get("vertex_atom", 0.0)))
    raise ConfigError("initial_distribution.kind", f"unknown kind {kind!r}")
