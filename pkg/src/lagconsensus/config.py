"""Scenario configuration: YAML parsing, validation, defaults and presets.

A config is a single human-writable YAML tree (see docs/config.md for the
grammar).  Every key has a default drawn from scenario preset A, so an
empty file is a complete, runnable scenario.  Validation errors always
name the offending key path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml

from . import control, sim
from .graphs import DirectedGraph, fixed_schedule, generate_schedule
from .network import DelayMatrix
from .robot import NOMINAL_THETA
from .stepping import is_grid_aligned

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "scenario_a",
    "scenario_b",
    "parse_config",
    "serialize_config",
    "load_config",
    "runtime_from_config",
    "PRESET_EDGE_SETS",
]

DEFAULT_STEP = 0.005
DEFAULT_PERIOD = 0.05
DEFAULT_SEED = 1
DEFAULT_OUT_DIR = "out"

_PI = math.pi

# Six-arm starting posture, velocities at rest.
Q0_DEFAULT = [
    [_PI / 6, _PI / 3],
    [-_PI / 6, _PI / 6],
    [-_PI / 2, _PI / 2],
    [_PI / 3, -_PI / 6],
    [-2 * _PI / 3, -2 * _PI / 3],
    [_PI / 2, -_PI / 2],
]

# Per-agent plant heterogeneity: nominal parameters scaled by 0.8 .. 1.3.
HETEROGENEITY = [0.8, 0.9, 1.0, 1.1, 1.2, 1.3]

# Preset switching triple on 6 vertices, unit weights, 1-based (i, j, w):
# a forward ring, a backward ring, and opposite-vertex pairs.  Each member
# is sparse (one listened neighbor per agent) yet the union is a circulant
# whose slowest disagreement mode still decays at rate 1/s under uniform
# random switching, comfortably fast for the shipped horizons.
PRESET_EDGE_SETS = [
    [[1, 2, 1.0], [2, 3, 1.0], [3, 4, 1.0], [4, 5, 1.0], [5, 6, 1.0], [6, 1, 1.0]],
    [[1, 6, 1.0], [2, 1, 1.0], [3, 2, 1.0], [4, 3, 1.0], [5, 4, 1.0], [6, 5, 1.0]],
    [[1, 4, 1.0], [2, 5, 1.0], [3, 6, 1.0], [4, 1, 1.0], [5, 2, 1.0], [6, 3, 1.0]],
]


class ConfigError(ValueError):
    """Invalid scenario configuration; `field` is the offending key path."""

    def __init__(self, field_path, message):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass(eq=False)
class ScenarioConfig:
    """Fully resolved scenario description (normal form).

    Gains are stored as full matrices and thetas per agent even when the
    file used scalar shorthand; serialization writes this normal form.
    """

    count: int
    thetas: np.ndarray  # (n, 3)
    q0: np.ndarray  # (n, 2)
    qd0: np.ndarray  # (n, 2)
    k: np.ndarray  # (2, 2)
    alpha: float
    gamma: np.ndarray  # (3, 3)
    edge_sets: list  # per graph: list of 1-based (i, j, w) triples
    schedule_kind: str  # "random" | "fixed"
    period: float
    seed: int
    fixed_index: int  # 1-based graph number for kind == "fixed"
    delays: np.ndarray  # (n, n) seconds
    horizon: float
    step: float
    out_dir: str


def default_thetas(count):
    if count == len(HETEROGENEITY):
        return np.array([f * NOMINAL_THETA for f in HETEROGENEITY])
    return np.array([NOMINAL_THETA for _ in range(count)])


def scenario_a() -> ScenarioConfig:
    """Six heterogeneous arms, random 50 ms switching, no delays, 15 s."""
    return ScenarioConfig(
        count=6,
        thetas=default_thetas(6),
        q0=np.array(Q0_DEFAULT),
        qd0=np.zeros((6, 2)),
        k=30.0 * np.eye(2),
        alpha=3.0,
        gamma=6.0 * np.eye(3),
        edge_sets=[[list(e) for e in g] for g in PRESET_EDGE_SETS],
        schedule_kind="random",
        period=DEFAULT_PERIOD,
        seed=DEFAULT_SEED,
        fixed_index=1,
        delays=np.zeros((6, 6)),
        horizon=15.0,
        step=DEFAULT_STEP,
        out_dir=DEFAULT_OUT_DIR,
    )


def scenario_b() -> ScenarioConfig:
    """Scenario A with a uniform 1 s communication delay and a 60 s horizon."""
    cfg = scenario_a()
    cfg.delays = np.full((6, 6), 1.0)
    cfg.horizon = 60.0
    return cfg


def _expect_mapping(node, path):
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError(path, f"expected a mapping, got {type(node).__name__}")
    return node

def _pop_known(mapping, known, path):
    unknown = set(mapping) - set(known)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0], "unknown key")


def _as_float(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _as_int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return int(value)


def _as_matrix(value, shape, path):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a nested list of numbers") from None
    if arr.shape != shape:
        raise ConfigError(path, f"expected shape {shape}, got {arr.shape}")
    return arr


def _gain_matrix(value, size, path):
    """Scalar shorthand c -> c * identity, or a full symmetric matrix."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        scalar = float(value)
        if scalar <= 0:
            raise ConfigError(path, "gain must be positive")
        return scalar * np.eye(size)
    return _as_matrix(value, (size, size), path)


def _parse_edge_sets(node, count, path):
    if not isinstance(node, list) or not node:
        raise ConfigError(path, "expected a nonempty list of graphs")
    out = []
    for gi, edges in enumerate(node):
        gpath = f"{path}[{gi}]"
        if edges is None:
            edges = []
        if not isinstance(edges, list):
            raise ConfigError(gpath, "expected a list of (i, j, w) triples")
        triples = []
        for ei, edge in enumerate(edges):
            epath = f"{gpath}[{ei}]"
            if not isinstance(edge, list) or len(edge) != 3:
                raise ConfigError(epath, "expected an (i, j, w) triple")
            i = _as_int(edge[0], epath)
            j = _as_int(edge[1], epath)
            w = _as_float(edge[2], epath)
            if not (1 <= i <= count and 1 <= j <= count):
                raise ConfigError(epath, f"vertex index out of 1..{count}")
            if i == j:
                raise ConfigError(epath, "self-loops are not allowed")
            if w <= 0:
                raise ConfigError(epath, "edge weight must be positive")
            triples.append([i, j, w])
        out.append(triples)
    return out


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a YAML scenario; missing keys fall back to preset A."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML ({exc})") from None
    raw = _expect_mapping(raw, "<root>")
    _pop_known(raw, {"agents", "gains", "graphs", "schedule", "delays", "horizon", "step", "outputs"}, "")
    cfg = scenario_a()

    agents = _expect_mapping(raw.get("agents"), "agents")
    _pop_known(agents, {"count", "theta", "q0", "qd0"}, "agents")
    count = _as_int(agents.get("count", cfg.count), "agents.count")
    if count < 2:
        raise ConfigError("agents.count", "need at least two agents")
    defaults_apply = count == cfg.count
    cfg.count = count
    if "theta" in agents:
        cfg.thetas = _as_matrix(agents["theta"], (count, 3), "agents.theta")
    elif not defaults_apply:
        cfg.thetas = default_thetas(count)
    if "q0" in agents:
        cfg.q0 = _as_matrix(agents["q0"], (count, 2), "agents.q0")
    elif not defaults_apply:
        raise ConfigError("agents.q0", f"required when agents.count != {len(Q0_DEFAULT)}")
    if "qd0" in agents:
        cfg.qd0 = _as_matrix(agents["qd0"], (count, 2), "agents.qd0")
    elif not defaults_apply:
        cfg.qd0 = np.zeros((count, 2))

    gains = _expect_mapping(raw.get("gains"), "gains")
    _pop_known(gains, {"k", "alpha", "gamma"}, "gains")
    if "k" in gains:
        cfg.k = _gain_matrix(gains["k"], 2, "gains.k")
    if "alpha" in gains:
        cfg.alpha = _as_float(gains["alpha"], "gains.alpha")
        if cfg.alpha <= 0:
            raise ConfigError("gains.alpha", "must be positive")
    if "gamma" in gains:
        cfg.gamma = _gain_matrix(gains["gamma"], 3, "gains.gamma")
    for name, mat in (("gains.k", cfg.k), ("gains.gamma", cfg.gamma)):
        if np.abs(mat - mat.T).max() > 1e-12:
            raise ConfigError(name, "matrix must be symmetric")
        if np.linalg.eigvalsh(mat).min() <= 0:
            raise ConfigError(name, "matrix must be positive definite")

    if "graphs" in raw:
        cfg.edge_sets = _parse_edge_sets(raw["graphs"], count, "graphs")
    elif not defaults_apply:
        raise ConfigError("graphs", "required when agents.count != 6")
    else:
        for gi, triples in enumerate(cfg.edge_sets):
            for ei, (i, j, _) in enumerate(triples):
                if i > count or j > count:
                    raise ConfigError(f"graphs[{gi}][{ei}]", "preset graph exceeds agent count")

    if "step" in raw:
        cfg.step = _as_float(raw["step"], "step")
        if cfg.step <= 0:
            raise ConfigError("step", "must be positive")
    if "horizon" in raw:
        cfg.horizon = _as_float(raw["horizon"], "horizon")
    if cfg.horizon <= 0:
        raise ConfigError("horizon", "must be positive")
    if not is_grid_aligned(cfg.horizon, cfg.step) or round(cfg.horizon / cfg.step) < 1:
        raise ConfigError("horizon", f"must be a positive multiple of step = {cfg.step}")

    schedule = _expect_mapping(raw.get("schedule"), "schedule")
    _pop_known(schedule, {"kind", "period", "seed", "index"}, "schedule")
    kind = schedule.get("kind", cfg.schedule_kind)
    if kind not in ("random", "fixed"):
        raise ConfigError("schedule.kind", "must be 'random' or 'fixed'")
    cfg.schedule_kind = kind
    if "period" in schedule:
        cfg.period = _as_float(schedule["period"], "schedule.period")
        if cfg.period <= 0:
            raise ConfigError("schedule.period", "must be positive")
    if not is_grid_aligned(cfg.period, cfg.step):
        raise ConfigError("schedule.period", f"must be a multiple of step = {cfg.step}")
    if "seed" in schedule:
        cfg.seed = _as_int(schedule["seed"], "schedule.seed")
    if "index" in schedule:
        cfg.fixed_index = _as_int(schedule["index"], "schedule.index")
    if not 1 <= cfg.fixed_index <= len(cfg.edge_sets):
        raise ConfigError("schedule.index", f"must lie in 1..{len(cfg.edge_sets)}")

    if "delays" in raw:
        node = raw["delays"]
        if isinstance(node, (int, float)) and not isinstance(node, bool):
            cfg.delays = np.full((count, count), float(node))
        else:
            cfg.delays = _as_matrix(node, (count, count), "delays")
    elif not defaults_apply:
        cfg.delays = np.zeros((count, count))
    if (cfg.delays < 0).any():
        raise ConfigError("delays", "delays must be nonnegative")
    for (i, j), value in np.ndenumerate(cfg.delays):
        if not is_grid_aligned(value, cfg.step):
            raise ConfigError(
                f"delays[{i + 1}][{j + 1}]",
                f"{value} is not a multiple of step = {cfg.step}",
            )

    outputs = _expect_mapping(raw.get("outputs"), "outputs")
    _pop_known(outputs, {"dir"}, "outputs")
    if "dir" in outputs:
        if not isinstance(outputs["dir"], str) or not outputs["dir"]:
            raise ConfigError("outputs.dir", "expected a nonempty string")
        cfg.out_dir = outputs["dir"]

    return cfg


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical YAML for a config; parse(serialize(parse(x))) == parse(x)."""
    doc = {
        "agents": {
            "count": cfg.count,
            "theta": [[float(v) for v in row] for row in cfg.thetas],
            "q0": [[float(v) for v in row] for row in cfg.q0],
            "qd0": [[float(v) for v in row] for row in cfg.qd0],
        },
        "gains": {
            "k": [[float(v) for v in row] for row in cfg.k],
            "alpha": float(cfg.alpha),
            "gamma": [[float(v) for v in row] for row in cfg.gamma],
        },
        "graphs": [
            [[int(i), int(j), float(w)] for i, j, w in triples] for triples in cfg.edge_sets
        ],
        "schedule": (
            {"kind": "random", "period": float(cfg.period), "seed": int(cfg.seed)}
            if cfg.schedule_kind == "random"
            else {"kind": "fixed", "index": int(cfg.fixed_index)}
        ),
        "delays": (
            float(cfg.delays.flat[0])
            if np.all(cfg.delays == cfg.delays.flat[0])
            else [[float(v) for v in row] for row in cfg.delays]
        ),
        "horizon": float(cfg.horizon),
        "step": float(cfg.step),
        "outputs": {"dir": cfg.out_dir},
    }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def graphs_from_config(cfg: ScenarioConfig):
    out = []
    for triples in cfg.edge_sets:
        out.append(
            DirectedGraph.from_edges(cfg.count, [(i - 1, j - 1, w) for i, j, w in triples])
        )
    return out


def runtime_from_config(cfg: ScenarioConfig) -> sim.ScenarioRuntime:
    """Resolve a validated config into the simulator's runtime bundle."""
    members = graphs_from_config(cfg)
    if cfg.schedule_kind == "random":
        schedule = generate_schedule(members, cfg.period, cfg.horizon, cfg.seed)
    else:
        schedule = fixed_schedule(members, cfg.fixed_index - 1)
    gains = control.ControllerGains(k=cfg.k, alpha=cfg.alpha, gamma=cfg.gamma)
    try:
        delays = DelayMatrix(cfg.delays, cfg.step)
    except ValueError as exc:
        raise ConfigError("delays", str(exc)) from None
    return sim.ScenarioRuntime(
        thetas=cfg.thetas,
        gains=gains,
        schedule=schedule,
        delays=delays,
        q0=cfg.q0,
        qd0=cfg.qd0,
        horizon=cfg.horizon,
        step=cfg.step,
    )
