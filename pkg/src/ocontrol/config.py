"""Run configuration: strict TOML loading and validation.

One file describes one run: the plant, the controller, the reference
trajectory, and simulation or study parameters. Unknown keys are rejected
with the offending path so typos fail loudly before any computation.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


_PLANT_KEYS = {
    "msd": {"type", "mass", "damping", "stiffness", "dt"},
    "linear_drag": {"type", "mass", "damping", "dt", "d_zero", "w_obstacle", "obstacles"},
    "cartpole": {
        "type",
        "m_cart",
        "m_pole",
        "length",
        "d_linear",
        "d_angular",
        "gravity",
        "dt",
    },
    "companion": {"type", "poles"},
}

_CONTROLLER_KEYS = {
    "algorithm",
    "backend",
    "mode",
    "n_max",
    "delta1",
    "delta2",
    "termination",
    "alpha",
    "anticipatory",
    "rho_peak_guard",
}

_TRAJECTORY_KEYS = {"type", "target", "step_time", "times", "points"}
_SIMULATION_KEYS = {"t_end", "substeps"}
_STUDY_KEYS = {
    "orders",
    "n_steps",
    "fit_start",
    "gamma_scale",
    "n_grid",
    "repetitions",
    "warmup",
    "n_max",
    "epsilon",
    "combos",
}

_ALGORITHMS = {"naive", "forward_only", "efficient", "anytime", "lqr_baseline"}
_BACKENDS = {"kf", "ekf", "ukf"}
_MODES = {"duality", "sqp", "gradient"}


@dataclass
class RunConfig:
    """Validated run description."""

    plant_type: str
    plant_params: dict[str, Any] = field(default_factory=dict)
    algorithm: str = "efficient"
    backend: str = "kf"
    mode: str = "duality"
    n_max: int = 50
    delta1: float = 1e-4
    delta2: float = 1e-7
    termination: bool = False
    alpha: float = 1.0
    anticipatory: bool = True
    rho_peak_guard: bool = True
    trajectory_type: str = "step"
    target: list[float] = field(default_factory=lambda: [1.0, 0.0])
    step_time: float = 1.1
    times: list[float] = field(default_factory=list)
    points: list[list[float]] = field(default_factory=list)
    t_end: float = 7.5
    substeps: int = 10
    study: dict[str, Any] = field(default_factory=dict)


def _reject_unknown(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{where}]")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a TOML run configuration.

    Raises:
        ConfigError: the file is missing, malformed, or semantically invalid;
            the message names the offending section or field.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error in {path}: {exc}") from exc

    known_sections = {"plant", "controller", "trajectory", "simulation", "study"}
    _reject_unknown(raw, known_sections, "<root>")

    plant = raw.get("plant")
    _require(isinstance(plant, dict), "missing [plant] section")
    plant_type = plant.get("type")
    _require(plant_type is not None, "missing field 'type' in [plant]")
    _require(plant_type in _PLANT_KEYS, f"unknown plant type {plant_type!r}")
    _reject_unknown(plant, _PLANT_KEYS[plant_type], "plant")
    plant_params = {k: v for k, v in plant.items() if k != "type"}

    cfg = RunConfig(plant_type=plant_type, plant_params=plant_params)

    controller = raw.get("controller", {})
    _reject_unknown(controller, _CONTROLLER_KEYS, "controller")
    cfg.algorithm = controller.get("algorithm", cfg.algorithm)
    _require(cfg.algorithm in _ALGORITHMS, f"unknown algorithm {cfg.algorithm!r}")
    cfg.backend = controller.get("backend", cfg.backend)
    _require(cfg.backend in _BACKENDS, f"unknown backend {cfg.backend!r}")
    cfg.mode = controller.get("mode", cfg.mode)
    _require(cfg.mode in _MODES, f"unknown mode {cfg.mode!r}")
    cfg.n_max = int(controller.get("n_max", cfg.n_max))
    _require(cfg.n_max >= 0, "n_max must be non-negative")
    cfg.delta1 = float(controller.get("delta1", cfg.delta1))
    cfg.delta2 = float(controller.get("delta2", cfg.delta2))
    _require(cfg.delta1 >= 0 and cfg.delta2 >= 0, "termination thresholds must be non-negative")
    cfg.termination = bool(controller.get("termination", cfg.termination))
    cfg.alpha = float(controller.get("alpha", cfg.alpha))
    _require(cfg.alpha > 0, "alpha must be positive")
    cfg.anticipatory = bool(controller.get("anticipatory", cfg.anticipatory))
    cfg.rho_peak_guard = bool(controller.get("rho_peak_guard", cfg.rho_peak_guard))

    trajectory = raw.get("trajectory", {})
    _reject_unknown(trajectory, _TRAJECTORY_KEYS, "trajectory")
    cfg.trajectory_type = trajectory.get("type", cfg.trajectory_type)
    _require(cfg.trajectory_type in {"step", "waypoints"}, f"unknown trajectory type {cfg.trajectory_type!r}")
    if "target" in trajectory:
        cfg.target = [float(v) for v in trajectory["target"]]
    cfg.step_time = float(trajectory.get("step_time", cfg.step_time))
    if cfg.trajectory_type == "waypoints":
        _require("times" in trajectory and "points" in trajectory, "waypoints trajectory requires 'times' and 'points'")
        cfg.times = [float(v) for v in trajectory["times"]]
        cfg.points = [[float(v) for v in row] for row in trajectory["points"]]
        _require(len(cfg.times) == len(cfg.points), "'times' and 'points' must have equal length")

    simulation = raw.get("simulation", {})
    _reject_unknown(simulation, _SIMULATION_KEYS, "simulation")
    cfg.t_end = float(simulation.get("t_end", cfg.t_end))
    _require(cfg.t_end > 0, "t_end must be positive")
    cfg.substeps = int(simulation.get("substeps", cfg.substeps))
    _require(cfg.substeps >= 1, "substeps must be at least 1")

    study = raw.get("study", {})
    _reject_unknown(study, _STUDY_KEYS, "study")
    cfg.study = dict(study)

    if "obstacles" in plant_params:
        obstacles = plant_params["obstacles"]
        _require(
            isinstance(obstacles, list) and all(len(row) == 3 for row in obstacles),
            "plant.obstacles must be a list of [cx, cy, radius] triples",
        )
        plant_params["obstacles"] = tuple(tuple(float(v) for v in row) for row in obstacles)

    return cfg
