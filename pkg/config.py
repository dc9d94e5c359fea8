"""
Run configuration: scenario, airframe, simulation, predictor, PPO and scale
settings, loaded from a YAML file.

Every default is the reference engagement value. Angles are degrees in the file and
radians in code. `load_config` validates the whole tree and reports every
offending key at once through ConfigSchemaError.
"""

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import numpy as np
import yaml

from errors import ConfigSchemaError, ConfigurationError
from physics import tables
from physics.atmosphere import AeroTable, Airframe
from physics.dynamics import Engagement, SimSettings, VehicleState


@dataclass(frozen=True)
class FixedInitial:
    x0_km: float = tables.FIXED_SCENARIO["x0_km"]
    y0_km: float = tables.FIXED_SCENARIO["y0_km"]
    v0: float = tables.FIXED_SCENARIO["v0"]
    theta0_deg: float = tables.FIXED_SCENARIO["theta0_deg"]


@dataclass(frozen=True)
class AirframeConfig:
    mass: float = tables.MASS_KG
    ref_area: float = tables.REF_AREA_M2
    alpha_max_deg: float = tables.ALPHA_MAX_DEG
    gravity: float = tables.GRAVITY


@dataclass(frozen=True)
class SimulationConfig:
    dt_sim: float = 0.05
    dt_guidance: float = 0.5
    capture_radius: float = 50.0
    t_max: float = 400.0
    aero_table: Optional[str] = None


@dataclass(frozen=True)
class ImpactTimeConfig:
    mode: str = "ratio"
    ratio_band: Tuple[float, float] = tables.DESIRED_TIME_RATIO_BAND
    fixed: float = 120.0
    sweep: Tuple[float, ...] = tables.DESIRED_TIME_SWEEP


@dataclass(frozen=True)
class EngagementConfig:
    """Scenario definition: initial-state intervals, target, airframe, t_d policy."""

    x0_km: Tuple[float, float] = tables.X0_KM
    y0_km: Tuple[float, float] = tables.Y0_KM
    v0: Tuple[float, float] = tables.V0_MPS
    theta0_deg: Tuple[float, float] = tables.THETA0_DEG
    target_km: Tuple[float, float] = tables.TARGET_KM
    fixed_initial: FixedInitial = field(default_factory=FixedInitial)
    airframe: AirframeConfig = field(default_factory=AirframeConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    impact_time: ImpactTimeConfig = field(default_factory=ImpactTimeConfig)

    def engagement(self) -> Engagement:
        return Engagement(self.target_km[0] * 1000.0, self.target_km[1] * 1000.0)

    def sim_settings(self) -> SimSettings:
        af = self.airframe
        table = AeroTable.from_file(self.simulation.aero_table) if self.simulation.aero_table else AeroTable.default()
        return SimSettings(
            airframe=Airframe(af.mass, af.ref_area, math.radians(af.alpha_max_deg), af.gravity),
            table=table,
            dt_sim=self.simulation.dt_sim,
            dt_guidance=self.simulation.dt_guidance,
            capture_radius=self.simulation.capture_radius,
            t_max=self.simulation.t_max,
        )

    def sample_initial(self, rng: np.random.Generator) -> VehicleState:
        """Uniform draw from the initial-condition intervals."""
        return VehicleState(
            time=0.0,
            x=rng.uniform(*self.x0_km) * 1000.0,
            y=rng.uniform(*self.y0_km) * 1000.0,
            speed=rng.uniform(*self.v0),
            gamma=math.radians(rng.uniform(*self.theta0_deg)),
        )

    def fixed_initial_state(self) -> VehicleState:
        f = self.fixed_initial
        return VehicleState(0.0, f.x0_km * 1000.0, f.y0_km * 1000.0, f.v0, math.radians(f.theta0_deg))

    def desired_time(self, rng: np.random.Generator, tgo0: float) -> float:
        """t_d for one run: fixed value, or a uniform ratio of the predicted flight time."""
        if self.impact_time.mode == "fixed":
            return self.impact_time.fixed
        return rng.uniform(*self.impact_time.ratio_band) * tgo0


@dataclass(frozen=True)
class PredictorConfig:
    hidden_layers: Tuple[int, ...] = (100, 100, 100)
    batch: int = 1000
    learning_rate: float = 0.001
    train_ratio: float = 0.8
    log_every: int = 1000


@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    actor_lr: float = 1e-4
    critic_lr: float = 2e-4
    gamma_discount: float = 0.995
    buffer_size: int = 256
    t_max_steps: int = 400
    max_episodes: int = 500
    a1: float = 0.9
    a2: float = 0.09
    a3: float = 0.01
    eps_hat: float = 2.0
    r_bar: float = 1.6e4
    sigma_alt: float = 115.0
    a_max_g: float = 3.0
    epochs: int = 10
    minibatch: int = 64
    log_std_init_ratio: float = 0.3
    hidden_layers: Tuple[int, ...] = (64, 64)
    tgo_floor: float = 1.0
    # |eps_r| bound; exp(-eps_r^2) stays a normal positive double below ~26
    eps_r_max: float = 25.0
    tgo_source: str = "dnn"
    sparse_tolerance: float = 1.0

    def a_max(self, gravity: float = tables.GRAVITY) -> float:
        return self.a_max_g * gravity


@dataclass(frozen=True)
class ScaleProfile:
    trajectories: int
    dnn_steps: int
    episodes: int
    mc_runs: int


@dataclass(frozen=True)
class ScaleConfig:
    desk: ScaleProfile = field(default_factory=lambda: ScaleProfile(**tables.DESK_SCALE))
    full: ScaleProfile = field(default_factory=lambda: ScaleProfile(**tables.FULL_SCALE))


@dataclass(frozen=True)
class RunConfig:
    seed: int = 2021
    workers: int = 1
    engagement: EngagementConfig = field(default_factory=EngagementConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    scale: ScaleConfig = field(default_factory=ScaleConfig)


# ---------- schema ----------

def _coerce(tp: Any, value: Any, key: str, errors: List[str]) -> Any:
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            errors.append(key)
            return None
        return _build(tp, value, key, errors)

    origin = get_origin(tp)
    if origin is Union:
        if value is None:
            return None
        inner = [a for a in get_args(tp) if a is not type(None)][0]
        return _coerce(inner, value, key, errors)
    if origin is tuple:
        args = get_args(tp)
        if not isinstance(value, (list, tuple)):
            errors.append(key)
            return None
        if len(args) == 2 and args[1] is Ellipsis:
            args = (args[0],) * len(value)
        elif len(args) != len(value):
            errors.append(key)
            return None
        return tuple(_coerce(a, v, f"{key}[{i}]", errors) for i, (a, v) in enumerate(zip(args, value)))

    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(key)
            return None
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(key)
            return None
        return value
    if tp is str or tp is bool:
        if not isinstance(value, tp):
            errors.append(key)
            return None
        return value
    raise TypeError(f"unsupported config type {tp} at {key}")


def _build(cls, data: Dict[str, Any], prefix: str, errors: List[str]):
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    n_errors = len(errors)
    for k in data:
        if k not in names:
            errors.append(f"{prefix}.{k}" if prefix else str(k))
    kwargs = {}
    for name in names:
        if name in data:
            kwargs[name] = _coerce(hints[name], data[name], f"{prefix}.{name}" if prefix else name, errors)
    if len(errors) > n_errors:
        return None
    return cls(**kwargs)


def _interval_ok(pair: Tuple[float, float]) -> bool:
    return pair[0] < pair[1]


def _semantic_problems(cfg: RunConfig) -> List[str]:
    bad = []
    eng = cfg.engagement
    for name in ("x0_km", "y0_km", "v0", "theta0_deg"):
        if not _interval_ok(getattr(eng, name)):
            bad.append(f"engagement.{name}")
    if eng.v0[0] <= 0.0:
        bad.append("engagement.v0")
    it = eng.impact_time
    if it.mode not in ("ratio", "fixed"):
        bad.append("engagement.impact_time.mode")
    lo, hi = it.ratio_band
    if not (1.0 < lo < hi < 2.0):
        bad.append("engagement.impact_time.ratio_band")
    if it.fixed <= 0.0 or any(t <= 0.0 for t in it.sweep):
        bad.append("engagement.impact_time.fixed/sweep")
    for name in ("mass", "ref_area", "alpha_max_deg", "gravity"):
        if getattr(eng.airframe, name) <= 0.0:
            bad.append(f"engagement.airframe.{name}")
    sim = eng.simulation
    n = round(sim.dt_guidance / sim.dt_sim) if sim.dt_sim > 0 else 0
    if sim.dt_sim <= 0.0 or n < 1 or abs(n * sim.dt_sim - sim.dt_guidance) > 1e-9 * sim.dt_guidance:
        bad.append("engagement.simulation.dt_guidance")
    if sim.capture_radius <= 0.0 or sim.t_max < 0.0:
        bad.append("engagement.simulation")
    if sim.aero_table is not None and not os.path.isfile(sim.aero_table):
        bad.append("engagement.simulation.aero_table")

    pred = cfg.predictor
    if not (0.0 < pred.train_ratio < 1.0):
        bad.append("predictor.train_ratio")
    if pred.batch < 1 or pred.learning_rate <= 0.0 or any(h < 1 for h in pred.hidden_layers):
        bad.append("predictor")

    ppo = cfg.ppo
    if abs(ppo.a1 + ppo.a2 + ppo.a3 - 1.0) > 1e-9:
        bad.append("ppo.a1/a2/a3")
    if not (0.0 < ppo.clip_eps < 1.0):
        bad.append("ppo.clip_eps")
    if not (0.0 < ppo.gamma_discount <= 1.0):
        bad.append("ppo.gamma_discount")
    if ppo.tgo_source not in ("dnn", "approx", "sparse"):
        bad.append("ppo.tgo_source")
    if ppo.buffer_size < 1 or ppo.minibatch < 1 or ppo.epochs < 1 or ppo.t_max_steps < 1:
        bad.append("ppo")
    if not (0.0 < ppo.eps_r_max <= 26.0) or ppo.tgo_floor <= 0.0:
        bad.append("ppo.eps_r_max/tgo_floor")
    if cfg.workers < 1:
        bad.append("workers")
    return bad


def parse_config(data: Optional[Dict[str, Any]], base_dir: str = ".") -> RunConfig:
    """Build and validate a RunConfig from a parsed YAML mapping."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigSchemaError(["<root>"])
    errors: List[str] = []
    cfg = _build(RunConfig, data, "", errors)
    if errors:
        raise ConfigSchemaError(errors)

    table = cfg.engagement.simulation.aero_table
    if table is not None and not os.path.isabs(table):
        sim = dataclasses.replace(cfg.engagement.simulation, aero_table=os.path.normpath(os.path.join(base_dir, table)))
        cfg = dataclasses.replace(cfg, engagement=dataclasses.replace(cfg.engagement, simulation=sim))

    problems = _semantic_problems(cfg)
    if problems:
        raise ConfigSchemaError(problems)
    return cfg


def load_config(path: Optional[str]) -> RunConfig:
    """
    Load a YAML config file; None means all defaults.

    Raises:
        ConfigurationError: file missing or not valid YAML.
        ConfigSchemaError: unknown keys, wrong types or invalid values.
    """
    if path is None:
        return RunConfig()
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML ({exc})") from exc
    return parse_config(data, base_dir=os.path.dirname(os.path.abspath(path)))


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(dataclasses.asdict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
