"""
Planar point-mass engagement: LOS geometry, the PNG baseline command, RK4
integration of the flight dynamics and the episode driver.

A controller maps the current VehicleState to a GuidanceCommand. The command
is held for one guidance period (zero-order hold) while the dynamics are
integrated at the simulation step, and termination is checked after every
simulation step.
"""

import logging
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Tuple, Union

import pandas as pd

from errors import SingularGeometryError, StallError
from physics.atmosphere import AeroTable, Airframe, flight_forces
from physics.tables import GRAVITY

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ["t", "x", "y", "v", "gamma", "a0", "ab", "aM", "r", "lambda"]


class Outcome(str, Enum):
    HIT = "Hit"
    GROUND = "Ground"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class VehicleState:
    time: float
    x: float
    y: float
    speed: float
    gamma: float


@dataclass(frozen=True)
class Engagement:
    target_x: float = 0.0
    target_y: float = 0.0


@dataclass(frozen=True)
class GuidanceCommand:
    baseline: float
    bias: float
    total: float

    @classmethod
    def compose(cls, baseline: float, bias: float, a_max: float = math.inf) -> "GuidanceCommand":
        """a_M = a0 + a_b with the bias saturated at +/- a_max."""
        bias = min(max(bias, -a_max), a_max)
        return cls(baseline=baseline, bias=bias, total=baseline + bias)


@dataclass(frozen=True)
class TerminationRecord:
    outcome: Outcome
    final_time: float
    miss_distance: float
    stalled: bool = False


@dataclass(frozen=True)
class SimSettings:
    airframe: Airframe = field(default_factory=Airframe)
    table: AeroTable = field(default_factory=AeroTable.default)
    dt_sim: float = 0.05
    dt_guidance: float = 0.5
    capture_radius: float = 50.0
    t_max: float = 400.0

    def __post_init__(self):
        if not (self.dt_sim > 0.0 and self.dt_guidance > 0.0):
            raise ValueError("dt_sim and dt_guidance must be positive")
        n = round(self.dt_guidance / self.dt_sim)
        if n < 1 or abs(n * self.dt_sim - self.dt_guidance) > 1e-9 * self.dt_guidance:
            raise ValueError(f"dt_guidance={self.dt_guidance} is not an integer multiple of dt_sim={self.dt_sim}")

    @property
    def substeps(self) -> int:
        return round(self.dt_guidance / self.dt_sim)


Controller = Callable[[VehicleState], GuidanceCommand]
Trajectory = List[Tuple[VehicleState, GuidanceCommand]]


class LosGeometry(NamedTuple):
    r: float
    lam: float
    lam_dot: float
    closing_speed: float


def los_geometry(state: VehicleState, engagement: Engagement) -> LosGeometry:
    """Range, LOS angle, LOS rate and closing speed against a stationary target."""
    dx = engagement.target_x - state.x
    dy = engagement.target_y - state.y
    r = math.hypot(dx, dy)
    if r <= 0.0:
        raise SingularGeometryError(f"missile at target position ({state.x}, {state.y})")
    lam = math.atan2(dy, dx)
    heading_error = state.gamma - lam
    return LosGeometry(
        r=r,
        lam=lam,
        lam_dot=-state.speed * math.sin(heading_error) / r,
        closing_speed=state.speed * math.cos(heading_error),
    )


def png_baseline(state: VehicleState, engagement: Engagement, gravity: float = GRAVITY) -> float:
    """Gravity-compensated energy-optimal PNG: a0 = 3 v lambda_dot + g cos(gamma)."""
    geo = los_geometry(state, engagement)
    return 3.0 * state.speed * geo.lam_dot + gravity * math.cos(state.gamma)


def png_controller(engagement: Engagement, gravity: float = GRAVITY) -> Controller:
    """Controller that flies the pure PNG baseline (zero bias)."""

    def control(state: VehicleState) -> GuidanceCommand:
        return GuidanceCommand.compose(png_baseline(state, engagement, gravity), 0.0)

    return control


def _derivatives(y: float, v: float, gamma: float, a_cmd: float, airframe: Airframe, table: AeroTable):
    if not v > 0.0:
        raise StallError(f"speed {v} m/s during integration")
    lift, drag, weight = flight_forces(v, y, a_cmd, airframe, table)
    m = airframe.mass
    cos_g = math.cos(gamma)
    sin_g = math.sin(gamma)
    return (
        (-drag - weight * sin_g) / m,
        (lift - weight * cos_g) / (m * v),
        v * cos_g,
        v * sin_g,
    )


def step(state: VehicleState, a_total: float, dt: float, airframe: Airframe, table: AeroTable) -> VehicleState:
    """
    Advance one classical RK4 step with the lateral command held at a_total.
    AoA is re-derived from a_total at every stage.

    Raises:
        StallError: speed is not positive at a stage or after the step.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    x0, y0, v0, g0 = state.x, state.y, state.speed, state.gamma

    k1 = _derivatives(y0, v0, g0, a_total, airframe, table)
    h = 0.5 * dt
    k2 = _derivatives(y0 + h * k1[3], v0 + h * k1[0], g0 + h * k1[1], a_total, airframe, table)
    k3 = _derivatives(y0 + h * k2[3], v0 + h * k2[0], g0 + h * k2[1], a_total, airframe, table)
    k4 = _derivatives(y0 + dt * k3[3], v0 + dt * k3[0], g0 + dt * k3[1], a_total, airframe, table)

    w = dt / 6.0
    v1 = v0 + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    if not v1 > 0.0:
        raise StallError(f"speed {v1} m/s after step at t={state.time}")
    return VehicleState(
        time=state.time + dt,
        x=x0 + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        y=y0 + w * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
        speed=v1,
        gamma=g0 + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    )


def _range(state: VehicleState, engagement: Engagement) -> float:
    return math.hypot(engagement.target_x - state.x, engagement.target_y - state.y)


def _check_termination(
    state: VehicleState, r: float, min_r: float, sim: SimSettings
) -> Optional[TerminationRecord]:
    if r <= sim.capture_radius:
        return TerminationRecord(Outcome.HIT, state.time, min_r)
    if state.y <= 0.0:
        return TerminationRecord(Outcome.GROUND, state.time, min_r)
    if state.time >= sim.t_max - 1e-9:
        return TerminationRecord(Outcome.TIMEOUT, state.time, min_r)
    return None


class IntervalResult(NamedTuple):
    state: VehicleState
    sim_steps: int
    termination: Optional[TerminationRecord]
    min_range: float


def fly_interval(
    state: VehicleState,
    a_total: float,
    engagement: Engagement,
    sim: SimSettings,
    start_time: float,
    step_index: int,
) -> IntervalResult:
    """
    Hold a_total for one guidance period. Time stamps are rebuilt from the
    integer step counter (start_time + k * dt_sim) so they never drift.
    A stall ends the interval as a Timeout with stalled=True.
    """
    min_r = _range(state, engagement)
    k = step_index
    for _ in range(sim.substeps):
        try:
            nxt = step(state, a_total, sim.dt_sim, sim.airframe, sim.table)
        except StallError as exc:
            logger.debug("stall: %s", exc)
            record = TerminationRecord(Outcome.TIMEOUT, state.time, min_r, stalled=True)
            return IntervalResult(state, k - step_index, record, min_r)
        k += 1
        state = replace(nxt, time=start_time + k * sim.dt_sim)
        r = _range(state, engagement)
        min_r = min(min_r, r)
        record = _check_termination(state, r, min_r, sim)
        if record is not None:
            return IntervalResult(state, k - step_index, record, min_r)
    return IntervalResult(state, k - step_index, None, min_r)


def rollout(
    initial: VehicleState,
    engagement: Engagement,
    controller: Controller,
    sim: SimSettings,
) -> Tuple[Trajectory, TerminationRecord]:
    """
    Run one engagement to termination.

    Returns the per-guidance-step (state, command) list and the termination
    record. A scenario that already satisfies a termination predicate
    returns an empty trajectory.
    """
    r0 = _range(initial, engagement)
    record = _check_termination(initial, r0, r0, sim)
    trajectory: Trajectory = []
    if record is not None:
        return trajectory, record

    state = initial
    k = 0
    while True:
        command = controller(state)
        trajectory.append((state, command))
        result = fly_interval(state, command.total, engagement, sim, initial.time, k)
        k += result.sim_steps
        state = result.state
        if result.termination is not None:
            return trajectory, result.termination


def trajectory_frame(trajectory: Trajectory, engagement: Engagement) -> pd.DataFrame:
    rows = []
    for state, command in trajectory:
        geo = los_geometry(state, engagement)
        rows.append(
            (state.time, state.x, state.y, state.speed, state.gamma,
             command.baseline, command.bias, command.total, geo.r, geo.lam)
        )
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)


def write_trajectory_csv(path: Union[str, os.PathLike], trajectory: Trajectory, engagement: Engagement) -> None:
    trajectory_frame(trajectory, engagement).to_csv(path, index=False)
