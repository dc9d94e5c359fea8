"""
RL view of the engagement: normalized agent state, shaped reward and a
step-per-guidance-period environment around the simulator.

The agent's action is the bias command a_b; the environment adds it to the
PNG baseline, holds the sum for one guidance period and reports the next
state, the reward and whether the engagement terminated.
"""

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from agents.predictor.dataset import Normalizer
from config import PpoConfig
from physics.dynamics import (
    Engagement,
    GuidanceCommand,
    Outcome,
    SimSettings,
    TerminationRecord,
    VehicleState,
    fly_interval,
    png_baseline,
)

TgoEstimator = Callable[[VehicleState, Engagement], float]


@dataclass(frozen=True)
class RlState:
    v_n: float
    gamma_n: float
    x_n: float
    y_n: float
    eps_n: float
    # raw values the reward needs; not part of the network input
    eps_t: float = 0.0
    tgo_hat: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.v_n, self.gamma_n, self.x_n, self.y_n, self.eps_n], dtype=np.float64)


def no_prediction(state: VehicleState, engagement: Engagement) -> float:
    """Estimator for training without a predictor: eps_t degenerates to t_d - t."""
    return 0.0


def make_state(
    state: VehicleState,
    engagement: Engagement,
    t_d: float,
    predictor: TgoEstimator,
    normalizer: Normalizer,
    cfg: PpoConfig,
) -> RlState:
    """eps_t = t_d - (t + t_go_hat); inputs divided by the dataset means and eps_hat."""
    tgo_hat = predictor(state, engagement)
    eps_t = t_d - (state.time + tgo_hat)
    return RlState(
        v_n=state.speed / normalizer.mean_v,
        gamma_n=state.gamma / normalizer.mean_gamma,
        x_n=state.x / normalizer.mean_x,
        y_n=state.y / normalizer.mean_y,
        eps_n=eps_t / cfg.eps_hat,
        eps_t=eps_t,
        tgo_hat=tgo_hat,
    )


class RewardTerms(NamedTuple):
    r1: float
    r2: float
    r3: float
    total: float


def reward_terms(state: VehicleState, engagement: Engagement, eps_t: float, tgo_hat: float, cfg: PpoConfig) -> RewardTerms:
    r = math.hypot(engagement.target_x - state.x, engagement.target_y - state.y)
    eps_r = eps_t / max(tgo_hat, cfg.tgo_floor)
    eps_r = min(max(eps_r, -cfg.eps_r_max), cfg.eps_r_max)
    r1 = math.exp(-eps_r * eps_r)
    r2 = math.exp(-r / cfg.r_bar)
    r3 = math.exp(-((state.y - r) ** 2) / cfg.sigma_alt ** 2)
    return RewardTerms(r1, r2, r3, cfg.a1 * r1 + cfg.a2 * r2 + cfg.a3 * r3)


def reward(state: VehicleState, engagement: Engagement, eps_t: float, tgo_hat: float, cfg: PpoConfig) -> float:
    """
    a1 exp(-eps_r^2) + a2 exp(-R / R_bar) + a3 exp(-(y - R)^2 / sigma^2) with
    eps_r = eps_t / max(t_go_hat, tgo_floor), bounded to +/- eps_r_max so the
    time-accuracy term never underflows to zero.
    """
    return reward_terms(state, engagement, eps_t, tgo_hat, cfg).total


def sparse_reward(termination: Optional[TerminationRecord], t_d: float, tolerance: float) -> float:
    """1 on the final step of a Hit within `tolerance` of t_d, 0 otherwise."""
    if termination is None or termination.outcome is not Outcome.HIT:
        return 0.0
    return 1.0 if abs(termination.final_time - t_d) <= tolerance else 0.0


class StepResult(NamedTuple):
    state: RlState
    reward: float
    done: bool
    termination: Optional[TerminationRecord]
    command: GuidanceCommand
    r1: float


class GuidanceEnv:
    """
    One engagement at a time. `dense=False` switches to the terminal-only
    reward used to train without a time-to-go estimate.
    """

    def __init__(
        self,
        engagement: Engagement,
        sim: SimSettings,
        normalizer: Normalizer,
        cfg: PpoConfig,
        predictor: TgoEstimator,
        dense: bool = True,
    ):
        self.engagement = engagement
        self.sim = sim
        self.normalizer = normalizer
        self.cfg = cfg
        self.predictor = predictor
        self.dense = dense
        self.a_max = cfg.a_max(sim.airframe.gravity)
        self.vehicle: Optional[VehicleState] = None
        self.t_d = 0.0
        self._t0 = 0.0
        self._k = 0

    def observe(self) -> RlState:
        return make_state(self.vehicle, self.engagement, self.t_d, self.predictor, self.normalizer, self.cfg)

    def reset(self, initial: VehicleState, t_d: float) -> RlState:
        self.vehicle = initial
        self.t_d = t_d
        self._t0 = initial.time
        self._k = 0
        return self.observe()

    def step(self, bias: float) -> StepResult:
        if self.vehicle is None:
            raise RuntimeError("reset() must be called before step()")
        baseline = png_baseline(self.vehicle, self.engagement, self.sim.airframe.gravity)
        command = GuidanceCommand.compose(baseline, bias, self.a_max)
        result = fly_interval(self.vehicle, command.total, self.engagement, self.sim, self._t0, self._k)
        self._k += result.sim_steps
        self.vehicle = result.state
        done = result.termination is not None

        next_state = self.observe()
        if self.dense:
            terms = reward_terms(self.vehicle, self.engagement, next_state.eps_t, next_state.tgo_hat, self.cfg)
            return StepResult(next_state, terms.total, done, result.termination, command, terms.r1)
        r = sparse_reward(result.termination, self.t_d, self.cfg.sparse_tolerance)
        return StepResult(next_state, r, done, result.termination, command, 0.0)
