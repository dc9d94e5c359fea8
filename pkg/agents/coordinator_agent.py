"""
Guidance coordinator.

Composes the guidance laws the experiments compare into controllers the
simulator can fly:

- png: the gravity-compensated PNG baseline with zero bias.
- proposed: PNG baseline plus the learned bias command, with the predicted
  time-to-go in the loop.
- itcg1 / itcg2: the analytic impact-time laws with their reference gains.

Every controller returns a GuidanceCommand whose `baseline` is the PNG
command, so trajectory files show the bias of each law on the same footing.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

from agents.analytic.itcg_laws import itcg1_command, itcg2_command
from agents.corrector.ppo_agent import LoadedCorrector, corrector_bias, select_estimators
from agents.predictor.tgo_agent import TgoPredictor
from errors import ConfigurationError
from physics.dynamics import (
    Controller,
    Engagement,
    GuidanceCommand,
    SimSettings,
    TerminationRecord,
    Trajectory,
    VehicleState,
    png_baseline,
    png_controller,
    rollout,
)

logger = logging.getLogger(__name__)

GUIDANCE_LAWS = ("png", "proposed", "itcg1", "itcg2")


@dataclass(frozen=True)
class GuidanceModels:
    """Trained artifacts a law may need; both are picklable for worker fan-out."""

    predictor: Optional[TgoPredictor] = None
    corrector: Optional[LoadedCorrector] = None


def _analytic_controller(law_fn, engagement: Engagement, t_d: float, gravity: float) -> Controller:
    def control(state: VehicleState) -> GuidanceCommand:
        total = law_fn(state, engagement, t_d, gravity)
        baseline = png_baseline(state, engagement, gravity)
        return GuidanceCommand(baseline=baseline, bias=total - baseline, total=total)

    return control


def _proposed_controller(
    engagement: Engagement, t_d: float, gravity: float, models: GuidanceModels
) -> Controller:
    if models.corrector is None:
        raise ConfigurationError("law 'proposed' needs a trained corrector (run train-ppo first)")
    corrector = models.corrector
    estimator = select_estimators(corrector.cfg, models.predictor).state

    def control(state: VehicleState) -> GuidanceCommand:
        bias = corrector_bias(corrector.policy, corrector.normalizer, corrector.cfg, estimator, state, engagement, t_d)
        return GuidanceCommand.compose(png_baseline(state, engagement, gravity), bias, corrector.policy.a_max)

    return control


def build_controller(
    law: str,
    engagement: Engagement,
    sim: SimSettings,
    t_d: float,
    models: GuidanceModels = GuidanceModels(),
) -> Controller:
    """
    Raises:
        ConfigurationError: unknown law, or a learned law without its models.
    """
    gravity = sim.airframe.gravity
    if law == "png":
        return png_controller(engagement, gravity)
    if law == "proposed":
        return _proposed_controller(engagement, t_d, gravity, models)
    if law == "itcg1":
        return _analytic_controller(itcg1_command, engagement, t_d, gravity)
    if law == "itcg2":
        return _analytic_controller(itcg2_command, engagement, t_d, gravity)
    raise ConfigurationError(f"unknown guidance law {law!r}; expected one of {GUIDANCE_LAWS}")


def fly(
    law: str,
    initial: VehicleState,
    engagement: Engagement,
    sim: SimSettings,
    t_d: float,
    models: GuidanceModels = GuidanceModels(),
) -> Tuple[Trajectory, TerminationRecord]:
    trajectory, record = rollout(initial, engagement, build_controller(law, engagement, sim, t_d, models), sim)
    logger.debug("%s: %s at t=%.2f s, miss %.1f m", law, record.outcome.value, record.final_time, record.miss_distance)
    return trajectory, record
