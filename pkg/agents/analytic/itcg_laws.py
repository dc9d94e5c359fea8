"""
Closed-form comparison laws: the approximate PNG time-to-go and two analytic
impact-time-control laws, with their reference gains.

Both laws are singular (ITCG1 divides by the LOS rate, ITCG2 by the heading
error and by t_d - t); near those points the bias term is dropped for the
step and only the PN part is commanded.
"""

import logging
import math

from physics.dynamics import Engagement, VehicleState, los_geometry
from physics.tables import GRAVITY

logger = logging.getLogger(__name__)

ITCG1_GAIN = -120.0
ITCG2_GAIN = 100.0
LOS_RATE_GUARD = 1e-6  # rad/s
HEADING_GUARD = 1e-4  # rad
TIME_LEFT_GUARD = 0.5  # s


def heading_error(state: VehicleState, lam: float) -> float:
    """gamma - lambda wrapped to (-pi, pi]."""
    d = state.gamma - lam
    return math.atan2(math.sin(d), math.cos(d))


def approx_tgo_png(state: VehicleState, engagement: Engagement) -> float:
    """t_go ~ [1 + (theta - lambda)^2 / 10] R / v; never below R / v."""
    geo = los_geometry(state, engagement)
    sigma = heading_error(state, geo.lam)
    return (1.0 + sigma * sigma / 10.0) * geo.r / state.speed


def itcg1_command(state: VehicleState, engagement: Engagement, t_d: float, gravity: float = GRAVITY) -> float:
    geo = los_geometry(state, engagement)
    v = state.speed
    a = 3.0 * v * geo.lam_dot + gravity * math.cos(state.gamma)
    if abs(geo.lam_dot) < LOS_RATE_GUARD:
        logger.debug("itcg1: LOS rate %.3g below guard at t=%.2f, bias dropped", geo.lam_dot, state.time)
        return a
    err = t_d - state.time - approx_tgo_png(state, engagement)
    return a + ITCG1_GAIN * v ** 5 / (3.0 * v * geo.lam_dot * geo.r ** 3) * err


def itcg2_command(state: VehicleState, engagement: Engagement, t_d: float, gravity: float = GRAVITY) -> float:
    geo = los_geometry(state, engagement)
    v = state.speed
    sigma = heading_error(state, geo.lam)
    a = -3.0 * v * v / geo.r * sigma + gravity * math.cos(state.gamma)
    time_left = t_d - state.time
    if abs(sigma) < HEADING_GUARD or time_left < TIME_LEFT_GUARD:
        logger.debug("itcg2: guard engaged (sigma=%.3g, t_d-t=%.3g), bias dropped", sigma, time_left)
        return a
    err = time_left - approx_tgo_png(state, engagement)
    return a + ITCG2_GAIN * v * v / (geo.r * sigma) * err / time_left
