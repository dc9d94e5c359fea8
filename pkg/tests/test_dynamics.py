import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from config import EngagementConfig
from errors import SingularGeometryError
from physics.dynamics import (
    TRAJECTORY_COLUMNS,
    Engagement,
    GuidanceCommand,
    Outcome,
    SimSettings,
    VehicleState,
    fly_interval,
    los_geometry,
    png_baseline,
    png_controller,
    rollout,
    step,
    write_trajectory_csv,
)
from tests.conftest import state_at


class TestLosGeometry:
    def test_collinear_heading_at_target(self, engagement):
        geo = los_geometry(state_at(-20000.0, 0.0), engagement)
        assert geo.lam == 0.0
        assert geo.lam_dot == 0.0
        assert geo.r == 20000.0
        assert geo.closing_speed == pytest.approx(200.0)

    def test_directly_above(self, engagement):
        assert los_geometry(state_at(0.0, 20000.0), engagement).lam == pytest.approx(-math.pi / 2)

    def test_coincident_is_singular(self, engagement):
        with pytest.raises(SingularGeometryError):
            los_geometry(state_at(0.0, 0.0), engagement)

    def test_rate_matches_finite_difference(self, fixed_state, engagement):
        h = 1e-3
        v, g = fixed_state.speed, fixed_state.gamma

        def lam_at(dt):
            moved = replace(fixed_state, x=fixed_state.x + v * math.cos(g) * dt, y=fixed_state.y + v * math.sin(g) * dt)
            return los_geometry(moved, engagement).lam

        fd = (lam_at(h) - lam_at(-h)) / (2 * h)
        assert los_geometry(fixed_state, engagement).lam_dot == pytest.approx(fd, rel=1e-6)


class TestPngBaseline:
    def test_vertical_climb_on_los(self, engagement):
        a0 = png_baseline(state_at(0.0, -1000.0, gamma=math.pi / 2), engagement, gravity=9.81)
        assert a0 == pytest.approx(0.0, abs=1e-12)

    def test_level_on_los(self, engagement):
        assert png_baseline(state_at(-20000.0, 0.0), engagement, gravity=9.81) == pytest.approx(9.81)

    def test_fixed_scenario(self, fixed_state, engagement):
        r = math.hypot(20000.0, 20000.0)
        lam = math.atan2(-20000.0, 20000.0)
        lam_dot = -200.0 * math.sin(0.0 - lam) / r
        expected = 3.0 * 200.0 * lam_dot + 9.81
        assert png_baseline(fixed_state, engagement, gravity=9.81) == pytest.approx(expected, rel=1e-12)


class TestGuidanceCommand:
    def test_bias_is_saturated(self):
        cmd = GuidanceCommand.compose(5.0, 100.0, a_max=29.43)
        assert cmd.bias == 29.43
        assert cmd.total == cmd.baseline + cmd.bias


class TestStep:
    def test_gravity_cancelling_command_holds_gamma(self, airframe, table):
        state = VehicleState(0.0, -15000.0, 5000.0, 250.0, 0.3)
        nxt = step(state, airframe.gravity * math.cos(state.gamma), 0.05, airframe, table)
        assert abs(nxt.gamma - state.gamma) < 1e-6

    def test_level_flight_keeps_altitude(self, airframe, table):
        state = VehicleState(0.0, -15000.0, 5000.0, 250.0, 0.0)
        nxt = step(state, airframe.gravity, 0.05, airframe, table)
        assert nxt.y == pytest.approx(state.y, abs=1e-9)
        assert abs(nxt.gamma) < 1e-12
        assert nxt.speed < state.speed
        assert state.x < nxt.x < state.x + state.speed * 0.05

    def test_nonpositive_dt(self, fixed_state, airframe, table):
        with pytest.raises(ValueError):
            step(fixed_state, 0.0, 0.0, airframe, table)

    def test_self_convergence_order(self, airframe, table):
        start = VehicleState(0.0, -15000.0, 5000.0, 250.0, 0.2)
        a_cmd = 2.0 * airframe.gravity
        horizon = 4.0

        def integrate(h):
            s = start
            for _ in range(int(round(horizon / h))):
                s = step(s, a_cmd, h, airframe, table)
            return np.array([s.speed, s.gamma * 1000.0, s.y])

        coarse, mid, fine = integrate(1.0), integrate(0.5), integrate(0.25)
        order = math.log2(np.linalg.norm(coarse - mid) / np.linalg.norm(mid - fine))
        assert order >= 3.5

    def test_ballistic_energy_decreases(self, airframe, table):
        s = VehicleState(0.0, -20000.0, 15000.0, 280.0, 0.4)
        energy = [0.5 * s.speed ** 2 + airframe.gravity * s.y]
        for _ in range(200):
            # a_total = 0 -> alpha = 0 -> no lift
            s = step(s, 0.0, 0.05, airframe, table)
            energy.append(0.5 * s.speed ** 2 + airframe.gravity * s.y)
        assert np.all(np.diff(energy) < 0.0)


class TestRollout:
    def test_png_fixed_scenario_hits(self, fixed_state, engagement, sim):
        trajectory, record = rollout(fixed_state, engagement, png_controller(engagement), sim)
        assert record.outcome is Outcome.HIT
        assert record.miss_distance <= sim.capture_radius
        assert len(trajectory) > 0

    def test_png_mid_range_hits(self, engagement, sim):
        initial = VehicleState(0.0, -20000.0, 20000.0, 250.0, math.radians(22.5))
        _, record = rollout(initial, engagement, png_controller(engagement), sim)
        assert record.outcome is Outcome.HIT

    def test_zero_horizon_is_timeout(self, fixed_state, engagement, airframe, table):
        sim = SimSettings(airframe=airframe, table=table, t_max=0.0)
        trajectory, record = rollout(fixed_state, engagement, png_controller(engagement), sim)
        assert trajectory == []
        assert record.outcome is Outcome.TIMEOUT

    def test_below_ground_is_immediate(self, engagement, sim):
        trajectory, record = rollout(state_at(-20000.0, -1.0), engagement, png_controller(engagement), sim)
        assert trajectory == []
        assert record.outcome is Outcome.GROUND

    def test_deterministic_and_continuous(self, fixed_state, engagement, sim):
        first, rec1 = rollout(fixed_state, engagement, png_controller(engagement), sim)
        second, rec2 = rollout(fixed_state, engagement, png_controller(engagement), sim)
        assert first == second
        assert rec1 == rec2
        v_max = max(s.speed for s, _ in first)
        for (a, _), (b, _) in zip(first, first[1:]):
            assert math.hypot(b.x - a.x, b.y - a.y) <= v_max * sim.dt_guidance * 1.01

    def test_times_on_guidance_grid(self, fixed_state, engagement, sim):
        trajectory, _ = rollout(fixed_state, engagement, png_controller(engagement), sim)
        for k, (s, _) in enumerate(trajectory):
            assert s.time == (k * sim.substeps) * sim.dt_sim

    def test_interval_reports_step_count(self, fixed_state, engagement, sim):
        result = fly_interval(fixed_state, 9.81, engagement, sim, 0.0, 0)
        assert result.termination is None
        assert result.sim_steps == sim.substeps
        assert result.state.time == sim.substeps * sim.dt_sim

    def test_guidance_period_must_be_multiple(self):
        with pytest.raises(ValueError):
            SimSettings(dt_sim=0.05, dt_guidance=0.52)

    def test_trajectory_csv(self, tmp_path, fixed_state, engagement, sim):
        trajectory, _ = rollout(fixed_state, engagement, png_controller(engagement), sim)
        path = tmp_path / "traj.csv"
        write_trajectory_csv(path, trajectory, engagement)
        frame = pd.read_csv(path)
        assert list(frame.columns) == TRAJECTORY_COLUMNS
        assert len(frame) == len(trajectory)
        np.testing.assert_allclose(frame["aM"], frame["a0"] + frame["ab"], rtol=1e-12)


@pytest.mark.slow
def test_png_captures_random_scenarios(engagement, sim):
    config = EngagementConfig()
    rng = np.random.default_rng(7)
    hits = 0
    for _ in range(100):
        _, record = rollout(config.sample_initial(rng), engagement, png_controller(engagement), sim)
        hits += record.outcome is Outcome.HIT
    assert hits >= 95
