import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
import torch

from agents.analytic.itcg_laws import approx_tgo_png
from agents.corrector.env import (
    GuidanceEnv,
    RlState,
    make_state,
    no_prediction,
    reward,
    reward_terms,
    sparse_reward,
)
from agents.corrector.ppo_agent import (
    REWARD_HISTORY_COLUMNS,
    GaussianPolicy,
    Transition,
    act_deterministic,
    clipped_surrogate,
    compute_advantages,
    load_corrector,
    make_policy,
    ppo_update,
    run_episode,
    run_reward_census,
    sample_action,
    save_corrector,
    select_estimators,
    train_corrector,
    write_reward_history,
)
from agents.neuralnet import AdamState, Mlp
from config import PpoConfig
from errors import ConfigurationError
from physics.dynamics import Outcome, TerminationRecord, fly_interval, png_baseline
from tests.conftest import state_at

ZERO_STATE = RlState(0.0, 0.0, 0.0, 0.0, 0.0)


def _constant_critic(value):
    critic = Mlp([5, 4, 1], seed=0)
    with torch.no_grad():
        for p in critic.parameters():
            p.zero_()
        critic.biases[-1].fill_(value)
    return critic


def _transition(reward_value, done=False, truncated=False):
    return Transition(ZERO_STATE, 0.0, 0.0, 0.0, reward_value, ZERO_STATE, done, truncated)


class TestState:
    def test_normalization_and_time_error(self, fixed_state, engagement, normalizer):
        cfg = PpoConfig()
        s = make_state(fixed_state, engagement, 150.0, lambda st, eng: 140.0, normalizer, cfg)
        assert s.eps_t == pytest.approx(10.0)
        assert s.eps_n == pytest.approx(5.0)
        assert s.v_n == pytest.approx(200.0 / normalizer.mean_v)
        assert s.x_n == pytest.approx(-20000.0 / normalizer.mean_x)
        assert s.as_array().shape == (5,)

    def test_without_prediction(self, engagement, normalizer):
        s = make_state(state_at(-5000.0, 5000.0, time=30.0), engagement, 100.0, no_prediction, normalizer, PpoConfig())
        assert s.eps_t == pytest.approx(70.0)


class TestReward:
    def test_formula(self, engagement):
        cfg = PpoConfig()
        s = state_at(-3000.0, 4000.0)
        r = 5000.0
        expected = 0.9 * math.exp(-(2.0 / 20.0) ** 2) + 0.09 * math.exp(-r / 16000.0) + 0.01 * math.exp(-((4000.0 - r) ** 2) / 115.0 ** 2)
        assert reward(s, engagement, 2.0, 20.0, cfg) == pytest.approx(expected, rel=1e-12)

    def test_bounded_and_floored(self, engagement):
        cfg = PpoConfig()
        s = state_at(-3000.0, 4000.0)
        terms = reward_terms(s, engagement, 0.5, 0.0, cfg)
        assert terms.r1 == pytest.approx(math.exp(-0.25))
        assert 0.0 < terms.total <= 1.0

    def test_time_term_is_bounded_away_from_zero(self, engagement):
        cfg = PpoConfig()
        s = state_at(-3000.0, 4000.0)
        terms = reward_terms(s, engagement, -1.0e3, 0.5, cfg)
        assert terms.r1 > 0.0
        assert terms.r1 == math.exp(-cfg.eps_r_max ** 2)
        assert reward_terms(s, engagement, 1.0e3, 0.5, cfg).r1 == terms.r1

    def test_sparse(self):
        hit = TerminationRecord(Outcome.HIT, 120.4, 10.0)
        assert sparse_reward(None, 120.0, 1.0) == 0.0
        assert sparse_reward(hit, 120.0, 1.0) == 1.0
        assert sparse_reward(hit, 118.0, 1.0) == 0.0
        assert sparse_reward(TerminationRecord(Outcome.GROUND, 120.0, 900.0), 120.0, 1.0) == 0.0


class TestAdvantages:
    def test_single_terminal(self):
        adv, ret = compute_advantages([_transition(1.0, done=True)], _constant_critic(0.0), PpoConfig(), standardize=False)
        assert ret.tolist() == [1.0]
        assert adv.tolist() == [1.0]

    def test_discounting_within_episode(self):
        cfg = PpoConfig()
        g = cfg.gamma_discount
        buffer = [_transition(1.0), _transition(1.0), _transition(1.0, done=True)]
        _, ret = compute_advantages(buffer, _constant_critic(0.0), cfg, standardize=False)
        np.testing.assert_allclose(ret, [1.0 + g + g * g, 1.0 + g, 1.0])

    def test_bootstrap_at_truncation_and_buffer_end(self):
        cfg = PpoConfig()
        g = cfg.gamma_discount
        buffer = [_transition(1.0), _transition(2.0, truncated=True), _transition(3.0)]
        adv, ret = compute_advantages(buffer, _constant_critic(10.0), cfg, standardize=False)
        np.testing.assert_allclose(ret, [1.0 + g * (2.0 + g * 10.0), 2.0 + g * 10.0, 3.0 + g * 10.0])
        np.testing.assert_allclose(adv, ret - 10.0)

    def test_standardized(self):
        buffer = [_transition(float(r), done=(r == 4)) for r in range(5)]
        adv, _ = compute_advantages(buffer, _constant_critic(0.5), PpoConfig())
        assert adv.mean() == pytest.approx(0.0, abs=1e-12)
        assert adv.std() == pytest.approx(1.0, abs=1e-6)


def test_clipped_surrogate_is_pessimistic():
    ratio = torch.tensor([0.5, 0.9, 1.0, 1.1, 1.5, 0.5, 1.5], dtype=torch.float64)
    adv = torch.tensor([1.0, 1.0, -1.0, -2.0, 1.0, -1.0, -1.0], dtype=torch.float64)
    surrogate = clipped_surrogate(ratio, adv, 0.2)
    assert torch.all(surrogate <= ratio * adv + 1e-15)
    inside = (ratio >= 0.8) & (ratio <= 1.2)
    assert torch.equal(surrogate[inside], (ratio * adv)[inside])
    assert surrogate[4] == pytest.approx(1.2)


class TestPolicy:
    def test_initial_log_std(self, small_ppo):
        policy, critic = make_policy(small_ppo, seed=0, gravity=9.81)
        assert policy.sigma == pytest.approx(0.3 * 3.0 * 9.81)
        assert critic.layer_sizes == [5, 64, 64, 1]
        assert policy.actor.output_activation == "tanh"

    def test_vanishing_sigma_is_deterministic(self, small_ppo):
        policy, _ = make_policy(small_ppo, seed=0, gravity=9.81)
        with torch.no_grad():
            policy.log_std.fill_(-60.0)
        s = RlState(1.0, 0.5, 2.0, 2.0, -1.0)
        sampled = sample_action(policy, s, np.random.default_rng(0))
        assert sampled.action == pytest.approx(act_deterministic(policy, s), abs=1e-12)
        assert abs(sampled.action) <= policy.a_max

    def test_wide_draws_are_clamped(self, small_ppo):
        policy, _ = make_policy(small_ppo, seed=0, gravity=9.81)
        with torch.no_grad():
            policy.log_std.fill_(math.log(1.0e4))
        rng = np.random.default_rng(1)
        draws = [sample_action(policy, ZERO_STATE, rng) for _ in range(50)]
        assert all(abs(d.action) <= policy.a_max for d in draws)
        assert any(abs(d.raw_action) > policy.a_max for d in draws)
        d = draws[0]
        expected = torch.distributions.Normal(policy.mean(torch.zeros(5, dtype=torch.float64)), 1.0e4).log_prob(
            torch.tensor(d.raw_action, dtype=torch.float64))
        assert d.log_prob == pytest.approx(float(expected), rel=1e-9)


class TestEnv:
    def test_zero_bias_step_matches_png(self, fixed_state, engagement, sim, normalizer, small_ppo):
        env = GuidanceEnv(engagement, sim, normalizer, small_ppo, approx_tgo_png)
        env.reset(fixed_state, 150.0)
        result = env.step(0.0)
        expected = fly_interval(fixed_state, png_baseline(fixed_state, engagement), engagement, sim, 0.0, 0)
        assert env.vehicle == expected.state
        assert not result.done
        assert result.reward > 0.0
        assert result.command.bias == 0.0

    def test_bias_is_saturated(self, fixed_state, engagement, sim, normalizer, small_ppo):
        env = GuidanceEnv(engagement, sim, normalizer, small_ppo, approx_tgo_png)
        env.reset(fixed_state, 150.0)
        assert env.step(1.0e3).command.bias == pytest.approx(3.0 * 9.81)

    def test_step_before_reset(self, engagement, sim, normalizer, small_ppo):
        with pytest.raises(RuntimeError):
            GuidanceEnv(engagement, sim, normalizer, small_ppo, approx_tgo_png).step(0.0)


def _collect(engagement, sim, normalizer, cfg, steps, seed=0):
    env = GuidanceEnv(engagement, sim, normalizer, cfg, approx_tgo_png)
    policy, critic = make_policy(cfg, seed, sim.airframe.gravity)
    initial = state_at(-20000.0, 20000.0)
    transitions, record = run_episode(env, policy, initial, 150.0, np.random.default_rng(seed), steps)
    return policy, critic, transitions, record


class TestUpdate:
    def test_ratio_starts_at_one_and_parameters_move(self, engagement, sim, normalizer, small_ppo):
        policy, critic, buffer, record = _collect(engagement, sim, normalizer, small_ppo, steps=40)
        assert record.outcome == "Truncated"
        assert buffer[-1].truncated and not any(t.truncated for t in buffer[:-1])

        actor_opt = AdamState(policy.parameters(), learning_rate=small_ppo.actor_lr)
        critic_opt = AdamState(critic.parameters(), learning_rate=small_ppo.critic_lr)
        before = [p.detach().clone() for p in policy.parameters()]
        adv, ret = compute_advantages(buffer, critic, small_ppo)
        diag = ppo_update(policy, critic, actor_opt, critic_opt, buffer, adv, ret, small_ppo, np.random.default_rng(0))

        assert diag.initial_ratio_max_dev <= 1e-8
        assert diag.minibatches == small_ppo.epochs * math.ceil(len(buffer) / small_ppo.minibatch)
        assert diag.skipped == 0
        assert np.isfinite([diag.actor_loss, diag.critic_loss, diag.mean_ratio]).all()
        assert 0.0 <= diag.clip_fraction <= 1.0
        assert any(not torch.equal(a, b) for a, b in zip(before, policy.parameters()))


class TestTraining:
    def test_short_run(self, engagement_config, normalizer, small_ppo):
        run = train_corrector(engagement_config, None, normalizer, small_ppo, seed=4, episodes=2)
        assert [r.episode for r in run.history] == [0, 1]
        assert all(r.outcome == "Truncated" and r.steps == 50 for r in run.history)
        assert len(run.updates) == 1
        assert run.discarded == 100 - 64

    def test_seeded(self, engagement_config, normalizer, small_ppo):
        a = train_corrector(engagement_config, None, normalizer, small_ppo, seed=4, episodes=2)
        b = train_corrector(engagement_config, None, normalizer, small_ppo, seed=4, episodes=2)
        assert [r.mean_reward for r in a.history] == [r.mean_reward for r in b.history]

    def test_dnn_source_needs_predictor(self, engagement_config, normalizer):
        with pytest.raises(ConfigurationError):
            select_estimators(PpoConfig(tgo_source="dnn"), None)
        with pytest.raises(ConfigurationError):
            train_corrector(engagement_config, None, normalizer, PpoConfig(), seed=0, episodes=1)


class TestRewardCensus:
    def test_dense_reward_on_every_transition(self, engagement_config, normalizer):
        check = run_reward_census(engagement_config, None, normalizer, PpoConfig(tgo_source="approx"), seed=5, episodes=5)
        assert check.transitions > 0
        assert check.positive == check.transitions
        assert check.r1_positive == check.transitions

    @pytest.mark.slow
    def test_dense_with_predictor_in_the_loop(self, engagement_config, desk_predictor):
        check = run_reward_census(engagement_config, desk_predictor, desk_predictor.normalizer, PpoConfig(), seed=1, episodes=10)
        assert check.transitions > 0
        assert check.r1_positive == check.transitions

    def test_sparse_reward_only_at_the_end(self, engagement_config, normalizer):
        cfg = PpoConfig(tgo_source="sparse", t_max_steps=60)
        check = run_reward_census(engagement_config, None, normalizer, cfg, seed=1, episodes=3)
        assert check.nonterminal_nonzero == 0
        assert check.positive <= 3


def test_persistence(tmp_path, normalizer, small_ppo):
    policy, critic = make_policy(small_ppo, seed=9, gravity=9.81)
    save_corrector(str(tmp_path), policy, critic, small_ppo, normalizer)
    loaded = load_corrector(str(tmp_path))
    s = RlState(1.0, 0.2, 0.5, 1.5, 0.3)
    assert act_deterministic(loaded.policy, s) == act_deterministic(policy, s)
    assert loaded.cfg == small_ppo
    assert loaded.normalizer == normalizer
    assert loaded.policy.sigma == pytest.approx(policy.sigma)


def test_load_missing_corrector(tmp_path):
    with pytest.raises(ConfigurationError):
        load_corrector(str(tmp_path))


def test_reward_history_csv(tmp_path, engagement_config, normalizer, small_ppo):
    run = train_corrector(engagement_config, None, normalizer, small_ppo, seed=2, episodes=1)
    path = tmp_path / "reward_history.csv"
    write_reward_history(str(path), run.history)
    frame = pd.read_csv(path)
    assert list(frame.columns) == REWARD_HISTORY_COLUMNS
    assert frame["steps"].tolist() == [50]


def test_surrogate_gradient_matches_finite_differences():
    policy = GaussianPolicy(Mlp([5, 1], output_activation="tanh", seed=3), 3.0 * 9.81, math.log(5.0))
    states = torch.as_tensor(np.random.default_rng(0).normal(size=(4, 5)))
    raw = torch.tensor([3.0, -2.0, 10.0, -8.0], dtype=torch.float64)
    adv = torch.tensor([1.0, 1.0, 1.0, -1.0], dtype=torch.float64)
    # ratios 0.5 and 0.95 unclipped, 1.5 clipped for A > 0 and unclipped for A < 0
    ratios = torch.tensor([0.5, 0.95, 1.5, 1.5], dtype=torch.float64)
    with torch.no_grad():
        old_log_prob = policy.log_prob(states, raw) - torch.log(ratios)

    def objective():
        ratio = torch.exp(policy.log_prob(states, raw) - old_log_prob)
        return torch.mean(clipped_surrogate(ratio, adv, 0.2))

    params = list(policy.parameters())
    grads = torch.autograd.grad(objective(), params)
    assert any(torch.count_nonzero(g) > 0 for g in grads)
    h = 1e-6
    for p, g in zip(params, grads):
        flat = p.data.view(-1)
        for j in range(flat.numel()):
            original = float(flat[j])
            with torch.no_grad():
                flat[j] = original + h
                plus = float(objective())
                flat[j] = original - h
                minus = float(objective())
                flat[j] = original
            numeric = (plus - minus) / (2 * h)
            analytic = float(g.reshape(-1)[j])
            assert abs(analytic - numeric) <= 1e-7 + 1e-5 * abs(analytic)


def test_sampled_actions_average_to_the_policy_mean(small_ppo):
    policy, _ = make_policy(small_ppo, seed=0, gravity=9.81)
    with torch.no_grad():
        policy.log_std.fill_(math.log(0.05 * policy.a_max))
    s = RlState(1.0, 0.5, 2.0, 2.0, -1.0)
    mu = act_deterministic(policy, s)
    rng = np.random.default_rng(3)
    n = 100_000
    draws = np.array([sample_action(policy, s, rng).raw_action for _ in range(n)])
    assert abs(draws.mean() - mu) <= 3.0 * policy.sigma / math.sqrt(n)


def test_zero_episodes_leave_networks_untouched(engagement_config, normalizer, small_ppo):
    run = train_corrector(engagement_config, None, normalizer, replace(small_ppo, max_episodes=0), seed=4)
    policy, critic = make_policy(small_ppo, seed=4, gravity=9.81)
    for a, b in zip(run.policy.parameters(), policy.parameters()):
        assert torch.equal(a, b)
    for a, b in zip(run.critic.parameters(), critic.parameters()):
        assert torch.equal(a, b)
    assert run.history == [] and run.updates == [] and run.discarded == 0


@pytest.mark.slow
def test_reward_trend_over_seeds(engagement_config, desk_predictor, desk_corrector_run):
    runs = [desk_corrector_run] + [
        train_corrector(engagement_config, desk_predictor, desk_predictor.normalizer, PpoConfig(), seed=seed, episodes=200)
        for seed in (2022, 2023)
    ]
    improved = 0
    for run in runs:
        rewards = [r.mean_reward for r in run.history]
        improved += np.mean(rewards[-25:]) >= 1.2 * np.mean(rewards[:25])
    assert improved >= 2
