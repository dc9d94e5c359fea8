"""
PPO impact-time corrector.

The actor is a 5-64-64-1 ReLU network with a tanh output scaled by a_max; it
outputs the mean of a Gaussian over the bias command a_b. A single trainable
log-std scalar sets the exploration width. The critic is a 5-64-64-1 value
network. Both are trained with the clipped surrogate objective on a rolling
transition buffer: every time the buffer holds `buffer_size` transitions it
is used for `epochs` passes of shuffled minibatches and then emptied.
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from torch import nn
from torch.distributions import Normal
from tqdm import tqdm

from agents import neuralnet
from agents.analytic.itcg_laws import approx_tgo_png
from agents.corrector.env import GuidanceEnv, RlState, TgoEstimator, make_state, no_prediction
from agents.neuralnet import AdamState, Mlp
from agents.predictor.dataset import Normalizer
from config import EngagementConfig, PpoConfig
from errors import ConfigurationError, NonFiniteError
from physics.dynamics import Engagement, VehicleState
from utils import read_json, write_csv, write_json

logger = logging.getLogger(__name__)

STATE_SIZE = 5
ACTOR_WEIGHTS = "actor.pt"
CRITIC_WEIGHTS = "critic.pt"
CORRECTOR_SIDECAR = "corrector.json"
REWARD_HISTORY_COLUMNS = ["episode", "mean_reward", "steps", "outcome", "total_reward", "impact_error", "t_d"]


class GaussianPolicy(nn.Module):
    """pi(a | s) = N(a_max * actor(s), exp(log_std)^2)."""

    def __init__(self, actor: Mlp, a_max: float, log_std_init: float):
        super().__init__()
        if actor.output_activation != "tanh" or actor.input_size != STATE_SIZE or actor.output_size != 1:
            raise ValueError(f"actor must be a {STATE_SIZE}-...-1 tanh network, got {actor.layer_sizes}")
        self.actor = actor
        self.a_max = float(a_max)
        self.log_std = nn.Parameter(torch.tensor(float(log_std_init), dtype=neuralnet.DTYPE))

    def mean(self, states: torch.Tensor) -> torch.Tensor:
        return self.a_max * self.actor(states).squeeze(-1)

    def distribution(self, states: torch.Tensor) -> Normal:
        return Normal(self.mean(states), torch.exp(self.log_std))

    def log_prob(self, states: torch.Tensor, raw_actions: torch.Tensor) -> torch.Tensor:
        return self.distribution(states).log_prob(raw_actions)

    @property
    def sigma(self) -> float:
        return float(torch.exp(self.log_std.detach()))


def make_policy(cfg: PpoConfig, seed: int, gravity: float) -> Tuple[GaussianPolicy, Mlp]:
    """Fresh actor policy and critic; log_std starts at ln(log_std_init_ratio * a_max)."""
    a_max = cfg.a_max(gravity)
    actor = Mlp([STATE_SIZE, *cfg.hidden_layers, 1], output_activation="tanh", seed=seed)
    critic = Mlp([STATE_SIZE, *cfg.hidden_layers, 1], output_activation="identity", seed=seed + 1)
    return GaussianPolicy(actor, a_max, math.log(cfg.log_std_init_ratio * a_max)), critic


@dataclass(frozen=True)
class Transition:
    state: RlState
    action: float
    raw_action: float
    log_prob: float
    reward: float
    next_state: RlState
    done: bool
    truncated: bool = False


class SampledAction(NamedTuple):
    action: float
    log_prob: float
    raw_action: float


def sample_action(policy: GaussianPolicy, state: RlState, rng: np.random.Generator) -> SampledAction:
    """
    Draw a_b ~ N(mu, sigma^2) and clamp it to [-a_max, a_max]. The log-prob
    is taken at the unclamped draw, which is what the update re-evaluates.
    """
    with torch.no_grad():
        s = neuralnet.as_tensor(state.as_array())
        mu = policy.mean(s)
        sigma = torch.exp(policy.log_std)
        raw = float(mu) + float(sigma) * rng.standard_normal()
        log_prob = float(Normal(mu, sigma).log_prob(torch.tensor(raw, dtype=neuralnet.DTYPE)))
    action = min(max(raw, -policy.a_max), policy.a_max)
    return SampledAction(action, log_prob, raw)


def act_deterministic(policy: GaussianPolicy, state: RlState) -> float:
    """Mean action, used at evaluation time."""
    with torch.no_grad():
        return float(policy.mean(neuralnet.as_tensor(state.as_array())))


def _stack(states: Sequence[RlState]) -> torch.Tensor:
    return torch.as_tensor(np.stack([s.as_array() for s in states]))


def compute_advantages(
    buffer: Sequence[Transition],
    critic: Mlp,
    cfg: PpoConfig,
    standardize: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Discounted return-to-go per transition and advantage A = G - V(s).

    A segment ends at a terminal transition, a truncated one, or the end of
    the buffer. Terminal transitions do not bootstrap; the other two add
    gamma * V(next_state).

    Returns (advantages, returns).
    """
    n = len(buffer)
    if n == 0:
        return np.zeros(0), np.zeros(0)
    with torch.no_grad():
        values = critic(_stack([t.state for t in buffer])).squeeze(-1).numpy()
        next_values = critic(_stack([t.next_state for t in buffer])).squeeze(-1).numpy()

    returns = np.zeros(n, dtype=np.float64)
    g = 0.0
    for i in range(n - 1, -1, -1):
        tr = buffer[i]
        if tr.done:
            g = tr.reward
        elif tr.truncated or i == n - 1:
            g = tr.reward + cfg.gamma_discount * float(next_values[i])
        else:
            g = tr.reward + cfg.gamma_discount * g
        returns[i] = g

    advantages = returns - values
    if standardize and n > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    return advantages, returns


def clipped_surrogate(ratio: torch.Tensor, advantages: torch.Tensor, clip_eps: float) -> torch.Tensor:
    """Per-sample min(rho A, clip(rho, 1 - eps, 1 + eps) A)."""
    clipped = torch.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    return torch.minimum(ratio * advantages, clipped * advantages)


@dataclass
class UpdateDiagnostics:
    initial_ratio_max_dev: float = 0.0
    mean_ratio: float = 1.0
    clip_fraction: float = 0.0
    actor_loss: float = 0.0
    critic_loss: float = 0.0
    minibatches: int = 0
    skipped: int = 0


def ppo_update(
    policy: GaussianPolicy,
    critic: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    buffer: Sequence[Transition],
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: PpoConfig,
    rng: np.random.Generator,
) -> UpdateDiagnostics:
    """
    `epochs` passes of shuffled minibatches over the buffer. The actor
    ascends the clipped surrogate, the critic descends (G - V)^2. A
    minibatch with a non-finite loss is skipped with a warning.
    """
    diag = UpdateDiagnostics()
    n = len(buffer)
    if n == 0:
        return diag

    states = _stack([t.state for t in buffer])
    raw = torch.as_tensor(np.array([t.raw_action for t in buffer], dtype=np.float64))
    old_log_prob = torch.as_tensor(np.array([t.log_prob for t in buffer], dtype=np.float64))
    adv = torch.as_tensor(np.asarray(advantages, dtype=np.float64))
    ret = torch.as_tensor(np.asarray(returns, dtype=np.float64))
    actor_params = list(actor_opt.parameters)
    critic_params = list(critic_opt.parameters)

    with torch.no_grad():
        ratio0 = torch.exp(policy.log_prob(states, raw) - old_log_prob)
        diag.initial_ratio_max_dev = float(torch.max(torch.abs(ratio0 - 1.0)))

    ratios, clipped, actor_losses, critic_losses = [], [], [], []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = torch.as_tensor(order[start:start + cfg.minibatch])
            ratio = torch.exp(policy.log_prob(states[idx], raw[idx]) - old_log_prob[idx])
            actor_loss = -torch.mean(clipped_surrogate(ratio, adv[idx], cfg.clip_eps))
            residual = ret[idx] - critic(states[idx]).squeeze(-1)
            critic_loss = torch.mean(residual * residual)

            if not (torch.isfinite(actor_loss) and torch.isfinite(critic_loss)):
                logger.warning("non-finite PPO loss (actor %s, critic %s), minibatch skipped",
                               float(actor_loss), float(critic_loss))
                diag.skipped += 1
                continue
            try:
                neuralnet.adam_step(policy, torch.autograd.grad(actor_loss, actor_params), actor_opt)
                neuralnet.adam_step(critic, torch.autograd.grad(critic_loss, critic_params), critic_opt)
            except NonFiniteError as exc:
                logger.warning("PPO minibatch rejected: %s", exc)
                diag.skipped += 1
                continue

            r = ratio.detach()
            ratios.append(float(r.mean()))
            clipped.append(float((torch.abs(r - 1.0) > cfg.clip_eps).double().mean()))
            actor_losses.append(float(actor_loss))
            critic_losses.append(float(critic_loss))

    diag.minibatches = len(ratios)
    if ratios:
        diag.mean_ratio = float(np.mean(ratios))
        diag.clip_fraction = float(np.mean(clipped))
        diag.actor_loss = float(np.mean(actor_losses))
        diag.critic_loss = float(np.mean(critic_losses))
    return diag


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    mean_reward: float
    steps: int
    outcome: str
    total_reward: float
    impact_error: float
    t_d: float


@dataclass
class CorrectorTraining:
    policy: GaussianPolicy
    critic: Mlp
    history: List[EpisodeRecord] = field(default_factory=list)
    updates: List[UpdateDiagnostics] = field(default_factory=list)
    discarded: int = 0


class Estimators(NamedTuple):
    state: TgoEstimator
    schedule: TgoEstimator
    dense: bool


def select_estimators(cfg: PpoConfig, predictor: Optional[TgoEstimator]) -> Estimators:
    """
    Time-to-go sources for the agent state and for drawing t_d.

    Raises:
        ConfigurationError: tgo_source 'dnn' without a trained predictor.
    """
    if cfg.tgo_source == "dnn":
        if predictor is None:
            raise ConfigurationError("tgo_source 'dnn' needs a trained predictor")
        return Estimators(predictor, predictor, True)
    if cfg.tgo_source == "approx":
        return Estimators(approx_tgo_png, approx_tgo_png, True)
    if cfg.tgo_source == "sparse":
        return Estimators(no_prediction, predictor or approx_tgo_png, False)
    raise ConfigurationError(f"unknown tgo_source {cfg.tgo_source!r}")


def _episode_record(episode: int, rewards: List[float], termination, t_d: float) -> EpisodeRecord:
    if termination is None:
        outcome, error = "Truncated", math.nan
    else:
        outcome = termination.outcome.value
        error = t_d - termination.final_time if outcome == "Hit" else math.nan
    total = float(np.sum(rewards)) if rewards else 0.0
    return EpisodeRecord(episode, total / max(len(rewards), 1), len(rewards), outcome, total, error, t_d)


def run_episode(
    env: GuidanceEnv,
    policy: GaussianPolicy,
    initial: VehicleState,
    t_d: float,
    rng: np.random.Generator,
    max_steps: int,
    on_transition: Optional[Callable[[Transition, float], None]] = None,
) -> Tuple[List[Transition], EpisodeRecord]:
    """
    One stochastic episode of at most `max_steps` guidance steps.
    `on_transition` receives each transition and its time-accuracy reward term.
    """
    state = env.reset(initial, t_d)
    transitions: List[Transition] = []
    termination = None
    for k in range(max_steps):
        sampled = sample_action(policy, state, rng)
        result = env.step(sampled.action)
        truncated = not result.done and k == max_steps - 1
        tr = Transition(state, sampled.action, sampled.raw_action, sampled.log_prob,
                        result.reward, result.state, result.done, truncated)
        transitions.append(tr)
        if on_transition is not None:
            on_transition(tr, result.r1)
        state = result.state
        if result.done:
            termination = result.termination
            break
    return transitions, _episode_record(-1, [t.reward for t in transitions], termination, t_d)


def train_corrector(
    config: EngagementConfig,
    predictor: Optional[TgoEstimator],
    normalizer: Normalizer,
    cfg: PpoConfig,
    seed: int,
    episodes: Optional[int] = None,
    progress: bool = False,
) -> CorrectorTraining:
    """
    Train actor and critic over `episodes` random engagements (default
    cfg.max_episodes). Each episode draws its initial state from the
    configured intervals and t_d from the impact-time policy applied to the
    estimated flight time at t = 0. Transitions left in the buffer when
    training stops are discarded.
    """
    n_episodes = cfg.max_episodes if episodes is None else int(episodes)
    estimators = select_estimators(cfg, predictor)
    engagement = config.engagement()
    sim = config.sim_settings()
    env = GuidanceEnv(engagement, sim, normalizer, cfg, estimators.state, dense=estimators.dense)

    policy, critic = make_policy(cfg, seed, sim.airframe.gravity)
    actor_opt = AdamState(policy.parameters(), learning_rate=cfg.actor_lr)
    critic_opt = AdamState(critic.parameters(), learning_rate=cfg.critic_lr)
    rng = np.random.default_rng(seed)
    run = CorrectorTraining(policy, critic)
    buffer: List[Transition] = []

    def collect(tr: Transition, _r1: float) -> None:
        buffer.append(tr)
        if len(buffer) >= cfg.buffer_size:
            advantages, returns = compute_advantages(buffer, critic, cfg)
            diag = ppo_update(policy, critic, actor_opt, critic_opt, buffer, advantages, returns, cfg, rng)
            run.updates.append(diag)
            logger.info("ppo update %d: ratio=%.4f clip=%.3f actor=%.4g critic=%.4g sigma=%.3f",
                         len(run.updates), diag.mean_ratio, diag.clip_fraction,
                         diag.actor_loss, diag.critic_loss, policy.sigma)
            buffer.clear()

    for ep in tqdm(range(n_episodes), desc="train-ppo", disable=not progress):
        initial = config.sample_initial(rng)
        t_d = config.desired_time(rng, estimators.schedule(initial, engagement))
        _, record = run_episode(env, policy, initial, t_d, rng, cfg.t_max_steps, collect)
        record = replace(record, episode=ep)
        run.history.append(record)
        logger.info("episode %d: %s after %d steps, mean reward %.4f, sum %.3f",
                    ep, record.outcome, record.steps, record.mean_reward, record.total_reward)

    run.discarded = len(buffer)
    return run


class RewardCensus(NamedTuple):
    transitions: int
    positive: int
    r1_positive: int
    nonterminal_nonzero: int


def run_reward_census(
    config: EngagementConfig,
    predictor: Optional[TgoEstimator],
    normalizer: Normalizer,
    cfg: PpoConfig,
    seed: int,
    episodes: int = 5,
) -> RewardCensus:
    """
    Roll out an untrained policy and count non-zero rewards. With a dense
    reward every transition, and its time-accuracy term, is positive; with the sparse one
    only terminal transitions may be.
    """
    estimators = select_estimators(cfg, predictor)
    engagement = config.engagement()
    sim = config.sim_settings()
    env = GuidanceEnv(engagement, sim, normalizer, cfg, estimators.state, dense=estimators.dense)
    policy, _ = make_policy(cfg, seed, sim.airframe.gravity)
    rng = np.random.default_rng(seed)
    counts = {"n": 0, "pos": 0, "r1": 0, "mid": 0}

    def count(tr: Transition, r1: float) -> None:
        counts["n"] += 1
        counts["pos"] += tr.reward > 0.0
        counts["r1"] += r1 > 0.0
        counts["mid"] += (not tr.done) and tr.reward != 0.0

    for _ in range(episodes):
        initial = config.sample_initial(rng)
        t_d = config.desired_time(rng, estimators.schedule(initial, engagement))
        run_episode(env, policy, initial, t_d, rng, cfg.t_max_steps, count)
    return RewardCensus(counts["n"], counts["pos"], counts["r1"], counts["mid"])


# ---------- persistence ----------

class LoadedCorrector(NamedTuple):
    policy: GaussianPolicy
    critic: Mlp
    cfg: PpoConfig
    normalizer: Normalizer


def save_corrector(
    out_dir: str,
    policy: GaussianPolicy,
    critic: Mlp,
    cfg: PpoConfig,
    normalizer: Normalizer,
    extra: Optional[dict] = None,
) -> List[str]:
    paths = [os.path.join(out_dir, name) for name in (ACTOR_WEIGHTS, CRITIC_WEIGHTS, CORRECTOR_SIDECAR)]
    neuralnet.save(policy.actor, None, paths[0])
    neuralnet.save(critic, None, paths[1])
    write_json(paths[2], {
        "log_std": float(policy.log_std.detach()),
        "a_max": policy.a_max,
        "ppo": asdict(cfg),
        "normalizer": normalizer.to_dict(),
        **(extra or {}),
    })
    return paths


def load_corrector(out_dir: str) -> LoadedCorrector:
    """
    Raises:
        ConfigurationError: no trained corrector in out_dir.
    """
    paths = [os.path.join(out_dir, name) for name in (ACTOR_WEIGHTS, CRITIC_WEIGHTS, CORRECTOR_SIDECAR)]
    if not all(os.path.isfile(p) for p in paths):
        raise ConfigurationError(f"no trained corrector in {out_dir} (run train-ppo first)")
    actor, _ = neuralnet.load(paths[0])
    critic, _ = neuralnet.load(paths[1])
    meta = read_json(paths[2])
    ppo = dict(meta["ppo"])
    ppo["hidden_layers"] = tuple(ppo["hidden_layers"])
    return LoadedCorrector(
        GaussianPolicy(actor, meta["a_max"], meta["log_std"]),
        critic,
        PpoConfig(**ppo),
        Normalizer.from_dict(meta["normalizer"]),
    )


def write_reward_history(path: str, history: Sequence[EpisodeRecord]) -> None:
    frame = pd.DataFrame([asdict(r) for r in history], columns=REWARD_HISTORY_COLUMNS)
    write_csv(path, frame)


def corrector_bias(
    policy: GaussianPolicy,
    normalizer: Normalizer,
    cfg: PpoConfig,
    predictor: TgoEstimator,
    state: VehicleState,
    engagement: Engagement,
    t_d: float,
) -> float:
    """Deterministic bias command for one vehicle state, clamped to +/- a_max."""
    bias = act_deterministic(policy, make_state(state, engagement, t_d, predictor, normalizer, cfg))
    return min(max(bias, -policy.a_max), policy.a_max)
