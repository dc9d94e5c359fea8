"""PPO corrector package exports"""

from config import PpoConfig

from .env import GuidanceEnv, RlState, make_state, reward, sparse_reward
from .ppo_agent import (
    GaussianPolicy,
    LoadedCorrector,
    Transition,
    act_deterministic,
    compute_advantages,
    corrector_bias,
    load_corrector,
    ppo_update,
    run_reward_census,
    sample_action,
    save_corrector,
    train_corrector,
    write_reward_history,
)
