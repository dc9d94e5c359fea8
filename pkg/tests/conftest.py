"""
Shared fixtures: default airframe/table, fixed scenario state, small PPO
settings, and the desk-scale trained models used by the slow tests.
"""

import math

import pytest

from agents.coordinator_agent import GuidanceModels
from agents.corrector.ppo_agent import LoadedCorrector, train_corrector
from agents.predictor.dataset import Normalizer, generate_dataset, split_dataset
from agents.predictor.tgo_agent import TgoPredictor, train_predictor
from config import EngagementConfig, PpoConfig
from physics.atmosphere import AeroTable, Airframe
from physics.dynamics import Engagement, SimSettings, VehicleState


@pytest.fixture
def airframe():
    return Airframe()


@pytest.fixture
def table():
    return AeroTable.default()


@pytest.fixture
def sim(airframe, table):
    return SimSettings(airframe=airframe, table=table)


@pytest.fixture
def engagement():
    return Engagement(0.0, 0.0)


@pytest.fixture
def fixed_state():
    return VehicleState(time=0.0, x=-20000.0, y=20000.0, speed=200.0, gamma=0.0)


@pytest.fixture
def engagement_config():
    return EngagementConfig()


@pytest.fixture
def normalizer():
    # roughly the means of a desk-scale dataset
    return Normalizer(mean_v=260.0, mean_gamma=-0.4, mean_x=-9000.0, mean_y=9000.0, mean_tgo=40.0)


@pytest.fixture
def small_ppo():
    return PpoConfig(buffer_size=64, epochs=2, minibatch=16, t_max_steps=50, tgo_source="approx")


def state_at(x, y, speed=200.0, gamma=0.0, time=0.0):
    return VehicleState(time=time, x=x, y=y, speed=speed, gamma=gamma)


G = 9.81
DEG15 = math.radians(15.0)

DESK_SEED = 2021


# desk-scale artifacts, built once per session and only for the slow tests

@pytest.fixture(scope="session")
def desk_split():
    data = generate_dataset(EngagementConfig(), 100, seed=DESK_SEED)
    return split_dataset(data.samples, 0.8, seed=DESK_SEED)


@pytest.fixture(scope="session")
def desk_predictor(desk_split):
    train, _ = desk_split
    norm = Normalizer.fit(train)
    net, _ = train_predictor(train, norm, steps=20000, batch=1000, lr=1e-3, seed=DESK_SEED, log_every=0)
    return TgoPredictor(net, norm)


@pytest.fixture(scope="session")
def desk_corrector_run(desk_predictor):
    return train_corrector(EngagementConfig(), desk_predictor, desk_predictor.normalizer, PpoConfig(),
                           seed=DESK_SEED, episodes=200)


@pytest.fixture(scope="session")
def desk_models(desk_predictor, desk_corrector_run):
    corrector = LoadedCorrector(desk_corrector_run.policy, desk_corrector_run.critic, PpoConfig(), desk_predictor.normalizer)
    return GuidanceModels(predictor=desk_predictor, corrector=corrector)
