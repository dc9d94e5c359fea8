"""
Time-to-go dataset: PNG interception trajectories turned into labelled
samples (v, gamma, x, y) -> t_go = t_f - t.

Only trajectories that end in a Hit contribute samples; the others are
counted per outcome in a discard log. Trajectories are independent, so they
can be fanned out to worker processes, each with its own RNG stream derived
from the master seed.
"""

import logging
import os
from dataclasses import asdict, dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import EngagementConfig
from errors import DatasetError
from physics.dynamics import Outcome, TerminationRecord, Trajectory, png_controller, rollout
from utils import fan_out, read_json, spawn_seeds, write_json

logger = logging.getLogger(__name__)

SAMPLE_COLUMNS = ["v", "gamma", "x", "y", "tgo"]


@dataclass(frozen=True)
class TgoSample:
    v: float
    gamma: float
    x: float
    y: float
    t_go: float


@dataclass(frozen=True)
class Normalizer:
    """
    Means of the training inputs (and of the label, used to scale the
    regression target). Inputs are divided by their means.
    """

    mean_v: float
    mean_gamma: float
    mean_x: float
    mean_y: float
    mean_tgo: float = 1.0

    @classmethod
    def fit(cls, samples: Sequence[TgoSample]) -> "Normalizer":
        if not samples:
            raise DatasetError("cannot fit a normalizer on an empty sample set")
        features, labels = as_arrays(samples)
        means = [float(m) for m in features.mean(axis=0)] + [float(labels.mean())]
        if any(abs(m) < 1e-12 or not np.isfinite(m) for m in means):
            raise DatasetError(f"degenerate dataset, zero or non-finite mean among {means}")
        return cls(*means)

    @property
    def input_means(self) -> np.ndarray:
        return np.array([self.mean_v, self.mean_gamma, self.mean_x, self.mean_y], dtype=np.float64)

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) / self.input_means

    def denormalize(self, normalized: np.ndarray) -> np.ndarray:
        return np.asarray(normalized, dtype=np.float64) * self.input_means

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "Normalizer":
        return cls(**{k: float(data[k]) for k in ("mean_v", "mean_gamma", "mean_x", "mean_y", "mean_tgo")})


def as_arrays(samples: Sequence[TgoSample]) -> Tuple[np.ndarray, np.ndarray]:
    """(N x 4 features [v, gamma, x, y], N labels)."""
    data = np.array([(s.v, s.gamma, s.x, s.y, s.t_go) for s in samples], dtype=np.float64).reshape(-1, 5)
    return data[:, :4], data[:, 4]


def labels_from_trajectory(trajectory: Trajectory, termination: TerminationRecord) -> List[TgoSample]:
    """One sample per guidance step, labelled t_f - t; empty unless the run was a Hit."""
    if termination.outcome is not Outcome.HIT:
        return []
    t_f = termination.final_time
    return [TgoSample(s.speed, s.gamma, s.x, s.y, t_f - s.time) for s, _ in trajectory]


def _png_trajectory(job: Tuple[EngagementConfig, np.random.SeedSequence]) -> Tuple[List[TgoSample], Outcome]:
    config, seed_seq = job
    rng = np.random.default_rng(seed_seq)
    engagement = config.engagement()
    sim = config.sim_settings()
    initial = config.sample_initial(rng)
    trajectory, termination = rollout(initial, engagement, png_controller(engagement, sim.airframe.gravity), sim)
    return labels_from_trajectory(trajectory, termination), termination.outcome


class GeneratedDataset(NamedTuple):
    samples: List[TgoSample]
    hits: int
    discarded: Dict[str, int]


def generate_dataset(
    config: EngagementConfig,
    n_trajectories: int,
    seed: int,
    workers: int = 1,
) -> GeneratedDataset:
    """
    Fly n_trajectories random PNG engagements and label every Hit trajectory.

    Raises:
        DatasetError: n_trajectories < 1 or no trajectory ended in a Hit.
    """
    if n_trajectories < 1:
        raise DatasetError(f"n_trajectories must be > 0, got {n_trajectories}")
    jobs = [(config, s) for s in spawn_seeds(seed, n_trajectories)]
    results = fan_out(_png_trajectory, jobs, workers)

    samples: List[TgoSample] = []
    discarded = {o.value: 0 for o in Outcome if o is not Outcome.HIT}
    hits = 0
    for i, (traj_samples, outcome) in enumerate(results):
        if outcome is Outcome.HIT:
            hits += 1
            samples.extend(traj_samples)
        else:
            discarded[outcome.value] += 1
            logger.debug("trajectory %d discarded (%s)", i, outcome.value)

    if hits == 0:
        raise DatasetError(f"none of {n_trajectories} PNG trajectories hit the target")
    logger.info("dataset: %d samples from %d/%d Hit trajectories, discarded %s",
                len(samples), hits, n_trajectories, discarded)
    return GeneratedDataset(samples, hits, discarded)


def split_dataset(
    samples: Sequence[TgoSample], ratio: float = 0.8, seed: int = 0
) -> Tuple[List[TgoSample], List[TgoSample]]:
    """Shuffled disjoint split with round(ratio * N) training samples."""
    n = len(samples)
    if n < 10:
        raise DatasetError(f"need at least 10 samples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratio * n))
    return [samples[i] for i in order[:n_train]], [samples[i] for i in order[n_train:]]


def metadata_path(csv_path: str) -> str:
    root, _ = os.path.splitext(csv_path)
    return root + ".meta.json"


def write_dataset(path: str, samples: Sequence[TgoSample], metadata: Optional[Dict] = None) -> None:
    """CSV `v,gamma,x,y,tgo` plus a `.meta.json` sidecar."""
    features, labels = as_arrays(samples)
    frame = pd.DataFrame(np.column_stack([features, labels]), columns=SAMPLE_COLUMNS)
    frame.to_csv(path, index=False)
    write_json(metadata_path(path), dict(metadata or {}))


def read_dataset(path: str) -> Tuple[List[TgoSample], Dict]:
    if not os.path.isfile(path):
        raise DatasetError(f"dataset file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != SAMPLE_COLUMNS:
        raise DatasetError(f"{path}: expected columns {SAMPLE_COLUMNS}, got {list(frame.columns)}")
    samples = [TgoSample(*row) for row in frame.itertuples(index=False, name=None)]
    meta_file = metadata_path(path)
    metadata = read_json(meta_file) if os.path.isfile(meta_file) else {}
    return samples, metadata
