"""
Time-to-go predictor: a 4-100-100-100-1 ReLU network trained by mini-batch
ADAM on mean-squared error, mapping mean-normalized (v, gamma, x, y) to the
PNG time-to-go.

The network regresses t_go / mean_tgo; predict_tgo scales back to seconds
and clamps below at 0 s.
"""

import logging
import os
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from agents import neuralnet
from agents.neuralnet import AdamState, Mlp
from agents.predictor.dataset import Normalizer, TgoSample, as_arrays
from errors import ConfigurationError, DatasetError, NonFiniteError
from physics.dynamics import VehicleState
from utils import read_json, write_json

logger = logging.getLogger(__name__)

PREDICTOR_WEIGHTS = "predictor.pt"
PREDICTOR_SIDECAR = "predictor.json"


@dataclass(frozen=True)
class PredictorMetrics:
    mean_error: float
    std_error: float
    max_abs_error: float
    cr: float
    n_samples: int


def train_predictor(
    train: Sequence[TgoSample],
    normalizer: Normalizer,
    steps: int = 100000,
    batch: int = 1000,
    lr: float = 0.001,
    seed: int = 0,
    hidden_layers: Sequence[int] = (100, 100, 100),
    log_every: int = 1000,
    progress: bool = False,
) -> Tuple[Mlp, List[float]]:
    """
    Fit the predictor. Returns the network and the per-step training loss
    (MSE in s^2).

    Raises:
        DatasetError: empty training set.
        NonFiniteError: the loss became NaN/Inf.
    """
    if not train:
        raise DatasetError("empty training set")
    features, labels = as_arrays(train)
    x_all = torch.as_tensor(normalizer.normalize(features))
    y_all = torch.as_tensor(labels / normalizer.mean_tgo)
    n = len(labels)
    label_scale = normalizer.mean_tgo ** 2

    net = Mlp([4, *hidden_layers, 1], output_activation="identity", seed=seed)
    opt = AdamState(net.parameters(), learning_rate=lr)
    params = list(net.parameters())
    rng = np.random.default_rng(seed)
    history: List[float] = []

    for i in tqdm(range(steps), desc="train-tgo", disable=not progress):
        idx = torch.as_tensor(rng.choice(n, size=min(batch, n), replace=False))
        residual = net(x_all[idx]).squeeze(-1) - y_all[idx]
        loss = torch.mean(residual * residual)
        value = float(loss) * label_scale
        if not np.isfinite(value):
            last = history[-1] if history else None
            raise NonFiniteError(f"predictor loss non-finite at step {i} (previous loss {last})")
        history.append(value)
        grads = torch.autograd.grad(loss, params)
        neuralnet.adam_step(net, grads, opt)
        if log_every and (i + 1) % log_every == 0:
            logger.info("train-tgo step %d/%d  mse=%.6g s^2", i + 1, steps, value)
    return net, history


def predict_batch(net: Mlp, normalizer: Normalizer, features: np.ndarray) -> np.ndarray:
    out = neuralnet.forward(net, normalizer.normalize(np.atleast_2d(features)))
    return np.maximum(out[:, 0] * normalizer.mean_tgo, 0.0)


def predict_tgo(net: Mlp, normalizer: Normalizer, v: float, gamma: float, x: float, y: float) -> float:
    """Predicted PNG time-to-go in seconds (never negative)."""
    return float(predict_batch(net, normalizer, np.array([[v, gamma, x, y]]))[0])


class TgoPredictor:
    """Trained network plus its normalizer, callable on a VehicleState."""

    def __init__(self, net: Mlp, normalizer: Normalizer):
        self.net = net.eval()
        self.normalizer = normalizer

    def __call__(self, state: VehicleState, engagement=None) -> float:
        return predict_tgo(self.net, self.normalizer, state.speed, state.gamma, state.x, state.y)


def coefficient_of_determination(predicted: np.ndarray, actual: np.ndarray) -> float:
    """Squared correlation between predictions and labels, via the raw-sum form."""
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    n = len(p)
    num = (n * np.sum(p * a) - np.sum(p) * np.sum(a)) ** 2
    den = (n * np.sum(p * p) - np.sum(p) ** 2) * (n * np.sum(a * a) - np.sum(a) ** 2)
    if den <= 0.0:
        return 1.0 if np.allclose(p, a) else 0.0
    return float(min(max(num / den, 0.0), 1.0))


def metrics_from_predictions(predicted: np.ndarray, actual: np.ndarray) -> PredictorMetrics:
    errors = np.asarray(predicted, dtype=np.float64) - np.asarray(actual, dtype=np.float64)
    return PredictorMetrics(
        mean_error=float(errors.mean()),
        std_error=float(errors.std()),
        max_abs_error=float(np.abs(errors).max()),
        cr=coefficient_of_determination(predicted, actual),
        n_samples=len(errors),
    )


def evaluate_predictor(net: Mlp, normalizer: Normalizer, test: Sequence[TgoSample]) -> PredictorMetrics:
    """Mean/std/max of (prediction - label) and the coefficient of determination."""
    if not test:
        raise DatasetError("empty test set")
    features, labels = as_arrays(test)
    return metrics_from_predictions(predict_batch(net, normalizer, features), labels)


def save_predictor(out_dir: str, net: Mlp, normalizer: Normalizer, extra: Optional[dict] = None) -> List[str]:
    weights = os.path.join(out_dir, PREDICTOR_WEIGHTS)
    sidecar = os.path.join(out_dir, PREDICTOR_SIDECAR)
    neuralnet.save(net, None, weights)
    write_json(sidecar, {"normalizer": normalizer.to_dict(), "layer_sizes": net.layer_sizes, **(extra or {})})
    return [weights, sidecar]


def load_predictor(out_dir: str) -> TgoPredictor:
    """
    Raises:
        ConfigurationError: no trained predictor in out_dir.
    """
    weights = os.path.join(out_dir, PREDICTOR_WEIGHTS)
    sidecar = os.path.join(out_dir, PREDICTOR_SIDECAR)
    if not (os.path.isfile(weights) and os.path.isfile(sidecar)):
        raise ConfigurationError(f"no trained predictor in {out_dir} (run train-tgo first)")
    net, _ = neuralnet.load(weights)
    return TgoPredictor(net, Normalizer.from_dict(read_json(sidecar)["normalizer"]))


def metrics_dict(metrics: PredictorMetrics) -> dict:
    return asdict(metrics)
