"""
Fully-connected network engine shared by the time-to-go predictor, the PPO
actor and the PPO critic.

Networks are small torch modules in float64: ReLU hidden layers and an
identity or tanh output layer. Gradients come from torch autograd and
parameters are updated through an ADAM wrapper that refuses non-finite
gradients. Weight files are versioned torch containers.

Training (backward/adam_step) is single-writer; forward on a frozen network
is safe for concurrent readers.
"""

import logging
import math
import os
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from errors import ModelFormatError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
HIDDEN_ACTIVATIONS = ("relu",)
OUTPUT_ACTIVATIONS = ("identity", "tanh")
DTYPE = torch.float64

ArrayLike = Union[Sequence[float], np.ndarray, torch.Tensor]


class Mlp(nn.Module):
    """
    Multi-layer perceptron with ReLU hidden layers.

    ReLU layers get He-normal weights (std sqrt(2/fan_in)), the output layer
    Xavier-normal weights; all biases start at zero. `seed` makes the
    initialization reproducible without touching the global torch RNG.
    """

    def __init__(
        self,
        layer_sizes: Sequence[int],
        output_activation: str = "identity",
        hidden_activation: str = "relu",
        seed: Optional[int] = None,
    ):
        super().__init__()
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ShapeError(f"layer_sizes must hold >= 2 positive integers, got {list(layer_sizes)}")
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unsupported hidden activation {hidden_activation!r}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unsupported output activation {output_activation!r}")

        self.layer_sizes = sizes
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.layers = nn.ModuleList(nn.Linear(a, b, dtype=DTYPE) for a, b in zip(sizes[:-1], sizes[1:]))

        generator = torch.Generator()
        generator.manual_seed(0 if seed is None else int(seed))
        with torch.no_grad():
            last = len(self.layers) - 1
            for i, layer in enumerate(self.layers):
                fan_out, fan_in = layer.weight.shape
                std = math.sqrt(2.0 / (fan_in + fan_out)) if i == last else math.sqrt(2.0 / fan_in)
                layer.weight.copy_(torch.randn(layer.weight.shape, generator=generator, dtype=DTYPE) * std)
                layer.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers[:-1]:
            x = torch.relu(layer(x))
        x = self.layers[-1](x)
        if self.output_activation == "tanh":
            x = torch.tanh(x)
        return x

    @property
    def weights(self) -> List[torch.Tensor]:
        return [layer.weight for layer in self.layers]

    @property
    def biases(self) -> List[torch.Tensor]:
        return [layer.bias for layer in self.layers]

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]


def as_tensor(values: ArrayLike) -> torch.Tensor:
    if isinstance(values, torch.Tensor):
        return values.to(DTYPE)
    return torch.as_tensor(np.asarray(values, dtype=np.float64))


def _checked_input(net: Mlp, values: ArrayLike) -> torch.Tensor:
    x = as_tensor(values)
    if x.dim() not in (1, 2) or x.shape[-1] != net.input_size:
        raise ShapeError(f"expected input of length {net.input_size}, got shape {tuple(x.shape)}")
    return x


def forward(net: Mlp, input: ArrayLike) -> np.ndarray:
    """Evaluate the network on one input vector (or a batch of rows)."""
    x = _checked_input(net, input)
    with torch.no_grad():
        return net(x).numpy()


def backward(net: Mlp, input: ArrayLike, output_grad: ArrayLike) -> List[torch.Tensor]:
    """
    Gradients of sum(output * output_grad) with respect to every parameter,
    in `net.parameters()` order. The ReLU subgradient at 0 is 0.
    """
    x = _checked_input(net, input)
    out = net(x)
    g = as_tensor(output_grad)
    if g.shape != out.shape:
        raise ShapeError(f"output_grad shape {tuple(g.shape)} does not match output {tuple(out.shape)}")
    return list(torch.autograd.grad(out, list(net.parameters()), grad_outputs=g))


class AdamState:
    """
    ADAM optimizer state over an explicit parameter list (a network's
    parameters, optionally with extra trainable tensors such as a policy
    log-std). Callers pass loss gradients; parameters move against them.
    """

    def __init__(
        self,
        parameters: Iterable[torch.Tensor],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.parameters = list(parameters)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.optimizer = torch.optim.Adam(
            self.parameters, lr=learning_rate, betas=(beta1, beta2), eps=epsilon, foreach=False
        )

    @property
    def learning_rate(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def _moment(self, key: str) -> List[torch.Tensor]:
        return [self.optimizer.state.get(p, {}).get(key, torch.zeros_like(p)).detach().clone() for p in self.parameters]

    @property
    def first_moment(self) -> List[torch.Tensor]:
        return self._moment("exp_avg")

    @property
    def second_moment(self) -> List[torch.Tensor]:
        return self._moment("exp_avg_sq")

    def hyperparameters(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "step_count": self.step_count,
        }


def adam_step(net: nn.Module, grads: Sequence[torch.Tensor], opt: AdamState) -> Tuple[nn.Module, AdamState]:
    """
    One bias-corrected ADAM update of the parameters held by `opt`.

    Raises:
        ShapeError: grads do not line up with opt.parameters.
        NonFiniteError: a gradient is NaN/Inf (nothing is updated) or the
            update produced a non-finite parameter.
    """
    grads = list(grads)
    if len(grads) != len(opt.parameters):
        raise ShapeError(f"got {len(grads)} gradients for {len(opt.parameters)} parameters")
    for p, g in zip(opt.parameters, grads):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {tuple(g.shape)} does not match parameter {tuple(p.shape)}")
        if not torch.isfinite(g).all():
            raise NonFiniteError("non-finite gradient, update rejected")

    for p, g in zip(opt.parameters, grads):
        p.grad = g.detach().to(p.dtype).clone()
    opt.optimizer.step()
    opt.optimizer.zero_grad(set_to_none=True)
    opt.step_count += 1

    if not all(torch.isfinite(p).all() for p in opt.parameters):
        raise NonFiniteError(f"non-finite parameter after ADAM step {opt.step_count}")
    return net, opt


def save(net: Mlp, opt: Optional[AdamState], path: Union[str, os.PathLike]) -> None:
    """
    Write a versioned weight file: format_version, layer_sizes, activations,
    flat float64 parameter arrays (torch storage, native little-endian on all
    supported platforms) and, when given, the ADAM state.
    """
    payload = {
        "format_version": FORMAT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "activations": [net.hidden_activation, net.output_activation],
        "parameters": [p.detach().clone().reshape(-1) for p in net.parameters()],
        "adam": None,
    }
    if opt is not None:
        payload["adam"] = {"hyperparameters": opt.hyperparameters(), "state": opt.optimizer.state_dict()}
    torch.save(payload, path)


def load(path: Union[str, os.PathLike]) -> Tuple[Mlp, Optional[AdamState]]:
    """
    Read a weight file written by `save`.

    Raises:
        ModelFormatError: unreadable file, version mismatch or inconsistent shapes.
    """
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ModelFormatError(f"cannot read weight file {path}: {exc}") from exc

    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        found = payload.get("format_version") if isinstance(payload, dict) else None
        raise ModelFormatError(f"{path}: format_version {found!r}, expected {FORMAT_VERSION}")

    try:
        hidden, output = payload["activations"]
        net = Mlp(payload["layer_sizes"], output_activation=output, hidden_activation=hidden)
        flat = payload["parameters"]
        params = list(net.parameters())
        if len(flat) != len(params):
            raise ModelFormatError(f"{path}: {len(flat)} parameter arrays for {len(params)} tensors")
        with torch.no_grad():
            for p, values in zip(params, flat):
                if values.numel() != p.numel():
                    raise ModelFormatError(f"{path}: parameter size {values.numel()} != {p.numel()}")
                p.copy_(values.reshape(p.shape))
    except (KeyError, TypeError, ValueError, ShapeError) as exc:
        raise ModelFormatError(f"{path}: corrupt weight file ({exc})") from exc

    opt = None
    if payload.get("adam") is not None:
        hyper = payload["adam"]["hyperparameters"]
        opt = AdamState(
            net.parameters(),
            learning_rate=hyper["learning_rate"],
            beta1=hyper["beta1"],
            beta2=hyper["beta2"],
            epsilon=hyper["epsilon"],
        )
        opt.optimizer.load_state_dict(payload["adam"]["state"])
        opt.step_count = int(hyper["step_count"])
    return net, opt
