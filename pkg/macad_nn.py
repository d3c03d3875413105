"""Small torch networks for the learners.

``MLP`` is one tanh hidden layer (``body``) followed by a linear ``head``;
with ``hidden == 0`` the body is empty and the net is linear. Everything
runs in float64 on the CPU, and weights are drawn from a numpy
``Generator`` so a run stays a pure function of its seed.
"""
from __future__ import annotations

import copy
from typing import Any, Dict, Iterable

import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils import clip_grad_norm_, parameters_to_vector, vector_to_parameters

from macad_errors import BadConfig

DTYPE = torch.float64

OPTIMIZERS = {
    "sgd": torch.optim.SGD,
    "adam": torch.optim.Adam,
    "rmsprop": torch.optim.RMSprop,
}


def as_batch(x: Any) -> torch.Tensor:
    """(B, n) float64 tensor from one observation or a stack of them."""
    return torch.as_tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)), dtype=DTYPE)


class MLP(nn.Module):
    def __init__(self, n_inputs: int, n_outputs: int, hidden: int, rng: np.random.Generator,
                 output_scale: float = 1.0) -> None:
        super().__init__()
        self.n_inputs, self.n_outputs, self.hidden = n_inputs, n_outputs, hidden
        if hidden:
            self.body = nn.Sequential(nn.Linear(n_inputs, hidden), nn.Tanh())
        else:
            self.body = nn.Sequential()
        self.head = nn.Linear(hidden or n_inputs, n_outputs)
        self.to(DTYPE)
        self.reset_parameters(rng, output_scale)

    def reset_parameters(self, rng: np.random.Generator, output_scale: float = 1.0) -> None:
        """N(0, 1/fan_in) weights, zero biases; the head is scaled by *output_scale*."""
        with torch.no_grad():
            for layer in (m for m in self.modules() if isinstance(m, nn.Linear)):
                scale = 1.0 / np.sqrt(layer.in_features)
                if layer is self.head:
                    scale *= output_scale
                layer.weight.copy_(torch.from_numpy(rng.normal(0.0, scale, tuple(layer.weight.shape))))
                layer.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.body(x))

    @property
    def shared_block(self) -> slice:
        """Slice of the flat parameter vector holding the hidden layer (empty for a linear net)."""
        return slice(0, sum(p.numel() for p in self.body.parameters()))

    def call_with(self, params: Any, x: torch.Tensor) -> torch.Tensor:
        """Forward pass with the flat vector *params* in place of the module's own weights."""
        vector = torch.as_tensor(params, dtype=DTYPE)
        named: Dict[str, torch.Tensor] = {}
        pos = 0
        for name, p in self.named_parameters():
            named[name] = vector[pos:pos + p.numel()].view_as(p)
            pos += p.numel()
        return torch.func.functional_call(self, named, (x,))


class VersionedModule:
    """A module's parameters viewed as one flat vector, plus a version that goes up on every update."""

    def __init__(self, module: nn.Module) -> None:
        self.module = module
        self.version = 0

    @property
    def values(self) -> np.ndarray:
        return parameters_to_vector(self.module.parameters()).detach().numpy().copy()

    def assign(self, values: np.ndarray) -> None:
        with torch.no_grad():
            vector_to_parameters(torch.as_tensor(np.asarray(values), dtype=DTYPE), self.module.parameters())
        self.version += 1

    def bump(self) -> None:
        self.version += 1

    def snapshot(self) -> np.ndarray:
        snap = self.values
        snap.flags.writeable = False
        return snap

    def frozen(self) -> nn.Module:
        """Detached copy for actors; later updates never reach it."""
        clone = copy.deepcopy(self.module)
        clone.requires_grad_(False)
        return clone.eval()

    def __len__(self) -> int:
        return sum(p.numel() for p in self.module.parameters())


def make_optimizer(name: str, parameters: Iterable[nn.Parameter], lr: float = 1e-3) -> torch.optim.Optimizer:
    try:
        return OPTIMIZERS[name](parameters, lr=lr)
    except KeyError:
        raise BadConfig(f"unknown optimizer '{name}'", optimizer=name, choices=sorted(OPTIMIZERS)) from None


def optimizer_step(optimizer: torch.optim.Optimizer, module: nn.Module, lr: float, grad_clip: float) -> float:
    """Clip gradients to *grad_clip* (0 disables), step at *lr*; returns the pre-clip norm."""
    params = [p for p in module.parameters() if p.grad is not None]
    norm = float(clip_grad_norm_(params, grad_clip if grad_clip > 0 else float("inf"))) if params else 0.0
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.step()
    return norm


def state_arrays(module: nn.Module, prefix: str = "") -> Dict[str, np.ndarray]:
    return {f"{prefix}{name}": tensor.detach().numpy().copy() for name, tensor in module.state_dict().items()}


def load_arrays(module: nn.Module, arrays: Dict[str, np.ndarray], prefix: str = "") -> None:
    state = {name[len(prefix):]: torch.as_tensor(np.asarray(values), dtype=DTYPE)
             for name, values in arrays.items() if name.startswith(prefix)}
    module.load_state_dict(state)
