"""Small shared building blocks: two-layer MLPs and layer norm."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, gelu, matmul, tanh, tsqrt


@dataclass
class Mlp:
    """Two-layer perceptron with biases."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


def init_mlp(rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int,
             dtype=None) -> Mlp:
    return Mlp(
        w1=Tensor(rng.standard_normal((d_in, d_hidden)) / np.sqrt(d_in), requires_grad=True, dtype=dtype),
        b1=Tensor(np.zeros(d_hidden), requires_grad=True, dtype=dtype),
        w2=Tensor(rng.standard_normal((d_hidden, d_out)) / np.sqrt(d_hidden), requires_grad=True, dtype=dtype),
        b2=Tensor(np.zeros(d_out), requires_grad=True, dtype=dtype),
    )


def mlp_forward(x: Tensor, mlp: Mlp, hidden_act: str = "tanh") -> Tensor:
    h = matmul(x, mlp.w1) + mlp.b1
    h = tanh(h) if hidden_act == "tanh" else gelu(h)
    return matmul(h, mlp.w2) + mlp.b2


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / tsqrt(var + eps) * gain + bias
