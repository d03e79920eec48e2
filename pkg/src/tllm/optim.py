"""Adam over a ParameterSet, with serializable moment state."""
from __future__ import annotations

import numpy as np

from .tensor import ParameterSet


class Adam:
    def __init__(self, params: ParameterSet, lr: float = 5e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in params.trainable()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.trainable()}

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for n, p in self.params.trainable():
            g = p.grad
            if g is None:
                continue
            m = self.m[n]
            v = self.v[n]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data = p.data - (self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)).astype(p.data.dtype)

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        out = {f"opt.m.{n}": a.copy() for n, a in self.m.items()}
        out.update({f"opt.v.{n}": a.copy() for n, a in self.v.items()})
        out["opt.t"] = np.array([float(self.t)], dtype=np.float64)
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for n in self.m:
            self.m[n] = state[f"opt.m.{n}"].astype(self.m[n].dtype, copy=True)
            self.v[n] = state[f"opt.v.{n}"].astype(self.v[n].dtype, copy=True)
        self.t = int(state["opt.t"][0])
