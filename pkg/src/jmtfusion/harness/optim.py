"""First-order optimizers with serialisable state."""

from __future__ import annotations

import numpy as np

from ..errors import CheckpointError, ConfigError


class Optimizer:
    def __init__(self, params, lr: float):
        self.params = list(params)
        if not lr > 0:
            raise ConfigError("learning rate must be positive")
        self.lr = float(lr)
        self.steps = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.steps += 1
        for i, p in enumerate(self.params):
            if p.grad is not None:
                self._update(i, p)

    def _update(self, i, p) -> None:
        raise NotImplementedError

    def _buffers(self) -> dict[str, list]:
        return {}

    def state_dict(self) -> dict:
        """``{"steps": int, "lr": float, "buffers": {"<kind>.<index>": array}}``."""
        arrays = {}
        for kind, bufs in self._buffers().items():
            for i, b in enumerate(bufs):
                if b is not None:
                    arrays[f"{kind}.{i}"] = b.copy()
        return {"steps": self.steps, "lr": self.lr, "buffers": arrays}

    def load_state_dict(self, state: dict) -> None:
        bufs = self._buffers()
        for key, arr in state["buffers"].items():
            kind, _, idx = key.partition(".")
            if kind not in bufs or not idx.isdigit() or int(idx) >= len(self.params):
                raise CheckpointError(f"optimizer state has unexpected buffer {key!r}")
            if arr.shape != self.params[int(idx)].shape:
                raise CheckpointError(f"optimizer buffer {key!r} has shape {arr.shape}, "
                                      f"parameter has {self.params[int(idx)].shape}")
        for kind, lst in bufs.items():
            for i in range(len(lst)):
                arr = state["buffers"].get(f"{kind}.{i}")
                lst[i] = None if arr is None else np.array(arr, dtype=np.float64)
        self.steps = int(state["steps"])
        self.lr = float(state["lr"])


class SGD(Optimizer):
    """Plain or heavy-ball momentum SGD: ``v = mu v + g``, ``p -= lr v``."""

    def __init__(self, params, lr: float, momentum: float = 0.0):
        super().__init__(params, lr)
        if not 0.0 <= momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        self.momentum = momentum
        self.velocity = [None] * len(self.params)

    def _update(self, i, p):
        g = p.grad
        if self.momentum:
            v = self.velocity[i]
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[i] = v
            g = v
        p.data -= self.lr * g

    def _buffers(self):
        return {"velocity": self.velocity}


class Adam(Optimizer):
    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [None] * len(self.params)
        self.v = [None] * len(self.params)

    def _update(self, i, p):
        g = p.grad
        if self.m[i] is None:
            self.m[i] = np.zeros_like(g)
            self.v[i] = np.zeros_like(g)
        self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
        self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
        mhat = self.m[i] / (1 - self.b1 ** self.steps)
        vhat = self.v[i] / (1 - self.b2 ** self.steps)
        p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def _buffers(self):
        return {"m": self.m, "v": self.v}


def make_optimizer(kind: str, params, lr: float, momentum: float = 0.9) -> Optimizer:
    if kind == "sgd":
        return SGD(params, lr, momentum)
    if kind == "adam":
        return Adam(params, lr)
    raise ConfigError(f"unknown optimizer {kind!r}")
