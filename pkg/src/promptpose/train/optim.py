"""AdamW with decoupled weight decay, linear warmup, and global-norm clipping.

With weight decay 0 the update is exactly Adam. Parameters whose gradient is
absent for a step (e.g. the prompt pathway in a text-only batch) are skipped,
matching the usual convention.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..numerics import Tensor


class AdamW:
    def __init__(self, params: dict[str, Tensor], lr: float = 2e-4,
                 betas: tuple = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0, clip: float = 1.0, warmup: int = 0):
        if lr < 0:
            raise ConfigError(f"negative learning rate {lr}")
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip = clip
        self.warmup = warmup
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def grad_global_norm(self) -> float:
        total = 0.0
        for p in self.params.values():
            if p.grad is not None:
                total += float((p.grad.astype(np.float64) ** 2).sum())
        return float(np.sqrt(total))

    def step(self) -> float:
        """One update; returns the learning rate actually applied."""
        self.t += 1
        lr_t = self.lr * min(1.0, self.t / self.warmup) if self.warmup > 0 else self.lr
        scale = 1.0
        if self.clip > 0:
            gn = self.grad_global_norm()
            if gn > self.clip:
                scale = self.clip / (gn + 1e-12)
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if scale != 1.0:
                g = g * scale
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / b2c)
            denom += self.eps
            update = m / b1c
            update /= denom
            if self.weight_decay:
                update += self.weight_decay * p.data
            update *= lr_t
            p.data -= update
            p.grad = None
        return lr_t

    # -- serialization ---------------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.params:
            out[f"optim.m.{k}"] = self.m[k]
            out[f"optim.v.{k}"] = self.v[k]
        return out

    def load_state(self, arrays: dict[str, np.ndarray], step: int) -> None:
        for k in self.params:
            mk, vk = f"optim.m.{k}", f"optim.v.{k}"
            if mk in arrays:
                self.m[k] = arrays[mk].astype(self.m[k].dtype, copy=True)
            if vk in arrays:
                self.v[k] = arrays[vk].astype(self.v[k].dtype, copy=True)
        self.t = step
