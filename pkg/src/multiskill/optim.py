"""Adam with decoupled weight decay and a global-norm gradient clip."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 1e-2
    clip_norm: float = 100.0


class Adam:
    """Decoupled-weight-decay Adam over a named parameter dict.

    A non-finite gradient anywhere in the group rejects the whole step: no
    accumulator or weight is touched and the step counter stays put.
    """

    def __init__(self, params, config: AdamConfig | None = None):
        self.params = params
        self.config = config or AdamConfig()
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.steps = 0
        self.rejected = 0

    def zero_grad(self):
        for p in self.params.values():
            p.reset_grad()

    def step(self):
        """Apply one update. Returns True if applied, False if rejected."""
        cfg = self.config
        grads = {}
        sq_norm = 0.0
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                self.rejected += 1
                log.warning("adam step rejected: non-finite gradient in %s", k)
                return False
            grads[k] = g
            sq_norm += float(np.dot(g.reshape(-1), g.reshape(-1)))
        norm = np.sqrt(sq_norm)
        scale = 1.0
        if cfg.clip_norm > 0.0 and norm > cfg.clip_norm:
            scale = cfg.clip_norm / norm

        self.steps += 1
        t = self.steps
        bc1 = 1.0 - cfg.beta1**t
        bc2 = 1.0 - cfg.beta2**t
        for k, p in self.params.items():
            g = grads[k] * scale
            m = self.m[k]
            v = self.v[k]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            mhat = m / bc1
            vhat = v / bc2
            if cfg.weight_decay > 0.0:
                p.data *= 1.0 - cfg.lr * cfg.weight_decay
            p.data -= cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)
        return True

    def state_arrays(self, prefix):
        """Flat array view of optimizer state for checkpointing."""
        out = {f"{prefix}/step": np.array([self.steps], dtype=np.int64)}
        for k in self.params:
            out[f"{prefix}/m/{k}"] = self.m[k]
            out[f"{prefix}/v/{k}"] = self.v[k]
        return out

    def load_state_arrays(self, prefix, arrays):
        self.steps = int(arrays[f"{prefix}/step"][0])
        for k in self.params:
            self.m[k] = np.array(arrays[f"{prefix}/m/{k}"], dtype=np.float64)
            self.v[k] = np.array(arrays[f"{prefix}/v/{k}"], dtype=np.float64)
