"""MLP building block: Linear -> LayerNorm -> ELU stacks with named heads.

One ``Mlp`` owns its parameters as a flat dict of named tensors, which is
also the unit of checkpointing and optimizer bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .common import ConfigError  # noqa: F401  (part of this module's API)


@dataclass
class MlpSpec:
    """Architecture of one MLP: input dim, hidden stack, named output heads.

    ``zero_init_heads`` lists heads whose final linear starts at exactly zero
    (weights and bias), so e.g. policy logits begin uniform.
    """

    in_dim: int
    hidden: tuple = (512, 512, 512, 512)
    heads: dict = field(default_factory=dict)
    zero_init_heads: tuple = ()

    def __post_init__(self):
        if self.in_dim <= 0:
            raise ConfigError("in_dim must be positive")
        if not self.heads:
            raise ConfigError("an Mlp needs at least one output head")
        for h in self.zero_init_heads:
            if h not in self.heads:
                raise ConfigError(f"zero_init head {h!r} not among heads")


def truncated_normal(rng, shape, std, bound=2.0):
    """Normal(0, std) resampled until within ``bound`` stddevs."""
    out = rng.standard_normal(shape) * std
    for _ in range(16):
        mask = np.abs(out) > bound * std
        if not mask.any():
            break
        out[mask] = rng.standard_normal(int(mask.sum())) * std
    return np.clip(out, -bound * std, bound * std)


class Mlp:
    """Feedforward net: (Linear -> LayerNorm -> ELU) per hidden layer, then
    one plain Linear per head. Deterministic given (weights, input)."""

    def __init__(self, name, spec: MlpSpec, rng):
        self.name = name
        self.spec = spec
        self.params = {}
        fan_in = spec.in_dim
        for i, width in enumerate(spec.hidden):
            w = truncated_normal(rng, (fan_in, width), 1.0 / np.sqrt(fan_in))
            self.params[f"{name}.l{i}.w"] = T.param(w)
            self.params[f"{name}.l{i}.b"] = T.param(np.zeros(width))
            self.params[f"{name}.l{i}.ln_g"] = T.param(np.ones(width))
            self.params[f"{name}.l{i}.ln_b"] = T.param(np.zeros(width))
            fan_in = width
        for head, out_dim in spec.heads.items():
            if head in spec.zero_init_heads:
                w = np.zeros((fan_in, out_dim))
            else:
                w = truncated_normal(rng, (fan_in, out_dim), 1.0 / np.sqrt(fan_in))
            self.params[f"{name}.{head}.w"] = T.param(w)
            self.params[f"{name}.{head}.b"] = T.param(np.zeros(out_dim))

    def trunk(self, x):
        """Run the hidden stack only (shared-backbone use)."""
        x = x if isinstance(x, T.Tensor) else T.tensor(np.atleast_2d(x))
        if x.shape[-1] != self.spec.in_dim:
            raise ConfigError(
                f"{self.name}: input dim {x.shape[-1]} != spec {self.spec.in_dim}"
            )
        for i in range(len(self.spec.hidden)):
            x = T.linear(x, self.params[f"{self.name}.l{i}.w"], self.params[f"{self.name}.l{i}.b"])
            x = T.layer_norm(x, self.params[f"{self.name}.l{i}.ln_g"], self.params[f"{self.name}.l{i}.ln_b"])
            x = T.elu(x)
            T.assert_finite(x.data, f"{self.name} layer {i}")
        return x

    def head(self, name, feats):
        if name not in self.spec.heads:
            raise ConfigError(f"{self.name}: unknown head {name!r}")
        out = T.linear(feats, self.params[f"{self.name}.{name}.w"], self.params[f"{self.name}.{name}.b"])
        T.assert_finite(out.data, f"{self.name} head {name}")
        return out

    def forward(self, x):
        """Full pass; returns {head name: Tensor}."""
        feats = self.trunk(x)
        return {h: self.head(h, feats) for h in self.spec.heads}

    def zero_grad(self):
        for p in self.params.values():
            p.reset_grad()


def mlp_forward_backward(mlp: Mlp, x):
    """Forward pass returning (head outputs as arrays, gradient closure).

    The closure takes {head: cotangent array} and accumulates exact gradients
    of the composed layers into the MLP's parameter gradient slots.
    """
    outputs = mlp.forward(x)

    def grad_closure(cotangents):
        for head, g in cotangents.items():
            outputs[head].backward(np.asarray(g, dtype=np.float64))

    return {h: t.data for h, t in outputs.items()}, grad_closure
