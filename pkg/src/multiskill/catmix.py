"""Mixture-of-categoricals distribution: G independent groups of C classes.

Samples are concatenable one-hots, one per group. Two sampling modes exist:
plain (score-function paths, no gradient) and straight-through (the sample
stays one-hot in the forward pass while the backward pass sees the softmax
probabilities, so reconstruction losses can reach encoder logits).
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class CatMixture:
    """Wraps logits of shape (..., G, C); leading axes are batch axes."""

    def __init__(self, logits):
        self.logits = logits if isinstance(logits, Tensor) else T.tensor(logits)
        if self.logits.data.ndim < 2:
            raise T.ShapeError("CatMixture logits need shape (..., groups, classes)")
        T.assert_finite(self.logits.data, "CatMixture logits")

    @property
    def groups(self):
        return self.logits.data.shape[-2]

    @property
    def classes(self):
        return self.logits.data.shape[-1]

    @property
    def batch_shape(self):
        return self.logits.data.shape[:-2]

    def probs(self):
        """Softmax probabilities as a plain array (no graph)."""
        return T.softmax_np(self.logits.data, axis=-1)

    def sample(self, rng):
        """One one-hot per group, shape like the logits. No gradient path."""
        probs = self.probs()
        u = rng.random(size=probs.shape[:-1])[..., None]
        idx = (u > np.cumsum(probs, axis=-1)).sum(axis=-1)
        idx = np.minimum(idx, self.classes - 1)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, idx[..., None], 1.0, axis=-1)
        return onehot

    def sample_st(self, rng):
        """Straight-through sample.

        Forward value is the one-hot sample; the backward pass substitutes the
        per-group softmax, i.e. cotangent u maps to p * (u - sum(u * p)).
        """
        onehot = self.sample(rng)
        logits = self.logits
        probs = self.probs()

        def backward(g):
            inner = (g * probs).sum(axis=-1, keepdims=True)
            logits._accumulate(probs * (g - inner))

        return T._make(onehot, (logits,), backward)

    def log_prob(self, onehot):
        """Log-probability of a one-hot sample, summed over groups.

        Differentiable w.r.t. the logits; returns shape = batch shape.
        """
        onehot = np.asarray(onehot, dtype=np.float64)
        lsm = T.log_softmax(self.logits, axis=-1)
        picked = lsm * T.tensor(onehot)
        return picked.sum(axis=(-2, -1))

    def entropy(self):
        """Shannon entropy in nats, summed over groups; shape = batch shape."""
        lsm = T.log_softmax(self.logits, axis=-1)
        p = T.exp(lsm)
        return T.neg((p * lsm).sum(axis=(-2, -1)))

    def max_entropy(self):
        return self.groups * np.log(self.classes)


def uniform_mixture(groups, classes):
    """The uniform prior p(z): all logits zero."""
    return CatMixture(np.zeros((groups, classes)))


def kl_groups(p: CatMixture, q: CatMixture):
    """Per-group KL(p || q); shape (..., G). Differentiable w.r.t. both."""
    if (p.groups, p.classes) != (q.groups, q.classes):
        raise T.ShapeError(
            f"KL shape mismatch: {(p.groups, p.classes)} vs {(q.groups, q.classes)}"
        )
    lp = T.log_softmax(p.logits, axis=-1)
    lq = T.log_softmax(q.logits, axis=-1)
    pe = T.exp(lp)
    return (pe * (lp - lq)).sum(axis=-1)


def kl_categorical(p: CatMixture, q: CatMixture):
    """KL(p || q) summed over groups; shape = batch shape. Always >= 0."""
    return kl_groups(p, q).sum(axis=-1)


def entropy_categorical(p: CatMixture):
    """Summed per-group Shannon entropy (natural log)."""
    return p.entropy()
