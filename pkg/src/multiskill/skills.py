"""Multi-resolution skill CVAEs with a shared backbone.

One skill module per temporal resolution l in the resolution set: a CVAE
that encodes a transition (s_t, s_{t+l}) into a mixture-of-categoricals
latent z and reconstructs s_{t+l} from (s_t, z). All encoder layers are
shared except the final per-resolution logits layer; all decoder layers are
shared except the first per-resolution input layer. The optional infinity
entry is an unconditional VAE over single states realized with the same
trunks and a zeroed conditioning slot, so checkpoints stay uniform.

Training minimizes the summed ELBO across resolutions,

    L = sum_i mean[ ||s_{t+l} - Dec_i(s_t, z)||^2 + beta * KL(Enc_i || p(z)) ]

with a uniform prior p(z) and a free-bits floor applied per latent group
inside the training KL term only; raw KL is reported alongside. The bank
also scores novelty: the exploratory reward of a state s_t reached from s_0
is the minimum reconstruction error across the finite-resolution modules,
each decoding a fresh posterior sample.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .catmix import CatMixture, kl_groups, uniform_mixture
from .common import ConfigError
from .nets import Mlp, MlpSpec, truncated_normal

log = logging.getLogger(__name__)

INF = math.inf


@dataclass(frozen=True)
class ResolutionSet:
    """Ordered skill horizons, e.g. (64, 32, 16, 8, inf), with manager interval k.

    Finite horizons must be strictly decreasing multiples of k; at most one
    infinite entry is allowed and it must come last.
    """

    lengths: tuple = (64, 32, 16, 8, INF)
    k: int = 8

    def __post_init__(self):
        if self.k <= 0:
            raise ConfigError("manager interval k must be positive")
        if not self.lengths:
            raise ConfigError("resolution set must not be empty")
        finite = [l for l in self.lengths if l != INF]
        if len(self.lengths) - len(finite) > 1:
            raise ConfigError("at most one infinite resolution is allowed")
        if INF in self.lengths and self.lengths[-1] != INF:
            raise ConfigError("the infinite resolution must be last")
        for l in finite:
            if int(l) != l or l <= 0 or int(l) % self.k != 0:
                raise ConfigError(f"finite resolution {l} must be a positive multiple of k={self.k}")
        if any(a <= b for a, b in zip(finite, finite[1:])):
            raise ConfigError("finite resolutions must be strictly decreasing")
        object.__setattr__(self, "lengths", tuple(int(l) if l != INF else INF for l in self.lengths))

    @property
    def n(self):
        return len(self.lengths)

    @property
    def inf_index(self) -> Optional[int]:
        return self.lengths.index(INF) if INF in self.lengths else None

    @property
    def finite_indices(self):
        return tuple(i for i, l in enumerate(self.lengths) if l != INF)

    @property
    def names(self):
        return tuple("inf" if l == INF else str(l) for l in self.lengths)

    def is_inf(self, i):
        return self.lengths[i] == INF


@dataclass(frozen=True)
class SkillConfig:
    """Sizing and loss weights for the skill bank."""

    obs_dim: int
    hidden: tuple = (512, 512, 512, 512)
    latent_groups: int = 8
    latent_classes: int = 8
    beta: float = 1.0
    free_bits: float = 1.0

    def __post_init__(self):
        if self.obs_dim <= 0:
            raise ConfigError("obs_dim must be positive")
        if len(self.hidden) < 1:
            raise ConfigError("skill trunks need at least one hidden layer")
        if self.latent_groups <= 0 or self.latent_classes <= 1:
            raise ConfigError("latent space needs >= 1 group and >= 2 classes")
        if self.beta < 0 or self.free_bits < 0:
            raise ConfigError("beta and free_bits must be non-negative")


@dataclass
class TransitionPair:
    """A training item for resolution ``res``: reach ``target`` from ``start``.

    ``start`` is None for the unconditional (infinite) resolution. Fields may
    be single state vectors or stacked (B, d) batches.
    """

    start: Optional[np.ndarray]
    target: np.ndarray
    res: int


def extract_pairs(states, resolutions: ResolutionSet, i):
    """All transition pairs for resolution ``i`` from one contiguous segment.

    ``states`` is an (S, d) array of consecutive states from one trajectory.
    Finite horizon l yields max(0, S - l) pairs; the infinite resolution
    yields every state as an unconditioned target.
    """
    states = np.asarray(states, dtype=np.float64)
    if resolutions.is_inf(i):
        return [TransitionPair(None, states[t].copy(), i) for t in range(len(states))]
    l = resolutions.lengths[i]
    return [
        TransitionPair(states[t].copy(), states[t + l].copy(), i)
        for t in range(len(states) - l)
    ]


def stack_pairs(pairs):
    """Collate same-resolution pairs into (start batch or None, target batch)."""
    if not pairs:
        raise ConfigError("cannot stack an empty pair list")
    res = pairs[0].res
    if any(p.res != res for p in pairs):
        raise ConfigError("stack_pairs needs pairs of a single resolution")
    targets = np.stack([np.atleast_1d(p.target) for p in pairs])
    if pairs[0].start is None:
        return None, targets
    starts = np.stack([np.atleast_1d(p.start) for p in pairs])
    return starts, targets


class SkillBank:
    """Shared-trunk encoder/decoder pair with per-resolution head layers."""

    def __init__(self, config: SkillConfig, resolutions: ResolutionSet, rng):
        self.config = config
        self.resolutions = resolutions
        d = config.obs_dim
        gc = config.latent_groups * config.latent_classes
        # Heads are randomly initialized (not zeroed) so shared trunks receive
        # gradient from every resolution already at the first update.
        heads = {f"res{i}": gc for i in range(resolutions.n)}
        self.enc = Mlp("skills.enc", MlpSpec(2 * d, config.hidden, heads), rng)
        # Per-resolution decoder input layers: (s_t, z) -> first hidden width.
        self.dec_in = {}
        width = config.hidden[0]
        fan_in = d + gc
        for i in range(resolutions.n):
            self.dec_in[f"skills.dec_in{i}.w"] = T.param(
                truncated_normal(rng, (fan_in, width), 1.0 / np.sqrt(fan_in))
            )
            self.dec_in[f"skills.dec_in{i}.b"] = T.param(np.zeros(width))
            self.dec_in[f"skills.dec_in{i}.ln_g"] = T.param(np.ones(width))
            self.dec_in[f"skills.dec_in{i}.ln_b"] = T.param(np.zeros(width))
        self.dec = Mlp("skills.dec", MlpSpec(width, config.hidden[1:], {"out": d}), rng)
        self.params = {**self.enc.params, **self.dec_in, **self.dec.params}
        self.prior = uniform_mixture(config.latent_groups, config.latent_classes)

    def zero_grad(self):
        for p in self.params.values():
            p.reset_grad()

    def _conditioning(self, i, start, like):
        """The s_t slot: zeros for the unconditional resolution."""
        if self.resolutions.is_inf(i):
            return T.tensor(np.zeros_like(like))
        if start is None:
            raise ConfigError(f"resolution {i} is conditional and needs a start state")
        return start if isinstance(start, T.Tensor) else T.tensor(np.atleast_2d(start))

    def encode(self, i, start, target) -> CatMixture:
        """Posterior q(z | s_t, s_{t+l}); batched over leading axis."""
        target = target if isinstance(target, T.Tensor) else T.tensor(np.atleast_2d(target))
        cond = self._conditioning(i, start, target.data)
        feats = self.enc.trunk(T.concat([cond, target], axis=-1))
        logits = self.enc.head(f"res{i}", feats)
        b = logits.data.shape[0]
        return CatMixture(
            logits.reshape((b, self.config.latent_groups, self.config.latent_classes))
        )

    def decode(self, i, start, z) -> T.Tensor:
        """Reconstruction Dec_i(s_t, z); z is a (B, G, C) one-hot Tensor."""
        gc = self.config.latent_groups * self.config.latent_classes
        zf = z if isinstance(z, T.Tensor) else T.tensor(z)
        if zf.data.ndim == 3:
            zf = zf.reshape((zf.data.shape[0], gc))
        cond = self._conditioning(i, start, np.zeros((zf.data.shape[0], self.config.obs_dim)))
        x = T.concat([cond, zf], axis=-1)
        h = T.linear(x, self.dec_in[f"skills.dec_in{i}.w"], self.dec_in[f"skills.dec_in{i}.b"])
        h = T.layer_norm(h, self.dec_in[f"skills.dec_in{i}.ln_g"], self.dec_in[f"skills.dec_in{i}.ln_b"])
        h = T.elu(h)
        T.assert_finite(h.data, f"skills.dec_in{i}")
        feats = self.dec.trunk(h)
        return self.dec.head("out", feats)


def cvae_forward(bank: SkillBank, pair: TransitionPair, rng):
    """One CVAE pass: (posterior, z sample, reconstruction, recon error, raw KL).

    Works on a single pair or a batched pair; per-sample outputs have shape
    (B,). The z sample is straight-through, so recon error backpropagates to
    the encoder logits; the KL term is exact.
    """
    if not 0 <= pair.res < bank.resolutions.n:
        raise ConfigError(f"resolution index {pair.res} out of range")
    target = np.atleast_2d(np.asarray(pair.target, dtype=np.float64))
    start = None if pair.start is None else np.atleast_2d(np.asarray(pair.start, dtype=np.float64))
    posterior = bank.encode(pair.res, start, target)
    z = posterior.sample_st(rng)
    recon = bank.decode(pair.res, start, z)
    diff = T.tensor(target) - recon
    recon_err = (diff * diff).sum(axis=-1)
    kl = kl_groups(posterior, bank.prior).sum(axis=-1)
    return posterior, z, recon, recon_err, kl


def skill_elbo_loss(bank: SkillBank, pairs_by_res, rng):
    """Summed ELBO over nonempty resolution groups.

    ``pairs_by_res`` maps resolution index -> list of TransitionPair (or one
    batched pair). Returns (loss Tensor or None, stats dict). Groups are
    processed in ascending resolution index, which fixes the rng draw order.
    The training KL applies the free-bits floor per latent group; stats
    report both raw and floored KL.
    """
    terms = []
    stats = {}
    for i in sorted(pairs_by_res):
        pairs = pairs_by_res[i]
        if not pairs:
            continue
        batch = pairs if isinstance(pairs, TransitionPair) else _collate(pairs, i)
        posterior, _, _, recon_err, kl_raw = cvae_forward(bank, batch, rng)
        kg = kl_groups(posterior, bank.prior)
        kl_train = T.maximum_const(kg, bank.config.free_bits).sum(axis=-1)
        term = (recon_err + kl_train * bank.config.beta).mean()
        terms.append(term)
        n = recon_err.data.shape[0]
        stats[f"res{i}/pairs"] = n
        stats[f"res{i}/recon"] = float(recon_err.data.mean())
        stats[f"res{i}/kl"] = float(kl_raw.data.mean())
        stats[f"res{i}/kl_floored"] = float(kl_train.data.mean())
    if not terms:
        log.info("skill_elbo_loss: every resolution group empty; skipping update")
        return None, stats
    loss = terms[0]
    for t in terms[1:]:
        loss = loss + t
    stats["loss"] = float(loss.data)
    return loss, stats


def _collate(pairs, i):
    start, target = stack_pairs(pairs)
    return TransitionPair(start, target, i)


def exploratory_reward(bank: SkillBank, s0, st, rng):
    """Novelty of reaching ``st`` from ``s0``: minimum finite-skill recon error.

    Each finite resolution encodes (s0, st), draws one fresh posterior sample
    and decodes it; the reward is the smallest squared reconstruction error.
    Resolutions are visited in ascending index order (fixes rng consumption).
    Batched inputs (B, d) give a (B,) array; single vectors give a float.
    """
    finite = bank.resolutions.finite_indices
    if not finite:
        raise ConfigError("exploratory reward needs at least one finite resolution")
    single = np.asarray(st).ndim == 1
    s0b = np.atleast_2d(np.asarray(s0, dtype=np.float64))
    stb = np.atleast_2d(np.asarray(st, dtype=np.float64))
    with T.no_grad():
        errs = []
        for i in finite:
            posterior = bank.encode(i, s0b, stb)
            z = posterior.sample(rng)
            recon = bank.decode(i, s0b, T.tensor(z))
            errs.append(((stb - recon.data) ** 2).sum(axis=-1))
    out = np.min(np.stack(errs), axis=0)
    return float(out[0]) if single else out
