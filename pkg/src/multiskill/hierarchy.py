"""Manager/worker hierarchy: policies, lambda-returns, and all RL losses.

The manager looks at the state every K env steps and proposes a subgoal in
observation space: each of its N skill heads samples a latent z_i, the skill
decoders turn those into candidate goals, and a categorical choice head picks
one candidate by one-hot gating. The worker is a goal-conditioned
actor-critic with a tanh-squashed Gaussian action head that chases the
current subgoal under the cosine_max reward.

Both levels train with score-function policy gradients against lambda-return
advantages. The manager keeps two critics — one for extrinsic reward, one for
the exploratory (novelty) reward — whose advantages are standardized
separately and combined with weights (1.0, 0.1). Skill-head policy-gradient
terms are masked by the gating choice c_{k,i}; entropy bonuses are not
masked. Entropy coefficients follow a multiplicative controller that tracks a
target fraction eta of each head's maximum entropy.

Batching convention: trajectories carry an ``alive`` mask with 1 for states
that are real and non-terminal. Values, rewards, and policy-gradient terms
are multiplied by it, which makes terminal states absorbing (zero value, no
learning signal past the end of an episode).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import tensor as T
from .catmix import CatMixture
from .common import ConfigError
from .nets import Mlp, MlpSpec
from .skills import ResolutionSet, SkillBank

LOG_2PI = math.log(2.0 * math.pi)
LOG_STD_LO = -5.0
LOG_STD_HI = 1.0
DEGENERATE_NORM = 1e-8


# --------------------------------------------------------------------- rewards


def cosine_max_reward(a, b):
    """cosine_max(a, b) = |a . b| / max(||a||, ||b||)^2, in [0, 1].

    Works on single vectors or batches (last axis = vector axis). Inputs
    whose larger norm is below 1e-8 score 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dot = np.abs((a * b).sum(axis=-1))
    m = np.maximum(np.linalg.norm(a, axis=-1), np.linalg.norm(b, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(m < DEGENERATE_NORM, 0.0, dot / np.maximum(m, DEGENERATE_NORM) ** 2)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- lambda return


@dataclass(frozen=True)
class LambdaReturnConfig:
    lam: float = 0.95
    gamma: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lambda must be in [0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must be in (0, 1)")


def lambda_returns(rewards, values, cfg: LambdaReturnConfig):
    """Backward lambda-return recursion.

    ``rewards[..., t]`` is the reward received on the step from state t to
    t+1; ``values`` holds one more entry than rewards. The recursion is

        G_t = R_{t+1} + gamma * ((1 - lam) * v_{t+1} + lam * G_{t+1}),

    bootstrapped with G_H = v_H. Plain arrays in, plain array out.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != rewards.shape[-1] + 1:
        raise ConfigError(
            f"need len(values) == len(rewards) + 1, got {values.shape[-1]} and {rewards.shape[-1]}"
        )
    horizon = rewards.shape[-1]
    out = np.zeros_like(rewards)
    nxt = values[..., horizon]
    for t in range(horizon - 1, -1, -1):
        nxt = rewards[..., t] + cfg.gamma * ((1 - cfg.lam) * values[..., t + 1] + cfg.lam * nxt)
        out[..., t] = nxt
    return out


# ------------------------------------------------------------------- policies


class WorkerPolicy:
    """Goal-conditioned actor-critic over (s_t, s_g) with squashed actions."""

    def __init__(self, obs_dim, action_dim, hidden=(512, 512, 512, 512), rng=None):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        heads = {"mean": action_dim, "log_std": action_dim, "value": 1}
        self.mlp = Mlp(
            "worker",
            MlpSpec(2 * obs_dim, hidden, heads, zero_init_heads=tuple(heads)),
            rng if rng is not None else np.random.default_rng(0),
        )
        self.params = self.mlp.params

    def zero_grad(self):
        self.mlp.zero_grad()

    def forward(self, obs, goal):
        """Tensor outputs (mean, log_std, value) for stacked (B, d) inputs."""
        x = T.concat([T.tensor(obs), T.tensor(goal)], axis=-1)
        feats = self.mlp.trunk(x)
        mean = self.mlp.head("mean", feats)
        raw = self.mlp.head("log_std", feats)
        half = 0.5 * (LOG_STD_HI - LOG_STD_LO)
        log_std = T.tanh(raw) * half + (LOG_STD_LO + half)
        value = self.mlp.head("value", feats).reshape((np.shape(obs)[0],))
        return mean, log_std, value

    def act(self, obs, goal, rng, greedy=False):
        """Sample squashed actions; no gradients. (B, d) in, (B, A) out."""
        obs = np.atleast_2d(obs)
        goal = np.atleast_2d(goal)
        with T.no_grad():
            mean, log_std, _ = self.forward(obs, goal)
        if greedy:
            return np.tanh(mean.data)
        noise = rng.standard_normal(mean.data.shape)
        return np.tanh(mean.data + np.exp(log_std.data) * noise)

    def log_prob(self, mean, log_std, actions):
        """log pi(a | s, g) for stored actions; differentiable in mean/log_std."""
        u = np.arctanh(np.clip(actions, -1 + 1e-9, 1 - 1e-9))
        inv_std = T.exp(T.neg(log_std))
        z = (T.tensor(u) - mean) * inv_std
        base = T.neg((z * z).sum(axis=-1)) * 0.5 - log_std.sum(axis=-1) - T.tensor(
            np.full(u.shape[:-1], 0.5 * u.shape[-1] * LOG_2PI)
        )
        squash_corr = np.log(1.0 - np.tanh(u) ** 2 + 1e-9).sum(axis=-1)
        return base - T.tensor(squash_corr)

    @staticmethod
    def entropy(log_std):
        """Base-Gaussian entropy, differentiable via log_std; shape (B,)."""
        d = log_std.data.shape[-1]
        return log_std.sum(axis=-1) + 0.5 * d * (LOG_2PI + 1.0)

    def max_entropy(self):
        return self.action_dim * LOG_STD_HI + 0.5 * self.action_dim * (LOG_2PI + 1.0)


class ManagerPolicy:
    """N skill heads + choice head + two critics on the abstract timescale."""

    def __init__(
        self,
        obs_dim,
        resolutions: ResolutionSet,
        latent_groups=8,
        latent_classes=8,
        hidden=(512, 512, 512, 512),
        rng=None,
    ):
        self.obs_dim = obs_dim
        self.resolutions = resolutions
        self.latent_groups = latent_groups
        self.latent_classes = latent_classes
        gc = latent_groups * latent_classes
        heads = {"choice": resolutions.n, "v_ext": 1, "v_expl": 1}
        for i in range(resolutions.n):
            heads[f"skill{i}"] = gc
        self.mlp = Mlp(
            "manager",
            MlpSpec(obs_dim, hidden, heads, zero_init_heads=tuple(heads)),
            rng if rng is not None else np.random.default_rng(0),
        )
        self.params = self.mlp.params

    def zero_grad(self):
        self.mlp.zero_grad()

    def skill_dist(self, feats, i) -> CatMixture:
        logits = self.mlp.head(f"skill{i}", feats)
        b = logits.data.shape[0]
        return CatMixture(logits.reshape((b, self.latent_groups, self.latent_classes)))

    def choice_dist(self, feats) -> CatMixture:
        logits = self.mlp.head("choice", feats)
        return CatMixture(logits.reshape((logits.data.shape[0], 1, self.resolutions.n)))

    def values(self, feats):
        v_ext = self.mlp.head("v_ext", feats)
        v_expl = self.mlp.head("v_expl", feats)
        b = v_ext.data.shape[0]
        return v_ext.reshape((b,)), v_expl.reshape((b,))


def select_subgoal(manager: ManagerPolicy, bank: SkillBank, obs, rng, greedy=False):
    """Alg. 2 subgoal proposal for a batch of states.

    Every skill head samples its latent (ascending head order, then the
    choice head — this fixes rng consumption), every latent is decoded to a
    candidate goal, and the sampled one-hot choice gates exactly one
    candidate through. Returns plain arrays:
    (subgoal (B, d), latents (B, N, G, C), choice one-hot (B, N)).
    """
    if manager.resolutions.n != bank.resolutions.n:
        raise ConfigError("manager and skill bank disagree on the number of resolutions")
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    b = obs.shape[0]
    with T.no_grad():
        feats = manager.mlp.trunk(obs)
        latents = []
        candidates = []
        for i in range(manager.resolutions.n):
            dist = manager.skill_dist(feats, i)
            z = _mode_onehot(dist) if greedy else dist.sample(rng)
            latents.append(z)
            candidates.append(bank.decode(i, obs, T.tensor(z)).data)
        cdist = manager.choice_dist(feats)
        c = (_mode_onehot(cdist) if greedy else cdist.sample(rng)).reshape(b, manager.resolutions.n)
    cand = np.stack(candidates, axis=1)  # (B, N, d)
    subgoal = (cand * c[:, :, None]).sum(axis=1)
    return subgoal, np.stack(latents, axis=1), c


def _mode_onehot(dist: CatMixture):
    p = dist.probs()
    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, p.argmax(axis=-1)[..., None], 1.0, axis=-1)
    return onehot


# ------------------------------------------------------------------ loss plumbing


@dataclass(frozen=True)
class AdvantageConfig:
    w_ext: float = 1.0
    w_expl: float = 0.1
    standardize: bool = True


@dataclass
class AbstractTrajectory:
    """Manager-timescale rollout batch.

    states (B, M+1, d); latents (B, M, N, G, C); choices (B, M, N);
    rewards_ext / rewards_expl (B, M) summed per K-chunk; alive (B, M+1).
    """

    states: np.ndarray
    latents: np.ndarray
    choices: np.ndarray
    rewards_ext: np.ndarray
    rewards_expl: np.ndarray
    alive: Optional[np.ndarray] = None

    def __post_init__(self):
        b, mp1, _ = self.states.shape
        if self.alive is None:
            self.alive = np.ones((b, mp1))
        m = mp1 - 1
        if self.latents.shape[:2] != (b, m) or self.choices.shape[:2] != (b, m):
            raise ConfigError("AbstractTrajectory field shapes disagree")
        if self.rewards_ext.shape != (b, m) or self.rewards_expl.shape != (b, m):
            raise ConfigError("AbstractTrajectory reward shapes disagree")


@dataclass
class WorkerChunk:
    """Worker-timescale rollout batch with one fixed subgoal per row.

    states (B, K+1, d); goal (B, d); actions (B, K, A); alive (B, K+1).
    """

    states: np.ndarray
    goal: np.ndarray
    actions: np.ndarray
    alive: Optional[np.ndarray] = None

    def __post_init__(self):
        b, kp1, _ = self.states.shape
        if self.alive is None:
            self.alive = np.ones((b, kp1))
        if self.actions.shape[0] != b or self.actions.shape[1] != kp1 - 1:
            raise ConfigError("WorkerChunk actions must have shape (B, K, A)")
        if self.goal.shape != (b, self.states.shape[2]):
            raise ConfigError("WorkerChunk goal must have shape (B, d)")


def standardized(a, mask):
    """Zero-mean unit-variance over masked entries; masked-out entries -> 0."""
    n = mask.sum()
    if n < 2:
        return a * mask
    mean = (a * mask).sum() / n
    var = (((a - mean) ** 2) * mask).sum() / n
    return (a - mean) / np.sqrt(var + 1e-8) * mask


def _stream_advantage(values_np, rewards, alive, lam_cfg):
    """Masked lambda-returns and raw advantages for one reward stream."""
    v = values_np * alive
    r = rewards * alive[:, :-1]
    returns = lambda_returns(r, v, lam_cfg)
    return returns, returns - v[:, :-1]


def manager_losses(
    manager: ManagerPolicy,
    traj: AbstractTrajectory,
    coeffs: Dict[str, float],
    lam_cfg: LambdaReturnConfig = LambdaReturnConfig(),
    adv_cfg: AdvantageConfig = AdvantageConfig(),
):
    """All manager losses for one batch of abstract trajectories.

    ``coeffs`` maps head name ("choice", "skill0", ...) to its entropy
    coefficient. Returns ({loss name: scalar Tensor}, stats). Losses are
    summed over abstract steps and averaged over the batch; advantages are
    constants to the graph.
    """
    b, mp1, d = traj.states.shape
    m = mp1 - 1
    alive = traj.alive
    alive_pg = alive[:, :m]

    # Bootstrap values for both streams (no gradient).
    with T.no_grad():
        feats_all = manager.mlp.trunk(traj.states.reshape(b * mp1, d))
        v_ext_np, v_expl_np = (v.data.reshape(b, mp1) for v in manager.values(feats_all))

    g_ext, a_ext = _stream_advantage(v_ext_np, traj.rewards_ext, alive, lam_cfg)
    g_expl, a_expl = _stream_advantage(v_expl_np, traj.rewards_expl, alive, lam_cfg)
    if adv_cfg.standardize:
        a_ext = standardized(a_ext, alive_pg)
        a_expl = standardized(a_expl, alive_pg)
    advantage = (adv_cfg.w_ext * a_ext + adv_cfg.w_expl * a_expl) * alive_pg
    T.assert_finite(advantage, "manager advantages")
    adv_flat = advantage.reshape(b * m)
    alive_flat = alive_pg.reshape(b * m)

    # One differentiable pass over the M decision states.
    feats = manager.mlp.trunk(traj.states[:, :m].reshape(b * m, d))
    losses = {}
    stats = {"v_ext": float(v_ext_np.mean()), "v_expl": float(v_expl_np.mean()),
             "return_ext": float(g_ext.mean()), "return_expl": float(g_expl.mean())}

    cdist = manager.choice_dist(feats)
    lp_c = cdist.log_prob(traj.choices.reshape(b * m, 1, manager.resolutions.n))
    h_c = cdist.entropy()
    pg = (lp_c * T.tensor(adv_flat)).sum()
    ent = (h_c * T.tensor(alive_flat)).sum()
    losses["choice"] = (pg + ent * coeffs["choice"]) * (-1.0 / b)
    stats["entropy/choice"] = float((h_c.data * alive_flat).sum() / max(alive_flat.sum(), 1))

    for i in range(manager.resolutions.n):
        dist = manager.skill_dist(feats, i)
        lp = dist.log_prob(traj.latents[:, :, i].reshape(b * m, manager.latent_groups,
                                                         manager.latent_classes))
        h = dist.entropy()
        gate = traj.choices[:, :, i].reshape(b * m) * alive_flat
        pg = (lp * T.tensor(adv_flat * traj.choices[:, :, i].reshape(b * m))).sum()
        ent = (h * T.tensor(alive_flat)).sum()
        losses[f"skill{i}"] = (pg + ent * coeffs[f"skill{i}"]) * (-1.0 / b)
        stats[f"entropy/skill{i}"] = float((h.data * alive_flat).sum() / max(alive_flat.sum(), 1))
        stats[f"gate_share/skill{i}"] = float(gate.sum() / max(alive_flat.sum(), 1))

    v_ext_t, v_expl_t = manager.values(feats)
    for name, v_t, g in (("v_ext", v_ext_t, g_ext), ("v_expl", v_expl_t, g_expl)):
        err = v_t - T.tensor(g.reshape(b * m))
        losses[name] = ((err * err) * T.tensor(alive_flat)).sum() * (1.0 / b)
    return losses, stats


def worker_losses(
    worker: WorkerPolicy,
    chunk: WorkerChunk,
    coeff: float,
    lam_cfg: LambdaReturnConfig = LambdaReturnConfig(),
    standardize: bool = True,
):
    """Actor, critic, and entropy losses for a batch of fixed-goal chunks.

    Rewards are cosine_max(s_{t+1}, s_g). Returns ({"actor": ..., "critic":
    ...}, stats); same summation convention as the manager.
    """
    b, kp1, d = chunk.states.shape
    k = kp1 - 1
    alive = chunk.alive
    alive_pg = alive[:, :k]

    rewards = cosine_max_reward(chunk.states[:, 1:], chunk.goal[:, None, :]) * alive_pg

    goals_rep = np.repeat(chunk.goal[:, None, :], k, axis=1).reshape(b * k, d)
    obs = chunk.states[:, :k].reshape(b * k, d)
    mean, log_std, value = worker.forward(obs, goals_rep)
    with T.no_grad():
        _, _, v_last = worker.forward(chunk.states[:, k], chunk.goal)

    values_np = np.concatenate([value.data.reshape(b, k), v_last.data.reshape(b, 1)], axis=1)
    returns = lambda_returns(rewards, values_np * alive, lam_cfg)
    advantage = (returns - values_np[:, :k] * alive_pg) * alive_pg
    if standardize:
        advantage = standardized(advantage, alive_pg)
    T.assert_finite(advantage, "worker advantages")
    adv_flat = advantage.reshape(b * k)
    alive_flat = alive_pg.reshape(b * k)

    lp = worker.log_prob(mean, log_std, chunk.actions.reshape(b * k, -1))
    h = worker.entropy(log_std)
    actor = ((lp * T.tensor(adv_flat)).sum() + (h * T.tensor(alive_flat)).sum() * coeff) * (
        -1.0 / b
    )
    err = value - T.tensor(returns.reshape(b * k))
    critic = ((err * err) * T.tensor(alive_flat)).sum() * (1.0 / b)
    stats = {
        "entropy/worker": float((h.data * alive_flat).sum() / max(alive_flat.sum(), 1)),
        "reward_mean": float((rewards.sum() / max(alive_pg.sum(), 1))),
        "return_mean": float(returns.mean()),
    }
    return {"actor": actor, "critic": critic}, stats


# ------------------------------------------------------------ entropy control


@dataclass(frozen=True)
class EntropyConfig:
    eta: float = 0.5
    kappa: float = 0.01
    lo: float = 1e-5
    hi: float = 1.0


def entropy_coeff_update(coeff, entropy, h_max, cfg: EntropyConfig = EntropyConfig()):
    """Multiplicative controller toward the target entropy eta * h_max."""
    if h_max <= 0:
        raise ConfigError("h_max must be positive")
    scale = math.exp(cfg.kappa * (cfg.eta * h_max - entropy) / h_max)
    return float(np.clip(coeff * scale, cfg.lo, cfg.hi))
