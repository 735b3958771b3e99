"""Training orchestration: acting, rollouts, updates, and persistence.

The training loop interleaves experience collection across a fixed set of
parallel environment instances with one training iteration per
``train_every`` collected steps. A training iteration updates the skill bank
on replayed segments, rolls fresh on-policy trajectories for policy
optimization, and applies the manager and worker losses.

Policy-optimization rollouts go through the ``EnvModel`` interface. Here it
replays the real environment from stored state snapshots; a learned dynamics
model could replace it by implementing ``imagine`` with the same signature.
"""

from __future__ import annotations

import json
import logging
import math
import os
from collections import deque
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import tensor as T
from .checkpoint import load_arrays, load_into_params, params_to_arrays, save_arrays
from .common import ConfigError
from .config import TrainConfig
from .envs import EnvConfig, make_env
from .hierarchy import (
    AbstractTrajectory,
    AdvantageConfig,
    EntropyConfig,
    LambdaReturnConfig,
    ManagerPolicy,
    WorkerChunk,
    WorkerPolicy,
    entropy_coeff_update,
    manager_losses,
    select_subgoal,
    worker_losses,
)
from .optim import Adam, AdamConfig
from .replay import ReplayBuffer, _snapshot_from_json, _snapshot_to_json
from .skills import (
    SkillBank,
    SkillConfig,
    exploratory_reward,
    extract_pairs,
    skill_elbo_loss,
)

log = logging.getLogger(__name__)

STATE_FILE = "state.json"
STATE_VERSION = 1


# --------------------------------------------------------------------- acting


@dataclass
class AgentState:
    """Carry-over between environment steps: (t, s_{t-1}, a_{t-1}, s_g)."""

    t: int = 0
    prev_obs: Optional[np.ndarray] = None
    prev_action: Optional[np.ndarray] = None
    subgoal: Optional[np.ndarray] = None
    choice_index: int = -1


class MrsPolicy:
    """Full hierarchical policy: gated multi-head manager over skill decoders."""

    def __init__(self, manager: ManagerPolicy, worker: WorkerPolicy, bank: SkillBank, k: int):
        self.manager = manager
        self.worker = worker
        self.bank = bank
        self.k = int(k)

    def subgoals(self, obs, rng, greedy=False):
        return select_subgoal(self.manager, self.bank, obs, rng, greedy=greedy)

    def actions(self, obs, goals, rng, greedy=False):
        return self.worker.act(obs, goals, rng, greedy=greedy)


class FlatPolicy:
    """Worker-only baseline: subgoals are random perturbations of the state."""

    def __init__(self, worker: WorkerPolicy, k: int, sigma: float = 1.0):
        self.worker = worker
        self.k = int(k)
        self.sigma = float(sigma)

    def subgoals(self, obs, rng, greedy=False):
        del greedy  # the baseline has no mode; goals are always random
        goals = obs + self.sigma * rng.standard_normal(np.shape(obs))
        return goals, None, None

    def actions(self, obs, goals, rng, greedy=False):
        return self.worker.act(obs, goals, rng, greedy=greedy)


def collect_policy_step(state: AgentState, obs, policy, rng, greedy=False):
    """One acting step: refresh the subgoal every K steps, then act.

    Returns (action, new state, choice event). The choice event is the index
    of the selected skill head on refresh steps (-1 for the flat baseline)
    and None on non-refresh steps.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if state.t % policy.k == 0:
        goals, _, choice = policy.subgoals(obs[None, :], rng, greedy=greedy)
        subgoal = goals[0]
        choice_index = int(np.argmax(choice[0])) if choice is not None else -1
        event = choice_index
    else:
        subgoal = state.subgoal
        choice_index = state.choice_index
        event = None
    action = policy.actions(obs[None, :], subgoal[None, :], rng, greedy=greedy)[0]
    new_state = AgentState(
        t=state.t + 1,
        prev_obs=obs,
        prev_action=action,
        subgoal=subgoal,
        choice_index=choice_index,
    )
    return action, new_state, event


# ------------------------------------------------------------------- rollouts


@dataclass
class ImaginedBatch:
    """A batch of on-policy rollouts used purely for policy optimization."""

    states: np.ndarray  # (B, T+1, d)
    actions: np.ndarray  # (B, T, A)
    rewards: np.ndarray  # (B, T) extrinsic, unmasked
    alive: np.ndarray  # (B, T+1)
    goals: np.ndarray  # (B, M, d) subgoal per abstract step
    latents: Optional[np.ndarray]  # (B, M, N, G, C); None for flat policies
    choices: Optional[np.ndarray]  # (B, M, N); None for flat policies


class EnvModel:
    """Rollout source backed by snapshot-restored environment clones.

    This deliberately uses the true dynamics as the "model": rollouts start
    from replayed states and follow the current policy. Environments that
    terminate mid-rollout are frozen in place with alive mask 0.
    """

    def __init__(self, env_config: EnvConfig):
        self.env_config = env_config
        self._pool: list = []

    def _envs(self, n):
        while len(self._pool) < n:
            self._pool.append(make_env(self.env_config))
        return self._pool[:n]

    def imagine(self, policy, snapshots, horizon, rng) -> ImaginedBatch:
        b = len(snapshots)
        if b == 0:
            raise ConfigError("imagine() needs at least one start snapshot")
        if horizon % policy.k != 0:
            raise ConfigError("rollout horizon must be a multiple of K")
        envs = self._envs(b)
        d, a_dim = envs[0].obs_dim, envs[0].action_dim
        obs = np.zeros((b, d))
        live = np.zeros(b)
        for i, (env, snap) in enumerate(zip(envs, snapshots)):
            env.restore_state(snap)
            obs[i] = env.observe()
            live[i] = 0.0 if env.done else 1.0
        states = np.zeros((b, horizon + 1, d))
        actions = np.zeros((b, horizon, a_dim))
        rewards = np.zeros((b, horizon))
        alive = np.zeros((b, horizon + 1))
        states[:, 0] = obs
        alive[:, 0] = live
        goals, latents, choices = [], [], []
        goal_now = None
        for t in range(horizon):
            if t % policy.k == 0:
                goal_now, z, c = policy.subgoals(obs, rng)
                goals.append(goal_now)
                latents.append(z)
                choices.append(c)
            acts = policy.actions(obs, goal_now, rng)
            actions[:, t] = acts
            for i, env in enumerate(envs):
                if live[i] == 0.0:
                    continue  # frozen after termination; obs repeats
                res = env.step(acts[i])
                obs[i] = res.obs
                rewards[i, t] = res.reward
                if res.done:
                    live[i] = 0.0
            states[:, t + 1] = obs
            alive[:, t + 1] = live
        return ImaginedBatch(
            states=states,
            actions=actions,
            rewards=rewards,
            alive=alive,
            goals=np.stack(goals, axis=1),
            latents=None if latents[0] is None else np.stack(latents, axis=1),
            choices=None if choices[0] is None else np.stack(choices, axis=1),
        )


# -------------------------------------------------------------------- trainer


class Trainer:
    """Owns all learnable state plus environments, replay, and counters."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.out_dir = cfg.out_dir
        os.makedirs(self.out_dir, exist_ok=True)
        with open(os.path.join(self.out_dir, "config.resolved.txt"), "w") as fh:
            fh.write(cfg.resolved_text())

        env_cfg = EnvConfig(env_id=cfg.env_id, episode_len=cfg.episode_len or None)
        self.envs = [make_env(env_cfg) for _ in range(cfg.parallel_envs)]
        self.eval_env = make_env(env_cfg)
        self.model = EnvModel(env_cfg)
        obs_dim = self.envs[0].obs_dim
        action_dim = self.envs[0].action_dim
        self.resolutions = cfg.resolution_set()

        names = ["init", "collect", "train", "imagine", "eval"] + [
            f"env{i}" for i in range(cfg.parallel_envs)
        ]
        seqs = np.random.SeedSequence(cfg.seed).spawn(len(names))
        self.rngs = {name: np.random.default_rng(seq) for name, seq in zip(names, seqs)}

        init_rng = self.rngs["init"]
        self.bank = SkillBank(
            SkillConfig(
                obs_dim=obs_dim,
                hidden=cfg.mlp_sizes,
                latent_groups=cfg.latent_groups,
                latent_classes=cfg.latent_classes,
                beta=cfg.kl_loss_weight,
                free_bits=cfg.free_bits,
            ),
            self.resolutions,
            init_rng,
        )
        self.manager = ManagerPolicy(
            obs_dim,
            self.resolutions,
            latent_groups=cfg.latent_groups,
            latent_classes=cfg.latent_classes,
            hidden=cfg.mlp_sizes,
            rng=init_rng,
        )
        self.worker = WorkerPolicy(obs_dim, action_dim, hidden=cfg.mlp_sizes, rng=init_rng)

        adam_cfg = AdamConfig(
            lr=cfg.learning_rate, eps=cfg.adam_epsilon, weight_decay=cfg.weight_decay
        )
        self.opt = {
            "skills": Adam(self.bank.params, adam_cfg),
            "manager": Adam(self.manager.params, adam_cfg),
            "worker": Adam(self.worker.params, adam_cfg),
        }

        self.replay = ReplayBuffer(cfg.replay_capacity, cfg.replay_data_length + 1)
        if cfg.agent == "mrs":
            self.policy = MrsPolicy(
                self.manager, self.worker, self.bank, cfg.worker_abstraction_length
            )
        else:
            self.policy = FlatPolicy(self.worker, cfg.worker_abstraction_length)

        self.lam_cfg = LambdaReturnConfig(lam=cfg.return_lambda, gamma=cfg.return_discount)
        self.adv_cfg = AdvantageConfig(
            w_ext=cfg.advantage_weight_ext, w_expl=cfg.advantage_weight_expl
        )
        self.ent_cfg = EntropyConfig(
            eta=cfg.target_entropy, kappa=cfg.entropy_kappa, lo=cfg.entropy_coeff_floor
        )
        self._coeff_names = ["worker", "choice"] + [
            f"skill{i}" for i in range(self.resolutions.n)
        ]
        self.coeffs = {name: cfg.entropy_coeff_init for name in self._coeff_names}

        self.env_steps = 0
        self.train_iters = 0
        self.numeric_failures = 0
        self.episodes_done = 0
        n = cfg.parallel_envs
        self.obs: List[Optional[np.ndarray]] = [None] * n
        self.agent_states: List[AgentState] = [AgentState() for _ in range(n)]
        self.episodes = [None] * n  # open replay episodes per env
        self.ep_returns = [0.0] * n
        self.ep_lens = [0] * n
        self.ep_success = [False] * n
        self.choice_window = deque(maxlen=cfg.choice_window)
        self._metrics_fh = None
        self._choices_fh = None
        self._eval_rows_fh = None

    # -- small helpers ---------------------------------------------------------

    @property
    def _is_mrs(self):
        return self.cfg.agent == "mrs"

    def _choice_hist(self):
        n = self.resolutions.n
        counts = np.zeros(n)
        for c in self.choice_window:
            if 0 <= c < n:
                counts[c] += 1
        total = counts.sum()
        return (counts / total).tolist() if total > 0 else counts.tolist()

    def _write_metrics(self, record):
        if self._metrics_fh is not None:
            self._metrics_fh.write(json.dumps(record) + "\n")
            self._metrics_fh.flush()

    def _write_choice(self, step, env_idx, choice):
        if self._choices_fh is not None:
            self._choices_fh.write(f"{step},{env_idx},{choice}\n")

    def _open_outputs(self):
        if self._metrics_fh is None:
            self._metrics_fh = open(os.path.join(self.out_dir, "metrics.jsonl"), "a")
        if self._choices_fh is None:
            path = os.path.join(self.out_dir, "choices.csv")
            fresh = not os.path.exists(path) or os.path.getsize(path) == 0
            self._choices_fh = open(path, "a")
            if fresh:
                self._choices_fh.write("step,env,choice\n")
        if self._eval_rows_fh is None:
            path = os.path.join(self.out_dir, "eval_choices.csv")
            fresh = not os.path.exists(path) or os.path.getsize(path) == 0
            self._eval_rows_fh = open(path, "a")
            if fresh:
                d = self.envs[0].obs_dim
                cols = ",".join(f"s{j}" for j in range(d))
                self._eval_rows_fh.write(f"step,episode,t,choice,{cols}\n")

    def close(self):
        for fh in (self._metrics_fh, self._choices_fh, self._eval_rows_fh):
            if fh is not None:
                fh.close()
        self._metrics_fh = self._choices_fh = self._eval_rows_fh = None

    # -- collection ------------------------------------------------------------

    def act_round(self):
        """Step every parallel environment once, in fixed order."""
        for i, env in enumerate(self.envs):
            if self.episodes[i] is None or env.done:
                seed = int(self.rngs[f"env{i}"].integers(2**63))
                obs = env.reset(seed)
                self.obs[i] = obs
                self.episodes[i] = self.replay.start_episode(obs, env.clone_state())
                self.agent_states[i] = AgentState()
                self.ep_returns[i] = 0.0
                self.ep_lens[i] = 0
                self.ep_success[i] = False
            action, self.agent_states[i], event = collect_policy_step(
                self.agent_states[i], self.obs[i], self.policy, self.rngs["collect"]
            )
            res = env.step(action)
            self.replay.add_step(
                self.episodes[i], action, res.reward, res.obs, env.clone_state(), res.done
            )
            self.obs[i] = res.obs
            self.env_steps += 1
            self.ep_returns[i] += res.reward
            self.ep_lens[i] += 1
            if res.info.get("success"):
                self.ep_success[i] = True
            if event is not None:
                self.choice_window.append(event)
                self._write_choice(self.env_steps, i, event)
            if res.done:
                self.episodes_done += 1
                self._write_metrics(
                    {
                        "kind": "episode",
                        "step": self.env_steps,
                        "env": i,
                        "return": self.ep_returns[i],
                        "length": self.ep_lens[i],
                        "success": self.ep_success[i],
                    }
                )

    # -- training ----------------------------------------------------------------

    def train_iteration(self):
        cfg = self.cfg
        if not self.replay.ready(cfg.train_batch_size):
            return {
                "kind": "train",
                "status": "not-ready",
                "step": self.env_steps,
                "iter": self.train_iters,
            }
        self.train_iters += 1
        record = {
            "kind": "train",
            "status": "ok",
            "step": self.env_steps,
            "iter": self.train_iters,
            "replay_steps": self.replay.total_steps,
        }
        segments = self.replay.sample_batch(self.rngs["train"], cfg.train_batch_size)
        try:
            if self._is_mrs:
                self._update_skills(segments, record)
            batch = self.model.imagine(
                self.policy,
                [seg.start_snapshot for seg in segments],
                cfg.imagination_horizon,
                self.rngs["imagine"],
            )
            self._update_policies(batch, record)
        except T.NumericError as err:
            self.numeric_failures += 1
            record["status"] = "numeric-failure"
            record["error"] = str(err)
            log.warning("train iteration %d skipped: %s", self.train_iters, err)
        record["numeric_failures"] = self.numeric_failures
        record["choice_hist"] = self._choice_hist()
        for name in self._coeff_names:
            record[f"coeff/{name}"] = self.coeffs[name]
        return record

    def _update_skills(self, segments, record):
        cfg = self.cfg
        pairs_by_res = {}
        for i in range(self.resolutions.n):
            pairs = []
            for seg in segments:
                pairs.extend(extract_pairs(seg.states[: seg.n_real], self.resolutions, i))
            cap = cfg.skill_pairs_cap
            if cap and len(pairs) > cap:
                keep = self.rngs["train"].choice(len(pairs), size=cap, replace=False)
                pairs = [pairs[j] for j in keep]
            pairs_by_res[i] = pairs
        loss, stats = skill_elbo_loss(self.bank, pairs_by_res, self.rngs["train"])
        if loss is not None:
            self.bank.zero_grad()
            loss.backward()
            record["skills/applied"] = bool(self.opt["skills"].step())
        for key, val in stats.items():
            record[f"skills/{key}"] = val

    def _update_policies(self, batch: ImaginedBatch, record):
        cfg = self.cfg
        k = cfg.worker_abstraction_length
        horizon = cfg.imagination_horizon
        m = horizon // k
        b = batch.states.shape[0]
        d = batch.states.shape[-1]
        alive_src = batch.alive[:, :-1]
        r_ext = batch.rewards * alive_src

        if self._is_mrs and self.resolutions.finite_indices:
            s0 = np.repeat(batch.states[:, :1], horizon, axis=1).reshape(b * horizon, d)
            st = batch.states[:, 1:].reshape(b * horizon, d)
            r_expl = exploratory_reward(self.bank, s0, st, self.rngs["train"])
            r_expl = r_expl.reshape(b, horizon) * alive_src
        else:
            r_expl = np.zeros_like(r_ext)
        record["expl_reward_mean"] = float(r_expl.sum() / max(alive_src.sum(), 1.0))
        record["ext_reward_mean"] = float(r_ext.sum() / max(alive_src.sum(), 1.0))

        if self._is_mrs:
            traj = AbstractTrajectory(
                states=batch.states[:, ::k],
                latents=batch.latents,
                choices=batch.choices,
                rewards_ext=r_ext.reshape(b, m, k).sum(axis=-1),
                rewards_expl=r_expl.reshape(b, m, k).sum(axis=-1),
                alive=batch.alive[:, ::k],
            )
            mcoeffs = {"choice": self.coeffs["choice"]}
            for i in range(self.resolutions.n):
                mcoeffs[f"skill{i}"] = self.coeffs[f"skill{i}"]
            mlosses, mstats = manager_losses(
                self.manager, traj, mcoeffs, self.lam_cfg, self.adv_cfg
            )
            total = None
            for part in mlosses.values():
                total = part if total is None else total + part
            self.manager.zero_grad()
            total.backward()
            record["manager/applied"] = bool(self.opt["manager"].step())
            for name, tensor in mlosses.items():
                record[f"manager/loss_{name}"] = float(tensor.data)
            for key, val in mstats.items():
                record[f"manager/{key}"] = val
            if self.resolutions.n > 1:
                self.coeffs["choice"] = entropy_coeff_update(
                    self.coeffs["choice"],
                    mstats["entropy/choice"],
                    math.log(self.resolutions.n),
                    self.ent_cfg,
                )
            skill_h_max = cfg.latent_groups * math.log(cfg.latent_classes)
            for i in range(self.resolutions.n):
                self.coeffs[f"skill{i}"] = entropy_coeff_update(
                    self.coeffs[f"skill{i}"],
                    mstats[f"entropy/skill{i}"],
                    skill_h_max,
                    self.ent_cfg,
                )

        chunk_states, chunk_goals, chunk_actions, chunk_alive = [], [], [], []
        for j in range(m):
            chunk_states.append(batch.states[:, j * k : (j + 1) * k + 1])
            chunk_alive.append(batch.alive[:, j * k : (j + 1) * k + 1])
            chunk_actions.append(batch.actions[:, j * k : (j + 1) * k])
            chunk_goals.append(batch.goals[:, j])
        chunk = WorkerChunk(
            states=np.concatenate(chunk_states, axis=0),
            goal=np.concatenate(chunk_goals, axis=0),
            actions=np.concatenate(chunk_actions, axis=0),
            alive=np.concatenate(chunk_alive, axis=0),
        )
        wlosses, wstats = worker_losses(
            self.worker, chunk, self.coeffs["worker"], self.lam_cfg
        )
        total = wlosses["actor"] + wlosses["critic"]
        self.worker.zero_grad()
        total.backward()
        record["worker/applied"] = bool(self.opt["worker"].step())
        record["worker/loss_actor"] = float(wlosses["actor"].data)
        record["worker/loss_critic"] = float(wlosses["critic"].data)
        for key, val in wstats.items():
            record[f"worker/{key}"] = val
        self.coeffs["worker"] = entropy_coeff_update(
            self.coeffs["worker"],
            wstats["entropy/worker"],
            self.worker.max_entropy(),
            self.ent_cfg,
        )

    # -- evaluation --------------------------------------------------------------

    def evaluate(self, episodes=None, record_states=True):
        """Mean return over greedy episodes (mode actions, argmax choices)."""
        n = episodes or self.cfg.eval_episodes
        returns, lengths = [], []
        successes = 0
        rows = []
        for e in range(n):
            seed = int(self.rngs["eval"].integers(2**63))
            obs = self.eval_env.reset(seed)
            state = AgentState()
            ep_return, steps, success = 0.0, 0, False
            while True:
                action, state, event = collect_policy_step(
                    state, obs, self.policy, self.rngs["eval"], greedy=True
                )
                if event is not None and record_states:
                    rows.append((e, steps, event, np.asarray(obs, dtype=np.float64)))
                res = self.eval_env.step(action)
                obs = res.obs
                ep_return += res.reward
                steps += 1
                success = success or bool(res.info.get("success"))
                if res.done:
                    break
            returns.append(ep_return)
            lengths.append(steps)
            successes += int(success)
        if rows and self._eval_rows_fh is not None:
            for e, t, choice, vec in rows:
                vals = ",".join(repr(float(v)) for v in vec)
                self._eval_rows_fh.write(f"{self.env_steps},{e},{t},{choice},{vals}\n")
            self._eval_rows_fh.flush()
        return {
            "kind": "eval",
            "step": self.env_steps,
            "episodes": n,
            "return_mean": float(np.mean(returns)),
            "return_std": float(np.std(returns)),
            "length_mean": float(np.mean(lengths)),
            "success_rate": successes / n,
        }

    # -- the outer loop ------------------------------------------------------------

    def run(self):
        cfg = self.cfg
        self._open_outputs()
        last_train = self.env_steps // cfg.train_every
        last_eval = self.env_steps // cfg.eval_every
        last_ckpt = (
            self.env_steps // cfg.checkpoint_every if cfg.checkpoint_every > 0 else 0
        )
        final_eval = None
        while self.env_steps < cfg.total_steps:
            self.act_round()
            while self.env_steps // cfg.train_every > last_train:
                last_train += 1
                record = self.train_iteration()
                if (
                    record["status"] != "ok"
                    or record["iter"] % cfg.log_every == 0
                    or record["iter"] == 1
                ):
                    self._write_metrics(record)
            if self.env_steps // cfg.eval_every > last_eval:
                last_eval = self.env_steps // cfg.eval_every
                final_eval = self.evaluate()
                self._write_metrics(final_eval)
            if cfg.checkpoint_every > 0 and self.env_steps // cfg.checkpoint_every > last_ckpt:
                last_ckpt = self.env_steps // cfg.checkpoint_every
                self.save_checkpoint()
        if cfg.total_steps > 0:
            final_eval = self.evaluate()
            self._write_metrics(final_eval)
            ckpt = self.save_checkpoint()
            summary = {
                "kind": "summary",
                "step": self.env_steps,
                "train_iters": self.train_iters,
                "episodes": self.episodes_done,
                "numeric_failures": self.numeric_failures,
                "checkpoint": ckpt,
                "final_return_mean": final_eval["return_mean"],
                "final_success_rate": final_eval["success_rate"],
                "choice_hist": self._choice_hist(),
            }
            self._write_metrics(summary)
        else:
            summary = {
                "kind": "summary",
                "step": 0,
                "train_iters": 0,
                "episodes": 0,
                "numeric_failures": 0,
                "checkpoint": None,
                "final_return_mean": None,
                "final_success_rate": None,
                "choice_hist": self._choice_hist(),
            }
        self.close()
        return summary

    # -- persistence -----------------------------------------------------------------

    def save_checkpoint(self, directory=None, full=True):
        path = directory or os.path.join(self.out_dir, f"ckpt-{self.env_steps}")
        os.makedirs(path, exist_ok=True)
        arrays = {}
        arrays.update(params_to_arrays(self.bank.params, "skills/"))
        arrays.update(params_to_arrays(self.manager.params, "manager/"))
        arrays.update(params_to_arrays(self.worker.params, "worker/"))
        for name, opt in self.opt.items():
            arrays.update(opt.state_arrays(f"opt/{name}"))
        arrays["counters"] = np.array(
            [self.env_steps, self.train_iters, self.numeric_failures, self.episodes_done],
            dtype=np.int64,
        )
        arrays["coeffs"] = np.array(
            [self.coeffs[name] for name in self._coeff_names], dtype=np.float64
        )
        if full:
            arrays.update(self.replay.state_arrays("replay"))
        save_arrays(path, arrays)

        state = {
            "version": STATE_VERSION,
            "full": bool(full),
            "config": self.cfg.resolved_text(),
            "coeff_names": self._coeff_names,
            "rng": {name: gen.bit_generator.state for name, gen in self.rngs.items()},
            "agent_states": [_agent_to_json(s) for s in self.agent_states],
            "env_snapshots": [_snapshot_to_json(env.clone_state()) for env in self.envs],
            "episode_ids": [
                None if ep is None else ep.episode_id for ep in self.episodes
            ],
            "obs": [None if o is None else np.asarray(o).tolist() for o in self.obs],
            "ep_returns": list(self.ep_returns),
            "ep_lens": list(self.ep_lens),
            "ep_success": list(self.ep_success),
            "choice_window": list(self.choice_window),
            "replay_meta": self.replay.meta() if full else None,
        }
        with open(os.path.join(path, STATE_FILE), "w") as fh:
            json.dump(state, fh)
        return path

    @classmethod
    def from_checkpoint(cls, path):
        with open(os.path.join(path, STATE_FILE)) as fh:
            state = json.load(fh)
        if state.get("version") != STATE_VERSION:
            raise ConfigError(f"unsupported checkpoint state version {state.get('version')!r}")
        cfg = TrainConfig.from_sources(file_text=state["config"])
        trainer = cls(cfg)
        trainer._restore(path, state)
        return trainer

    def _restore(self, path, state):
        arrays = load_arrays(path)
        load_into_params(self.bank.params, arrays, "skills/")
        load_into_params(self.manager.params, arrays, "manager/")
        load_into_params(self.worker.params, arrays, "worker/")
        for name, opt in self.opt.items():
            opt.load_state_arrays(f"opt/{name}", arrays)
        counters = arrays["counters"]
        self.env_steps = int(counters[0])
        self.train_iters = int(counters[1])
        self.numeric_failures = int(counters[2])
        self.episodes_done = int(counters[3])
        for name, value in zip(state["coeff_names"], arrays["coeffs"]):
            self.coeffs[name] = float(value)
        for name, rng_state in state["rng"].items():
            self.rngs[name].bit_generator.state = rng_state
        if state["full"]:
            self.replay = ReplayBuffer.from_saved(arrays, state["replay_meta"])
        by_id = {ep.episode_id: ep for ep in self.replay.episodes}
        self.episodes = [
            None if ep_id is None else by_id[ep_id] for ep_id in state["episode_ids"]
        ]
        self.agent_states = [_agent_from_json(s) for s in state["agent_states"]]
        for env, snap in zip(self.envs, state["env_snapshots"]):
            env.restore_state(_snapshot_from_json(snap))
        self.obs = [
            None if o is None else np.asarray(o, dtype=np.float64) for o in state["obs"]
        ]
        self.ep_returns = [float(v) for v in state["ep_returns"]]
        self.ep_lens = [int(v) for v in state["ep_lens"]]
        self.ep_success = [bool(v) for v in state["ep_success"]]
        self.choice_window = deque(
            [int(c) for c in state["choice_window"]], maxlen=self.cfg.choice_window
        )


def _agent_to_json(state: AgentState):
    def arr(x):
        return None if x is None else np.asarray(x).tolist()

    return {
        "t": state.t,
        "prev_obs": arr(state.prev_obs),
        "prev_action": arr(state.prev_action),
        "subgoal": arr(state.subgoal),
        "choice_index": state.choice_index,
    }


def _agent_from_json(data):
    def arr(x):
        return None if x is None else np.asarray(x, dtype=np.float64)

    return AgentState(
        t=int(data["t"]),
        prev_obs=arr(data["prev_obs"]),
        prev_action=arr(data["prev_action"]),
        subgoal=arr(data["subgoal"]),
        choice_index=int(data["choice_index"]),
    )


def run_experiment(cfg: TrainConfig = None, resume=None):
    """Train to completion; returns the summary record."""
    if resume is not None:
        trainer = Trainer.from_checkpoint(resume)
    elif cfg is not None:
        trainer = Trainer(cfg)
    else:
        raise ConfigError("run_experiment needs a config or a checkpoint to resume")
    return trainer.run()
