"""Episode replay buffer with boundary-safe segment sampling.

Episodes stream in step by step; sampling returns contiguous state segments
that never cross an episode boundary. Each stored state carries the
environment snapshot taken at that state so policy-optimization rollouts can
restart the world mid-episode. Short episodes are padded at the tail (alive
mask 0) so every segment has the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .common import ConfigError, UsageError

__all__ = ["Episode", "ReplaySegment", "ReplayBuffer"]


@dataclass
class Episode:
    """One trajectory: S states, S-1 actions/rewards, a snapshot per state."""

    episode_id: int
    states: List[np.ndarray] = field(default_factory=list)
    snapshots: List[dict] = field(default_factory=list)
    actions: List[np.ndarray] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    terminated: bool = False  # the final stored state is terminal
    open: bool = True  # still receiving steps

    def __len__(self):
        return len(self.states)

    @property
    def steps(self):
        return len(self.actions)


@dataclass
class ReplaySegment:
    """A fixed-length window of one episode, padded past the terminal state.

    ``alive[t]`` is 1 while state t is real and non-terminal; the terminal
    state and any padding repeat-states carry 0. ``n_real`` counts the states
    actually observed (including a terminal state), so ``states[:n_real]``
    is the unpadded trajectory piece.
    """

    episode_id: int
    start_index: int
    states: np.ndarray  # (S, d)
    actions: np.ndarray  # (S-1, A)
    rewards: np.ndarray  # (S-1,)
    alive: np.ndarray  # (S,)
    n_real: int
    start_snapshot: dict


class ReplayBuffer:
    """Ring of episodes bounded by a total step budget."""

    def __init__(self, capacity_steps=200_000, segment_states=65):
        if capacity_steps < segment_states:
            raise ConfigError("replay capacity smaller than one segment")
        if segment_states < 2:
            raise ConfigError("segments need at least two states")
        self.capacity_steps = int(capacity_steps)
        self.segment_states = int(segment_states)
        self.episodes: List[Episode] = []
        self.total_steps = 0  # actions currently stored
        self.steps_added = 0  # lifetime counter (monotone)
        self._next_episode_id = 0

    # -- writing -------------------------------------------------------------

    def start_episode(self, obs, snapshot) -> Episode:
        ep = Episode(self._next_episode_id)
        self._next_episode_id += 1
        ep.states.append(np.asarray(obs, dtype=np.float64).copy())
        ep.snapshots.append(dict(snapshot))
        self.episodes.append(ep)
        return ep

    def add_step(self, ep: Episode, action, reward, obs, snapshot, done):
        if not ep.open:
            raise UsageError("add_step() on a closed episode")
        ep.actions.append(np.asarray(action, dtype=np.float64).copy())
        ep.rewards.append(float(reward))
        ep.states.append(np.asarray(obs, dtype=np.float64).copy())
        ep.snapshots.append(dict(snapshot))
        self.total_steps += 1
        self.steps_added += 1
        if done:
            ep.terminated = True
            ep.open = False
        self._evict()

    def close_episode(self, ep: Episode):
        """Mark an episode truncated (no terminal state) and stop writing."""
        ep.open = False

    def _evict(self):
        while self.total_steps > self.capacity_steps and len(self.episodes) > 1:
            oldest = self.episodes[0]
            if oldest.open:
                break  # never drop an episode still being written
            self.episodes.pop(0)
            self.total_steps -= oldest.steps

    # -- reading ---------------------------------------------------------------

    def _sampleable(self):
        # An episode can be sampled once it spans a full segment, or once it
        # has terminated (short terminated episodes are padded).
        out = []
        for ep in self.episodes:
            if len(ep) >= self.segment_states or (ep.terminated and len(ep) >= 2):
                out.append(ep)
        return out

    def ready(self, batch_size):
        return len(self._sampleable()) > 0 and batch_size >= 1

    def sample_segment(self, rng) -> ReplaySegment:
        pool = self._sampleable()
        if not pool:
            raise UsageError("replay buffer has no sampleable episode yet")
        weights = np.array([max(len(ep) - self.segment_states + 1, 1) for ep in pool], dtype=np.float64)
        ep = pool[rng.choice(len(pool), p=weights / weights.sum())]
        max_start = max(len(ep) - self.segment_states, 0)
        start = int(rng.integers(0, max_start + 1))
        return self._cut(ep, start)

    def sample_batch(self, rng, batch_size):
        return [self.sample_segment(rng) for _ in range(batch_size)]

    def _cut(self, ep: Episode, start) -> ReplaySegment:
        s = self.segment_states
        avail = len(ep) - start
        n_real = min(avail, s)
        d = ep.states[0].shape[0]
        a_dim = ep.actions[0].shape[0] if ep.actions else 0
        states = np.empty((s, d))
        actions = np.zeros((s - 1, a_dim))
        rewards = np.zeros(s - 1)
        alive = np.zeros(s)
        for j in range(n_real):
            states[j] = ep.states[start + j]
        states[n_real:] = states[n_real - 1]  # pad by repeating the last state
        n_act = min(avail - 1, s - 1)
        for j in range(n_act):
            actions[j] = ep.actions[start + j]
            rewards[j] = ep.rewards[start + j]
        alive[:n_real] = 1.0
        if ep.terminated and start + n_real == len(ep):
            alive[n_real - 1] = 0.0  # the terminal state itself is not alive
        return ReplaySegment(
            episode_id=ep.episode_id,
            start_index=start,
            states=states,
            actions=actions,
            rewards=rewards,
            alive=alive,
            n_real=n_real,
            start_snapshot=dict(ep.snapshots[start]),
        )

    # -- persistence -----------------------------------------------------------

    def state_arrays(self, prefix="replay"):
        """Episode contents as checkpointable arrays (paired with meta())."""
        out = {
            f"{prefix}/counters": np.array(
                [self.total_steps, self.steps_added, self._next_episode_id],
                dtype=np.int64,
            )
        }
        for idx, ep in enumerate(self.episodes):
            out[f"{prefix}/ep{idx}/states"] = np.stack(ep.states)
            if ep.actions:
                out[f"{prefix}/ep{idx}/actions"] = np.stack(ep.actions)
                out[f"{prefix}/ep{idx}/rewards"] = np.asarray(ep.rewards, dtype=np.float64)
        return out

    def meta(self):
        """JSON-safe sidecar: ids, flags, and env snapshots per episode."""
        return {
            "capacity_steps": self.capacity_steps,
            "segment_states": self.segment_states,
            "episodes": [
                {
                    "episode_id": ep.episode_id,
                    "terminated": ep.terminated,
                    "open": ep.open,
                    "snapshots": [_snapshot_to_json(s) for s in ep.snapshots],
                }
                for ep in self.episodes
            ],
        }

    @classmethod
    def from_saved(cls, arrays, meta, prefix="replay"):
        buf = cls(meta["capacity_steps"], meta["segment_states"])
        counters = arrays[f"{prefix}/counters"]
        buf.total_steps = int(counters[0])
        buf.steps_added = int(counters[1])
        buf._next_episode_id = int(counters[2])
        for idx, ep_meta in enumerate(meta["episodes"]):
            ep = Episode(int(ep_meta["episode_id"]))
            ep.terminated = bool(ep_meta["terminated"])
            ep.open = bool(ep_meta["open"])
            states = arrays[f"{prefix}/ep{idx}/states"]
            ep.states = [states[j].copy() for j in range(states.shape[0])]
            if f"{prefix}/ep{idx}/actions" in arrays:
                acts = arrays[f"{prefix}/ep{idx}/actions"]
                rews = arrays[f"{prefix}/ep{idx}/rewards"]
                ep.actions = [acts[j].copy() for j in range(acts.shape[0])]
                ep.rewards = [float(r) for r in rews]
            ep.snapshots = [_snapshot_from_json(s) for s in ep_meta["snapshots"]]
            if len(ep.snapshots) != len(ep.states):
                raise ConfigError(f"replay episode {idx}: snapshot/state count mismatch")
            buf.episodes.append(ep)
        return buf


def _snapshot_to_json(snap):
    out = {}
    for k, v in snap.items():
        if isinstance(v, np.ndarray):
            out[k] = {"__nd__": v.tolist()}
        elif isinstance(v, (np.integer,)):
            out[k] = int(v)
        elif isinstance(v, (np.floating,)):
            out[k] = float(v)
        else:
            out[k] = v
    return out


def _snapshot_from_json(snap):
    out = {}
    for k, v in snap.items():
        if isinstance(v, dict) and "__nd__" in v:
            out[k] = np.asarray(v["__nd__"], dtype=np.float64)
        else:
            out[k] = v
    return out
