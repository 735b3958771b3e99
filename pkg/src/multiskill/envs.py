"""Point-mass environments: a dense-reward corridor and a sparse-reward maze.

Both share the same double-integrator dynamics with velocity damping,

    v' = clamp_norm((v + 0.1 * a) * 0.8,  0.4),   p' = p + v'  (collision-swept)

where ``a`` is the per-component clamped action in [-1, 1]. The walkable
region is a union of axis-aligned rectangles (explicit boxes for the
corridor, floor cells of a text grid for the maze), so collisions resolve
exactly by clamping each axis move into the free interval that contains the
current coordinate — the agent can slide along walls and can never tunnel.

- corridor: centerline (0,0) -> (10,0) -> (10,10) -> (20,10), tube half-width
  1. Reward per step is progress of the centerline projection, minus 0.05 on
  wall contact, clipped to +-0.4 (the maximum speed). Episodes are 400 steps.
- maze: 6x6 rooms of 2x2 unit cells (19x19 grid) with doorway gaps. Reward is
  1 exactly when the agent is inside the goal cell, which also ends the
  episode; otherwise 0. Episodes are at most 500 steps.

Observations are hand-built features: position and velocity (scaled), eight
wall-distance rays (plus the goal offset in the maze). Dynamics are
deterministic given (state, action); the only randomness is the maze's start
jitter at reset. ``clone_state``/``restore_state`` snapshot an episode
mid-flight so training can branch short rollouts from replayed states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .common import ConfigError, UsageError

ACCEL = 0.1      # action-to-velocity coupling per step
DAMP = 0.8       # velocity damping factor per step
VMAX = 0.4       # speed cap (also the fixed point of max thrust)
MARGIN = 1e-9    # agents stay at least this far inside walls
CONTACT_PENALTY = 0.05
RAY_DIRS = np.array(
    [[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1]],
    dtype=np.float64,
)
RAY_DIRS /= np.linalg.norm(RAY_DIRS, axis=1, keepdims=True)
RAY_MAX = 3.0
RAY_STEP = 0.05

CORRIDOR_EPISODE = 400
MAZE_EPISODE = 500

# Corridor tube as axis-aligned boxes (xmin, xmax, ymin, ymax) around the
# centerline (0,0)->(10,0)->(10,10)->(20,10), half-width 1.
CORRIDOR_BOXES = np.array(
    [
        [-1.0, 11.0, -1.0, 1.0],
        [9.0, 11.0, -1.0, 11.0],
        [9.0, 21.0, 9.0, 11.0],
    ]
)
CORRIDOR_WAYPOINTS = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [20.0, 10.0]])

DEFAULT_MAZE = """\
###################
#S.......#........#
#........#........#
#..##....#....##..#
#..##.........##..#
#.................#
#........#........#
#........#........#
#........#........#
####..#######..####
#........#........#
#...GG...#........#
#...GG...#........#
#..##.............#
#..##.............#
#........#....##..#
#........#....##..#
#........#........#
###################
"""


@dataclass(frozen=True)
class EnvConfig:
    """Which environment to build and how long its episodes run."""

    env_id: str = "corridor"
    episode_len: Optional[int] = None  # None -> per-env default
    maze_text: str = DEFAULT_MAZE

    def __post_init__(self):
        if self.env_id not in ("corridor", "maze"):
            raise ConfigError(f"unknown env id {self.env_id!r}")
        if self.episode_len is not None and self.episode_len <= 0:
            raise ConfigError("episode_len must be positive")


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def parse_maze(text):
    """Parse a grid of ``#``/``.``/``S``/``G`` into (floor mask, start, goals).

    Text row ``r`` covers world coordinates y in [r, r+1); column ``c`` covers
    x in [c, c+1). Cells are 1x1 units.
    """
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise ConfigError("empty maze text")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ConfigError("maze rows must all have the same length")
    height = len(rows)
    floor = np.zeros((height, width), dtype=bool)
    start = None
    goals = []
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == "#":
                continue
            elif ch in ".SG":
                floor[r, c] = True
                if ch == "S":
                    if start is not None:
                        raise ConfigError("maze must contain exactly one S")
                    start = (r, c)
                elif ch == "G":
                    goals.append((r, c))
            else:
                raise ConfigError(f"unknown maze character {ch!r} at row {r}, col {c}")
    if start is None:
        raise ConfigError("maze must contain exactly one S")
    if not goals:
        raise ConfigError("maze must contain at least one G")
    if floor[0].any() or floor[-1].any() or floor[:, 0].any() or floor[:, -1].any():
        raise ConfigError("maze border must be all walls")
    return floor, start, goals


def _merge_intervals(intervals):
    intervals = sorted(intervals)
    merged = [list(intervals[0])]
    for lo, hi in intervals[1:]:
        if lo <= merged[-1][1] + 1e-12:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return merged


def _clamp_into(intervals, x0, x1):
    """Clamp a move from x0 to x1 inside the interval containing x0."""
    for lo, hi in intervals:
        if lo - 1e-9 <= x0 <= hi + 1e-9:
            clamped = min(max(x1, lo + MARGIN), hi - MARGIN)
            return clamped, clamped != x1
    raise UsageError(f"position {x0} escaped the walkable region")


class PointEnv:
    """Shared dynamics, collision handling, and observation plumbing."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.t = 0
        self.done = True  # must reset before stepping

    # -- geometry hooks ----------------------------------------------------
    def walkable(self, points):
        """Boolean mask for an (N, 2) array of points."""
        raise NotImplementedError

    def _free_intervals(self, axis, other):
        """Free intervals along ``axis`` when the other coordinate is ``other``."""
        raise NotImplementedError

    # -- episode API --------------------------------------------------------
    @property
    def episode_len(self):
        raise NotImplementedError

    def reset(self, seed):
        raise NotImplementedError

    def step(self, action):
        if self.done:
            raise UsageError("step() called on a finished episode; call reset()")
        action = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
        vel = (self.vel + ACCEL * action) * DAMP
        speed = float(np.hypot(vel[0], vel[1]))
        if speed > VMAX:
            vel = vel * (VMAX / speed)
        pos = self.pos.copy()
        contact = False
        for axis in (0, 1):
            intervals = self._free_intervals(axis, pos[1 - axis])
            new, hit = _clamp_into(intervals, pos[axis], pos[axis] + vel[axis])
            pos[axis] = new
            if hit:
                vel[axis] = 0.0
                contact = True
        self.pos, self.vel = pos, vel
        self.t += 1
        reward, done, info = self._score(contact)
        info["contact"] = contact
        info["t"] = self.t
        if self.t >= self.episode_len:
            done = True
        self.done = done
        return StepResult(self.observe(), reward, done, info)

    def _score(self, contact):
        raise NotImplementedError

    # -- observations ---------------------------------------------------------
    def _rays(self):
        steps = np.arange(1, int(RAY_MAX / RAY_STEP) + 1) * RAY_STEP
        pts = self.pos + RAY_DIRS[:, None, :] * steps[None, :, None]
        free = self.walkable(pts.reshape(-1, 2)).reshape(len(RAY_DIRS), len(steps))
        blocked = ~free
        first = np.where(blocked.any(axis=1), blocked.argmax(axis=1), len(steps) - 1)
        return steps[first] / RAY_MAX

    def _base_obs(self, scale):
        return [self.pos / scale, self.vel / VMAX, self._rays()]

    def observe(self):
        raise NotImplementedError

    # -- snapshots -------------------------------------------------------------
    def clone_state(self):
        return {
            "pos": self.pos.copy(),
            "vel": self.vel.copy(),
            "t": self.t,
            "done": self.done,
        }

    def restore_state(self, state):
        self.pos = state["pos"].copy()
        self.vel = state["vel"].copy()
        self.t = int(state["t"])
        self.done = bool(state["done"])


class CorridorEnv(PointEnv):
    """Dense-reward tube with two 90-degree turns."""

    obs_dim = 12
    action_dim = 2

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.progress = 0.0
        seg = CORRIDOR_WAYPOINTS
        self._seg_a = seg[:-1]
        self._seg_v = seg[1:] - seg[:-1]
        self._seg_len = np.linalg.norm(self._seg_v, axis=1)
        self._seg_cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])

    @property
    def episode_len(self):
        return self.config.episode_len or CORRIDOR_EPISODE

    def walkable(self, points):
        points = np.asarray(points)
        x, y = points[..., 0], points[..., 1]
        ok = np.zeros(x.shape, dtype=bool)
        for xmin, xmax, ymin, ymax in CORRIDOR_BOXES:
            ok |= (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)
        return ok

    def _free_intervals(self, axis, other):
        lo_i, hi_i = (0, 1) if axis == 0 else (2, 3)
        o_lo, o_hi = (2, 3) if axis == 0 else (0, 1)
        hits = [
            (box[lo_i], box[hi_i])
            for box in CORRIDOR_BOXES
            if box[o_lo] <= other <= box[o_hi]
        ]
        if not hits:
            raise UsageError(f"coordinate {other} outside the corridor")
        return _merge_intervals(hits)

    def arc_progress(self, pos):
        """Arc length of the closest centerline point to ``pos``."""
        d = pos - self._seg_a
        t = np.clip((d * self._seg_v).sum(axis=1) / self._seg_len**2, 0.0, 1.0)
        near = self._seg_a + t[:, None] * self._seg_v
        dist2 = ((pos - near) ** 2).sum(axis=1)
        i = int(np.argmin(dist2))
        return float(self._seg_cum[i] + t[i] * self._seg_len[i])

    def reset(self, seed):
        del seed  # corridor start is deterministic: the centerline origin
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.t = 0
        self.done = False
        self.progress = 0.0
        return self.observe()

    def _score(self, contact):
        new_progress = self.arc_progress(self.pos)
        delta = new_progress - self.progress
        self.progress = new_progress
        reward = float(np.clip(delta - CONTACT_PENALTY * contact, -VMAX, VMAX))
        return reward, False, {"progress": new_progress}

    def observe(self):
        return np.concatenate(self._base_obs(scale=20.0))

    def clone_state(self):
        state = super().clone_state()
        state["progress"] = self.progress
        return state

    def restore_state(self, state):
        super().restore_state(state)
        self.progress = float(state["progress"])


class MazeEnv(PointEnv):
    """Sparse-reward multi-room maze read from a text grid."""

    obs_dim = 14
    action_dim = 2

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.floor, self.start_cell, self.goal_cells = parse_maze(config.maze_text)
        self.goal_center = np.array(
            [self.goal_cells[0][1] + 0.5, self.goal_cells[0][0] + 0.5]
        )
        self.scale = float(max(self.floor.shape))

    @property
    def episode_len(self):
        return self.config.episode_len or MAZE_EPISODE

    def walkable(self, points):
        points = np.asarray(points)
        c = np.floor(points[..., 0]).astype(int)
        r = np.floor(points[..., 1]).astype(int)
        h, w = self.floor.shape
        inside = (r >= 0) & (r < h) & (c >= 0) & (c < w)
        ok = np.zeros(points.shape[:-1], dtype=bool)
        ok[inside] = self.floor[r[inside], c[inside]]
        return ok

    def _free_intervals(self, axis, other):
        # Runs of floor cells in the row (or column) containing ``other``.
        idx = int(np.floor(other))
        line = self.floor[idx, :] if axis == 0 else self.floor[:, idx]
        intervals = []
        i = 0
        while i < len(line):
            if line[i]:
                j = i
                while j < len(line) and line[j]:
                    j += 1
                intervals.append((float(i), float(j)))
                i = j
            else:
                i += 1
        if not intervals:
            raise UsageError(f"coordinate {other} is inside a wall row/column")
        return intervals

    def _in_goal(self, pos):
        r, c = int(np.floor(pos[1])), int(np.floor(pos[0]))
        return (r, c) in self.goal_cells

    def reset(self, seed):
        rng = np.random.default_rng(seed)
        r, c = self.start_cell
        self.pos = np.array([c + 0.5, r + 0.5]) + rng.uniform(-0.3, 0.3, size=2)
        self.vel = np.zeros(2)
        self.t = 0
        self.done = False
        return self.observe()

    def _score(self, contact):
        del contact  # maze reward is purely goal hit
        if self._in_goal(self.pos):
            return 1.0, True, {"success": True}
        return 0.0, False, {"success": False}

    def observe(self):
        parts = self._base_obs(scale=self.scale)
        goal_delta = (self.goal_center - self.pos) / self.scale
        return np.concatenate([parts[0], parts[1], goal_delta, parts[2]])


def make_env(config: EnvConfig):
    if config.env_id == "corridor":
        return CorridorEnv(config)
    if config.env_id == "maze":
        return MazeEnv(config)
    raise ConfigError(f"unknown env id {config.env_id!r}")
