"""Precision-smoothness toy simulation.

A point agent tracks noisy subgoals sampled from future positions on a fixed
path. Short lookaheads follow turns tightly but amplify subgoal noise into
heading jitter; long lookaheads smooth the noise but cut corners. The
contextual agent switches lookahead from the local path curvature ahead,
which is the phenomenon motivating multi-resolution skill selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .common import ConfigError

__all__ = [
    "PathSpec",
    "ToyAgentSpec",
    "SimResult",
    "build_path",
    "simulate_agent",
    "path_metrics",
    "run_sweep",
]

ARC_POINTS = 256  # polyline resolution per half-circle of the S-curve


class PathSpec:
    """A polyline path with arc-length lookup and discrete curvature."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ConfigError("a path needs at least two 2-d waypoints")
        seg = pts[1:] - pts[:-1]
        seg_len = np.linalg.norm(seg, axis=1)
        if np.any(seg_len <= 0):
            raise ConfigError("path waypoints must be distinct")
        self.points = pts
        self._seg = seg
        self._seg_len = seg_len
        self._cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        # Signed curvature at interior vertices: turn angle over mean
        # adjacent segment length. Endpoints carry zero curvature.
        kappa = np.zeros(pts.shape[0])
        if pts.shape[0] > 2:
            headings = np.arctan2(seg[:, 1], seg[:, 0])
            turn = _wrap_angle(headings[1:] - headings[:-1])
            kappa[1:-1] = turn / (0.5 * (seg_len[:-1] + seg_len[1:]))
        self._kappa = kappa

    @property
    def total_length(self) -> float:
        return float(self._cum[-1])

    def _locate(self, s):
        s = float(np.clip(s, 0.0, self.total_length))
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(max(i, 0), len(self._seg) - 1)
        frac = (s - self._cum[i]) / self._seg_len[i]
        return i, frac

    def point_at(self, s) -> np.ndarray:
        i, frac = self._locate(s)
        return self.points[i] + frac * self._seg[i]

    def tangent_at(self, s) -> np.ndarray:
        i, _ = self._locate(s)
        return self._seg[i] / self._seg_len[i]

    def curvature_at(self, s) -> float:
        """Signed curvature of the vertex nearest to arc position ``s``.

        Curvature lives at vertices (turn angle over mean adjacent segment
        length) and a query snaps to the nearest vertex, so a corner is
        visible from up to half a segment away on either side. On densely
        sampled arcs this converges to the true local curvature.
        """
        s = float(np.clip(s, 0.0, self.total_length))
        return float(self._kappa[int(np.argmin(np.abs(self._cum - s)))])

    def project(self, pos) -> Tuple[float, float]:
        """(arc position, distance) of the closest path point to ``pos``."""
        pos = np.asarray(pos, dtype=np.float64)
        d = pos - self.points[:-1]
        t = np.clip((d * self._seg).sum(axis=1) / self._seg_len**2, 0.0, 1.0)
        near = self.points[:-1] + t[:, None] * self._seg
        dist2 = ((pos - near) ** 2).sum(axis=1)
        i = int(np.argmin(dist2))
        return float(self._cum[i] + t[i] * self._seg_len[i]), float(math.sqrt(dist2[i]))


def build_path(kind, scale=1.0) -> PathSpec:
    """Deterministic benchmark geometry: ``two_turn`` or ``s_curve``."""
    if scale <= 0:
        raise ConfigError("path scale must be positive")
    if kind == "two_turn":
        a = 10.0 * scale
        return PathSpec([(0.0, 0.0), (a, 0.0), (a, a), (2 * a, a)])
    if kind == "s_curve":
        r = 5.0 * scale
        t = np.linspace(0.0, math.pi, ARC_POINTS + 1)
        left = np.stack([r * np.sin(t), r - r * np.cos(t)], axis=1)
        right = np.stack([-r * np.sin(t), 3 * r - r * np.cos(t)], axis=1)
        return PathSpec(np.concatenate([left, right[1:]], axis=0))
    raise ConfigError(f"unknown path kind {kind!r}")


@dataclass(frozen=True)
class ToyAgentSpec:
    """Subgoal-tracking agent with a fixed or curvature-switched lookahead."""

    kind: str  # "short" | "long" | "contextual"
    d_short: float = 1.0
    d_long: float = 5.0
    noise: float = 0.3
    speed: float = 0.25
    gain: float = 0.5
    curvature_threshold: float = 0.1

    def __post_init__(self):
        if self.kind not in ("short", "long", "contextual"):
            raise ConfigError(f"unknown agent kind {self.kind!r}")
        if not 0 < self.d_short < self.d_long:
            raise ConfigError("lookaheads must satisfy 0 < d_short < d_long")
        if self.noise < 0 or self.speed <= 0:
            raise ConfigError("noise must be >= 0 and speed > 0")
        if not 0 < self.gain <= 1:
            raise ConfigError("steering gain must lie in (0, 1]")
        if self.curvature_threshold <= 0:
            raise ConfigError("curvature threshold must be positive")

    def lookahead(self, path: PathSpec, s: float) -> float:
        """The active lookahead at arc position ``s`` (geometry only)."""
        if self.kind == "short":
            return self.d_short
        if self.kind == "long":
            return self.d_long
        ahead = abs(path.curvature_at(s + self.d_long))
        return self.d_short if ahead > self.curvature_threshold else self.d_long


@dataclass
class SimResult:
    """One rollout: positions (N+1, 2), per-tick subgoals/horizons/headings."""

    positions: np.ndarray
    subgoals: np.ndarray
    horizons: np.ndarray
    headings: np.ndarray
    path_error: float = math.nan
    heading_variance: float = math.nan


def simulate_agent(agent: ToyAgentSpec, path: PathSpec, seed, ticks=100) -> SimResult:
    """Track noisy subgoals along ``path`` for ``ticks`` steps.

    Each tick projects the agent onto the path, samples the subgoal at the
    active lookahead ahead (plus isotropic noise), turns the heading toward
    it by the proportional gain, and advances at constant speed. The
    lookahead switch never sees the noise, only the path geometry.
    """
    if ticks <= 0:
        raise ConfigError("ticks must be positive")
    rng = np.random.default_rng(seed)
    pos = path.point_at(0.0).copy()
    tangent = path.tangent_at(0.0)
    heading = math.atan2(tangent[1], tangent[0])

    positions = np.zeros((ticks + 1, 2))
    subgoals = np.zeros((ticks, 2))
    horizons = np.zeros(ticks)
    headings = np.zeros(ticks)
    positions[0] = pos
    for t in range(ticks):
        s, _ = path.project(pos)
        d = agent.lookahead(path, s)
        target = path.point_at(s + d) + rng.normal(0.0, agent.noise, size=2)
        desired = math.atan2(target[1] - pos[1], target[0] - pos[0])
        heading = heading + agent.gain * _wrap_angle(desired - heading)
        pos = pos + agent.speed * np.array([math.cos(heading), math.sin(heading)])
        positions[t + 1] = pos
        subgoals[t] = target
        horizons[t] = d
        headings[t] = heading
    result = SimResult(positions, subgoals, horizons, headings)
    result.path_error, result.heading_variance = path_metrics(result, path)
    return result


def path_metrics(result: SimResult, path: PathSpec):
    """(total path error, heading variance) for a finished rollout.

    Total path error is the mean perpendicular distance of the per-tick
    positions from the path; heading variance is the circular variance of
    per-tick heading changes.
    """
    positions = result.positions[1:]
    if positions.shape[0] == 0:
        raise ConfigError("path_metrics needs a nonempty trajectory")
    error = float(np.mean([path.project(p)[1] for p in positions]))
    changes = np.diff(result.headings)
    if changes.size == 0:
        return error, 0.0
    resultant = np.hypot(np.mean(np.cos(changes)), np.mean(np.sin(changes)))
    return error, float(1.0 - resultant)


def run_sweep(agent: ToyAgentSpec, path: PathSpec, seeds, ticks=100):
    """Per-seed metrics rows: (seed, path error, heading variance, short share)."""
    rows = []
    for seed in seeds:
        res = simulate_agent(agent, path, seed, ticks)
        short_share = float(np.mean(res.horizons == agent.d_short))
        rows.append((int(seed), res.path_error, res.heading_variance, short_share))
    return rows


def _wrap_angle(a):
    return (np.asarray(a) + math.pi) % (2 * math.pi) - math.pi
