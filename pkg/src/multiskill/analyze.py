"""Post-hoc run analyses: choice-share time series and cluster purity.

Choice shares summarize which resolution head the manager picked over the
course of training. Purity clusters evaluation states with k-means and
measures how well the active choice label segregates state space: the
fraction of points in each cluster carrying the cluster's dominant label.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_score

from .common import ConfigError, UsageError
from .config import TrainConfig

__all__ = [
    "AnalysisOutput",
    "PurityResult",
    "load_choice_events",
    "load_labeled_states",
    "choice_shares",
    "purity_score",
    "analyze_purity",
    "analyze_run",
]

KMEANS_RESTARTS = 10
KMEANS_SEED = 0
DEFAULT_K_RANGE = range(2, 13)
MAX_PURITY_STATES = 4000


@dataclass
class PurityResult:
    purity: float
    k: int
    n_states: int
    labels: List[str]
    assignments: np.ndarray  # (M,) cluster index per state
    dominant: List[Tuple[str, int, int]]  # per cluster: (label, count, size)
    silhouettes: Dict[int, float] = field(default_factory=dict)


@dataclass
class AnalysisOutput:
    window_starts: np.ndarray  # (W,)
    window_size: int
    shares: np.ndarray  # (W, L) rows sum to 1
    share_labels: List[str]
    purity: Optional[PurityResult]


def load_choice_events(path) -> Tuple[np.ndarray, np.ndarray]:
    """(steps, choices) arrays from a ``choices.csv`` event log."""
    steps, choices = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            steps.append(int(row["step"]))
            choices.append(int(row["choice"]))
    return np.asarray(steps, dtype=np.int64), np.asarray(choices, dtype=np.int64)


def load_labeled_states(path) -> Tuple[np.ndarray, np.ndarray]:
    """(states, labels) from an ``eval_choices.csv`` state log."""
    states, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [c for c in (reader.fieldnames or []) if c.startswith("s") and c[1:].isdigit()]
        cols.sort(key=lambda c: int(c[1:]))
        if not cols:
            raise UsageError(f"{path} has no state columns")
        for row in reader:
            states.append([float(row[c]) for c in cols])
            labels.append(int(row["choice"]))
    return np.asarray(states, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def choice_shares(steps, choices, window, labels: Optional[Sequence[int]] = None):
    """Normalized per-window histograms of choice events.

    Windows of ``window`` steps tile [0, max step]; empty windows are
    dropped so every returned row sums to one.
    """
    steps = np.asarray(steps, dtype=np.int64)
    choices = np.asarray(choices, dtype=np.int64)
    if steps.shape != choices.shape:
        raise UsageError("steps and choices must align")
    if window <= 0:
        raise ConfigError("window must be positive")
    if labels is None:
        labels = sorted(set(choices.tolist()))
    labels = list(labels)
    if steps.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, len(labels))), labels
    index = {c: j for j, c in enumerate(labels)}
    n_windows = int(steps.max() // window) + 1
    counts = np.zeros((n_windows, len(labels)))
    for s, c in zip(steps, choices):
        if c not in index:
            raise UsageError(f"choice label {c} not in label set {labels}")
        counts[s // window, index[c]] += 1
    totals = counts.sum(axis=1)
    keep = totals > 0
    shares = counts[keep] / totals[keep, None]
    starts = (np.nonzero(keep)[0] * window).astype(np.int64)
    return starts, shares, labels


def purity_score(assignments, labels) -> float:
    """Fraction of points sharing their cluster's dominant label."""
    assignments = np.asarray(assignments)
    labels = np.asarray(labels)
    if assignments.shape != labels.shape or assignments.size == 0:
        raise UsageError("assignments and labels must be equal-length and nonempty")
    dominant_total = 0
    for c in np.unique(assignments):
        _, counts = np.unique(labels[assignments == c], return_counts=True)
        dominant_total += int(counts.max())
    return dominant_total / labels.size


def analyze_purity(
    states,
    labels,
    k_range=DEFAULT_K_RANGE,
    restarts=KMEANS_RESTARTS,
    seed=KMEANS_SEED,
    label_names: Optional[Dict[int, str]] = None,
) -> PurityResult:
    """Cluster standardized states and score label purity.

    k-means runs for every candidate k; the k with the greatest silhouette
    score wins, ties broken toward smaller k. Purity is the summed dominant
    label count over clusters divided by the number of states.
    """
    states = np.asarray(states, dtype=np.float64)
    labels = np.asarray(labels)
    if states.ndim != 2 or states.shape[0] != labels.shape[0]:
        raise UsageError("states must be (M, d) with one label per row")
    m = states.shape[0]
    ks = [int(k) for k in k_range if 2 <= int(k) < m]
    if not ks:
        raise ConfigError(f"need more than {min(k_range, default=2)} states, got {m}")
    mean = states.mean(axis=0)
    std = states.std(axis=0)
    std[std == 0] = 1.0
    z = (states - mean) / std

    best = None  # (silhouette, k, assignments)
    silhouettes: Dict[int, float] = {}
    for k in sorted(ks):
        km = KMeans(n_clusters=k, n_init=restarts, random_state=seed)
        assign = km.fit_predict(z)
        if len(np.unique(assign)) < 2:
            continue
        score = float(silhouette_score(z, assign))
        silhouettes[k] = score
        if best is None or score > best[0]:
            best = (score, k, assign)
    if best is None:
        raise ConfigError("k-means produced no valid clustering")
    _, k, assign = best

    names = label_names or {}
    dominant = []
    for c in range(k):
        in_c = labels[assign == c]
        vals, counts = np.unique(in_c, return_counts=True)
        top = int(np.argmax(counts))
        dominant.append((names.get(int(vals[top]), str(vals[top])), int(counts[top]), int(in_c.size)))
    label_list = [names.get(int(v), str(v)) for v in np.unique(labels)]
    return PurityResult(
        purity=purity_score(assign, labels),
        k=k,
        n_states=m,
        labels=label_list,
        assignments=assign,
        dominant=dominant,
        silhouettes=silhouettes,
    )


def _choice_label_names(run_dir) -> Dict[int, str]:
    """Map manager head index -> resolution name from the run manifest."""
    manifest = os.path.join(run_dir, "config.resolved.txt")
    if not os.path.exists(manifest):
        return {}
    with open(manifest) as fh:
        cfg = TrainConfig.from_sources(fh.read(), ())
    names = {i: name for i, name in enumerate(cfg.resolution_set().names)}
    names[-1] = "flat"
    return names


def analyze_run(run_dir, window: Optional[int] = None, k_range=DEFAULT_K_RANGE) -> AnalysisOutput:
    """Analyze one training run directory; writes share/purity artifacts.

    Produces ``choice_shares.csv`` (per-window resolution shares) always and
    ``purity.txt`` when the run logged labeled evaluation states.
    """
    choices_path = os.path.join(run_dir, "choices.csv")
    if not os.path.exists(choices_path):
        raise UsageError(f"no choices.csv under {run_dir}")
    names = _choice_label_names(run_dir)
    if window is None:
        manifest = os.path.join(run_dir, "config.resolved.txt")
        window = 1000
        if os.path.exists(manifest):
            with open(manifest) as fh:
                window = TrainConfig.from_sources(fh.read(), ()).choice_window
    steps, choices = load_choice_events(choices_path)
    starts, shares, labels = choice_shares(steps, choices, window)
    share_names = [names.get(c, str(c)) for c in labels]

    with open(os.path.join(run_dir, "choice_shares.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_start", "window_end", *share_names])
        for s0, row in zip(starts, shares):
            writer.writerow([int(s0), int(s0) + window, *[f"{v:.6f}" for v in row]])

    purity = None
    eval_path = os.path.join(run_dir, "eval_choices.csv")
    if os.path.exists(eval_path):
        states, state_labels = load_labeled_states(eval_path)
        if states.shape[0] > MAX_PURITY_STATES:
            idx = np.random.default_rng(KMEANS_SEED).choice(
                states.shape[0], MAX_PURITY_STATES, replace=False
            )
            idx.sort()
            states, state_labels = states[idx], state_labels[idx]
        purity = analyze_purity(states, state_labels, k_range=k_range, label_names=names)
        lines = [
            f"purity: {purity.purity:.6f}",
            f"k: {purity.k}",
            f"n_states: {purity.n_states}",
            f"labels: {','.join(purity.labels)}",
        ]
        for c, (label, count, size) in enumerate(purity.dominant):
            lines.append(f"cluster {c}: dominant={label} count={count} size={size}")
        with open(os.path.join(run_dir, "purity.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")

    return AnalysisOutput(
        window_starts=starts,
        window_size=int(window),
        shares=shares,
        share_labels=share_names,
        purity=purity,
    )
