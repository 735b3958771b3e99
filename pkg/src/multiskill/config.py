"""Run configuration: defaults, key=value files, and command-line overrides.

A run is configured from three layers, later layers winning: built-in
defaults, an optional flat ``key = value`` text file, and ``key=value``
override strings (typically from the command line). The resolved
configuration is echoed verbatim to ``config.resolved.txt`` in the output
directory so every run records the exact hyperparameters it used.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Tuple

from .common import ConfigError
from .skills import INF, ResolutionSet

__all__ = [
    "TrainConfig",
    "parse_kv_text",
    "parse_resolutions",
    "format_value",
]


def parse_resolutions(text):
    """Parse "64,32,16,8,inf" into a tuple of horizons (inf allowed last)."""
    out = []
    for tok in str(text).split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        if tok in ("inf", "infinity"):
            out.append(INF)
        else:
            try:
                out.append(int(tok))
            except ValueError:
                raise ConfigError(f"bad resolution entry {tok!r}") from None
    if not out:
        raise ConfigError("skill_resolutions must not be empty")
    return tuple(out)


def _parse_int_tuple(text):
    try:
        return tuple(int(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"bad integer list {text!r}") from None


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


@dataclass(frozen=True)
class TrainConfig:
    """Every agent hyperparameter plus run identity and desk-scale knobs."""

    # Core agent hyperparameters (the canonical defaults).
    train_batch_size: int = 16
    replay_data_length: int = 64
    worker_abstraction_length: int = 8  # K: steps between manager decisions
    imagination_horizon: int = 16  # T: policy-optimization rollout length
    return_lambda: float = 0.95
    return_discount: float = 0.99
    skill_resolutions: Tuple[float, ...] = (64, 32, 16, 8, INF)
    target_entropy: float = 0.5
    kl_loss_weight: float = 1.0
    learning_rate: float = 1e-4
    adam_epsilon: float = 1e-6
    weight_decay: float = 1e-2
    mlp_sizes: Tuple[int, ...] = (512, 512, 512, 512)
    train_every: int = 8
    parallel_envs: int = 4

    # Run identity.
    env_id: str = "corridor"
    total_steps: int = 100_000
    seed: int = 0
    out_dir: str = "runs/run0"

    # Desk-scale extras (not part of the canonical hyperparameter table).
    agent: str = "mrs"  # "mrs" or "flat" (worker only, random subgoals)
    latent_groups: int = 8
    latent_classes: int = 8
    free_bits: float = 1.0
    entropy_kappa: float = 0.01
    entropy_coeff_init: float = 0.1
    entropy_coeff_floor: float = 1e-5
    advantage_weight_ext: float = 1.0
    advantage_weight_expl: float = 0.1
    replay_capacity: int = 200_000
    skill_pairs_cap: int = 256  # per-resolution ELBO minibatch cap (0 = all)
    eval_every: int = 10_000
    eval_episodes: int = 10
    checkpoint_every: int = 0  # env steps between full checkpoints (0 = final only)
    choice_window: int = 1000
    episode_len: int = 0  # 0 = environment default
    log_every: int = 50  # train iterations between metrics records

    def __post_init__(self):
        if self.train_batch_size < 1:
            raise ConfigError("train_batch_size must be >= 1")
        if self.replay_data_length < 1:
            raise ConfigError("replay_data_length must be >= 1")
        if self.worker_abstraction_length < 1:
            raise ConfigError("worker_abstraction_length must be >= 1")
        if self.imagination_horizon % self.worker_abstraction_length != 0:
            raise ConfigError(
                "imagination_horizon must be a multiple of worker_abstraction_length"
            )
        if not 0.0 <= self.return_lambda <= 1.0:
            raise ConfigError("return_lambda must lie in [0, 1]")
        if not 0.0 < self.return_discount < 1.0:
            raise ConfigError("return_discount must lie in (0, 1)")
        if self.learning_rate <= 0 or self.adam_epsilon <= 0:
            raise ConfigError("learning_rate and adam_epsilon must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if not self.mlp_sizes or any(w < 1 for w in self.mlp_sizes):
            raise ConfigError("mlp_sizes needs positive widths")
        if self.train_every < 1 or self.parallel_envs < 1:
            raise ConfigError("train_every and parallel_envs must be >= 1")
        if self.agent not in ("mrs", "flat"):
            raise ConfigError(f"unknown agent kind {self.agent!r}")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")
        if self.replay_capacity < self.replay_data_length + 1:
            raise ConfigError("replay_capacity smaller than one segment")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        if self.choice_window < 1:
            raise ConfigError("choice_window must be >= 1")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")
        if self.entropy_coeff_init <= 0:
            raise ConfigError("entropy_coeff_init must be positive")
        if not 0.0 < self.entropy_coeff_floor <= self.entropy_coeff_init:
            raise ConfigError(
                "entropy_coeff_floor must be positive and no larger than entropy_coeff_init"
            )
        # Validates multiples-of-K, ordering, and the trailing-infinity rule.
        self.resolution_set()
        object.__setattr__(self, "skill_resolutions", tuple(self.skill_resolutions))
        object.__setattr__(self, "mlp_sizes", tuple(int(w) for w in self.mlp_sizes))

    def resolution_set(self) -> ResolutionSet:
        return ResolutionSet(tuple(self.skill_resolutions), k=self.worker_abstraction_length)

    # -- construction --------------------------------------------------------

    @classmethod
    def field_names(cls):
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_dict(cls, values):
        """Build a config from string (or already-typed) values by field name."""
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, known[key].type)
        return cls(**kwargs)

    @classmethod
    def from_sources(cls, file_text=None, overrides=()):
        values = {}
        if file_text is not None:
            values.update(parse_kv_text(file_text))
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, _, val = item.partition("=")
            values[key.strip()] = val.strip()
        return cls.from_dict(values)

    # -- echo ----------------------------------------------------------------

    def resolved_text(self):
        lines = ["# resolved run configuration"]
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _coerce(key, raw, annotation):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if key == "skill_resolutions":
        return parse_resolutions(text)
    if key == "mlp_sizes":
        return _parse_int_tuple(text)
    ann = str(annotation)
    try:
        if "bool" in ann:
            return _parse_bool(text)
        if "int" in ann:
            return int(text)
        if "float" in ann:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for config key {key!r}") from None
    return text


def format_value(value):
    if isinstance(value, tuple):
        return ",".join("inf" if v == INF else str(int(v)) for v in value)
    if isinstance(value, float):
        if value == math.inf:
            return "inf"
        return repr(value)
    return str(value)


def parse_kv_text(text):
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, val = body.partition("=")
        key, val = key.strip(), val.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val
    return values
