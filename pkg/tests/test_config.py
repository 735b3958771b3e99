import math

import pytest

from multiskill.common import ConfigError
from multiskill.config import TrainConfig, parse_kv_text, parse_resolutions
from multiskill.skills import INF


def test_defaults_match_reference_table():
    cfg = TrainConfig()
    assert cfg.train_batch_size == 16
    assert cfg.replay_data_length == 64
    assert cfg.worker_abstraction_length == 8
    assert cfg.imagination_horizon == 16
    assert cfg.return_lambda == 0.95
    assert cfg.return_discount == 0.99
    assert cfg.skill_resolutions == (64, 32, 16, 8, INF)
    assert cfg.target_entropy == 0.5
    assert cfg.kl_loss_weight == 1.0
    assert cfg.learning_rate == 1e-4
    assert cfg.adam_epsilon == 1e-6
    assert cfg.weight_decay == 1e-2
    assert cfg.mlp_sizes == (512, 512, 512, 512)
    assert cfg.train_every == 8
    assert cfg.parallel_envs == 4


def test_entropy_coeff_init_parse_and_validation():
    cfg = TrainConfig.from_sources(overrides=["entropy_coeff_init=0.001"])
    assert cfg.entropy_coeff_init == 0.001
    assert TrainConfig().entropy_coeff_init == 0.1
    with pytest.raises(ConfigError):
        TrainConfig(entropy_coeff_init=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(entropy_coeff_init=-0.2)


def test_entropy_coeff_floor_parse_and_validation():
    cfg = TrainConfig.from_sources(overrides=["entropy_coeff_floor=0.001"])
    assert cfg.entropy_coeff_floor == 0.001
    assert TrainConfig().entropy_coeff_floor == 1e-5
    with pytest.raises(ConfigError):
        TrainConfig(entropy_coeff_floor=0.0)
    with pytest.raises(ConfigError):  # floor above the initial value
        TrainConfig(entropy_coeff_floor=0.2, entropy_coeff_init=0.1)


def test_kv_parsing():
    text = """
    # a comment
    train_batch_size = 4   # trailing comment
    env_id = maze

    seed=7
    """
    values = parse_kv_text(text)
    assert values == {"train_batch_size": "4", "env_id": "maze", "seed": "7"}


def test_kv_parse_errors():
    with pytest.raises(ConfigError):
        parse_kv_text("not an assignment")
    with pytest.raises(ConfigError):
        parse_kv_text("a=1\na=2")
    with pytest.raises(ConfigError):
        parse_kv_text("= 3")


def test_overrides_beat_file():
    cfg = TrainConfig.from_sources(
        file_text="seed = 3\ntotal_steps = 100",
        overrides=["seed=9", "out_dir=/tmp/xyz"],
    )
    assert cfg.seed == 9
    assert cfg.total_steps == 100
    assert cfg.out_dir == "/tmp/xyz"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        TrainConfig.from_sources(file_text="no_such_knob = 1")


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        TrainConfig.from_sources(file_text="train_batch_size = abc")
    with pytest.raises(ConfigError):
        TrainConfig.from_sources(overrides=["return_lambda=maybe"])
    with pytest.raises(ConfigError):
        TrainConfig.from_sources(overrides=["badshape"])


def test_resolution_parsing():
    assert parse_resolutions("64,32,16,8,inf") == (64, 32, 16, 8, INF)
    assert parse_resolutions("8") == (8,)
    assert parse_resolutions(" 16 , inf ") == (16, INF)
    with pytest.raises(ConfigError):
        parse_resolutions("8.5")
    with pytest.raises(ConfigError):
        parse_resolutions("")


def test_validation():
    with pytest.raises(ConfigError):
        TrainConfig(imagination_horizon=12)  # not a multiple of K=8
    with pytest.raises(ConfigError):
        TrainConfig(agent="nonsense")
    with pytest.raises(ConfigError):
        TrainConfig(return_lambda=1.5)
    with pytest.raises(ConfigError):
        TrainConfig(skill_resolutions=(12,))  # not a multiple of K
    with pytest.raises(ConfigError):
        TrainConfig(replay_capacity=10)


def test_resolved_text_round_trips():
    cfg = TrainConfig.from_sources(
        overrides=["skill_resolutions=16,8,inf", "mlp_sizes=32,32", "seed=5"]
    )
    text = cfg.resolved_text()
    assert "skill_resolutions = 16,8,inf" in text
    assert "mlp_sizes = 32,32" in text
    again = TrainConfig.from_sources(file_text=text)
    assert again == cfg


def test_resolution_set_uses_k():
    cfg = TrainConfig.from_sources(
        overrides=["worker_abstraction_length=4", "imagination_horizon=16",
                   "skill_resolutions=8,4,inf"]
    )
    rs = cfg.resolution_set()
    assert rs.k == 4
    assert rs.lengths == (8, 4, math.inf)
