import pytest

from labelloop.config import (
    ConfigError,
    RunConfig,
    parse_config,
    serialize_config,
)


def test_empty_config_gets_paper_defaults():
    cfg = parse_config("")
    assert cfg.ssl.alpha == 0.9
    assert cfg.ssl.beta == 0.05
    assert cfg.ssl.mu == 1.0
    assert cfg.aus.tau == 1.0
    assert cfg.bus.m == 20
    assert cfg.optimizer.momentum == 0.9
    assert cfg.optimizer.learning_rate == 0.03
    assert cfg.optimizer.weight_decay == 5e-4
    assert cfg.optimizer.batch_size == 64
    assert cfg.loop.ip_fraction == 0.10
    assert cfg.loop.max_cycles == 30


def test_alpha_range_violation_names_key_path():
    with pytest.raises(ConfigError) as err:
        parse_config("ssl:\n  alpha: 1.5\n")
    assert err.value.path == "ssl.alpha"


def test_unknown_key_rejected_with_path():
    with pytest.raises(ConfigError) as err:
        parse_config("loop:\n  bogus: 3\n")
    assert err.value.path == "loop.bogus"
    with pytest.raises(ConfigError) as err:
        parse_config("nonsense: {}\n")
    assert err.value.path == "nonsense"


def test_type_errors_have_paths():
    with pytest.raises(ConfigError) as err:
        parse_config("optimizer:\n  batch_size: huge\n")
    assert err.value.path == "optimizer.batch_size"
    with pytest.raises(ConfigError) as err:
        parse_config("loop:\n  random_sampling: 1\n")
    assert err.value.path == "loop.random_sampling"


def test_round_trip_is_idempotent():
    text = """
seed: 42
dataset:
  kind: gaussians
  n: 500
  n_classes: 3
  class_ratio: [5.0, 3.0, 2.0]
  noise_sigma: 1.2
loop:
  max_cycles: 4
  k: 10
  budget_fraction: 0.15
  random_sampling: false
ssl:
  alpha: 0.85
  beta: 0.1
aus:
  n_t: 2
"""
    cfg = parse_config(text)
    once = serialize_config(cfg)
    again = serialize_config(parse_config(once))
    assert once == again
    assert parse_config(once) == cfg


def test_variant_flag_exclusivity():
    with pytest.raises(ConfigError):
        parse_config("loop:\n  random_sampling: true\n  disable_aus: true\n")
    with pytest.raises(ConfigError):
        parse_config("loop:\n  disable_aus: true\n  disable_bus: true\n")
    cfg = parse_config("loop:\n  random_sampling: true\n")
    assert cfg.loop.random_sampling


def test_t_max_defaults_to_half_of_planned_steps():
    cfg = parse_config("loop:\n  steps_per_cycle: 100\n  max_cycles: 3\n")
    assert cfg.t_max() == 200  # 100 * (3 + 1) / 2
    cfg2 = parse_config("ssl:\n  t_max: 777\n")
    assert cfg2.t_max() == 777


def test_k_per_selector_resolution():
    cfg = parse_config("loop:\n  k_fraction: 0.025\n")
    assert cfg.k_per_selector(2000) == 50
    cfg2 = parse_config("loop:\n  k: 7\n")
    assert cfg2.k_per_selector(2000) == 7


def test_budget_resolution():
    cfg = parse_config("loop:\n  budget_fraction: 0.2\n")
    assert cfg.budget(2100) == 420


def test_dataset_validation_routed():
    with pytest.raises(ConfigError) as err:
        parse_config("dataset:\n  kind: cubes\n")
    assert err.value.path == "dataset"


def test_invalid_yaml_rejected():
    with pytest.raises(ConfigError):
        parse_config("loop: [unclosed\n")
    with pytest.raises(ConfigError):
        parse_config("- just\n- a list\n")
