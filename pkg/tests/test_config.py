"""Config loading: defaults, nested overrides, strict key checking, and
round-tripping the resolved snapshot."""
import json

import pytest

from pursuitlab.config import (
    ConfigError,
    RunConfig,
    config_to_dict,
    load_config,
    merge_config,
    save_config,
    validate_config,
)


def write(tmp_path, data):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(data), encoding="utf-8")
    return p


def test_defaults_are_valid():
    cfg = RunConfig()
    validate_config(cfg)
    assert cfg.mode == "ippo"
    assert cfg.total_timesteps == 200_000
    assert cfg.hidden_sizes == (256, 256)
    assert cfg.ppo.lr == 1e-4 and cfg.dqn.lr == 5e-5
    assert cfg.dqn.schedule.initial == 0.7


def test_nested_overrides(tmp_path):
    path = write(tmp_path, {
        "mode": "rpt",
        "seed": 11,
        "hidden_sizes": [32, 32],
        "arena": {"grid": 9, "drone_energy": 50},
        "dqn": {"schedule": {"learning_starts": 500}},
    })
    cfg = load_config(path)
    assert cfg.mode == "rpt" and cfg.seed == 11
    assert cfg.hidden_sizes == (32, 32)
    assert cfg.arena.grid == 9 and cfg.arena.drone_energy == 50
    assert cfg.arena.observer_radius == 6  # untouched default
    assert cfg.dqn.schedule.learning_starts == 500
    assert cfg.dqn.schedule.initial == 0.7


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown config key gridd"):
        load_config(write(tmp_path, {"gridd": 9}))
    with pytest.raises(ConfigError, match="unknown config key arena.gird"):
        load_config(write(tmp_path, {"arena": {"gird": 9}}))
    with pytest.raises(ConfigError, match="dqn.schedule.finale"):
        load_config(write(tmp_path, {"dqn": {"schedule": {"finale": 0.1}}}))


def test_type_errors_rejected(tmp_path):
    with pytest.raises(ConfigError, match="seed must be an integer"):
        load_config(write(tmp_path, {"seed": "seven"}))
    with pytest.raises(ConfigError, match="must be an object"):
        load_config(write(tmp_path, {"arena": 5}))
    with pytest.raises(ConfigError, match="hidden_sizes"):
        load_config(write(tmp_path, {"hidden_sizes": [16, "x"]}))
    with pytest.raises(ConfigError, match="must be true or false"):
        load_config(write(tmp_path, {"share_transitions_with_inactive": 1}))


def test_semantic_validation(tmp_path):
    with pytest.raises(ConfigError, match="mode must be one of"):
        load_config(write(tmp_path, {"mode": "bogus"}))
    with pytest.raises(ConfigError, match="total_timesteps"):
        load_config(write(tmp_path, {"total_timesteps": 0}))
    with pytest.raises(ConfigError):  # arena invariant via its post-init
        load_config(write(tmp_path, {"arena": {"observer_radius": 2}}))
    with pytest.raises(ConfigError, match="minibatch"):
        load_config(write(tmp_path, {"ppo": {"rollout_size": 100}}))


def test_transition_sharing_stub_is_rejected(tmp_path):
    with pytest.raises(ConfigError, match="stub"):
        load_config(write(tmp_path, {"share_transitions_with_inactive": True}))
    # explicit false is fine
    cfg = load_config(write(tmp_path, {"share_transitions_with_inactive": False}))
    assert cfg.share_transitions_with_inactive is False


def test_overrides_argument_wins(tmp_path):
    path = write(tmp_path, {"seed": 1, "mode": "rpt"})
    cfg = load_config(path, overrides={"seed": 9})
    assert cfg.seed == 9 and cfg.mode == "rpt"


def test_resolved_snapshot_round_trips(tmp_path):
    original = merge_config(RunConfig(), {
        "mode": "ddqn-selfplay",
        "arena": {"n_drones": 2, "keep_heading_prob": 0.6},
        "ppo": {"entropy_coef": 0.02},
    })
    snap = tmp_path / "resolved.json"
    save_config(original, snap)
    reloaded = load_config(snap)
    assert reloaded == original
    assert config_to_dict(reloaded) == config_to_dict(original)


def test_bad_json_reports_file(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="broken.json"):
        load_config(p)
    p.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError, match="top level"):
        load_config(p)
