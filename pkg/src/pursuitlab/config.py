"""Run configuration: one nested dataclass tree mirrored by a JSON file.

Every constant that shapes a run (arena geometry, rewards, learner
hyperparameters, schedules, budgets) lives here with its default, so a
config file only states deviations. Unknown keys are rejected rather than
ignored; silent typos in experiment configs are how results die.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from .arena import ArenaParams
from .learners import A2cConfig, DqnConfig, PpoConfig

MODES = ("rpt", "ippo", "ddqn-selfplay")
RPT_POOL = ("PPO", "A2C", "DQN")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "ippo"
    total_timesteps: int = 200_000  # agent timesteps, summed over the team
    seed: int = 0
    out_dir: str = "runs/out"
    checkpoint_every: int = 200  # episodes
    hidden_sizes: tuple[int, ...] = (256, 256)
    eval_repeats: int = 20
    heldout_timesteps: int = 200_000
    arena: ArenaParams = field(default_factory=ArenaParams)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    a2c: A2cConfig = field(default_factory=A2cConfig)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    # routing transitions to inactive pool members is not implemented; the
    # key exists so the choice is visible, and any attempt to enable it
    # fails at parse time instead of silently training something else
    share_transitions_with_inactive: bool = False


class ConfigError(ValueError):
    pass


def _coerce(current, value, path: str):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path} must be true or false")
        return value
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path} must be an integer")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path} must be a number")
        return float(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path} must be a string")
        return value
    if isinstance(current, tuple):
        if not isinstance(value, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
            raise ConfigError(f"{path} must be a list of integers")
        return tuple(int(x) for x in value)
    raise ConfigError(f"{path} cannot be set from a config file")


def _merge_dataclass(obj, overrides: dict, path: str):
    known = {f.name for f in fields(obj)}
    kwargs = {}
    for key, value in overrides.items():
        here = f"{path}{key}"
        if key not in known:
            raise ConfigError(f"unknown config key {here}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"{here} must be an object")
            kwargs[key] = _merge_dataclass(current, value, f"{here}.")
        else:
            kwargs[key] = _coerce(current, value, here)
    try:
        return replace(obj, **kwargs)
    except ValueError as exc:  # dataclass __post_init__ validation
        raise ConfigError(f"{path.rstrip('.') or 'config'}: {exc}") from exc


def merge_config(base: RunConfig, overrides: dict) -> RunConfig:
    """Apply a nested override dict onto a config, rejecting unknown keys."""
    cfg = _merge_dataclass(base, overrides, "")
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {cfg.mode!r}")
    if cfg.total_timesteps <= 0:
        raise ConfigError("total_timesteps must be positive")
    if cfg.heldout_timesteps <= 0:
        raise ConfigError("heldout_timesteps must be positive")
    if cfg.checkpoint_every < 1:
        raise ConfigError("checkpoint_every must be at least 1")
    if cfg.eval_repeats < 1:
        raise ConfigError("eval_repeats must be at least 1")
    if not cfg.hidden_sizes or any(h < 1 for h in cfg.hidden_sizes):
        raise ConfigError("hidden_sizes must be positive integers")
    if cfg.share_transitions_with_inactive:
        raise ConfigError(
            "share_transitions_with_inactive is a stub and must stay false")
    for name in ("ppo", "a2c"):
        sub = getattr(cfg, name)
        if sub.rollout_size % sub.minibatch_size != 0:
            raise ConfigError(f"{name}.rollout_size must divide into minibatches")


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file, then programmatic overrides (e.g. CLI flags)."""
    cfg = RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    cfg = _merge_dataclass(cfg, data, "")
    if overrides:
        cfg = _merge_dataclass(cfg, overrides, "")
    validate_config(cfg)
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    """Write the fully resolved config; feeding it back reproduces the run."""
    Path(path).write_text(json.dumps(asdict(cfg), indent=2) + "\n", encoding="utf-8")
