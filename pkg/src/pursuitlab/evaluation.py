"""Mixed-team generalization protocol.

Held-out partners are role-specific DDQN policies taken from self-play
runs. To score a trained team, exactly one slot at a time is handed to the
target's policy while every other slot runs the held-out policy for its
role, cycling systematically over slots, spawn configurations, and
repeats. All evaluation actions are greedy, so repeat variance comes only
from the environment; each episode draws its stream from (seed, slot,
config, repeat), which makes reports order-independent and reproducible.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .arena import ArenaParams, PursuitArena, default_spawn_configs
from .config import RunConfig
from .learners import FrozenPolicy
from .trainer import POOLS, load_run_state, run_training

EVAL_HEADER = ["target", "slot", "role", "spawn_config", "repeat",
               "return", "length", "captured"]
SUMMARY_HEADER = ["target", "slot", "role", "n_episodes", "mean_return",
                  "ci_lower", "ci_upper", "capture_rate", "mean_length"]
CURVES_HEADER = ["label", "agent_timesteps", "mean_return", "ci_lower",
                 "ci_upper", "n_episodes"]


@dataclass
class TeamPolicy:
    """The target side of an evaluation: one frozen policy per slot."""

    label: str
    policies: dict[str, object]  # agent_id -> anything with act(obs) -> int
    arena_params: ArenaParams

    def policy_for_slot(self, agent_id: str):
        return self.policies[agent_id]

    @classmethod
    def from_checkpoint(cls, path: str | Path, algo: str | None = None,
                        label: str | None = None) -> "TeamPolicy":
        """Freeze one pool member per slot. For rotating-pool checkpoints
        the PPO member is the default evaluation target; algo picks another."""
        cfg, _, slots, _, _ = load_run_state(path)
        pool = POOLS[cfg.mode]
        kind = algo or ("PPO" if "PPO" in pool else pool[0])
        if kind not in pool:
            raise ValueError(f"checkpoint has no {kind} learner (pool {pool})")
        policies = {s.agent_id: FrozenPolicy.from_learner(s.learners[kind])
                    for s in slots}
        return cls(label or f"{cfg.mode}-seed{cfg.seed}-{kind.lower()}",
                   policies, cfg.arena)


@dataclass
class HeldoutPool:
    """One frozen self-play DDQN policy per role."""

    policies: dict[str, FrozenPolicy]
    arena_params: ArenaParams

    def policy_for_role(self, role: str) -> FrozenPolicy:
        if role not in self.policies:
            raise ValueError(f"held-out pool has no policy for role {role!r}")
        return self.policies[role]

    @classmethod
    def from_checkpoint(cls, path: str | Path) -> "HeldoutPool":
        """Both roles from one self-play run: first slot of each role."""
        cfg, _, slots, _, _ = load_run_state(path)
        policies = {}
        for slot in slots:
            if slot.role not in policies:
                policies[slot.role] = FrozenPolicy.from_learner(
                    slot.learners[slot.pool[0]])
        return cls(policies, cfg.arena)

    @classmethod
    def from_role_checkpoints(cls, paths_by_role: dict[str, str | Path]) -> "HeldoutPool":
        """Each role from its own independent self-play run."""
        policies = {}
        params = None
        for role, path in paths_by_role.items():
            part = cls.from_checkpoint(path)
            policies[role] = part.policy_for_role(role)
            params = part.arena_params
        return cls(policies, params)


def train_heldout_ddqn(role: str, cfg: RunConfig):
    """Self-play run with a double-DQN learner in every slot; returns the
    frozen policy for the requested role plus the run artifacts. Divergence
    surfaces as the learners' own non-finite hard failures."""
    from .arena import DRONE, OBSERVER

    if role not in (OBSERVER, DRONE):
        raise ValueError(f"unknown role {role!r}")
    # per-role runs get distinct seeds so the two pool halves are
    # independently trained
    seed = cfg.seed + (0 if role == OBSERVER else 1)
    run_cfg = replace(cfg, mode="ddqn-selfplay", seed=seed,
                      total_timesteps=cfg.heldout_timesteps)
    result = run_training(run_cfg)
    for slot in result.slots:
        if slot.role == role:
            return FrozenPolicy.from_learner(slot.learners["DDQN"]), result
    raise ValueError(f"no slot with role {role!r} in this arena")


# ------------------------------------------------------------------ episodes

@dataclass(frozen=True)
class EvalEpisode:
    target: str
    slot: str
    role: str
    spawn_config: int
    repeat: int
    episode_return: float
    length: int
    captured: bool


@dataclass
class EvalReport:
    target: str
    repeats: int
    seed: int
    episodes: list[EvalEpisode] = field(default_factory=list)

    def returns_for_slot(self, slot: str) -> np.ndarray:
        return np.array([e.episode_return for e in self.episodes if e.slot == slot])

    def all_returns(self) -> np.ndarray:
        return np.array([e.episode_return for e in self.episodes])

    def summary_rows(self) -> list[dict]:
        rows = []
        slots = sorted({e.slot for e in self.episodes})
        for slot in slots:
            eps = [e for e in self.episodes if e.slot == slot]
            returns = np.array([e.episode_return for e in eps])
            lo, hi = bootstrap_ci(returns, seed=0)
            rows.append({
                "target": self.target,
                "slot": slot,
                "role": eps[0].role,
                "n_episodes": len(eps),
                "mean_return": float(returns.mean()),
                "ci_lower": lo,
                "ci_upper": hi,
                "capture_rate": float(np.mean([e.captured for e in eps])),
                "mean_length": float(np.mean([e.length for e in eps])),
            })
        return rows

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EVAL_HEADER)
            for e in self.episodes:
                w.writerow([e.target, e.slot, e.role, e.spawn_config, e.repeat,
                            e.episode_return, e.length, int(e.captured)])

    def write_summary_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            for r in self.summary_rows():
                w.writerow([r[k] for k in SUMMARY_HEADER])


def bootstrap_ci(values: np.ndarray, n_resamples: int = 2000, seed: int = 0,
                 level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty sample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_resamples, values.size))
    means = values[idx].mean(axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    return (float(np.percentile(means, tail)),
            float(np.percentile(means, 100.0 - tail)))


def run_eval_episode(policies_by_slot: dict[str, object], params: ArenaParams,
                     spawn, rng: np.random.Generator) -> tuple[float, int, bool]:
    """One greedy episode; the generator only feeds the environment."""
    arena = PursuitArena(params=params)
    obs = arena.reset(spawn, rng)
    total = 0.0
    length = 0
    while True:
        actions = {a: int(policies_by_slot[a].act(obs[a])) for a in arena.agent_ids}
        obs, rewards, dones, truncs = arena.step(actions, rng)
        first = arena.agent_ids[0]
        total += rewards[first]
        length += 1
        if dones[first] or truncs[first]:
            return total, length, bool(dones[first])


def evaluate_mixed_team(target: TeamPolicy, pool: HeldoutPool,
                        repeats: int = 20, seed: int = 0,
                        configs=None, params: ArenaParams | None = None) -> EvalReport:
    """Cycle the target policy through every slot, against held-out
    partners everywhere else: slots x configs x repeats episodes."""
    params = params or target.arena_params
    arena = PursuitArena(params=params)
    if configs is None:
        configs = default_spawn_configs(params.n_observers, params.n_drones,
                                        params.grid)
    for spec in arena.specs:
        tp = target.policy_for_slot(spec.agent_id)
        dim = getattr(getattr(tp, "net", None), "input_dim", arena.obs_dim)
        if dim != arena.obs_dim:
            raise ValueError(
                f"target policy for {spec.agent_id} expects {dim} inputs, "
                f"arena provides {arena.obs_dim}")
    report = EvalReport(target.label, repeats, seed)
    for slot_idx, spec in enumerate(arena.specs):
        policies = {}
        for other in arena.specs:
            if other.agent_id == spec.agent_id:
                policies[other.agent_id] = target.policy_for_slot(other.agent_id)
            else:
                policies[other.agent_id] = pool.policy_for_role(other.role)
        for config_idx, spawn in enumerate(configs):
            for repeat in range(repeats):
                rng = np.random.default_rng([seed, slot_idx, config_idx, repeat])
                ret, length, captured = run_eval_episode(policies, params, spawn, rng)
                report.episodes.append(EvalEpisode(
                    target.label, spec.agent_id, spec.role, spawn.identifier,
                    repeat, ret, length, captured))
    return report


# ------------------------------------------------------------------ curves

def read_metrics_rows(path: str | Path) -> list[dict]:
    """One entry per episode (metrics logs carry one row per agent)."""
    out = []
    seen = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "episode" not in reader.fieldnames:
            raise ValueError(f"{path}:1: not a metrics log")
        for lineno, row in enumerate(reader, start=2):
            try:
                episode = int(row["episode"])
                ts = int(row["agent_timesteps"])
                ret = float(row["episode_return"])
            except (KeyError, TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: malformed metrics row") from None
            if episode in seen:
                continue
            seen.add(episode)
            out.append({"episode": episode, "agent_timesteps": ts, "return": ret})
    if not out:
        raise ValueError(f"{path}: no episodes")
    return out


def aggregate_metrics(log_paths, downsample_factor: int = 1, n_bins: int = 18,
                      label: str = "run") -> list[dict]:
    """Pool episodes from several logs (seeds) into one learning curve.

    Episodes land in n_bins equal agent-timestep bins; a downsample factor
    of k then merges each run of k adjacent bins, trading resolution for
    sample size (rotation spreads a learner's experience over 3x the x
    axis, so its curves are read at factor 3). Empty bins are dropped.
    """
    if downsample_factor < 1 or n_bins % downsample_factor != 0:
        raise ValueError("downsample factor must divide the bin count")
    episodes = []
    for path in log_paths:
        episodes.extend(read_metrics_rows(path))
    ts = np.array([e["agent_timesteps"] for e in episodes], dtype=np.float64)
    returns = np.array([e["return"] for e in episodes])
    edges = np.linspace(0.0, ts.max(), n_bins + 1)[::downsample_factor]
    which = np.clip(np.digitize(ts, edges[1:-1], right=True), 0, len(edges) - 2)
    rows = []
    for b in range(len(edges) - 1):
        inside = returns[which == b]
        if inside.size == 0:
            continue
        lo, hi = bootstrap_ci(inside, seed=b)
        rows.append({
            "label": label,
            "agent_timesteps": float((edges[b] + edges[b + 1]) / 2.0),
            "mean_return": float(inside.mean()),
            "ci_lower": lo,
            "ci_upper": hi,
            "n_episodes": int(inside.size),
        })
    return rows


def write_curves_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVES_HEADER)
        for r in rows:
            w.writerow([r[k] for k in CURVES_HEADER])
