"""Training orchestration: the sequential multi-agent loop.

Each agent owns a slot holding its policy pool. Rotating training gives the
pool three members (PPO, A2C, DQN) and resamples the active one uniformly
at episode boundaries: ends of episodes set switch_pending, and the flag is
consumed right before the next episode's first action. The independent-PPO
baseline is the same loop with single-member pools, and ddqn-selfplay (used
to build held-out partners) runs a double-DQN learner in every slot.

Within an episode only the active learner acts, records, and updates; the
rest of the pool is untouched. One master generator drives construction,
action sampling, environment noise, and minibatch shuffling sequentially,
so a (config, seed) pair fixes the entire run byte for byte.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .arena import PursuitArena, curriculum_next, default_spawn_configs
from .buffers import Transition
from .checkpoint import read_checkpoint, write_checkpoint
from .config import RPT_POOL, RunConfig, config_to_dict, merge_config, save_config
from .learners import TRAIN, make_learner

POOLS = {"rpt": RPT_POOL, "ippo": ("PPO",), "ddqn-selfplay": ("DDQN",)}

METRICS_HEADER = ["episode", "agent_timesteps", "spawn_config", "agent_id",
                  "role", "active_algo", "episode_return", "episode_length",
                  "captured"]


@dataclass
class AgentSlot:
    agent_id: str
    role: str
    pool: tuple[str, ...]
    learners: dict
    active_index: int = 0
    switch_pending: bool = False

    @property
    def active_kind(self) -> str:
        return self.pool[self.active_index]

    @property
    def active(self):
        return self.learners[self.active_kind]


def rotate_if_pending(slot: AgentSlot, rng: np.random.Generator) -> AgentSlot:
    """Consume a pending switch at an episode boundary. Single-member pools
    never touch the generator, so baseline runs stay comparable draw for
    draw with and without rotation."""
    if slot.switch_pending:
        if len(slot.pool) > 1:
            slot.active_index = int(rng.integers(len(slot.pool)))
        slot.switch_pending = False
    return slot


def mark_episode_end(slot: AgentSlot, done: bool, trunc: bool) -> AgentSlot:
    slot.switch_pending = bool(done or trunc)
    return slot


def account_timesteps(mode: str, env_steps: int, team_size: int) -> tuple[int, float]:
    """Agent-timestep count for a stretch of environment steps, plus each
    learner's expected share of its agent's recorded steps."""
    if env_steps < 0 or team_size < 0:
        raise ValueError("negative step or team count")
    share = 1.0 / len(POOLS[mode])
    return env_steps * team_size, share


def build_slots(cfg: RunConfig, rng: np.random.Generator) -> list[AgentSlot]:
    """Construct every slot's pool in canonical order from one generator."""
    arena = PursuitArena(params=cfg.arena)
    pool = POOLS[cfg.mode]
    slots = []
    for spec in arena.specs:
        learners = {}
        for kind in pool:
            if kind == "PPO":
                sub = cfg.ppo
            elif kind == "A2C":
                sub = cfg.a2c
            else:
                sub = replace(cfg.dqn, double=(kind == "DDQN"))
            learners[kind] = make_learner(kind, arena.obs_dim, 5,
                                          cfg.hidden_sizes, sub, rng)
        slots.append(AgentSlot(spec.agent_id, spec.role, pool, learners))
    return slots


@dataclass
class RunResult:
    cfg: RunConfig
    out_dir: Path
    metrics_path: Path
    final_checkpoint: Path
    slots: list[AgentSlot] = field(repr=False)
    episodes: int = 0
    agent_timesteps: int = 0


def run_training(cfg: RunConfig, hooks: dict | None = None) -> RunResult:
    rng = np.random.default_rng(cfg.seed)
    slots = build_slots(cfg, rng)
    return _training_loop(cfg, rng, slots, 0, 0, hooks)


def resume_training(checkpoint_path: str | Path, out_dir: str | Path,
                    total_timesteps: int | None = None,
                    hooks: dict | None = None) -> RunResult:
    """Continue a run from a checkpoint, writing new artifacts to out_dir.
    The resumed segment reproduces exactly what an uninterrupted run would
    have produced from that boundary on. total_timesteps extends the budget;
    without it the stored budget applies (a finished run exits immediately)."""
    cfg, rng, slots, episode_index, agent_timesteps = load_run_state(checkpoint_path)
    cfg = replace(cfg, out_dir=str(out_dir))
    if total_timesteps is not None:
        cfg = replace(cfg, total_timesteps=int(total_timesteps))
    return _training_loop(cfg, rng, slots, episode_index, agent_timesteps, hooks)


def _training_loop(cfg: RunConfig, rng: np.random.Generator,
                   slots: list[AgentSlot], episode_index: int,
                   agent_timesteps: int, hooks: dict | None) -> RunResult:
    hooks = hooks or {}
    on_step = hooks.get("on_step")
    on_episode = hooks.get("on_episode")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "resolved_config.json")

    arena = PursuitArena(params=cfg.arena)
    configs = default_spawn_configs(cfg.arena.n_observers, cfg.arena.n_drones,
                                    cfg.arena.grid)
    team = len(slots)
    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        while agent_timesteps < cfg.total_timesteps:
            spawn = curriculum_next(configs, episode_index)
            for slot in slots:
                rotate_if_pending(slot, rng)
            obs = arena.reset(spawn, rng)
            ep_return = 0.0
            length = 0
            captured = False
            while True:
                results = {}
                actions = {}
                for slot in slots:
                    res = slot.active.act(obs[slot.agent_id], TRAIN, rng)
                    results[slot.agent_id] = res
                    actions[slot.agent_id] = res.action
                next_obs, rewards, dones, truncs = arena.step(actions, rng)
                for slot in slots:
                    a = slot.agent_id
                    res = results[a]
                    t = Transition(obs[a], actions[a], rewards[a], next_obs[a],
                                   dones[a], truncs[a], res.log_prob, res.value)
                    slot.active.record(t, rng)
                    if dones[a] or truncs[a]:
                        mark_episode_end(slot, dones[a], truncs[a])
                obs = next_obs
                length += 1
                team_reward = rewards[slots[0].agent_id]
                ep_return += team_reward
                ended = dones[slots[0].agent_id] or truncs[slots[0].agent_id]
                captured = dones[slots[0].agent_id]
                if on_step:
                    on_step(episode_index, length - 1, slots, team_reward,
                            dones[slots[0].agent_id], truncs[slots[0].agent_id])
                if ended:
                    break
            gained, _ = account_timesteps(cfg.mode, length, team)
            agent_timesteps += gained
            for slot in slots:
                writer.writerow([episode_index, agent_timesteps, spawn.identifier,
                                 slot.agent_id, slot.role, slot.active_kind,
                                 ep_return, length, int(captured)])
            if on_episode:
                on_episode({"episode": episode_index, "agent_timesteps": agent_timesteps,
                            "spawn_config": spawn.identifier, "return": ep_return,
                            "length": length, "captured": captured})
            episode_index += 1
            if episode_index % cfg.checkpoint_every == 0:
                _write_run_checkpoint(out / f"ckpt_ep{episode_index}.ckpt", cfg, rng,
                                      slots, episode_index, agent_timesteps)
    final = out / "final.ckpt"
    _write_run_checkpoint(final, cfg, rng, slots, episode_index, agent_timesteps)
    return RunResult(cfg, out, metrics_path, final, slots,
                     episodes=episode_index, agent_timesteps=agent_timesteps)


# ------------------------------------------------------------------ state

def _write_run_checkpoint(path: Path, cfg: RunConfig, rng: np.random.Generator,
                          slots: list[AgentSlot], episode_index: int,
                          agent_timesteps: int) -> None:
    arrays = []
    slot_meta = []
    for slot in slots:
        counters = {}
        for kind in slot.pool:
            learner = slot.learners[kind]
            for name, arr in learner.state_arrays():
                arrays.append((f"{slot.agent_id}/{kind}/{name}", arr))
            counters[kind] = learner.state_counters()
        slot_meta.append({
            "agent_id": slot.agent_id,
            "role": slot.role,
            "pool": list(slot.pool),
            "active_index": slot.active_index,
            "switch_pending": slot.switch_pending,
            "counters": counters,
        })
    meta = {
        "config": config_to_dict(cfg),
        "episode_index": episode_index,
        "agent_timesteps": agent_timesteps,
        "rng_state": rng.bit_generator.state,
        "slots": slot_meta,
    }
    write_checkpoint(path, arrays, meta)


def load_run_state(path: str | Path):
    """Rebuild (cfg, rng, slots, episode_index, agent_timesteps) exactly as
    they were when the checkpoint was written."""
    arrays, meta = read_checkpoint(path)
    cfg = merge_config(RunConfig(), meta["config"])
    slots = build_slots(cfg, np.random.default_rng(0))  # placeholders, overwritten
    if len(slots) != len(meta["slots"]):
        raise ValueError("checkpoint team size disagrees with its config")
    for slot, smeta in zip(slots, meta["slots"]):
        if slot.agent_id != smeta["agent_id"] or list(slot.pool) != smeta["pool"]:
            raise ValueError(f"checkpoint slot mismatch for {slot.agent_id}")
        slot.active_index = int(smeta["active_index"])
        slot.switch_pending = bool(smeta["switch_pending"])
        for kind in slot.pool:
            prefix = f"{slot.agent_id}/{kind}/"
            sub = {name[len(prefix):]: arr for name, arr in arrays.items()
                   if name.startswith(prefix)}
            slot.learners[kind].load_state(sub, smeta["counters"][kind])
    rng = np.random.default_rng(0)
    rng.bit_generator.state = meta["rng_state"]
    return cfg, rng, slots, int(meta["episode_index"]), int(meta["agent_timesteps"])
