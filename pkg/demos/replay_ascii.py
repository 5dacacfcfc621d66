"""Watch one greedy episode as ASCII frames.

Trains a short rotating-pool run (or reuses --ckpt), then replays its
PPO members deterministically and draws the grid every few steps:
O observer, D drone, T target, * target inside an observer's radius.

Run: python3 demos/replay_ascii.py [--ckpt PATH] [--every K]
"""
import argparse

import numpy as np

from pursuitlab.arena import DRONE, OBSERVER, PursuitArena, default_spawn_configs
from pursuitlab.config import RunConfig, merge_config
from pursuitlab.evaluation import TeamPolicy
from pursuitlab.trainer import run_training


def draw(arena):
    state = arena.state
    grid = [["." for _ in range(state.grid)] for _ in range(state.grid)]
    tx, ty = state.target_cell
    seen = any(
        max(abs(state.agent_cells[s.agent_id][0] - tx),
            abs(state.agent_cells[s.agent_id][1] - ty)) <= s.sensing_radius
        for s in arena.specs if s.role == OBSERVER)
    grid[ty][tx] = "*" if seen else "T"
    for spec in arena.specs:
        x, y = state.agent_cells[spec.agent_id]
        grid[y][x] = "O" if spec.role == OBSERVER else "D"
    return "\n".join("  " + " ".join(row) for row in grid)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--ckpt", help="existing run checkpoint to replay")
    parser.add_argument("--timesteps", type=int, default=40_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--every", type=int, default=8,
                        help="draw every k-th step")
    args = parser.parse_args()

    if args.ckpt:
        ckpt = args.ckpt
    else:
        print(f"training rpt for {args.timesteps} agent timesteps ...")
        result = run_training(merge_config(RunConfig(), {
            "mode": "rpt", "total_timesteps": args.timesteps,
            "seed": args.seed, "out_dir": "runs/demo_replay"}))
        ckpt = result.final_checkpoint
    target = TeamPolicy.from_checkpoint(ckpt)

    arena = PursuitArena(params=target.arena_params)
    spawn = default_spawn_configs(target.arena_params.n_observers,
                                  target.arena_params.n_drones,
                                  target.arena_params.grid)[0]
    rng = np.random.default_rng(args.seed)
    obs = arena.reset(spawn, rng)
    print(f"\nspawn config {spawn.identifier}, step 0:")
    print(draw(arena))
    total, step = 0.0, 0
    while True:
        actions = {a: int(target.policy_for_slot(a).act(obs[a]))
                   for a in arena.agent_ids}
        obs, rewards, dones, truncs = arena.step(actions, rng)
        first = arena.agent_ids[0]
        total += rewards[first]
        step += 1
        if step % args.every == 0 or dones[first] or truncs[first]:
            energy = {a: arena.state.drone_energy[a]
                      for s in arena.specs if s.role == DRONE
                      for a in [s.agent_id]}
            print(f"\nstep {step}, return so far {total:.2f}, energy {energy}:")
            print(draw(arena))
        if dones[first] or truncs[first]:
            outcome = "capture" if dones[first] else "timeout"
            print(f"\nepisode over after {step} steps ({outcome}), "
                  f"return {total:.2f}")
            break


if __name__ == "__main__":
    main()
