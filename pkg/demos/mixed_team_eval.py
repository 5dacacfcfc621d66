"""Score a trained team against held-out self-play partners.

Trains a small IPPO team plus a double-DQN self-play pool, then runs the
mixed-team protocol: one slot at a time is handed to the IPPO policy
while every other slot runs the held-out policy for its role, cycled
over all spawn configurations. The gap between self-play scores and
mixed-team scores is the generalization cost of the learned conventions.

Run: python3 demos/mixed_team_eval.py [--timesteps N] [--repeats R]
"""
import argparse
from pathlib import Path

from pursuitlab.arena import PursuitArena
from pursuitlab.config import RunConfig, merge_config
from pursuitlab.evaluation import (HeldoutPool, TeamPolicy, evaluate_mixed_team)
from pursuitlab.trainer import run_training


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--timesteps", type=int, default=40_000)
    parser.add_argument("--repeats", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs/demo_eval")
    args = parser.parse_args()
    out = Path(args.out)

    print(f"training ippo target ({args.timesteps} agent timesteps) ...")
    target_run = run_training(merge_config(RunConfig(), {
        "mode": "ippo", "total_timesteps": args.timesteps,
        "seed": args.seed, "out_dir": str(out / "target")}))
    print(f"training ddqn self-play partners ({args.timesteps} agent timesteps) ...")
    pool_run = run_training(merge_config(RunConfig(), {
        "mode": "ddqn-selfplay", "total_timesteps": args.timesteps,
        "seed": args.seed + 100, "out_dir": str(out / "pool")}))

    target = TeamPolicy.from_checkpoint(target_run.final_checkpoint)
    pool = HeldoutPool.from_checkpoint(pool_run.final_checkpoint)

    print(f"\nmixed-team evaluation ({args.repeats} repeats per slot and config):")
    report = evaluate_mixed_team(target, pool, repeats=args.repeats,
                                 seed=args.seed)
    for row in report.summary_rows():
        print(f"  target in {row['slot']:<12} return {row['mean_return']:>8.2f} "
              f"[{row['ci_lower']:.2f}, {row['ci_upper']:.2f}]  "
              f"capture rate {row['capture_rate']:.2f}")

    # reference point: the pool playing with itself under the same protocol
    arena = PursuitArena(params=pool.arena_params)
    selfplay = TeamPolicy(
        "pool-selfplay",
        {s.agent_id: pool.policy_for_role(s.role) for s in arena.specs},
        pool.arena_params)
    baseline = evaluate_mixed_team(selfplay, pool, repeats=args.repeats,
                                   seed=args.seed)
    mean = baseline.all_returns().mean()
    print(f"\npool self-play reference: {mean:.2f}")
    report.write_csv(out / "eval.csv")
    report.write_summary_csv(out / "eval_summary.csv")
    print(f"episode table written to {out / 'eval.csv'}")


if __name__ == "__main__":
    main()
