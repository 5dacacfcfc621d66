"""Command line entry point.

Every artifact-producing subcommand drops a resolved snapshot of its
effective configuration next to its outputs, so any run can be reproduced
from the artifacts alone. The --seed flag is the only entropy source;
identical invocations rewrite byte-identical metrics and reports.

Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import glob as globmod
import json
import sys
from pathlib import Path

import numpy as np

from .arena import DRONE, OBSERVER, PursuitArena, default_spawn_configs
from .config import RunConfig, load_config, merge_config, validate_config
from .evaluation import (HeldoutPool, TeamPolicy, aggregate_metrics,
                         evaluate_mixed_team, train_heldout_ddqn,
                         write_curves_csv)
from .trainer import resume_training, run_training


class _Parser(argparse.ArgumentParser):
    """Usage errors print the full help to stderr and exit 2."""

    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _write_snapshot(path: Path, command: str, args: argparse.Namespace) -> None:
    payload = {"command": command,
               "args": {k: v for k, v in sorted(vars(args).items())
                        if k != "func" and v is not None}}
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _base_config(args, heldout: bool = False) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    if args.timesteps is not None:
        overrides["heldout_timesteps" if heldout else "total_timesteps"] = args.timesteps
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    cfg = merge_config(cfg, overrides)
    validate_config(cfg)
    return cfg


def _resolve_pool(path_arg: str) -> HeldoutPool:
    """Accept a run checkpoint, a run directory, or a directory holding
    heldout_observer/ and heldout_drone/ runs (one per role)."""
    path = Path(path_arg)
    if path.is_file():
        return HeldoutPool.from_checkpoint(path)
    if (path / "final.ckpt").is_file():
        return HeldoutPool.from_checkpoint(path / "final.ckpt")
    by_role = {role: path / f"heldout_{role}" / "final.ckpt"
               for role in (OBSERVER, DRONE)}
    if all(p.is_file() for p in by_role.values()):
        return HeldoutPool.from_role_checkpoints(by_role)
    raise FileNotFoundError(
        f"no held-out pool at {path_arg}: expected a checkpoint, a run "
        f"directory, or heldout_observer/ and heldout_drone/ run directories")


def cmd_train(args) -> int:
    if args.resume:
        if args.mode or args.config or args.seed is not None:
            print("error: --resume takes its mode, config, and rng state "
                  "from the checkpoint", file=sys.stderr)
            return 2
        result = resume_training(args.resume, args.out or "runs/resumed",
                                 total_timesteps=args.timesteps)
    else:
        result = run_training(_base_config(args))
    print(f"trained {result.agent_timesteps} agent timesteps over "
          f"{result.episodes} episodes")
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoint: {result.final_checkpoint}")
    return 0


def cmd_train_heldout(args) -> int:
    cfg = _base_config(args, heldout=True)
    policy, result = train_heldout_ddqn(args.role, cfg)
    print(f"held-out {args.role} policy trained (seed {result.cfg.seed}, "
          f"{result.agent_timesteps} agent timesteps)")
    print(f"checkpoint: {result.final_checkpoint}")
    return 0


def cmd_eval_mixed(args) -> int:
    target = TeamPolicy.from_checkpoint(args.target, algo=args.algo)
    pool = _resolve_pool(args.pool)
    report = evaluate_mixed_team(target, pool, repeats=args.repeats,
                                 seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "eval.csv")
    report.write_summary_csv(out / "eval_summary.csv")
    _write_snapshot(out / "resolved_eval.json", "eval-mixed", args)
    for row in report.summary_rows():
        print(f"{row['target']} in {row['slot']}: return "
              f"{row['mean_return']:.2f} [{row['ci_lower']:.2f}, "
              f"{row['ci_upper']:.2f}], capture rate {row['capture_rate']:.2f}")
    print(f"report: {out / 'eval.csv'}")
    return 0


def cmd_replay(args) -> int:
    target = TeamPolicy.from_checkpoint(args.ckpt, algo=args.algo)
    params = target.arena_params
    configs = default_spawn_configs(params.n_observers, params.n_drones,
                                    params.grid)
    trace_path = Path(args.trace)
    trace_path.parent.mkdir(parents=True, exist_ok=True)
    returns = []
    captures = 0
    with open(trace_path, "w", encoding="utf-8") as fh:
        for episode in range(args.episodes):
            arena = PursuitArena(params=params)
            rng = np.random.default_rng([args.seed, episode])
            obs = arena.reset(configs[episode % len(configs)], rng)
            total = 0.0
            while True:
                actions = {a: int(target.policy_for_slot(a).act(obs[a]))
                           for a in arena.agent_ids}
                obs, rewards, dones, truncs = arena.step(actions, rng)
                first = arena.agent_ids[0]
                total += rewards[first]
                fh.write(json.dumps({"episode": episode,
                                     "actions": actions,
                                     "reward": rewards[first],
                                     "state": arena.snapshot()},
                                    sort_keys=True) + "\n")
                if dones[first] or truncs[first]:
                    captures += int(dones[first])
                    break
            returns.append(total)
            fh.write(json.dumps({"episode": episode, "return": total,
                                 "captured": bool(dones[first])},
                                sort_keys=True) + "\n")
    _write_snapshot(trace_path.with_name(trace_path.name + ".resolved.json"),
                    "replay", args)
    print(f"replayed {args.episodes} episodes: mean return "
          f"{float(np.mean(returns)):.2f}, {captures} captures")
    print(f"trace: {trace_path}")
    return 0


def cmd_export_curves(args) -> int:
    paths = sorted(globmod.glob(args.logs, recursive=True))
    if not paths:
        raise FileNotFoundError(f"no metrics logs match {args.logs!r}")
    rows = aggregate_metrics(paths, downsample_factor=args.downsample,
                             n_bins=args.bins, label=args.label)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_curves_csv(rows, out)
    _write_snapshot(out.with_name(out.name + ".resolved.json"),
                    "export-curves", args)
    print(f"wrote {len(rows)} curve points from {len(paths)} logs to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pursuitlab",
                     description="Pursuit arena training and evaluation.")
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                parser_class=_Parser)

    train = sub.add_parser("train", help="train a team on the pursuit arena")
    train.add_argument("--mode", choices=["rpt", "ippo"],
                       help="rotating pools or plain independent PPO")
    train.add_argument("--timesteps", type=int, help="agent-timestep budget")
    train.add_argument("--seed", type=int, help="sole entropy source")
    train.add_argument("--config", help="JSON config file (partial overrides)")
    train.add_argument("--out", help="output directory")
    train.add_argument("--resume", metavar="CKPT",
                       help="continue from a run checkpoint instead of "
                            "starting fresh (--timesteps extends the budget)")
    train.set_defaults(func=cmd_train)

    heldout = sub.add_parser("train-heldout",
                             help="self-play double-DQN partner for one role")
    heldout.add_argument("--role", required=True, choices=[OBSERVER, DRONE])
    heldout.add_argument("--timesteps", type=int,
                         help="agent-timestep budget for the held-out run")
    heldout.add_argument("--seed", type=int,
                         help="base seed; the drone half trains on seed+1")
    heldout.add_argument("--config", help="JSON config file")
    heldout.add_argument("--out", help="output directory")
    heldout.set_defaults(func=cmd_train_heldout)

    evalp = sub.add_parser("eval-mixed",
                           help="score a checkpoint against held-out partners")
    evalp.add_argument("--target", required=True, metavar="CKPT")
    evalp.add_argument("--pool", required=True,
                       help="held-out checkpoint, run dir, or dir with "
                            "heldout_observer/ and heldout_drone/")
    evalp.add_argument("--repeats", type=int, default=20)
    evalp.add_argument("--seed", type=int, default=0)
    evalp.add_argument("--algo", choices=["PPO", "A2C", "DQN", "DDQN"],
                       help="pool member to evaluate (default PPO when present)")
    evalp.add_argument("--out", default="runs/eval")
    evalp.set_defaults(func=cmd_eval_mixed)

    replay = sub.add_parser("replay",
                            help="greedy self-play episodes with a JSONL trace")
    replay.add_argument("--ckpt", required=True)
    replay.add_argument("--episodes", type=int, default=4)
    replay.add_argument("--trace", required=True, help="JSONL output path")
    replay.add_argument("--seed", type=int, default=0)
    replay.add_argument("--algo", choices=["PPO", "A2C", "DQN", "DDQN"])
    replay.set_defaults(func=cmd_replay)

    export = sub.add_parser("export-curves",
                            help="bin metrics logs into a learning-curve CSV")
    export.add_argument("--logs", required=True,
                        help="glob over metrics.csv files (quote it)")
    export.add_argument("--downsample", type=int, choices=[1, 3], default=1,
                        help="3 merges bins for rotating-pool runs")
    export.add_argument("--bins", type=int, default=18)
    export.add_argument("--label", default="run")
    export.add_argument("--out", required=True, metavar="CSV")
    export.set_defaults(func=cmd_export_curves)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures all map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
