"""Train a small IPPO team and a small rotating-pool team, then compare.

Both teams get the same agent-timestep budget on the default 15x15 arena
with one observer and one drone. The rotating team splits its experience
across PPO/A2C/DQN members, so its curve is aggregated at downsample
factor 3 (per-member experience) while the IPPO curve uses factor 1.

Run: python3 demos/train_and_compare.py [--timesteps N] [--seed S]
"""
import argparse
from pathlib import Path

from pursuitlab.config import RunConfig, merge_config
from pursuitlab.evaluation import aggregate_metrics, write_curves_csv
from pursuitlab.trainer import run_training


def train(mode, timesteps, seed, out):
    cfg = merge_config(RunConfig(), {
        "mode": mode,
        "total_timesteps": timesteps,
        "seed": seed,
        "out_dir": str(out),
    })
    print(f"training {mode} for {timesteps} agent timesteps (seed {seed}) ...")
    result = run_training(cfg)
    print(f"  {result.episodes} episodes, checkpoint at {result.final_checkpoint}")
    return result


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--timesteps", type=int, default=40_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs/demo_compare")
    args = parser.parse_args()

    out = Path(args.out)
    ippo = train("ippo", args.timesteps, args.seed, out / "ippo")
    rpt = train("rpt", args.timesteps, args.seed, out / "rpt")

    curves = []
    for label, result, factor in (("ippo", ippo, 1), ("rpt", rpt, 3)):
        rows = aggregate_metrics([result.metrics_path], downsample_factor=factor,
                                 n_bins=12, label=label)
        path = out / f"{label}_curve.csv"
        write_curves_csv(rows, path)
        curves.append(path)
        print(f"\n{label} learning curve ({len(rows)} points):")
        for row in rows:
            bar = "#" * min(48, max(0, int((row["mean_return"] + 15) / 2)))
            print(f"  {row['agent_timesteps']:>9.0f}  "
                  f"{row['mean_return']:>8.2f}  {bar}")

    print("\ncurve CSVs written:")
    for path in curves:
        print(f"  {path}")
    print("render with: plot_curves " + " ".join(str(c) for c in curves)
          + f" --out {out / 'compare.png'}  (plotscripts package)")


if __name__ == "__main__":
    main()
