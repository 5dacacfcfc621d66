"""Render comparison figures from exported curve CSVs.

Input files follow the export-curves schema (label, agent_timesteps,
mean_return, ci_lower, ci_upper, n_episodes); one file may carry several
labeled series. Points are plotted exactly as given. Any downsampling
happens upstream where the curves are exported, so a series of length L
always shows L points here.
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

SCHEMA = ("label", "agent_timesteps", "mean_return", "ci_lower", "ci_upper",
          "n_episodes")


class CurveError(ValueError):
    pass


@dataclass
class CurveSeries:
    label: str
    x: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if self.x.size == 0:
            raise CurveError(f"series {self.label!r} has no points")
        if not np.all(np.diff(self.x) > 0):
            raise CurveError(f"series {self.label!r}: x must be strictly increasing")
        if not np.all((self.lo <= self.mean) & (self.mean <= self.hi)):
            raise CurveError(f"series {self.label!r}: CI bounds do not bracket mean")

    def __len__(self):
        return self.x.size


def load_series(path: str | Path) -> list[CurveSeries]:
    """All labeled series in one CSV, in first-appearance order."""
    rows_by_label: dict[str, list[tuple[float, float, float, float]]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SCHEMA if c not in (reader.fieldnames or [])]
        if missing:
            raise CurveError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows_by_label.setdefault(row["label"], []).append(
                    (float(row["agent_timesteps"]), float(row["mean_return"]),
                     float(row["ci_lower"]), float(row["ci_upper"])))
            except (TypeError, ValueError):
                raise CurveError(f"{path}:{lineno}: malformed row") from None
    if not rows_by_label:
        raise CurveError(f"{path}: no curve rows")
    out = []
    for label, rows in rows_by_label.items():
        cols = np.array(rows, dtype=np.float64)
        out.append(CurveSeries(label, cols[:, 0], cols[:, 1], cols[:, 2],
                               cols[:, 3]))
    return out


def render_curves(csv_paths, out_path=None, title=None):
    """One figure with every series, mean lines over shaded CI bands.

    Returns the figure; writes out_path when given. Figure content is
    deterministic for identical inputs (no embedded timestamps).
    """
    series = []
    for path in csv_paths:
        series.extend(load_series(path))
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for s in series:
        (line,) = ax.plot(s.x, s.mean, marker="o", markersize=3, label=s.label)
        ax.fill_between(s.x, s.lo, s.hi, alpha=0.2, color=line.get_color(),
                        linewidth=0)
    ax.set_xlabel("agent timesteps")
    ax.set_ylabel("episode return")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    if out_path is not None:
        out_path = Path(out_path)
        metadata = {"Date": None} if out_path.suffix == ".svg" else None
        fig.savefig(out_path, dpi=150, metadata=metadata)
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot_curves",
        description="Plot exported learning curves with CI bands.")
    parser.add_argument("csvs", nargs="+", metavar="CSV")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title")
    args = parser.parse_args(argv)
    try:
        fig = render_curves(args.csvs, args.out, args.title)
        plt.close(fig)
    except (OSError, CurveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
