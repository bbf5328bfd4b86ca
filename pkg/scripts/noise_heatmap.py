"""Per-group noise stddev over training; writes heatmap.csv and prints a text summary."""
import argparse
import csv
from collections import defaultdict
from pathlib import Path

from anadp.cli import run
from anadp.config import ExperimentConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("results/heatmap"))
    args = ap.parse_args()
    cfg = ExperimentConfig.load(args.config)
    info = run("heatmap", cfg, args.out)

    series = defaultdict(list)
    with open(args.out / "heatmap.csv") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            series[row["group"]].append(float(row["stddev"]))
    base = info["sigma0"] * cfg.clip_norm
    print(f"uniform stddev sigma0*C = {base:.4f}")
    for group, sds in series.items():
        ratios = [s / base for s in sds]
        print(f"{group:>6s}: first {ratios[0]:.3f}x  last {ratios[-1]:.3f}x  "
              f"min {min(ratios):.3f}x  max {max(ratios):.3f}x")


if __name__ == "__main__":
    main()
