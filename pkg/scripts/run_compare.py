"""Paired accuracy comparison across seeds; writes compare.json/.csv.

    python scripts/run_compare.py configs/blobs_compare.yaml --out results/compare
"""
import argparse
from pathlib import Path

from anadp.cli import run
from anadp.config import ExperimentConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("results/compare"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    cfg = ExperimentConfig.load(args.config).replace(workers=args.workers)
    run("compare", cfg, args.out)


if __name__ == "__main__":
    main()
