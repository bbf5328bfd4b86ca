"""Canary exposure for every mode over several seeds.

Prints one line per run and a per-mode mean, and writes exposure.csv.

    python scripts/run_exposure.py configs/exposure.yaml --seeds 0 1 2 3 4
"""
import argparse
import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from anadp.config import ExperimentConfig
from anadp.exposure import run_audit

MODES = ("non_private", "dp_uniform", "anadp")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config", type=Path)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", type=Path, default=Path("results/exposure"))
    args = ap.parse_args()
    cfg = ExperimentConfig.load(args.config)
    spec = cfg.model_spec(0, 0)
    audit = cfg.audit_config()

    rows = []
    bits = defaultdict(list)
    for mode in MODES:
        for seed in args.seeds:
            r = run_audit(cfg.train_config(spec, mode=mode, seed=seed), audit)
            print(f"{mode:>12s} seed={seed} rank={r.canary_rank:>5d}/{r.space_size} "
                  f"exposure={r.exposure_bits:6.2f} eps={r.epsilon:.3f}", flush=True)
            rows.append([mode, seed, r.canary_rank, f"{r.exposure_bits:.6g}", f"{r.epsilon:.6g}"])
            bits[mode].append(r.exposure_bits)
    for mode, v in bits.items():
        print(f"{mode:>12s}: mean exposure {np.mean(v):.2f} bits")

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "exposure.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "seed", "rank", "exposure_bits", "epsilon"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
