"""Command-line experiment runner.

    anadp train     --config run.yaml --out results/
    anadp calibrate --config run.yaml
    anadp exposure  --config canary.yaml --out results/ --mode dp_uniform
    anadp compare   --config compare.yaml --out results/
    anadp heatmap   --config run.yaml --out results/
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from anadp.accountant import PrivacySpec, calibrate_sigma, epsilon_for
from anadp.config import ExperimentConfig, load_split
from anadp.errors import ANADPError, ConfigurationError
from anadp.exposure import run_audit
from anadp.trainer import TRAIN_MODES, paired_one_tailed_t, steps_per_epoch, train

log = logging.getLogger("anadp")

SUBCOMMANDS = ("train", "calibrate", "exposure", "compare", "heatmap")


def jsonable(obj):
    """Plain JSON types; non-finite floats become the strings 'inf'/'-inf'/'nan'."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(payload) -> str:
    return json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n"


class Artifacts:
    """Collects output files and removes them all if the run fails."""

    def __init__(self, out: Optional[Path]):
        self.out = out
        self.written: list[Path] = []

    def write(self, name: str, text: str) -> Optional[Path]:
        if self.out is None:
            return None
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text)
        self.written.append(path)
        return path

    def discard(self):
        for p in self.written:
            p.unlink(missing_ok=True)
        self.written.clear()


# -- subcommands ------------------------------------------------------------


def cmd_train(cfg: ExperimentConfig, art: Artifacts) -> dict:
    tr, va = load_split(cfg)
    spec = cfg.model_spec(tr.num_classes, tr.X.shape[1])
    record = train(cfg.train_config(spec), tr, va)
    payload = {"config": cfg.to_dict(), "seed": cfg.seed, "run": record.to_dict()}
    art.write("run.json", dumps(payload))
    return payload


def _accounting_inputs(cfg: ExperimentConfig) -> tuple[float, int]:
    if cfg.sampling_rate is not None and cfg.steps is not None:
        return cfg.sampling_rate, cfg.steps
    tr, _ = load_split(cfg)
    n = len(tr)
    q = cfg.sampling_rate if cfg.sampling_rate is not None else cfg.batch_size / n
    T = cfg.steps if cfg.steps is not None else cfg.epochs * steps_per_epoch(n, cfg.batch_size)
    return q, T


def cmd_calibrate(cfg: ExperimentConfig, art: Artifacts) -> dict:
    if cfg.epsilon is None:
        raise ConfigurationError("calibrate needs epsilon")
    q, T = _accounting_inputs(cfg)
    sigma = calibrate_sigma(PrivacySpec(cfg.epsilon, cfg.delta, q, T))
    payload = {
        "config": cfg.to_dict(), "seed": cfg.seed,
        "sigma0": sigma, "sampling_rate": q, "steps": T,
        "achieved_epsilon": epsilon_for(sigma, q, T, cfg.delta),
    }
    print(f"sigma0={sigma:.9g} (q={q:.6g}, T={T}, epsilon={payload['achieved_epsilon']:.6g}, delta={cfg.delta:g})")
    art.write("calibrate.json", dumps(payload))
    return payload


def _char_spec(cfg: ExperimentConfig):
    if cfg.model != "char_lm":
        raise ConfigurationError("exposure runs need model: char_lm")
    return cfg.model_spec(0, 0)


def cmd_exposure(cfg: ExperimentConfig, art: Artifacts) -> dict:
    report = run_audit(cfg.train_config(_char_spec(cfg)), cfg.audit_config())
    payload = {"config": cfg.to_dict(), "seed": cfg.seed, "report": report.to_dict()}
    print(f"mode={report.mode} seed={report.seed} rank={report.canary_rank}/{report.space_size} "
          f"exposure={report.exposure_bits:.4f} bits" + (f" mrr={report.mrr:.4f}" if report.mrr is not None else ""))
    art.write("exposure.json", dumps(payload))
    return payload


def _compare_cell(args) -> float:
    cfg, mode, seed = args
    tr, va = load_split(cfg)
    spec = cfg.model_spec(tr.num_classes, tr.X.shape[1])
    return train(cfg.train_config(spec, mode=mode, seed=seed), tr, va).best_accuracy


def compare(cfg: ExperimentConfig) -> dict:
    """Best validation accuracy for every (mode, seed) plus paired t-tests.

    Each non-baseline mode is tested against ``modes[0]`` with
    H1: mean(mode - baseline) > 0.
    """
    for m in cfg.modes:
        if m not in TRAIN_MODES:
            raise ConfigurationError(f"unknown mode {m!r} in modes")
    cells = [(cfg, m, s) for s in cfg.seeds for m in cfg.modes]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            accs = list(pool.map(_compare_cell, cells))
    else:
        accs = [_compare_cell(c) for c in cells]
    k = len(cfg.modes)
    rows = [{"seed": s, **{m: accs[i * k + j] for j, m in enumerate(cfg.modes)}} for i, s in enumerate(cfg.seeds)]
    base = cfg.modes[0]
    tests = []
    for m in cfg.modes[1:]:
        diffs = [r[m] - r[base] for r in rows]
        res = paired_one_tailed_t(diffs) if len(diffs) >= 2 else None
        tests.append({
            "mode": m, "baseline": base,
            "mean_diff": float(np.mean(diffs)),
            "t": res.t if res else math.nan, "p": res.p if res else math.nan,
            "degenerate": res.degenerate if res else True,
        })
    means = {m: float(np.mean([r[m] for r in rows])) for m in cfg.modes}
    return {"config": cfg.to_dict(), "seeds": list(cfg.seeds), "rows": rows, "means": means, "tests": tests}


def cmd_compare(cfg: ExperimentConfig, art: Artifacts) -> dict:
    payload = compare(cfg)
    buf = io.StringIO()
    buf.write(f"# config: {json.dumps(jsonable(cfg.to_dict()), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", *cfg.modes])
    for r in payload["rows"]:
        w.writerow([r["seed"], *(f"{r[m]:.9g}" for m in cfg.modes)])
    for m, v in payload["means"].items():
        print(f"{m:>12s}: mean best accuracy {v:.4f}")
    for t in payload["tests"]:
        print(f"{t['mode']} - {t['baseline']}: mean diff {t['mean_diff']:+.4f}, t={t['t']:.3f}, one-tailed p={t['p']:.4g}")
    art.write("compare.json", dumps(payload))
    art.write("compare.csv", buf.getvalue())
    return payload


def heatmap_csv(records, cfg: ExperimentConfig) -> str:
    """``step,group,stddev`` rows, 9 significant digits, config as a leading comment."""
    buf = io.StringIO()
    buf.write(f"# config: {json.dumps(jsonable(cfg.to_dict()), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "group", "stddev"])
    for r in records:
        w.writerow([r.step, r.group, f"{r.stddev:.9g}"])
    return buf.getvalue()


def cmd_heatmap(cfg: ExperimentConfig, art: Artifacts) -> dict:
    tr, va = load_split(cfg)
    spec = cfg.model_spec(tr.num_classes, tr.X.shape[1])
    record = train(cfg.train_config(spec), tr, va)
    text = heatmap_csv(record.noise, cfg)
    art.write("heatmap.csv", text)
    return {"config": cfg.to_dict(), "rows": len(record.noise), "sigma0": record.sigma0}


COMMANDS = {
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "exposure": cmd_exposure,
    "compare": cmd_compare,
    "heatmap": cmd_heatmap,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anadp", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="flat YAML key/value config")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--mode", choices=TRAIN_MODES, help="overrides the config mode")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(command: str, cfg: ExperimentConfig, out: Optional[Path] = None) -> dict:
    art = Artifacts(out)
    try:
        return COMMANDS[command](cfg, art)
    except BaseException:
        art.discard()
        raise


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.mode is not None:
            overrides["mode"] = args.mode
        if overrides:
            cfg = cfg.replace(**overrides)
        run(args.command, cfg, args.out)
    except ANADPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
