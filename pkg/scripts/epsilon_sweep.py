"""Epsilon as a function of training steps for a few noise multipliers."""
import argparse

import numpy as np

from anadp.accountant import AccountantState, to_epsilon


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--q", type=float, default=0.04)
    ap.add_argument("--delta", type=float, default=1e-5)
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.6, 0.8, 1.0, 1.5, 2.0])
    ap.add_argument("--steps", type=int, nargs="+", default=[10, 50, 100, 250, 500, 1000, 2500])
    args = ap.parse_args()

    print("sigma," + ",".join(f"T={t}" for t in args.steps))
    for sigma in args.sigmas:
        eps = [to_epsilon(AccountantState().compose(sigma, args.q, t), args.delta).epsilon for t in args.steps]
        print(f"{sigma:g}," + ",".join(f"{e:.4f}" for e in eps))
    # sanity: composition is linear in T, so eps grows roughly like sqrt(T) once T is large
    e1, e4 = (to_epsilon(AccountantState().compose(1.0, args.q, t), args.delta).epsilon for t in (500, 2000))
    print(f"# eps(2000)/eps(500) at sigma=1: {e4 / e1:.3f} (sqrt(4)={np.sqrt(4):.0f})")


if __name__ == "__main__":
    main()
