"""Fichera corner: computed ladders next to the published values.

Level h = 1/8 at r = 2 needs about 4 GB.
"""

import argparse

from maxwell_cfem import analysis as an
from maxwell_cfem.runner import ExperimentSpec, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--order", type=int, choices=[1, 2], default=1)
    ap.add_argument("--coarse-n", type=int, default=2)
    ap.add_argument("--levels", type=int, default=2)
    args = ap.parse_args()
    report = run(ExperimentSpec(domain="fichera", r=args.order, coarse_n=args.coarse_n, levels=args.levels))
    for lv in report.convergence.levels:
        published = an.FICHERA_PUBLISHED.get((args.order, lv.n))
        print(f"h=1/{lv.n}  N={lv.num_tets}")
        for i, value in enumerate(lv.lam):
            ref = f"{published[i]:.8f}" if published else "-"
            print(f"  lambda_{i + 1}: {value:.8f}   published {ref}   benchmark {an.FICHERA_REFERENCE[i]:.8f}")
    errs = [abs(lv.lam[0] - an.FICHERA_REFERENCE[0]) for lv in report.convergence.levels]
    if len(errs) > 1:
        o = an.observed_order(errs, report.convergence.hs)
        print("lambda_1 h-orders", o.h_order, "N-slopes", o.n_slope)


if __name__ == "__main__":
    main()
