"""Thick L: singular first mode against the smooth 2 pi^2 triple."""

import argparse

from maxwell_cfem.runner import ExperimentSpec, run

ap = argparse.ArgumentParser()
ap.add_argument("--order", type=int, choices=[1, 2], default=1)
ap.add_argument("--coarse-n", type=int, default=4)
ap.add_argument("--levels", type=int, default=2)
args = ap.parse_args()

conv = run(ExperimentSpec(domain="thick-l", r=args.order, coarse_n=args.coarse_n, levels=args.levels)).convergence
for lv in conv.levels:
    print(f"h=1/{lv.n}: " + " ".join(f"{v:.6f}" for v in lv.lam))
for m, ref in enumerate(conv.reference):
    orders = conv.eigenvalue_orders(m)
    print(f"mode {m} ref {ref:.8f} h-orders " + " ".join(f"{o:.3f}" for o in orders if o is not None))
