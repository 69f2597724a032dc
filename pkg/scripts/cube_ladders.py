"""Cube ladders: tangential r=1,2 and the clamped (full) comparison space.

    python3 scripts/cube_ladders.py --out runs/cube
"""

import argparse
from pathlib import Path

from maxwell_cfem.runner import ExperimentSpec, run, write_outputs

LADDERS = {
    "r1_tangential": dict(r=1, boundary="tangential", levels=3),
    "r2_tangential": dict(r=2, boundary="tangential", levels=2),
    "r2_full": dict(r=2, boundary="full", levels=2),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/cube")
    ap.add_argument("--coarse-n", type=int, default=4)
    ap.add_argument("--nev", type=int, default=5)
    args = ap.parse_args()
    for name, kw in LADDERS.items():
        report = run(ExperimentSpec(domain="cube", coarse_n=args.coarse_n, nev=args.nev, **kw))
        write_outputs(report, Path(args.out) / name)
        conv = report.convergence
        print(name)
        for m in range(args.nev):
            print(f"  mode {m}: eig {conv.eigenvalue_orders(m)}  L2 {conv.l2_orders(m)}  "
                  f"Hcurl {conv.hcurl_orders(m)}")


if __name__ == "__main__":
    main()
