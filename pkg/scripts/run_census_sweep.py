"""Strict-saddle frequency of random LQ games along q and r grids.

Writes one CSV per sweep (grid_value,mean_frequency,ci_low,ci_high,failures)
into the output directory; feed them to plot_figure2.py.
"""
import argparse
import csv
import time
from pathlib import Path

import numpy as np

from gradplay.lq import census_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/census")
    ap.add_argument("--points", type=int, default=10, help="grid points per sweep")
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--z0", default="identity")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = np.linspace(0.05, 0.95, args.points)
    for vary, fixed in (("r", 0.01), ("q", 0.1)):
        t0 = time.perf_counter()
        pts = census_sweep(vary, grid, fixed, args.samples, args.repeats, args.seed, z0=args.z0)
        path = out / f"sweep_{vary}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["grid_value", "mean_frequency", "ci_low", "ci_high", "failures"])
            for p in pts:
                w.writerow([p.value, p.mean_frequency, *p.ci, p.failures])
        print(f"{path}: {time.perf_counter() - t0:.0f}s")
        for p in pts:
            print(f"  {vary}={p.value:.3f}  freq={p.mean_frequency:.3f}  failures={p.failures}")


if __name__ == "__main__":
    main()
