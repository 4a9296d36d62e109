"""Plot strict-saddle frequency against q and r from the sweep CSVs."""
import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dir", default="results/census")
    ap.add_argument("--out", default="results/census/figure2.png")
    args = ap.parse_args()

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
    for ax, vary, fixed in zip(axes, ("r", "q"), ("q = 0.01", "r = 0.1")):
        d = load(Path(args.dir) / f"sweep_{vary}.csv")
        ax.fill_between(d["grid_value"], d["ci_low"], d["ci_high"], alpha=0.25)
        ax.plot(d["grid_value"], d["mean_frequency"], marker="o")
        ax.set_xlabel(vary)
        ax.set_title(fixed)
        ax.set_xlim(0, 1)
    axes[0].set_ylabel("strict-saddle frequency")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(args.out)


if __name__ == "__main__":
    main()
