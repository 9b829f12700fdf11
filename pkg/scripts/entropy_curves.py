"""Mean entropy-versus-time curves for ACT and RCT from a simulate output dir.

    python scripts/entropy_curves.py runs/table3_gaussian [--grid 200]

Each replicate's step-function trace is sampled on a common time grid and
averaged; the result is written to ``<dir>/entropy_curves.csv``.
"""

import argparse
import csv
from pathlib import Path

import numpy as np


def load_trace(path):
    t, h = np.loadtxt(path, delimiter=",", skiprows=1, unpack=True, ndmin=2)
    return t, h


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("run_dir")
    ap.add_argument("--grid", type=int, default=200)
    args = ap.parse_args()
    root = Path(args.run_dir)
    traces = {}
    for d in sorted((root / "replicates").iterdir()):
        mode = d.name.split("_")[-1]
        traces.setdefault(mode, []).append(load_trace(d / "entropy_trace.csv"))
    t_end = max(t[-1] for runs in traces.values() for t, _ in runs)
    grid = np.linspace(0, t_end, args.grid)
    curves = {}
    for mode, runs in traces.items():
        # entropy holds its last traced value until the next trace point
        vals = [h[np.clip(np.searchsorted(t, grid, side="right") - 1, 0, None)] for t, h in runs]
        curves[mode] = np.mean(vals, axis=0)
    modes = sorted(curves)
    with open(root / "entropy_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + [f"{m}_mean_entropy" for m in modes])
        for i, g in enumerate(grid):
            w.writerow([repr(float(g))] + [repr(float(curves[m][i])) for m in modes])
    print(f"wrote {root / 'entropy_curves.csv'}")


if __name__ == "__main__":
    main()
