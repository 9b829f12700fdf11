"""Sweep the hard recruitment threshold on the uniform selective study.

    python scripts/threshold_sweep.py [--jobs N] [--replicates R] [--p0 0.33,0.66,0.9]

Writes ``sweep.csv`` (ACT and RCT beta-MSE, gap and rejections per p0) plus a
report bundle per threshold.  p0 = 0.9 rejects thousands of candidates per
trial and dominates the runtime.
"""

import argparse
import dataclasses
from pathlib import Path

from infotrial.config import load_config
from infotrial.experiments import sweep

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--replicates", type=int)
    ap.add_argument("--p0", help="comma-separated thresholds")
    ap.add_argument("--out", default=str(ROOT / "runs" / "sweep"))
    args = ap.parse_args()
    spec = load_config(ROOT / "presets" / "sweep.cfg", {"jobs": args.jobs, "replicates": args.replicates})
    if args.p0:
        spec = dataclasses.replace(spec, sweep_p0=tuple(float(v) for v in args.p0.split(",")))
    sweep(spec, args.out)
    print((Path(args.out) / "sweep.csv").read_text(), end="")


if __name__ == "__main__":
    main()
