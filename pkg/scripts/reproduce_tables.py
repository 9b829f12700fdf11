"""Run the allocation-only and selective-recruitment studies from the presets.

    python scripts/reproduce_tables.py [--jobs N] [--replicates R] [--out runs]

Each study writes its traces and report bundle under ``<out>/<preset>``.
"""

import argparse
from pathlib import Path

from infotrial.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]
STUDIES = ["table2_uniform", "table2_gaussian", "table3_uniform", "table3_gaussian"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--jobs", default="1")
    ap.add_argument("--replicates", default=None)
    ap.add_argument("--out", default=str(ROOT / "runs"))
    ap.add_argument("--only", nargs="*", choices=STUDIES)
    args = ap.parse_args()
    for name in args.only or STUDIES:
        argv = ["simulate", "--config", str(ROOT / "presets" / f"{name}.cfg"), "--jobs", args.jobs,
                "--out-dir", str(Path(args.out) / name)]
        if args.replicates:
            argv += ["--replicates", args.replicates]
        rc = cli(argv)
        if rc:
            raise SystemExit(rc)


if __name__ == "__main__":
    main()
