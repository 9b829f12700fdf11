"""Populate the acceptance-suite result cache with every replicate study.

    python scripts/run_acceptance_studies.py [--cache DIR] [--jobs N]
"""

import argparse
import dataclasses
import time
from pathlib import Path

from infotrial.acquisition import Step
from infotrial.config import load_config
from infotrial.experiments import run_cached

ROOT = Path(__file__).resolve().parents[1]


def studies(jobs):
    for name in ("table2_uniform", "table2_gaussian", "table3_uniform", "table3_gaussian"):
        yield name, load_config(ROOT / "presets" / f"{name}.cfg", {"jobs": jobs})
    sweep = load_config(ROOT / "presets" / "sweep.cfg", {"jobs": jobs})
    for p0 in sweep.sweep_p0:
        trial = dataclasses.replace(sweep.trial, policy=Step(p0))
        yield f"sweep_p0_{p0:g}", dataclasses.replace(sweep, trial=trial, mode="act")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cache", default=str(ROOT / "runs" / "cache"))
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    for name, spec in studies(args.jobs):
        t0 = time.perf_counter()
        run_cached(spec, args.cache)
        print(f"{name}: {time.perf_counter() - t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
