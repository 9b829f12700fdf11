"""Command-line front end: simulate, replay, validate, sweep."""

from __future__ import annotations

import argparse
import logging
import sys

from infotrial.config import ConfigError, ExperimentSpec, load_config, parse_config
from infotrial.trial import ReplayFormatError

log = logging.getLogger("infotrial")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment config file (.cfg)")
    p.add_argument("--seed", type=int, help="master seed; overrides the config")
    p.add_argument("--replicates", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--mode", choices=["act", "rct", "both"])


OUTPUTS = """\
outputs (under --out-dir):
  resolved_config.cfg      the fully resolved configuration
  replicates.csv           mode, trial_id, seed, beta_i, lambda, ci_low_i, ci_high_i, p_i,
                           final_entropy, n_rejected, n_recruited, recruitment_end_time,
                           arm_k, n_fit_failures, n_acquisition_evals
  replicates/NNNN_<mode>/  entropy_trace.csv (time, entropy)
                           decisions.csv (candidate_id, arrival, y_j, arm, alloc_k,
                                          s_ratio, recruit_prob, recruited)
                           final_fit.csv (parameter, map, variational_mean, variational_sd)
  report/summary.txt       human-readable summary
  report/mse.csv           mode, beta_i, lambda, beta_mean
  report/significance.csv  mode, trial_id, p_beta_i, fraction_significant
  report/entropy_compare.csv  trial_id, act_entropy, rct_entropy, act_rejected,
                              act_recruited, rct_recruited
  report/allocation_tests.csv mode, trial_id, arm_counts, chi2_statistic, p_value, bh_adjusted_p
  replay writes <mode>/summary.csv (covariate, beta_map, beta_mean, beta_sd, ci_low, ci_high,
  p_value) and <mode>/run.csv next to the per-trial traces.

exit codes: 0 success, 1 validation failure, 2 configuration or input error
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infotrial", description=__doc__, epilog=OUTPUTS, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="paired ACT/RCT replicate study"))
    rp = sub.add_parser("replay", help="replay a recorded cohort")
    _common(rp)
    rp.add_argument("--data", required=True, help="replay CSV")
    _common(sub.add_parser("sweep", help="recruitment threshold sweep"))
    sub.add_parser("validate", help="run the built-in oracle suite")
    return parser


def _spec(args) -> ExperimentSpec:
    overrides = {k: getattr(args, k) for k in ("seed", "replicates", "jobs", "out_dir", "mode")}
    if args.config:
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def _warn_failures(results):
    n = sum(getattr(r, "n_fit_failures", 0) for r in results)
    if n:
        log.warning("%d optimiser runs did not converge; results recorded as-is", n)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)

    if args.command == "validate":
        from infotrial.validation import main as validate

        return validate()

    from infotrial import experiments

    try:
        spec = _spec(args)
        if args.command == "simulate":
            groups, report = experiments.simulate(spec)
            _warn_failures([s for rows in groups.values() for s in rows])
            print((experiments.Path(spec.out_dir) / "report" / "summary.txt").read_text(), end="")
        elif args.command == "sweep":
            experiments.sweep(spec)
            print((experiments.Path(spec.out_dir) / "sweep.csv").read_text(), end="")
        else:
            results = experiments.replay(spec, args.data)
            _warn_failures(results.values())
            for mode, res in results.items():
                print(f"{mode}: recruited {res.n_recruited}, rejected {res.n_rejected}, "
                      f"recruitment ended {res.recruitment_end_time:.3f}, final entropy {res.final_entropy:.4f}")
    except (ConfigError, ReplayFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
