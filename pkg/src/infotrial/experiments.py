"""Seeded replicate batches, paired across ACT and RCT."""

from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from infotrial.acquisition import Step
from infotrial.config import ExperimentSpec, dump_config
from infotrial.outputs import write_trial_outputs
from infotrial.report import ReplicateSummary, experiment_report, summarize_trial, write_report
from infotrial.trial import TrialConfig, run_trial


def replicate_seed(master_seed: int, index: int) -> int:
    """Independent stream per replicate, shared by its ACT and RCT runs."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _one(job) -> ReplicateSummary:
    config, index, seed, mode, trace_dir = job
    result = run_trial(dataclasses.replace(config, mode=mode), seed=seed)
    k = config.generator.k_arms
    if trace_dir is not None:
        write_trial_outputs(result, Path(trace_dir) / f"{index:04d}_{mode}", k)
    return summarize_trial(index, result, k, seed)


def run_replicates(
    config: TrialConfig,
    replicates: int,
    master_seed: int,
    modes=("act", "rct"),
    jobs: int = 1,
    trace_dir=None,
) -> dict[str, list[ReplicateSummary]]:
    work = [
        (config, i, replicate_seed(master_seed, i), mode, trace_dir)
        for mode in modes
        for i in range(replicates)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_one, work, chunksize=1))
    else:
        done = [_one(w) for w in work]
    out: dict[str, list[ReplicateSummary]] = {m: [] for m in modes}
    for s in done:
        out[s.mode].append(s)
    return out


REPLICATE_COLUMNS = ["mode", "trial_id", "seed"]


def write_replicates_csv(groups: dict[str, list[ReplicateSummary]], path) -> None:
    rows = [s for m in ("act", "rct") for s in groups.get(m, [])]
    if not rows:
        return
    d = rows[0].beta_hat.shape[0]
    k = rows[0].arm_counts.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            REPLICATE_COLUMNS
            + [f"beta_{i + 1}" for i in range(d)]
            + ["lambda"]
            + [f"ci_low_{i + 1}" for i in range(d)]
            + [f"ci_high_{i + 1}" for i in range(d)]
            + [f"p_{i + 1}" for i in range(d)]
            + ["final_entropy", "n_rejected", "n_recruited", "recruitment_end_time"]
            + [f"arm_{j + 1}" for j in range(k)]
            + ["n_fit_failures", "n_acquisition_evals"]
        )
        for s in rows:
            w.writerow(
                [s.mode, s.trial_id, s.seed]
                + [repr(float(v)) for v in s.beta_hat]
                + [repr(float(s.lambda_hat))]
                + [repr(float(v)) for v in s.ci_low]
                + [repr(float(v)) for v in s.ci_high]
                + [repr(float(v)) for v in s.p_value]
                + [repr(float(s.final_entropy)), s.n_rejected, s.n_recruited, repr(float(s.recruitment_end_time))]
                + [int(c) for c in s.arm_counts]
                + [s.n_fit_failures, s.n_acquisition_evals]
            )


def read_replicates_csv(path) -> dict[str, list[ReplicateSummary]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out: dict[str, list[ReplicateSummary]] = {}
    for r in rows:
        d = sum(1 for c in r if c.startswith("beta_"))
        k = sum(1 for c in r if c.startswith("arm_"))
        vec = lambda prefix, n: np.array([float(r[f"{prefix}{i + 1}"]) for i in range(n)])  # noqa: E731
        out.setdefault(r["mode"], []).append(
            ReplicateSummary(
                trial_id=int(r["trial_id"]),
                mode=r["mode"],
                beta_hat=vec("beta_", d),
                lambda_hat=float(r["lambda"]),
                ci_low=vec("ci_low_", d),
                ci_high=vec("ci_high_", d),
                p_value=vec("p_", d),
                final_entropy=float(r["final_entropy"]),
                n_rejected=int(r["n_rejected"]),
                arm_counts=vec("arm_", k).astype(int),
                n_recruited=int(r["n_recruited"]),
                recruitment_end_time=float(r["recruitment_end_time"]),
                n_fit_failures=int(r["n_fit_failures"]),
                n_acquisition_evals=int(r["n_acquisition_evals"]),
                seed=int(r["seed"]),
            )
        )
    return out


def simulate(spec: ExperimentSpec, out_dir=None, traces: bool = True):
    """Run ``spec`` and write traces, ``replicates.csv`` and the report bundle."""
    out = Path(out_dir if out_dir is not None else spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.cfg").write_text(dump_config(spec))
    groups = run_replicates(
        spec.trial,
        spec.replicates,
        spec.seed,
        spec.modes(),
        spec.jobs,
        trace_dir=(out / "replicates") if traces else None,
    )
    write_replicates_csv(groups, out / "replicates.csv")
    report = experiment_report(groups.get("act", []), groups.get("rct", []), spec.trial.generator.truth)
    write_report(report, groups.get("act", []), groups.get("rct", []), out)
    return groups, report


def sweep(spec: ExperimentSpec, out_dir=None, traces: bool = True):
    """ACT at each threshold in ``spec.sweep_p0`` against one shared RCT arm."""
    out = Path(out_dir if out_dir is not None else spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.cfg").write_text(dump_config(spec))
    rct = run_replicates(spec.trial, spec.replicates, spec.seed, ["rct"], spec.jobs,
                         trace_dir=(out / "rct" / "replicates") if traces else None)["rct"]
    write_replicates_csv({"rct": rct}, out / "rct_replicates.csv")
    results = {}
    for p0 in spec.sweep_p0:
        sub = out / f"p0_{p0:g}"
        cfg = dataclasses.replace(spec.trial, policy=Step(p0))
        act = run_replicates(cfg, spec.replicates, spec.seed, ["act"], spec.jobs,
                             trace_dir=(sub / "replicates") if traces else None)["act"]
        write_replicates_csv({"act": act, "rct": rct}, sub / "replicates.csv")
        report = experiment_report(act, rct, spec.trial.generator.truth)
        write_report(report, act, rct, sub)
        results[p0] = report
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p0", "act_beta_mse", "rct_beta_mse", "mse_gap", "act_mean_rejected", "act_sd_rejected",
                    "act_fraction_significant", "rct_fraction_significant"])
        for p0, rep in results.items():
            a, r = float(np.mean(rep.mse["act"][:-1])), float(np.mean(rep.mse["rct"][:-1]))
            w.writerow([repr(p0), repr(a), repr(r), repr(r - a), repr(rep.rejections["act"][0]),
                        repr(rep.rejections["act"][1]), repr(rep.significance["act"]), repr(rep.significance["rct"])])
    return results


def write_replay_summary(result, names, out_dir) -> Path:
    """Coefficient table (MAP estimate, variational Wald summary) and run totals."""
    from infotrial.report import wald_summary

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vp = result.final_variational.params
    mp = result.final_map.params
    lo, hi, p = wald_summary(vp)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["covariate", "beta_map", "beta_mean", "beta_sd", "ci_low", "ci_high", "p_value"])
        for i, name in enumerate(names):
            w.writerow([name] + [repr(float(v)) for v in (mp.beta[i], vp.mu0[i], np.sqrt(vp.sigma0_sq[i]), lo[i], hi[i], p[i])])
    with open(out / "run.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "n_recruited", "n_rejected", "recruitment_end_time", "final_entropy", "lambda_map", "n_fit_failures"])
        w.writerow([result.mode, result.n_recruited, result.n_rejected, repr(float(result.recruitment_end_time)),
                    repr(float(result.final_entropy)), repr(float(mp.lam)), result.n_fit_failures])
    return out


def replay(spec: ExperimentSpec, data_path, out_dir=None):
    """Replay a recorded cohort under each requested mode into ``out_dir/<mode>``."""
    from infotrial.trial import read_replay_csv, replay_from_file, rescale_covariates

    out = Path(out_dir if out_dir is not None else spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.cfg").write_text(dump_config(spec))
    _, names = rescale_covariates(read_replay_csv(data_path), spec.replay)
    results = {}
    for mode in spec.modes():
        cfg = dataclasses.replace(spec.replay, mode=mode)
        res = replay_from_file(data_path, cfg)
        write_trial_outputs(res, out / mode, 1)
        write_replay_summary(res, names, out / mode)
        results[mode] = res
    return results


def cache_key(spec: ExperimentSpec, mode: str) -> str:
    """Hash of everything that determines the replicate results for ``mode``."""
    import hashlib

    trial = spec.trial
    if mode == "rct":
        # randomised arms never consult the policy
        trial = dataclasses.replace(trial, policy=Step(0.5), selective=True)
    neutral = dataclasses.replace(spec, trial=trial, out_dir="", jobs=1, mode=mode, sweep_p0=())
    return hashlib.sha256(dump_config(neutral).encode()).hexdigest()[:16]


def run_cached(spec: ExperimentSpec, cache_dir) -> dict[str, list[ReplicateSummary]]:
    """Replicate summaries per mode, reusing ``cache_dir/<key>.csv`` when present."""
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    out = {}
    for mode in spec.modes():
        path = cache / f"{mode}_{cache_key(spec, mode)}.csv"
        if path.exists():
            out[mode] = read_replicates_csv(path)[mode]
            continue
        groups = run_replicates(spec.trial, spec.replicates, spec.seed, [mode], spec.jobs)
        tmp = path.with_suffix(".tmp")
        write_replicates_csv(groups, tmp)
        tmp.replace(path)
        out[mode] = groups[mode]
    return out
