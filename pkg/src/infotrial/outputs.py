"""CSV export of single-trial results."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from infotrial.trial import TrialResult


def _f(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_trial_outputs(result: TrialResult, out_dir, k_arms: int) -> Path:
    """Write ``entropy_trace.csv``, ``decisions.csv`` and ``final_fit.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "entropy_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "entropy"])
        for t, h in result.entropy_trace:
            w.writerow([_f(t), _f(h)])

    m = result.records[0].y.shape[0] if result.records else 0
    with open(out / "decisions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["candidate_id", "arrival"]
            + [f"y_{j + 1}" for j in range(m)]
            + ["arm"]
            + [f"alloc_{k + 1}" for k in range(k_arms)]
            + ["s_ratio", "recruit_prob", "recruited"]
        )
        for r in result.records:
            d = r.decision
            probs = d.alloc_probs if d.alloc_probs is not None else [None] * k_arms
            w.writerow(
                [r.id, _f(r.arrival)]
                + [_f(v) for v in r.y]
                + ["" if r.arm is None else r.arm + 1]
                + [_f(p) for p in probs]
                + [_f(d.s_ratio), _f(d.recruit_prob), int(r.recruited)]
            )

    vp = result.final_variational.params
    mp = result.final_map.params
    lam_sd = np.sqrt(np.expm1(vp.sigma1_sq) * np.exp(2 * vp.mu1 + vp.sigma1_sq))
    with open(out / "final_fit.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "map", "variational_mean", "variational_sd"])
        w.writerow(["lambda", _f(mp.lam), _f(vp.mean_lambda), _f(lam_sd)])
        for i in range(mp.dim):
            w.writerow([f"beta_{i + 1}", _f(mp.beta[i]), _f(vp.mu0[i]), _f(np.sqrt(vp.sigma0_sq[i]))])
    return out
