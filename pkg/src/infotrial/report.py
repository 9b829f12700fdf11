"""Replicate aggregation: MSE tables, Wald summaries, allocation tests."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from infotrial.model import ParameterPoint
from infotrial.variational import VariationalParams

log = logging.getLogger(__name__)

Z_975 = 1.959964


@dataclass
class ReplicateSummary:
    trial_id: int
    mode: str
    beta_hat: np.ndarray
    lambda_hat: float
    ci_low: np.ndarray
    ci_high: np.ndarray
    p_value: np.ndarray
    final_entropy: float
    n_rejected: int
    arm_counts: np.ndarray
    n_recruited: int = 0
    recruitment_end_time: float = 0.0
    n_fit_failures: int = 0
    n_acquisition_evals: int = 0
    seed: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.ci_low) > np.asarray(self.ci_high)):
            raise ValueError("ci_low must not exceed ci_high")


def summarize_trial(trial_id, result, k_arms: int, seed: int = 0) -> ReplicateSummary:
    lo, hi, p = wald_summary(result.final_variational.params)
    mp = result.final_map.params
    return ReplicateSummary(
        trial_id=trial_id,
        mode=result.mode,
        beta_hat=np.array(mp.beta),
        lambda_hat=mp.lam,
        ci_low=lo,
        ci_high=hi,
        p_value=p,
        final_entropy=result.final_entropy,
        n_rejected=result.n_rejected,
        arm_counts=result.arm_counts(k_arms),
        n_recruited=result.n_recruited,
        recruitment_end_time=result.recruitment_end_time,
        n_fit_failures=result.n_fit_failures,
        n_acquisition_evals=result.n_acquisition_evals,
        seed=seed,
    )


def mse_table(summaries: list[ReplicateSummary], truth: ParameterPoint) -> np.ndarray:
    """Per-parameter mean squared error, ordered ``(beta_1..beta_d, lambda)``."""
    if not summaries:
        raise ValueError("need at least one replicate")
    est = np.array([np.append(s.beta_hat, s.lambda_hat) for s in summaries])
    ref = np.append(truth.beta, truth.lam)
    if est.shape[1] != ref.shape[0]:
        raise ValueError("dimension mismatch between estimates and truth")
    return np.mean((est - ref) ** 2, axis=0)


def wald_summary(vp: VariationalParams):
    """Normal-approximation intervals and two-sided p-values for each beta."""
    sd = np.sqrt(vp.sigma0_sq)
    lo = vp.mu0 - Z_975 * sd
    hi = vp.mu0 + Z_975 * sd
    p = 2.0 * stats.norm.sf(np.abs(vp.mu0) / sd)
    return lo, hi, p


def chi_square_uniform(arm_counts) -> tuple[float, float]:
    """Pearson goodness-of-fit against equal allocation; returns (statistic, p)."""
    counts = np.asarray(arm_counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("total count must be positive")
    expected = total / counts.size
    stat = float(np.sum((counts - expected) ** 2) / expected)
    if counts.size < 2:
        return stat, 1.0
    return stat, float(stats.chi2.sf(stat, counts.size - 1))


def bh_adjust(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    q = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
    out = np.empty(m)
    out[order] = q
    return out


@dataclass
class TTestResult:
    statistic: float
    p_value: float
    degenerate: bool = False


def paired_t_test_one_sided(a, b) -> TTestResult:
    """Paired t-test of ``mean(a) < mean(b)``.

    With zero-variance differences the statistic is undefined; the p-value is
    then 0.5 for identical samples, else 0 or 1 by the sign of the mean, and
    the result is flagged ``degenerate``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    d = a - b
    n = d.size
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0:
        if mean == 0:
            return TTestResult(0.0, 0.5, True)
        return TTestResult(float(np.sign(mean) * np.inf), 0.0 if mean < 0 else 1.0, True)
    t = mean / (sd / np.sqrt(n))
    return TTestResult(float(t), float(stats.t.cdf(t, n - 1)))


@dataclass
class ExperimentReport:
    mse: dict[str, np.ndarray]
    significance: dict[str, float]
    rejections: dict[str, tuple[float, float]]
    entropy: dict[str, float]
    entropy_test: TTestResult
    allocation: dict[str, dict]
    n_replicates: dict[str, int]
    param_names: list[str] = field(default_factory=list)

    def mse_ratio(self) -> float:
        """ACT/RCT ratio of the beta MSE averaged over coefficients."""
        return float(np.mean(self.mse["act"][:-1]) / np.mean(self.mse["rct"][:-1]))


def experiment_report(act: list[ReplicateSummary], rct: list[ReplicateSummary], truth: ParameterPoint) -> ExperimentReport:
    groups = {"act": act, "rct": rct}
    d = truth.dim
    names = [f"beta_{i + 1}" for i in range(d)] + ["lambda"]
    mse, sig, rej, ent, alloc, counts = {}, {}, {}, {}, {}, {}
    for mode, rows in groups.items():
        counts[mode] = len(rows)
        if not rows:
            continue
        mse[mode] = mse_table(rows, truth)
        sig[mode] = float(np.mean([np.mean(r.p_value < 0.05) for r in rows]))
        nr = np.array([r.n_rejected for r in rows], dtype=float)
        rej[mode] = (float(nr.mean()), float(nr.std(ddof=1)) if nr.size > 1 else 0.0)
        ent[mode] = float(np.mean([r.final_entropy for r in rows]))
        raw = np.array([chi_square_uniform(r.arm_counts)[1] for r in rows])
        adj = bh_adjust(raw)
        alloc[mode] = {
            "raw_p": raw,
            "adjusted_p": adj,
            "n_raw_below_0.05": int(np.sum(raw < 0.05)),
            "n_discoveries": int(np.sum(adj < 0.05)),
        }
    if act and rct and len(act) == len(rct) and len(act) >= 2:
        ttest = paired_t_test_one_sided([r.final_entropy for r in act], [r.final_entropy for r in rct])
    else:
        ttest = TTestResult(float("nan"), float("nan"), True)
    return ExperimentReport(mse, sig, rej, ent, ttest, alloc, counts, names)


def _fmt(x) -> str:
    return repr(float(x))


def write_report(report: ExperimentReport, act, rct, out_dir) -> Path:
    """Write ``summary.txt`` and the CSV tables into ``out_dir/report``."""
    out = Path(out_dir) / "report"
    out.mkdir(parents=True, exist_ok=True)
    modes = [m for m in ("act", "rct") if m in report.mse]

    with open(out / "mse.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode"] + report.param_names + ["beta_mean"])
        for m in modes:
            w.writerow([m] + [_fmt(v) for v in report.mse[m]] + [_fmt(np.mean(report.mse[m][:-1]))])

    with open(out / "significance.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "trial_id"] + [f"p_{n}" for n in report.param_names[:-1]] + ["fraction_significant"])
        for m, rows in (("act", act), ("rct", rct)):
            for r in rows:
                w.writerow([m, r.trial_id] + [_fmt(p) for p in r.p_value] + [_fmt(np.mean(r.p_value < 0.05))])

    with open(out / "entropy_compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_id", "act_entropy", "rct_entropy", "act_rejected", "act_recruited", "rct_recruited"])
        by_id = {r.trial_id: r for r in rct}
        for r in act:
            o = by_id.get(r.trial_id)
            w.writerow(
                [r.trial_id, _fmt(r.final_entropy), _fmt(o.final_entropy) if o else "", r.n_rejected, r.n_recruited, o.n_recruited if o else ""]
            )

    with open(out / "allocation_tests.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "trial_id", "arm_counts", "chi2_statistic", "p_value", "bh_adjusted_p"])
        for m, rows in (("act", act), ("rct", rct)):
            if m not in report.allocation:
                continue
            adj = report.allocation[m]["adjusted_p"]
            for r, q in zip(rows, adj):
                stat, p = chi_square_uniform(r.arm_counts)
                w.writerow([m, r.trial_id, " ".join(str(int(c)) for c in r.arm_counts), _fmt(stat), _fmt(p), _fmt(q)])

    lines = ["Experiment summary", ""]
    for m in modes:
        mean_rej, sd_rej = report.rejections[m]
        lines += [
            f"[{m.upper()}] replicates: {report.n_replicates[m]}",
            "  MSE: " + ", ".join(f"{n}={v:.4g}" for n, v in zip(report.param_names, report.mse[m])),
            f"  mean beta MSE: {np.mean(report.mse[m][:-1]):.4f}",
            f"  fraction of significant coefficients (p<0.05): {100 * report.significance[m]:.1f}%",
            f"  rejected candidates: mean {mean_rej:.1f}, sd {sd_rej:.1f}",
            f"  mean final entropy: {report.entropy[m]:.4f}",
            f"  arm-uniformity tests: {report.allocation[m]['n_raw_below_0.05']} raw p<0.05, "
            f"{report.allocation[m]['n_discoveries']} BH discoveries at 0.05",
            "",
        ]
    if len(modes) == 2:
        t = report.entropy_test
        lines += [
            f"ACT/RCT mean beta MSE ratio: {report.mse_ratio():.4f}",
            f"paired one-sided t-test (ACT entropy < RCT entropy): t={t.statistic:.4g}, p={t.p_value:.4g}"
            + (" [degenerate]" if t.degenerate else ""),
        ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return out
