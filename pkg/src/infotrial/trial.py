"""Trial simulation and retrospective replay.

A trial is a single sequential event loop over candidate arrivals.  At each
arrival the recruited cohort is snapshotted (outcomes revealed up to that
calendar time), the posterior is refitted, and the candidate is recruited or
rejected.  Posterior entropy is traced at every arrival and every observed
primary event.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from infotrial.acquisition import (
    ArmSet,
    EntropyAcquisition,
    FeatureMap,
    Identity,
    InteractionFeatures,
    PlainFeatures,
    RecruitmentPolicy,
    Step,
    default_box,
)
from infotrial.model import Dataset, Hyperparameters, MapFit, ParameterPoint, map_estimate
from infotrial.variational import VariationalFit, fit_variational

log = logging.getLogger(__name__)

_TINY = 2.0**-60


# --- generative primitives -----------------------------------------------------


def _check_open_unit(u, name="u"):
    if not 0.0 < u < 1.0:
        raise ValueError(f"{name}={u!r} must lie in the open interval (0, 1)")


def sample_event_time(params_true: ParameterPoint, x, u: float) -> float:
    """Inverse-CDF draw from the exponential event-time law at covariates ``x``."""
    _check_open_unit(u)
    eta = float(params_true.beta @ np.asarray(x, dtype=float))
    return float(-np.exp(-eta) * np.log1p(-u) / params_true.lam)


def apply_censoring(event_time: float, p_c: float, u1: float, u2: float) -> tuple[float, bool]:
    """Random censoring: with probability ``p_c`` the patient is censored
    uniformly on ``(0, event_time)``."""
    if not 0.0 <= p_c <= 1.0:
        raise ValueError("p_c must lie in [0, 1]")
    if u1 < p_c:
        return u2 * event_time, False
    return event_time, True


def next_arrival(prev: float, xi: float, u: float) -> float:
    _check_open_unit(u)
    if not xi > 0:
        raise ValueError("arrival rate must be positive")
    return prev - np.log1p(-u) / xi


# --- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    beta_true: tuple[float, ...] = (0.8, -0.5, 1.1, -0.7, 0.6, 0.1)
    lambda_true: float = 0.1
    covariate_dist: str = "uniform"  # "uniform" on (-1, 1) or "gaussian"
    covariate_sd: float = 0.5
    n_features: int = 2
    censor_prob: float = 0.5
    arrival_rate: float = 6.0
    k_arms: int = 3
    features: str = "interaction"  # or "plain"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.censor_prob <= 1:
            raise ValueError("censor_prob must lie in [0, 1]")
        if not self.arrival_rate > 0:
            raise ValueError("arrival_rate must be positive")
        if self.covariate_dist not in ("uniform", "gaussian"):
            raise ValueError(f"unknown covariate_dist {self.covariate_dist!r}")
        if self.features not in ("interaction", "plain"):
            raise ValueError(f"unknown features {self.features!r}")
        if len(self.beta_true) != self.fmap.dim(self.n_features, self.k_arms):
            raise ValueError("beta_true length does not match the covariate map")

    @property
    def arms(self) -> ArmSet:
        return ArmSet(self.k_arms)

    @property
    def fmap(self) -> FeatureMap:
        return InteractionFeatures() if self.features == "interaction" else PlainFeatures()

    @property
    def truth(self) -> ParameterPoint:
        return ParameterPoint(self.lambda_true, np.array(self.beta_true))


@dataclass(frozen=True)
class TrialConfig:
    n_target: int = 50
    horizon: float = 100.0
    burn_in: int = 1
    mode: str = "act"  # "act" or "rct"
    selective: bool = True
    policy: RecruitmentPolicy = field(default_factory=lambda: Step(0.66))
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    box: tuple[tuple[float, float], ...] | None = None
    max_candidates: int = 100_000

    def __post_init__(self):
        if self.n_target < 1:
            raise ValueError("n_target must be positive")
        if not 0 <= self.burn_in <= self.n_target:
            raise ValueError("burn_in must lie in [0, n_target]")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.mode not in ("act", "rct"):
            raise ValueError(f"unknown mode {self.mode!r}")


# --- records and results -------------------------------------------------------


@dataclass
class DecisionTrace:
    alloc_probs: np.ndarray | None = None
    s_ratio: float | None = None
    recruit_prob: float = 1.0
    u_arm: float = float("nan")
    u_recruit: float = float("nan")
    y_ideal: np.ndarray | None = None


@dataclass
class PatientRecord:
    id: int
    arrival: float
    y: np.ndarray
    arm: int | None = None
    x: np.ndarray | None = None
    event_time: float = float("inf")
    censor_time: float | None = None
    recruited: bool = False
    decision: DecisionTrace = field(default_factory=DecisionTrace)


@dataclass
class TrialResult:
    records: list[PatientRecord]
    entropy_trace: list[tuple[float, float]]
    final_map: MapFit
    final_variational: VariationalFit
    n_rejected: int
    recruitment_end_time: float
    n_fit_failures: int = 0
    n_acquisition_evals: int = 0
    mode: str = "act"

    @property
    def recruited(self) -> list[PatientRecord]:
        return [r for r in self.records if r.recruited]

    @property
    def n_recruited(self) -> int:
        return sum(r.recruited for r in self.records)

    def arm_counts(self, k_arms: int) -> np.ndarray:
        counts = np.zeros(k_arms, dtype=int)
        for r in self.records:
            if r.recruited:
                counts[r.arm] += 1
        return counts

    @property
    def final_entropy(self) -> float:
        return self.final_variational.entropy


def snapshot(records: list[PatientRecord], tau: float) -> Dataset:
    """Outcomes of recruited patients as visible at calendar time ``tau``."""
    rows, times, events = [], [], []
    dim = None
    for r in records:
        if not r.recruited:
            continue
        dim = r.x.shape[0]
        if r.arrival > tau:
            continue
        elapsed = tau - r.arrival
        if r.censor_time is not None and r.censor_time <= min(elapsed, r.event_time):
            t, e = r.censor_time, False
        elif r.event_time <= elapsed:
            t, e = r.event_time, True
        else:
            t, e = elapsed, False
        rows.append(r.x)
        times.append(t)
        events.append(e)
    if not rows:
        return Dataset.empty(dim if dim is not None else 0)
    return Dataset(np.array(rows), np.array(times), np.array(events, dtype=bool))


# --- candidate streams ---------------------------------------------------------


@dataclass
class Candidate:
    id: int
    arrival: float
    y: np.ndarray
    u_arm: float
    u_recruit: float
    outcome: Callable[[np.ndarray], tuple[float, float | None]]


def simulated_candidates(gen: GeneratorConfig, seed: int) -> Iterator[Candidate]:
    """Candidate stream; every candidate consumes a fixed block of draws so
    that ACT and RCT runs with the same seed see identical candidates."""
    rng = np.random.default_rng(seed)
    truth = gen.truth
    m = gen.n_features
    arrival = 0.0
    j = 0
    while True:
        u_gap = max(rng.random(), _TINY)
        if gen.covariate_dist == "uniform":
            y = rng.uniform(-1.0, 1.0, m)
        else:
            y = rng.normal(0.0, gen.covariate_sd, m)
        w, u1, u2, u_arm, u_rec = rng.random(5)
        w = max(w, _TINY)
        if j > 0:
            arrival = next_arrival(arrival, gen.arrival_rate, u_gap)

        def outcome(x, w=w, u1=u1, u2=u2):
            t = sample_event_time(truth, x, w)
            ct, ev = apply_censoring(t, gen.censor_prob, u1, u2)
            return t, (None if ev else ct)

        yield Candidate(j, arrival, y, float(u_arm), float(u_rec), outcome)
        j += 1


# --- the event loop ------------------------------------------------------------


class _Fitter:
    """Warm-started posterior fits along one trial."""

    def __init__(self, hyper: Hyperparameters):
        self.hyper = hyper
        self.vi = None
        self.map = None
        self.failures = 0

    def variational(self, data: Dataset) -> VariationalFit:
        init = self.vi if self.vi is not None and self.vi.dim == data.dim else None
        fit = fit_variational(data, self.hyper, init)
        if not fit.converged:
            self.failures += 1
            log.warning("variational fit did not converge (grad %.3g)", fit.grad_norm)
        self.vi = fit.params
        return fit

    def map_fit(self, data: Dataset) -> MapFit:
        init = self.map if self.map is not None and self.map.dim == data.dim else None
        fit = map_estimate(data, self.hyper, init)
        if not fit.converged:
            self.failures += 1
            log.warning("MAP fit did not converge (grad %.3g)", fit.grad_norm)
        self.map = fit.params
        return fit


def _run(
    candidates: Iterator[Candidate],
    *,
    dim: int,
    arms: ArmSet,
    fmap: FeatureMap,
    n_target: int,
    horizon: float,
    burn_in: int,
    mode: str,
    selective: bool,
    policy: RecruitmentPolicy,
    hyper: Hyperparameters,
    box,
    max_candidates: int,
) -> TrialResult:
    fitter = _Fitter(hyper)
    records: list[PatientRecord] = []
    recruited: list[PatientRecord] = []
    events: list[float] = []  # calendar times of future primary events
    trace: list[tuple[float, float]] = []
    n_evals = 0
    recruitment_end = 0.0

    def observe(tau):
        data = snapshot(recruited, tau) if recruited else Dataset.empty(dim)
        return data, fitter.variational(data)

    def flush_events(until):
        while events and events[0] <= until:
            te = heapq.heappop(events)
            _, fit = observe(te)
            trace.append((te, fit.entropy))

    for cand in candidates:
        if len(recruited) >= n_target or len(records) >= max_candidates:
            break
        tau = cand.arrival
        flush_events(tau)
        data, base = observe(tau)
        trace.append((tau, base.entropy))

        rec = PatientRecord(cand.id, tau, np.asarray(cand.y, dtype=float))
        dec = rec.decision
        dec.u_arm, dec.u_recruit = cand.u_arm, cand.u_recruit
        k = arms.k_arms
        if mode == "rct" or len(recruited) < burn_in:
            arm = min(int(cand.u_arm * k), k - 1)
            recruit = True
        else:
            acq = EntropyAcquisition(data, hyper, map_fit=fitter.map_fit(data), base_fit=base)
            probs = acq.allocation_probabilities(rec.y, arms, fmap)
            arm = min(int(np.searchsorted(np.cumsum(probs), cand.u_arm, side="right")), k - 1)
            dec.alloc_probs = probs
            if selective:
                s, p, y_ideal = acq.recruitment(rec.y, arms.indicator(arm), policy, fmap, box)
                dec.s_ratio, dec.recruit_prob, dec.y_ideal = s, p, y_ideal
                recruit = cand.u_recruit < p
            else:
                recruit = True
            n_evals += acq.n_evaluations
            fitter.failures += acq.n_failed_fits - int(not acq.base_fit.converged) - int(not acq.map_fit.converged)

        rec.arm = arm
        if recruit:
            rec.recruited = True
            rec.x = fmap(rec.y, arms.indicator(arm))
            rec.event_time, rec.censor_time = cand.outcome(rec.x)
            recruited.append(rec)
            recruitment_end = tau
            if rec.censor_time is None:
                heapq.heappush(events, tau + rec.event_time)
        records.append(rec)

    # recruitment may outlast the nominal horizon; observation then ends at the last recruit
    end = max(horizon, recruitment_end)
    flush_events(end)
    final_data, final_vi = observe(end)
    trace.append((end, final_vi.entropy))
    final_map = fitter.map_fit(final_data)
    return TrialResult(
        records=records,
        entropy_trace=trace,
        final_map=final_map,
        final_variational=final_vi,
        n_rejected=sum(not r.recruited for r in records),
        recruitment_end_time=recruitment_end,
        n_fit_failures=fitter.failures,
        n_acquisition_evals=n_evals,
        mode=mode,
    )


def run_trial(config: TrialConfig, seed: int | None = None) -> TrialResult:
    """Simulate one trial; ``seed`` overrides ``config.generator.seed``."""
    gen = config.generator
    seed = gen.seed if seed is None else seed
    fmap = gen.fmap
    box = config.box if config.box is not None else default_box(gen.n_features)
    return _run(
        simulated_candidates(gen, seed),
        dim=fmap.dim(gen.n_features, gen.k_arms),
        arms=gen.arms,
        fmap=fmap,
        n_target=config.n_target,
        horizon=config.horizon,
        burn_in=config.burn_in,
        mode=config.mode,
        selective=config.selective,
        policy=config.policy,
        hyper=config.hyper,
        box=np.asarray(box, dtype=float),
        max_candidates=config.max_candidates,
    )


# --- retrospective replay --------------------------------------------------------

DAYS_PER_YEAR = 365.25


class ReplayFormatError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid replay file:\n  " + "\n  ".join(problems))


@dataclass(frozen=True)
class ReplayConfig:
    n_target: int = 100
    horizon: float = 10.0  # years
    burn_in: int = 2
    mode: str = "act"
    policy: RecruitmentPolicy = field(default_factory=lambda: Step(0.5))
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    covariates: tuple[str, ...] | None = None  # default: every covariate_* column
    center: str | float = "median"
    scale: float = 25.0
    box: tuple[tuple[float, float], ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("act", "rct"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0 <= self.burn_in <= self.n_target:
            raise ValueError("burn_in must lie in [0, n_target]")
        if not self.scale > 0:
            raise ValueError("scale must be positive")


@dataclass
class ReplayTable:
    ids: list[str]
    arrival: np.ndarray  # years since the first diagnosis
    covariates: np.ndarray  # raw values, (n, m)
    names: list[str]
    followup: np.ndarray  # years
    event: np.ndarray

    def __len__(self):
        return len(self.ids)


def read_replay_csv(path) -> ReplayTable:
    """Parse ``id, diagnosis_date, covariate_1..m, followup_time, event``.

    Rows are returned in diagnosis-date order (file order breaks ties).
    Every problem found is reported, with file line numbers.
    """
    import csv
    import datetime as dt

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ReplayFormatError(["line 1: file is empty, header required"]) from None
        rows = list(reader)

    problems = []
    names = [h for h in header if h.startswith("covariate_")]
    for col in ("id", "diagnosis_date", "followup_time", "event"):
        if col not in header:
            problems.append(f"line 1: missing column '{col}'")
    if not names:
        problems.append("line 1: missing column 'covariate_1'")
    if problems:
        raise ReplayFormatError(problems)
    pos = {h: i for i, h in enumerate(header)}

    ids, dates, covs, fup, ev = [], [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            problems.append(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            continue
        cell = {h: row[i].strip() for h, i in pos.items()}
        try:
            d = dt.date.fromisoformat(cell["diagnosis_date"])
        except ValueError:
            problems.append(f"line {lineno}: column 'diagnosis_date': not an ISO-8601 date: {cell['diagnosis_date']!r}")
            d = None
        vals = []
        for name in names:
            try:
                v = float(cell[name])
                if not np.isfinite(v):
                    raise ValueError
                vals.append(v)
            except ValueError:
                problems.append(f"line {lineno}: column '{name}': not a finite number: {cell[name]!r}")
        try:
            t = float(cell["followup_time"])
            if not (np.isfinite(t) and t >= 0):
                raise ValueError
        except ValueError:
            problems.append(f"line {lineno}: column 'followup_time': must be a nonnegative number: {cell['followup_time']!r}")
            t = None
        if cell["event"] not in ("0", "1"):
            problems.append(f"line {lineno}: column 'event': must be 0 or 1: {cell['event']!r}")
        if not cell["id"]:
            problems.append(f"line {lineno}: column 'id': empty")
        ids.append(cell["id"])
        dates.append(d)
        covs.append(vals)
        fup.append(t)
        ev.append(cell["event"] == "1")
    if problems:
        raise ReplayFormatError(problems)
    if not ids:
        raise ReplayFormatError(["file has a header but no data rows"])

    order = sorted(range(len(ids)), key=lambda i: (dates[i], i))
    first = dates[order[0]]
    return ReplayTable(
        ids=[ids[i] for i in order],
        arrival=np.array([(dates[i] - first).days / DAYS_PER_YEAR for i in order]),
        covariates=np.array([covs[i] for i in order], dtype=float),
        names=names,
        followup=np.array([fup[i] / DAYS_PER_YEAR for i in order]),
        event=np.array([ev[i] for i in order], dtype=bool),
    )


def rescale_covariates(table: ReplayTable, config: ReplayConfig) -> tuple[np.ndarray, list[str]]:
    names = list(config.covariates) if config.covariates is not None else table.names
    missing = [n for n in names if n not in table.names]
    if missing:
        raise ReplayFormatError([f"line 1: missing column '{n}'" for n in missing])
    raw = table.covariates[:, [table.names.index(n) for n in names]]
    center = np.median(raw, axis=0) if config.center == "median" else float(config.center)
    return (raw - center) / config.scale, names


def replay_candidates(table: ReplayTable, Y: np.ndarray, seed: int) -> Iterator[Candidate]:
    rng = np.random.default_rng(seed)
    for i in range(len(table)):
        u_arm, u_rec = rng.random(2)
        t, observed = float(table.followup[i]), bool(table.event[i])

        def outcome(x, t=t, observed=observed):
            return (t, None) if observed else (float("inf"), t)

        yield Candidate(i, float(table.arrival[i]), Y[i], float(u_arm), float(u_rec), outcome)


def replay_from_file(path, config: ReplayConfig) -> TrialResult:
    """Re-run a recorded cohort in diagnosis order under ACT or RCT rules."""
    table = read_replay_csv(path)
    Y, _ = rescale_covariates(table, config)
    fmap = PlainFeatures()
    box = config.box if config.box is not None else default_box(Y.shape[1])
    result = _run(
        replay_candidates(table, Y, config.seed),
        dim=Y.shape[1],
        arms=ArmSet(1),
        fmap=fmap,
        n_target=config.n_target,
        horizon=config.horizon,
        burn_in=config.burn_in,
        mode=config.mode,
        selective=True,
        policy=config.policy,
        hyper=config.hyper,
        box=np.asarray(box, dtype=float),
        max_candidates=len(table),
    )
    for rec in result.records:
        rec.id = table.ids[rec.id]
    return result


def full_cohort_dataset(path, config: ReplayConfig, tau: float | None = None) -> Dataset:
    """Every patient in the file, as observed at ``tau`` (default: the horizon)."""
    table = read_replay_csv(path)
    Y, _ = rescale_covariates(table, config)
    records = []
    for i in range(len(table)):
        r = PatientRecord(i, float(table.arrival[i]), Y[i], arm=0, x=Y[i].copy(), recruited=True)
        if table.event[i]:
            r.event_time = float(table.followup[i])
        else:
            r.censor_time = float(table.followup[i])
        records.append(r)
    return snapshot(records, config.horizon if tau is None else tau)
