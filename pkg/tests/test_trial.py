import dataclasses
import datetime as dt
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from infotrial.acquisition import Identity, Step
from infotrial.model import ParameterPoint
from infotrial.trial import (
    DAYS_PER_YEAR,
    GeneratorConfig,
    PatientRecord,
    ReplayConfig,
    ReplayFormatError,
    TrialConfig,
    apply_censoring,
    full_cohort_dataset,
    next_arrival,
    read_replay_csv,
    replay_from_file,
    run_trial,
    sample_event_time,
    snapshot,
)
from infotrial.variational import fit_variational

FIXTURES = Path(__file__).parent / "fixtures"
unit_open = st.floats(1e-9, 1 - 1e-9)


def test_event_time_examples():
    p = ParameterPoint(1.0, [0.0])
    assert sample_event_time(p, [3.0], 1 - np.exp(-1)) == pytest.approx(1.0)
    assert sample_event_time(p, [0.0], 1e-15) < 1e-14
    with pytest.raises(ValueError):
        sample_event_time(p, [0.0], 0.0)


def test_event_time_mean_monte_carlo():
    rng = np.random.default_rng(30)
    p = ParameterPoint(0.1, [0.5])
    t = np.array([sample_event_time(p, [0.0], u) for u in rng.random(100_000)])
    assert abs(t.mean() - 10.0) < 3 * t.std(ddof=1) / np.sqrt(t.size)


def test_censoring_examples():
    assert apply_censoring(2.5, 0.0, 0.3, 0.7) == (2.5, True)
    for u1, u2 in [(0.1, 0.2), (0.99, 0.5)]:
        t, ev = apply_censoring(2.5, 1.0, u1, u2)
        assert not ev and t < 2.5


def test_censoring_fraction_monte_carlo():
    rng = np.random.default_rng(31)
    u = rng.random((100_000, 2))
    cens = np.array([not apply_censoring(1.0, 0.5, a, b)[1] for a, b in u], dtype=float)
    assert abs(cens.mean() - 0.5) < 3 * np.sqrt(0.25 / cens.size)


def test_arrival_gap_monte_carlo():
    rng = np.random.default_rng(32)
    gaps = np.array([next_arrival(0.0, 6.0, u) for u in rng.random(100_000)])
    assert abs(gaps.mean() - 1 / 6) < 3 * gaps.std(ddof=1) / np.sqrt(gaps.size)
    assert next_arrival(3.0, 6.0, 1e-15) - 3.0 < 1e-14


@given(st.floats(0, 100), st.floats(0.1, 20), unit_open)
def test_arrival_strictly_later(prev, xi, u):
    assert next_arrival(prev, xi, u) > prev


def _rec(arrival, t_event, censor=None):
    return PatientRecord(0, arrival, np.zeros(1), arm=0, x=np.array([0.5]), event_time=t_event, censor_time=censor, recruited=True)


def test_snapshot_examples():
    recs = [_rec(1.0, 4.0), _rec(2.0, 1.0, censor=0.5)]
    assert len(snapshot(recs, 0.5)) == 0
    d = snapshot(recs, 1.0 + 2.0)
    assert d.time[0] == pytest.approx(2.0) and not d.event[0]
    assert d.time[1] == pytest.approx(0.5) and not d.event[1]
    d = snapshot([_rec(1.0, 4.0), _rec(2.0, 1.0)], 50.0)
    np.testing.assert_allclose(d.time, [4.0, 1.0])
    assert d.event.all()


def _alloc_only(dist="uniform"):
    return TrialConfig(selective=False, generator=GeneratorConfig(covariate_dist=dist))


def test_allocation_only_run_recruits_everyone():
    for dist in ("uniform", "gaussian"):
        res = run_trial(_alloc_only(dist), seed=5)
        assert res.n_recruited == 50 and res.n_rejected == 0
        assert res.arm_counts(3).sum() == 50


def test_same_seed_identical_traces():
    cfg = TrialConfig(policy=Step(0.3), n_target=12)
    a, b = run_trial(cfg, seed=9), run_trial(cfg, seed=9)
    assert a.entropy_trace == b.entropy_trace
    for ra, rb in zip(a.records, b.records):
        assert ra.recruited == rb.recruited and ra.arm == rb.arm
        np.testing.assert_array_equal(ra.decision.alloc_probs, rb.decision.alloc_probs)
        assert ra.decision.s_ratio == rb.decision.s_ratio


def test_act_and_rct_share_candidates():
    cfg = TrialConfig(policy=Step(0.5), n_target=10)
    act = run_trial(cfg, seed=3)
    rct = run_trial(dataclasses.replace(cfg, mode="rct"), seed=3)
    for ra, rr in zip(act.records, rct.records):
        np.testing.assert_array_equal(ra.y, rr.y)
        assert ra.arrival == rr.arrival


def test_rct_performs_no_acquisition():
    res = run_trial(TrialConfig(mode="rct", n_target=20), seed=2)
    assert res.n_acquisition_evals == 0 and res.n_rejected == 0
    assert all(r.decision.alloc_probs is None and r.decision.s_ratio is None for r in res.records)


def test_identity_policy_single_arm_degenerates_to_rct():
    gen = GeneratorConfig(beta_true=(0.5,), n_features=1, k_arms=1, features="plain", covariate_dist="gaussian", covariate_sd=0.0)
    cfg = TrialConfig(n_target=15, policy=Identity(), generator=gen, box=((0.0, 0.0),))
    act = run_trial(cfg, seed=4)
    rct = run_trial(dataclasses.replace(cfg, mode="rct"), seed=4)
    assert act.n_rejected == 0
    assert [r.id for r in act.recruited] == list(range(15))
    assert act.final_entropy == pytest.approx(rct.final_entropy, abs=1e-12)


def test_entropy_trace_times_ordered():
    res = run_trial(TrialConfig(n_target=10, policy=Step(0.4)), seed=6)
    times = [t for t, _ in res.entropy_trace]
    assert times == sorted(times)
    assert times[-1] == max(100.0, res.recruitment_end_time)


def test_burn_in_recruits_unconditionally():
    res = run_trial(TrialConfig(n_target=6, burn_in=4, policy=Step(0.3)), seed=7)
    assert all(r.recruited for r in res.records[:4])
    assert all(r.decision.alloc_probs is None for r in res.records[:4])


def test_config_validation():
    with pytest.raises(ValueError):
        TrialConfig(burn_in=60)
    with pytest.raises(ValueError):
        TrialConfig(mode="other")
    with pytest.raises(ValueError):
        GeneratorConfig(beta_true=(1.0,))


# --- replay --------------------------------------------------------------------


def test_toy_arrival_gaps_equal_date_differences():
    table = read_replay_csv(FIXTURES / "replay_toy.csv")
    assert table.ids == ["p1", "p2", "p3"]
    dates = [dt.date(2001, 1, 10), dt.date(2001, 3, 15), dt.date(2001, 6, 1)]
    expected = [(d - dates[0]).days / DAYS_PER_YEAR for d in dates]
    np.testing.assert_allclose(table.arrival, expected)
    np.testing.assert_allclose(table.followup, np.array([400, 900, 1500]) / DAYS_PER_YEAR)


def test_rct_replay_of_full_file_equals_direct_fit():
    cfg = ReplayConfig(n_target=3, mode="rct")
    res = replay_from_file(FIXTURES / "replay_toy.csv", cfg)
    direct = fit_variational(full_cohort_dataset(FIXTURES / "replay_toy.csv", cfg), cfg.hyper)
    assert res.n_recruited == 3
    assert res.final_entropy == pytest.approx(direct.entropy, abs=1e-6)
    np.testing.assert_allclose(res.final_variational.params.mu0, direct.params.mu0, atol=1e-6)


def test_replay_missing_column_named(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,diagnosis_date,covariate_1,event\na,2000-01-01,3,1\n")
    with pytest.raises(ReplayFormatError, match="missing column 'followup_time'"):
        read_replay_csv(p)


def test_replay_bad_row_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,diagnosis_date,covariate_1,followup_time,event\na,2000-01-01,3,10,1\nb,2000-13-01,x,10,2\n")
    with pytest.raises(ReplayFormatError) as err:
        read_replay_csv(p)
    text = str(err.value)
    assert "line 3: column 'diagnosis_date'" in text
    assert "line 3: column 'covariate_1'" in text
    assert "line 3: column 'event'" in text


def test_step_policy_decisions_consistent_with_threshold():
    res = run_trial(TrialConfig(n_target=12, policy=Step(0.5)), seed=8)
    post = [r for r in res.records if r.decision.s_ratio is not None]
    assert post
    for r in post:
        assert r.recruited == (r.decision.s_ratio > 0.5)
    assert res.n_recruited <= 12
