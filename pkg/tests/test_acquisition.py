import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_dataset
from infotrial.acquisition import (
    ArmSet,
    EntropyAcquisition,
    Identity,
    InteractionFeatures,
    PlainFeatures,
    Step,
    Tanh,
    _normalise_gains,
    expected_entropy,
    f0_eval,
    ideal_candidate,
    interaction_covariates,
    objective,
    recruitment_probability,
)
from infotrial.model import Dataset, Observation, map_estimate
from infotrial.variational import fit_variational


def test_expected_entropy_matches_refit_on_augmented_data(hyper):
    rng = np.random.default_rng(20)
    data = make_dataset(rng, 3, 8)
    x = np.array([0.4, -0.9, 0.2])
    p = map_estimate(data, hyper).params
    t_hat = 1.0 / (p.lam * np.exp(p.beta @ x))
    oracle = fit_variational(data.append(Observation(x, t_hat, True)), hyper).entropy
    assert expected_entropy(data, x[None], hyper) == pytest.approx(oracle, abs=1e-6)


def test_extremes_more_informative_than_centre(two_patient_seed, hyper):
    acq = EntropyAcquisition(two_patient_seed, hyper)
    h = acq.expected_entropy(np.array([[-1.0], [0.0], [1.0]]))
    assert h[0] < h[1] and h[2] < h[1]
    g = acq.objective(np.array([[-1.0], [0.0], [1.0]]))
    assert g[0] > g[1] and g[2] > g[1]


def test_repeat_evaluation_identical(hyper):
    rng = np.random.default_rng(21)
    data = make_dataset(rng, 2, 5)
    acq = EntropyAcquisition(data, hyper)
    x = np.array([[0.3, 0.3], [0.3, 0.3]])
    h = acq.expected_entropy(x)
    assert h[0] == h[1]
    assert objective(data, x[:1], hyper) == objective(data, x[:1], hyper)


def test_expected_entropy_row_permutation_invariant(hyper):
    rng = np.random.default_rng(22)
    data = make_dataset(rng, 2, 7)
    x = np.array([[0.5, -0.5]])
    a = expected_entropy(data, x, hyper)
    b = expected_entropy(data.subset(rng.permutation(7)), x, hyper)
    assert a == pytest.approx(b, abs=1e-8)


def test_objective_on_empty_data(hyper):
    g = objective(Dataset.empty(2), np.array([[1.0, -1.0]]), hyper)
    assert np.isfinite(g) and g > 0


def test_normalise_gains_examples():
    np.testing.assert_allclose(_normalise_gains([0.3, 0.3, 0.3]), [1 / 3] * 3)
    np.testing.assert_allclose(_normalise_gains([0.2, 0.2, 0.6]), [0.2, 0.2, 0.6])
    np.testing.assert_allclose(_normalise_gains([-1.0, 0.0, -0.5]), [1 / 3] * 3)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=6))
def test_normalise_gains_is_distribution(g):
    p = _normalise_gains(g)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-12)


def test_allocation_probabilities_random(hyper):
    rng = np.random.default_rng(23)
    for _ in range(8):
        k = int(rng.integers(1, 4))
        data = make_dataset(rng, 2 * k, int(rng.integers(0, 10)))
        p = EntropyAcquisition(data, hyper).allocation_probabilities(rng.uniform(-1, 1, 2), ArmSet(k), InteractionFeatures())
        assert p.shape == (k,) and np.all(p >= 0) and p.sum() == pytest.approx(1.0)


def test_ideal_candidate_univariate_at_edge(two_patient_seed, hyper):
    y = ideal_candidate(two_patient_seed, np.array([1.0]), PlainFeatures(), [[-1.0, 1.0]], hyper)
    assert abs(abs(y[0]) - 1.0) < 1e-12


def test_ideal_candidate_dominates_grid(hyper):
    rng = np.random.default_rng(24)
    data = make_dataset(rng, 6, 12)
    acq = EntropyAcquisition(data, hyper)
    fmap, z = InteractionFeatures(), np.array([0.0, 1.0, 0.0])
    y, val = acq.ideal_candidate(z, fmap)
    grid = np.array([(a, b) for a in np.linspace(-1, 1, 9) for b in np.linspace(-1, 1, 9)])
    assert val >= acq.objective(fmap.batch(grid, z)).max() - 1e-12
    assert np.all(np.abs(y) <= 1)


def test_ideal_candidate_collapsed_box(hyper):
    rng = np.random.default_rng(25)
    data = make_dataset(rng, 2, 5)
    y = ideal_candidate(data, None, PlainFeatures(), [[0.3, 0.3], [-0.2, -0.2]], hyper)
    np.testing.assert_array_equal(y, [0.3, -0.2])


def test_recruitment_at_ideal_is_certain(hyper):
    rng = np.random.default_rng(26)
    data = make_dataset(rng, 6, 10)
    acq = EntropyAcquisition(data, hyper)
    fmap, z = InteractionFeatures(), np.array([1.0, 0.0, 0.0])
    y_ideal, _ = acq.ideal_candidate(z, fmap)
    for policy in (Identity(), Step(0.66)):
        s, p, _ = acq.recruitment(y_ideal, z, policy, fmap)
        assert s == 1.0 and p == 1.0


def test_recruitment_probability_in_unit_interval(hyper):
    rng = np.random.default_rng(27)
    data = make_dataset(rng, 2, 6)
    for policy in (Identity(), Step(0.3), Tanh(0.2, 1.0)):
        p = recruitment_probability(data, rng.uniform(-1, 1, 2), None, policy, PlainFeatures(), hyper)
        assert 0.0 <= p <= 1.0


def test_policy_examples():
    assert f0_eval(Step(0.5), 0.6) == 1.0
    assert f0_eval(Step(0.5), 0.4) == 0.0
    assert f0_eval(Step(0.5), 0.5) == 0.0
    assert f0_eval(Identity(), 0.37) == 0.37
    assert f0_eval(Tanh(0.25, 2.0), 0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        f0_eval(Identity(), 1.5)


def test_tanh_approaches_step_away_from_threshold():
    beta0, thr = 1e-6, 0.6
    pol = Tanh(beta0, thr / beta0)
    for s in (0.0, 0.3, 0.59, 0.61, 0.8, 1.0):
        assert f0_eval(pol, s) == pytest.approx(f0_eval(Step(thr), s), abs=1e-9)


@given(st.floats(0, 1), st.floats(0.01, 3), st.floats(-3, 3))
def test_tanh_in_unit_interval(s, b0, p0):
    assert 0.0 <= f0_eval(Tanh(b0, p0), s) <= 1.0


def test_interaction_examples():
    np.testing.assert_array_equal(interaction_covariates([0.5, -0.2], [1, 0, 0]), [0.5, 0, 0, -0.2, 0, 0])
    np.testing.assert_array_equal(interaction_covariates([1, 1], [0, 0, 1]), [0, 0, 1, 0, 0, 1])
    with pytest.raises(ValueError):
        interaction_covariates([1, 1], [1, 1, 0])


@given(st.lists(st.floats(0.01, 5) | st.floats(-5, -0.01), min_size=2, max_size=2), st.integers(0, 2))
def test_interaction_two_nonzero(y, k):
    x = interaction_covariates(y, np.eye(3)[k])
    assert np.count_nonzero(x) == 2


def test_feature_batch_matches_single():
    rng = np.random.default_rng(28)
    Y = rng.uniform(-1, 1, (5, 2))
    z = np.array([0.0, 0.0, 1.0])
    f = InteractionFeatures()
    np.testing.assert_array_equal(f.batch(Y, z), np.stack([f(y, z) for y in Y]))


def test_allocation_equivariant_under_arm_relabelling(hyper):
    rng = np.random.default_rng(29)
    data = make_dataset(rng, 6, 9)
    acq = EntropyAcquisition(data, hyper)
    y = np.array([0.7, -0.3])
    base = acq.allocation_probabilities(y, ArmSet(3), InteractionFeatures())
    perm = [2, 0, 1]
    # relabel arms by permuting the arm slots of every covariate row
    cols = np.array([[j * 3 + k for k in perm] for j in range(2)]).ravel()
    relabelled = EntropyAcquisition(Dataset(data.X[:, cols], data.time, data.event), hyper)
    p2 = relabelled.allocation_probabilities(y, ArmSet(3), InteractionFeatures())
    np.testing.assert_allclose(p2, base[perm], atol=1e-8)


def test_fresh_univariate_cohort_peaks_at_endpoint(two_patient_seed, hyper):
    grid = np.array([[-1.0], [-0.5], [0.0], [0.5], [1.0]])
    g = EntropyAcquisition(two_patient_seed, hyper).objective(grid)
    assert int(np.argmax(g)) in (0, 4)


def test_ideal_candidate_tie_breaks_to_first_seed(hyper):
    # empty data, x = y: the objective is symmetric under y -> -y, so corners tie
    acq = EntropyAcquisition(Dataset.empty(2), hyper)
    y, _ = acq.ideal_candidate(None, PlainFeatures())
    g = acq.objective(np.array([[-1.0, -1.0], [1.0, 1.0]]))
    assert g[0] == pytest.approx(g[1], abs=1e-9)
    assert abs(y[0]) == 1.0 and abs(y[1]) == 1.0
