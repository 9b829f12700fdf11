import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from conftest import make_dataset
from infotrial.model import Dataset, Hyperparameters
from infotrial.variational import (
    KLProblem,
    VariationalParams,
    expected_exp_beta_x,
    fit_variational,
    kl_divergence,
    kl_gradient,
    variational_entropy,
)


def _fd(vp, data, hyper, h=1e-5):
    th = vp.to_theta()
    out = []
    for e in np.eye(th.size):
        f = lambda t: kl_divergence(VariationalParams.from_theta(t), data, hyper)  # noqa: E731
        out.append((f(th + h * e) - f(th - h * e)) / (2 * h))
    return np.array(out)


def test_entropy_example():
    vp = VariationalParams(0.0, 1 / (2 * np.pi), [0.0], [1 / (2 * np.pi * np.e)])
    assert variational_entropy(vp) == pytest.approx(0.5, abs=1e-12)


def test_entropy_matches_scipy_components():
    vp = VariationalParams(0.4, 0.3, [0.1, -0.5], [0.2, 1.5])
    ref = stats.lognorm(s=np.sqrt(0.3), scale=np.exp(0.4)).entropy() + sum(
        stats.norm(0, np.sqrt(s)).entropy() for s in (0.2, 1.5)
    )
    assert variational_entropy(vp) == pytest.approx(ref, rel=1e-12)


@given(st.floats(0.01, 5), st.floats(0.01, 5))
def test_entropy_increases_in_log_rate_variance(a, b):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-9:
        return
    e = lambda s: variational_entropy(VariationalParams(0.2, s, [0.0], [1.0]))  # noqa: E731
    assert e(hi) > e(lo)


def test_entropy_monte_carlo():
    rng = np.random.default_rng(10)
    vp = VariationalParams(-0.3, 0.4, [0.5, 0.1], [0.3, 0.8])
    n = 100_000
    lam = np.exp(rng.normal(vp.mu1, np.sqrt(vp.sigma1_sq), n))
    beta = rng.normal(vp.mu0, np.sqrt(vp.sigma0_sq), (n, 2))
    neg_log_q = -(
        stats.lognorm.logpdf(lam, s=np.sqrt(vp.sigma1_sq), scale=np.exp(vp.mu1))
        + stats.norm.logpdf(beta, vp.mu0, np.sqrt(vp.sigma0_sq)).sum(1)
    )
    se = neg_log_q.std(ddof=1) / np.sqrt(n)
    assert abs(neg_log_q.mean() - variational_entropy(vp)) < 3 * se


def test_expected_exp_beta_x_examples():
    vp = VariationalParams(0.0, 1.0, [1.0], [2.0])
    assert expected_exp_beta_x(vp, [0.0]) == 1.0
    assert expected_exp_beta_x(vp, [1.0]) == pytest.approx(np.e**2)


def test_expected_exp_beta_x_monte_carlo():
    rng = np.random.default_rng(11)
    vp = VariationalParams(0.0, 1.0, [0.3, -0.2, 0.5], [0.1, 0.4, 0.2])
    x = np.array([1.0, 0.5, -0.7])
    s = np.exp(rng.normal(vp.mu0, np.sqrt(vp.sigma0_sq), (100_000, 3)) @ x)
    assert abs(s.mean() - expected_exp_beta_x(vp, x)) < 3 * s.std(ddof=1) / np.sqrt(s.size)


def test_kl_gradient_finite_differences(hyper):
    rng = np.random.default_rng(12)
    for _ in range(20):
        d = int(rng.integers(1, 7))
        data = make_dataset(rng, d, int(rng.integers(0, 25)))
        vp = VariationalParams(rng.normal(0, 0.5), np.exp(rng.uniform(-3, 0)), rng.normal(0, 0.5, d), np.exp(rng.uniform(-3, 0, d)))
        g, fd = kl_gradient(vp, data, hyper), _fd(vp, data, hyper)
        assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1.0) < 1e-5


def test_kl_hessian_finite_differences(hyper):
    rng = np.random.default_rng(13)
    data = make_dataset(rng, 3, 10)
    prob = KLProblem.single(data, hyper)
    th = fit_variational(data, hyper).params.to_theta() + rng.normal(0, 0.1, 8)
    _, _, H = prob(th[None])
    h = 1e-6
    fd = np.array([(prob((th + h * e)[None])[1][0] - prob((th - h * e)[None])[1][0]) / (2 * h) for e in np.eye(8)])
    np.testing.assert_allclose(H[0], fd, atol=1e-5 * max(1, np.abs(fd).max()))


def test_beta_gradient_independent_of_rate_prior():
    rng = np.random.default_rng(14)
    data = make_dataset(rng, 2, 8)
    vp = VariationalParams(0.1, 0.5, [0.2, -0.1], [0.3, 0.6])
    g1 = kl_gradient(vp, data, Hyperparameters(3.0, 1.0, 4.0))
    g2 = kl_gradient(vp, data, Hyperparameters(7.5, 0.2, 4.0))
    np.testing.assert_allclose(g1[2:], g2[2:], rtol=1e-13)


def test_kl_invariant_to_zero_time_censored_row(hyper):
    rng = np.random.default_rng(15)
    data = make_dataset(rng, 2, 5)
    more = Dataset(np.vstack([data.X, [[0.7, -0.4]]]), np.append(data.time, 0.0), np.append(data.event, False))
    vp = VariationalParams(0.1, 0.5, [0.2, -0.1], [0.3, 0.6])
    assert kl_divergence(vp, more, hyper) == pytest.approx(kl_divergence(vp, data, hyper), rel=1e-14)


def test_empty_data_fit_is_prior_for_beta(hyper):
    fit = fit_variational(Dataset.empty(3), hyper)
    assert fit.converged
    np.testing.assert_allclose(fit.params.mu0, 0, atol=1e-4)
    np.testing.assert_allclose(fit.params.sigma0_sq, hyper.alpha0_sq, atol=1e-4)
    # log-rate block: stationarity gives sigma1^2 = 1/kappa0 and E[lam] = kappa0 * chi0
    assert fit.params.sigma1_sq == pytest.approx(1 / hyper.kappa0, rel=1e-6)
    assert fit.params.mean_lambda == pytest.approx(hyper.kappa0 * hyper.chi0, rel=1e-6)
    assert np.max(np.abs(kl_gradient(fit.params, Dataset.empty(3), hyper))) < 1e-6


def test_log_rate_variance_at_optimum(hyper):
    rng = np.random.default_rng(16)
    data = make_dataset(rng, 4, 30)
    fit = fit_variational(data, hyper)
    assert fit.params.sigma1_sq == pytest.approx(1 / (data.n_events + hyper.kappa0), rel=1e-6)


def test_refit_is_fixed_point(hyper):
    rng = np.random.default_rng(17)
    data = make_dataset(rng, 6, 20)
    a = fit_variational(data, hyper)
    b = fit_variational(data, hyper, a.params)
    assert np.max(np.abs(a.params.to_theta() - b.params.to_theta())) < 1e-6


def test_entropy_falls_as_events_accrue(hyper):
    # regression snapshot: seeded sequence of informative events
    rng = np.random.default_rng(18)
    X = rng.uniform(-1, 1, (60, 2))
    t = rng.exponential(1.0, 60)
    ents = [fit_variational(Dataset(X[:n], t[:n], np.ones(n, bool)), hyper).entropy for n in (0, 10, 20, 40, 60)]
    assert all(b < a for a, b in zip(ents, ents[1:]))


def test_batch_problem_matches_single(hyper):
    rng = np.random.default_rng(19)
    data = make_dataset(rng, 2, 6)
    Xe = rng.uniform(-1, 1, (3, 2))
    te = np.array([0.5, 1.0, 2.0])
    prob = KLProblem.augmented(data, Xe, te, hyper)
    th = VariationalParams.from_prior(hyper, 2).to_theta()
    f = prob(np.tile(th, (3, 1)), derivs=False)
    for i in range(3):
        aug = Dataset(np.vstack([data.X, Xe[i]]), np.append(data.time, te[i]), np.append(data.event, True))
        assert f[i] == pytest.approx(kl_divergence(VariationalParams.from_theta(th), aug, hyper), rel=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        VariationalParams(0.0, -1.0, [0.0], [1.0])
    with pytest.raises(ValueError):
        VariationalParams(0.0, 1.0, [0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        kl_divergence(VariationalParams(0.0, 1.0, [0.0], [1.0]), Dataset.empty(2), Hyperparameters())


def test_kl_linear_in_each_time(hyper):
    rng = np.random.default_rng(20)
    data = make_dataset(rng, 2, 6)
    vp = VariationalParams(0.2, 0.3, [0.1, -0.4], [0.5, 0.2])

    def at(t0):
        t = data.time.copy()
        t[2] = t0
        return kl_divergence(vp, Dataset(data.X, t, data.event), hyper)

    a, b, c = at(0.5), at(1.5), at(2.5)
    assert b - a == pytest.approx(c - b, rel=1e-10)
