"""Built-in oracle suite run by ``infotrial validate``.

Each check compares a library routine against an independent computation:
central finite differences, Monte-Carlo averages or brute-force quadrature.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from infotrial.acquisition import (
    ArmSet,
    EntropyAcquisition,
    Identity,
    InteractionFeatures,
    PlainFeatures,
    Step,
    Tanh,
)
from infotrial.model import Dataset, Hyperparameters, ParameterPoint, log_posterior, log_posterior_grad, map_estimate
from infotrial.variational import (
    VariationalParams,
    expected_exp_beta_x,
    fit_variational,
    kl_divergence,
    kl_gradient,
    variational_entropy,
)

GRAD_RTOL = 1e-5
MC_DRAWS = 100_000
MC_SIGMAS = 3.0
QUAD_TOL = 0.15


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def _random_dataset(rng, d, n) -> Dataset:
    X = rng.uniform(-1, 1, (n, d))
    t = rng.exponential(1.0, n) + 0.01
    e = rng.random(n) < 0.6
    return Dataset(X, t, e)


def _random_vp(rng, d) -> VariationalParams:
    return VariationalParams(
        rng.normal(0, 0.5), np.exp(rng.uniform(-3, 0)), rng.normal(0, 0.5, d), np.exp(rng.uniform(-3, 0, d))
    )


def _rel_err(g, fd) -> float:
    return float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1.0))


def _central_diff(f, x, h=1e-5):
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def check_kl_gradient(n_instances=50, seed=1, gradient_hook=None) -> Check:
    rng = np.random.default_rng(seed)
    hyper = Hyperparameters()
    worst = 0.0
    for _ in range(n_instances):
        d = int(rng.integers(1, 7))
        data = _random_dataset(rng, d, int(rng.integers(0, 30)))
        vp = _random_vp(rng, d)
        g = kl_gradient(vp, data, hyper)
        if gradient_hook is not None:
            g = gradient_hook(g)
        fd = _central_diff(lambda th: kl_divergence(VariationalParams.from_theta(th), data, hyper), vp.to_theta())
        worst = max(worst, _rel_err(g, fd))
    return Check("kl_gradient_fd", worst < GRAD_RTOL, f"{n_instances} instances, max rel err {worst:.2e}")


def check_log_posterior_gradient(n_instances=50, seed=2, gradient_hook=None) -> Check:
    rng = np.random.default_rng(seed)
    hyper = Hyperparameters()
    worst = 0.0
    for _ in range(n_instances):
        d = int(rng.integers(1, 7))
        data = _random_dataset(rng, d, int(rng.integers(0, 30)))
        p = np.concatenate([[rng.uniform(0.2, 3.0)], rng.normal(0, 0.5, d)])
        g = log_posterior_grad(data, ParameterPoint(p[0], p[1:]), hyper)
        if gradient_hook is not None:
            g = gradient_hook(g)
        fd = _central_diff(lambda q: log_posterior(data, ParameterPoint(q[0], q[1:]), hyper), p, h=1e-6)
        worst = max(worst, _rel_err(g, fd))
    return Check("log_posterior_gradient_fd", worst < GRAD_RTOL, f"{n_instances} instances, max rel err {worst:.2e}")


def check_monte_carlo(seed=3, n_draws=MC_DRAWS) -> list[Check]:
    rng = np.random.default_rng(seed)
    d = 3
    vp = VariationalParams(0.3, 0.2, np.array([0.4, -0.2, 0.1]), np.array([0.1, 0.3, 0.05]))
    x = np.array([0.5, -0.8, 1.0])
    u = rng.normal(vp.mu1, np.sqrt(vp.sigma1_sq), n_draws)
    B = rng.normal(vp.mu0, np.sqrt(vp.sigma0_sq), (n_draws, d))
    lam = np.exp(u)
    log_q = stats.lognorm.logpdf(lam, s=np.sqrt(vp.sigma1_sq), scale=np.exp(vp.mu1)) + stats.norm.logpdf(
        B, vp.mu0, np.sqrt(vp.sigma0_sq)
    ).sum(axis=1)
    cases = [
        ("mc_exp_beta_x", np.exp(B @ x), expected_exp_beta_x(vp, x)),
        ("mc_log_lambda", u, vp.mu1),
        ("mc_lambda", lam, vp.mean_lambda),
        ("mc_entropy", -log_q, variational_entropy(vp)),
    ]
    out = []
    for name, samples, closed in cases:
        mean = samples.mean()
        se = samples.std(ddof=1) / np.sqrt(n_draws)
        z = abs(mean - closed) / se
        out.append(Check(name, z < MC_SIGMAS, f"closed {closed:.6f}, MC {mean:.6f}, |z|={z:.2f}"))
    return out


def quadrature_datasets() -> list[Dataset]:
    """Five fixed univariate cohorts used for the quadrature comparison."""
    return [
        Dataset(np.array([[0.5], [-0.5]]), np.array([1.0, 2.0]), np.array([True, False])),
        Dataset(np.array([[1.0], [0.0], [-1.0]]), np.array([0.3, 1.1, 2.5]), np.array([True, True, True])),
        Dataset(np.array([[0.2], [0.8], [-0.6], [0.4]]), np.array([0.7, 0.2, 3.0, 1.5]), np.array([True, True, False, True])),
        Dataset(
            np.linspace(-1, 1, 8)[:, None],
            np.array([2.0, 1.7, 1.2, 1.0, 0.8, 0.5, 0.4, 0.3]),
            np.array([True, False, True, True, False, True, True, True]),
        ),
        Dataset(np.array([[-0.3], [0.9], [0.1]]), np.array([4.0, 0.6, 0.9]), np.array([False, True, False])),
    ]


def quadrature_entropy(data: Dataset, hyper: Hyperparameters, n_grid=600) -> float:
    """Differential entropy of the d=1 posterior in (lam, beta), by grid quadrature.

    Integrates in u = log(lam), where the density is smooth, and converts
    with H_lam = H_u + E[u].
    """
    X, t, e = data.X[:, 0], data.time, data.event
    k, c, a2 = hyper.kappa0, hyper.chi0, hyper.alpha0_sq
    n1, phi = int(e.sum()), float(X[e].sum())

    def logp(u, b):
        s = (t[None, None, :] * np.exp(b[..., None] * X[None, None, :])).sum(-1)
        return (n1 + k) * u + phi * b - np.exp(u) * (s + 1 / c) - b**2 / (2 * a2)

    m = map_estimate(data, hyper).params
    u0, b0 = np.log(m.lam), float(m.beta[0])
    us = np.linspace(u0 - 6.0, u0 + 6.0, n_grid)
    bs = np.linspace(b0 - 10.0, b0 + 10.0, n_grid)
    U, Bm = np.meshgrid(us, bs, indexing="ij")
    lp = logp(U, Bm)
    area = (us[1] - us[0]) * (bs[1] - bs[0])
    log_z = logsumexp(lp) + np.log(area)
    log_dens = lp - log_z
    p = np.exp(log_dens) * area
    h_u = -float(np.sum(p * log_dens))
    return h_u + float(np.sum(p * U))


def check_quadrature(hyper=None) -> list[Check]:
    hyper = hyper or Hyperparameters()
    out = []
    for i, data in enumerate(quadrature_datasets()):
        h_true = quadrature_entropy(data, hyper)
        h_q = fit_variational(data, hyper).entropy
        out.append(Check(f"quadrature_entropy_{i + 1}", abs(h_q - h_true) < QUAD_TOL, f"variational {h_q:.4f}, quadrature {h_true:.4f}"))
    return out


def check_fuzz(n_instances=15, seed=4) -> list[Check]:
    rng = np.random.default_rng(seed)
    hyper = Hyperparameters()
    alloc_ok, rec_ok = True, True
    worst_sum, bad_prob = 0.0, None
    for _ in range(n_instances):
        k = int(rng.integers(1, 4))
        m = int(rng.integers(1, 3))
        fmap = InteractionFeatures() if rng.random() < 0.5 else PlainFeatures()
        d = fmap.dim(m, k)
        data = _random_dataset(rng, d, int(rng.integers(0, 12)))
        acq = EntropyAcquisition(data, hyper)
        y = rng.uniform(-1, 1, m)
        probs = acq.allocation_probabilities(y, ArmSet(k), fmap)
        err = abs(probs.sum() - 1.0)
        worst_sum = max(worst_sum, err)
        alloc_ok &= err < 1e-12 and bool(np.all(probs >= 0))
        policy = [Identity(), Step(float(rng.random())), Tanh(float(rng.uniform(0.05, 2)), float(rng.random()))][int(rng.integers(3))]
        z = ArmSet(k).indicator(int(rng.integers(k)))
        s, prob, _ = acq.recruitment(y, z, policy, fmap)
        if not (0 <= s <= 1 and 0 <= prob <= 1):
            rec_ok, bad_prob = False, (s, prob)
    return [
        Check("fuzz_allocation_sums_to_one", alloc_ok, f"{n_instances} instances, max |sum-1| {worst_sum:.1e}"),
        Check("fuzz_recruitment_in_unit_interval", rec_ok, f"{n_instances} instances" + (f", bad {bad_prob}" if bad_prob else "")),
    ]


def run_validation(gradient_hook=None) -> list[Check]:
    """Run every check; ``gradient_hook`` perturbs analytic gradients (harness self-test)."""
    checks = [
        check_kl_gradient(gradient_hook=gradient_hook),
        check_log_posterior_gradient(gradient_hook=gradient_hook),
    ]
    checks += check_monte_carlo()
    checks += check_quadrature()
    checks += check_fuzz()
    return checks


def main(gradient_hook=None, stream=None) -> int:
    import sys

    stream = stream or sys.stdout
    t0 = time.perf_counter()
    checks = run_validation(gradient_hook)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}", file=stream)
    n_fail = sum(not c.passed for c in checks)
    print(f"{len(checks) - n_fail}/{len(checks)} checks passed in {time.perf_counter() - t0:.1f}s", file=stream)
    return 1 if n_fail else 0
