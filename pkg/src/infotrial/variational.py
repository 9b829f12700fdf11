"""Mean-field approximation q(lam) q(beta) to the hazard-model posterior.

``log lam ~ N(mu1, sigma1_sq)`` and ``beta ~ N(mu0, diag(sigma0_sq))``.  The
KL objective is minimised in log-variance coordinates

    theta = (mu1, log sigma1_sq, mu0[0..d), log sigma0_sq[0..d))

where it is smooth and strictly convex, so a damped Newton iteration with the
analytic Hessian is used.  Terms that do not depend on ``theta`` (prior
normalisers, the log evidence) are left out of the reported KL value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, polygamma

from infotrial._newton import minimize_batch
from infotrial.model import Dataset, Hyperparameters

_LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True, eq=False)
class VariationalParams:
    mu1: float
    sigma1_sq: float
    mu0: np.ndarray
    sigma0_sq: np.ndarray

    def __post_init__(self):
        mu0 = np.array(self.mu0, dtype=float, ndmin=1)
        s0 = np.array(self.sigma0_sq, dtype=float, ndmin=1)
        if mu0.shape != s0.shape:
            raise ValueError("mu0 and sigma0_sq must have the same shape")
        if not (np.isfinite(self.sigma1_sq) and self.sigma1_sq > 0):
            raise ValueError(f"sigma1_sq must be positive, got {self.sigma1_sq!r}")
        if not (np.all(np.isfinite(s0)) and np.all(s0 > 0)):
            raise ValueError("sigma0_sq entries must be positive")
        if not (np.isfinite(self.mu1) and np.all(np.isfinite(mu0))):
            raise ValueError("means must be finite")
        mu0.setflags(write=False)
        s0.setflags(write=False)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0_sq", s0)
        object.__setattr__(self, "mu1", float(self.mu1))
        object.__setattr__(self, "sigma1_sq", float(self.sigma1_sq))

    @property
    def dim(self) -> int:
        return self.mu0.shape[0]

    @property
    def mean_lambda(self) -> float:
        return float(np.exp(self.mu1 + 0.5 * self.sigma1_sq))

    def to_theta(self) -> np.ndarray:
        return np.concatenate([[self.mu1, np.log(self.sigma1_sq)], self.mu0, np.log(self.sigma0_sq)])

    @classmethod
    def from_theta(cls, theta) -> "VariationalParams":
        theta = np.asarray(theta, dtype=float)
        d = (theta.shape[0] - 2) // 2
        return cls(theta[0], np.exp(theta[1]), theta[2 : 2 + d].copy(), np.exp(theta[2 + d :]))

    @classmethod
    def from_prior(cls, hyper: Hyperparameters, dim: int) -> "VariationalParams":
        """Log-normal moment match to the Gamma prior, Gaussian prior for beta."""
        return cls(
            float(digamma(hyper.kappa0) + np.log(hyper.chi0)),
            float(polygamma(1, hyper.kappa0)),
            np.zeros(dim),
            np.full(dim, hyper.alpha0_sq),
        )


def _entropy_theta(theta: np.ndarray) -> np.ndarray:
    d = (theta.shape[-1] - 2) // 2
    a1, mu1, a0 = theta[..., 1], theta[..., 0], theta[..., 2 + d :]
    return 0.5 + 0.5 * (_LOG_2PI + a1) + mu1 + 0.5 * np.sum(_LOG_2PI + 1.0 + a0, axis=-1)


def variational_entropy(vp: VariationalParams) -> float:
    """Differential entropy of q in (lam, beta): log-normal plus diagonal Gaussian."""
    return float(_entropy_theta(vp.to_theta()))


def expected_exp_beta_x(vp: VariationalParams, x) -> float:
    """E_q[exp(beta @ x)] via the Gaussian moment generating function."""
    x = np.asarray(x, dtype=float)
    if x.shape != vp.mu0.shape:
        raise ValueError("dimension mismatch")
    return float(np.exp(vp.mu0 @ x + 0.5 * np.sum(vp.sigma0_sq * x**2)))


class KLProblem:
    """Batch of KL objectives, one per dataset.

    ``X`` is ``(B, n, d)``, ``time`` is ``(B, n)``; ``n_events`` and
    ``event_sum`` are the per-problem event count and event covariate sum.
    """

    def __init__(self, X, time, n_events, event_sum, hyper: Hyperparameters):
        self.X = np.asarray(X, dtype=float)
        self.time = np.asarray(time, dtype=float)
        self.X2 = self.X**2
        self.n_events = np.asarray(n_events, dtype=float)
        self.event_sum = np.asarray(event_sum, dtype=float)
        self.hyper = hyper
        self.d = self.X.shape[2]

    @classmethod
    def single(cls, data: Dataset, hyper: Hyperparameters) -> "KLProblem":
        phi = data.event_sum if len(data) else np.zeros(data.dim)
        return cls(data.X[None], data.time[None], [data.n_events], phi[None], hyper)

    @classmethod
    def augmented(cls, data: Dataset, X_extra, t_extra, hyper: Hyperparameters) -> "KLProblem":
        """``data`` plus one extra uncensored row per problem."""
        X_extra = np.asarray(X_extra, dtype=float)
        t_extra = np.asarray(t_extra, dtype=float)
        B = X_extra.shape[0]
        X = np.concatenate([np.broadcast_to(data.X, (B,) + data.X.shape), X_extra[:, None, :]], axis=1)
        t = np.concatenate([np.broadcast_to(data.time, (B, len(data))), t_extra[:, None]], axis=1)
        phi = (data.event_sum if len(data) else np.zeros(data.dim))[None, :] + X_extra
        return cls(X, t, np.full(B, data.n_events + 1), phi, hyper)

    def __call__(self, theta, idx=None, derivs=True):
        if idx is None:
            idx = np.arange(theta.shape[0])
        h = self.hyper
        d = self.d
        X, X2, t = self.X[idx], self.X2[idx], self.time[idx]
        n1, phi = self.n_events[idx], self.event_sum[idx]
        mu1, a1 = theta[:, 0], theta[:, 1]
        mu0, a0 = theta[:, 2 : 2 + d], theta[:, 2 + d :]
        s1, s0 = np.exp(a1), np.exp(a0)

        m = np.exp(np.matmul(X, mu0[:, :, None])[..., 0] + 0.5 * np.matmul(X2, s0[:, :, None])[..., 0])
        w = t * m  # (B, n)
        lam_mean = np.exp(mu1 + 0.5 * s1)
        r = 1.0 / h.chi0 + w.sum(axis=1)
        f = (
            -_entropy_theta(theta)
            - (n1 + h.kappa0 - 1) * mu1
            - np.einsum("bd,bd->b", phi, mu0)
            + lam_mean * r
            + np.sum(s0 + mu0**2, axis=1) / (2 * h.alpha0_sq)
        )
        if not derivs:
            return f

        B = theta.shape[0]
        P = 2 + 2 * d
        v = 0.5 * s1
        # per-row sensitivities of log m with respect to (mu0, log sigma0_sq)
        J = np.concatenate([X, 0.5 * s0[:, None, :] * X2], axis=2)  # (B, n, 2d)
        wJ = np.matmul(w[:, None, :], J)[:, 0, :]
        lr = lam_mean * r

        g = np.empty((B, P))
        g[:, 0] = -(n1 + h.kappa0) + lr
        g[:, 1] = -0.5 + lr * v
        g[:, 2 : 2 + d] = -phi + lam_mean[:, None] * wJ[:, :d] + mu0 / h.alpha0_sq
        g[:, 2 + d :] = -0.5 + lam_mean[:, None] * wJ[:, d:] + 0.5 * s0 / h.alpha0_sq

        H = np.zeros((B, P, P))
        H[:, 0, 0] = lr
        H[:, 0, 1] = H[:, 1, 0] = lr * v
        H[:, 1, 1] = lr * (v * v + v)
        cross = lam_mean[:, None] * wJ
        H[:, 0, 2:] = cross
        H[:, 2:, 0] = cross
        H[:, 1, 2:] = v[:, None] * cross
        H[:, 2:, 1] = v[:, None] * cross
        Hb = lam_mean[:, None, None] * np.matmul(J.transpose(0, 2, 1) * w[:, None, :], J)
        diag = np.concatenate(
            [
                np.full((B, d), 1.0 / h.alpha0_sq),
                lam_mean[:, None] * wJ[:, d:] + 0.5 * s0 / h.alpha0_sq,
            ],
            axis=1,
        )
        Hb[:, np.arange(2 * d), np.arange(2 * d)] += diag
        H[:, 2:, 2:] = Hb
        return f, g, H


def kl_divergence(vp: VariationalParams, data: Dataset, hyper: Hyperparameters) -> float:
    """KL(q || posterior) up to an additive constant independent of ``vp``."""
    if not isinstance(vp, VariationalParams):
        raise TypeError("vp must be VariationalParams")
    if vp.dim != data.dim:
        raise ValueError("dimension mismatch")
    return float(KLProblem.single(data, hyper)(vp.to_theta()[None], derivs=False)[0])


def kl_gradient(vp: VariationalParams, data: Dataset, hyper: Hyperparameters) -> np.ndarray:
    """Gradient of :func:`kl_divergence` in ``(mu1, log s1, mu0, log s0)`` order."""
    if vp.dim != data.dim:
        raise ValueError("dimension mismatch")
    _, g, _ = KLProblem.single(data, hyper)(vp.to_theta()[None])
    return g[0]


@dataclass(frozen=True)
class VariationalFit:
    params: VariationalParams
    entropy: float
    kl: float
    converged: bool
    n_iter: int
    grad_norm: float


def fit_variational(
    data: Dataset,
    hyper: Hyperparameters,
    init: VariationalParams | None = None,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> VariationalFit:
    if init is None:
        init = VariationalParams.from_prior(hyper, data.dim)
    if init.dim != data.dim:
        raise ValueError("dimension mismatch")
    problem = KLProblem.single(data, hyper)
    res = minimize_batch(problem, init.to_theta()[None], tol=tol, max_iter=max_iter)
    return _to_fit(res, 0)


def fit_variational_batch(problem: KLProblem, init: VariationalParams, tol=1e-6, max_iter=1000) -> list[VariationalFit]:
    B = problem.X.shape[0]
    theta0 = np.broadcast_to(init.to_theta(), (B, 2 + 2 * problem.d))
    res = minimize_batch(problem, theta0, tol=tol, max_iter=max_iter)
    return [_to_fit(res, b) for b in range(B)]


def fit_entropies(problem: KLProblem, init: VariationalParams, tol=1e-6, max_iter=1000):
    """Fitted entropies and convergence flags for every problem in the batch."""
    B = problem.X.shape[0]
    theta0 = np.broadcast_to(init.to_theta(), (B, 2 + 2 * problem.d))
    res = minimize_batch(problem, theta0, tol=tol, max_iter=max_iter)
    return _entropy_theta(res.x), res.converged


def _to_fit(res, b) -> VariationalFit:
    theta = res.x[b]
    return VariationalFit(
        params=VariationalParams.from_theta(theta),
        entropy=float(_entropy_theta(theta)),
        kl=float(res.fun[b]),
        converged=bool(res.converged[b]),
        n_iter=int(res.n_iter[b]),
        grad_norm=float(np.abs(res.grad[b]).max()),
    )
