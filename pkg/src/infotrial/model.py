"""Constant-baseline proportional hazards model with Gamma/Normal priors.

The hazard for covariates ``x`` is ``lam * exp(beta @ x)``.  Priors are
``lam ~ Gamma(shape=kappa0, scale=chi0)`` and ``beta ~ N(0, alpha0_sq * I)``.
The covariate population density is treated as constant and dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

from infotrial._newton import minimize_batch


@dataclass(frozen=True)
class Hyperparameters:
    kappa0: float = 3.0
    chi0: float = 1.0
    alpha0_sq: float = 4.0

    def __post_init__(self):
        for name in ("kappa0", "chi0", "alpha0_sq"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be strictly positive, got {v!r}")


@dataclass(frozen=True, eq=False)
class ParameterPoint:
    lam: float
    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float, ndmin=1)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "lam", float(self.lam))
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be positive and finite, got {self.lam!r}")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")

    @property
    def dim(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True, eq=False)
class Observation:
    covariates: np.ndarray
    time: float
    event: bool

    def __post_init__(self):
        x = np.array(self.covariates, dtype=float, ndmin=1)
        x.setflags(write=False)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "event", bool(self.event))
        if not (np.isfinite(self.time) and self.time >= 0):
            raise ValueError(f"time must be finite and >= 0, got {self.time!r}")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates must be finite")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable snapshot of observed outcomes.

    ``X`` has shape ``(n, d)``; ``time`` and ``event`` have shape ``(n,)``.
    """

    X: np.ndarray
    time: np.ndarray
    event: np.ndarray
    n_events: int = field(init=False)
    event_sum: np.ndarray = field(init=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        t = np.array(self.time, dtype=float, ndmin=1)
        ev = np.array(self.event, dtype=bool, ndmin=1)
        if X.shape[0] == 0 and t.size == 0:
            ev = ev.reshape(0)
        if not (X.shape[0] == t.shape[0] == ev.shape[0]):
            raise ValueError("X, time and event must have matching lengths")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ValueError("times must be finite and nonnegative")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates must be finite")
        for a in (X, t, ev):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "event", ev)
        object.__setattr__(self, "n_events", int(ev.sum()))
        phi = X[ev].sum(axis=0)
        phi.setflags(write=False)
        object.__setattr__(self, "event_sum", phi)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0), np.zeros(0, dtype=bool))

    @classmethod
    def from_observations(cls, observations: Iterable[Observation], dim: int | None = None) -> "Dataset":
        obs = list(observations)
        if not obs:
            if dim is None:
                raise ValueError("dim is required for an empty dataset")
            return cls.empty(dim)
        dims = {o.covariates.shape[0] for o in obs}
        if len(dims) != 1 or (dim is not None and dims != {dim}):
            raise ValueError(f"inconsistent covariate dimensions: {sorted(dims)}")
        return cls(
            np.stack([o.covariates for o in obs]),
            np.array([o.time for o in obs]),
            np.array([o.event for o in obs], dtype=bool),
        )

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def observations(self) -> list[Observation]:
        return [Observation(x, t, e) for x, t, e in zip(self.X, self.time, self.event)]

    def append(self, obs: Observation) -> "Dataset":
        if obs.covariates.shape[0] != self.dim:
            raise ValueError("covariate dimension mismatch")
        return Dataset(
            np.vstack([self.X, obs.covariates[None, :]]),
            np.append(self.time, obs.time),
            np.append(self.event, obs.event),
        )

    def subset(self, idx: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.time[idx], self.event[idx])


def _check_dim(beta: np.ndarray, d: int):
    if beta.shape[0] != d:
        raise ValueError(f"dimension mismatch: beta has {beta.shape[0]} entries, covariates {d}")


def hazard(params: ParameterPoint, x) -> float:
    x = np.asarray(x, dtype=float)
    _check_dim(params.beta, x.shape[0])
    return params.lam * float(np.exp(params.beta @ x))


def predictive_mean_time(params: ParameterPoint, x) -> float:
    """Mean of the exponential event-time density at ``x``."""
    return 1.0 / hazard(params, x)


def log_likelihood(data: Dataset, params: ParameterPoint) -> float:
    if len(data) == 0:
        return 0.0
    _check_dim(params.beta, data.dim)
    eta = data.X @ params.beta
    return float(
        data.n_events * np.log(params.lam)
        + eta[data.event].sum()
        - params.lam * np.sum(data.time * np.exp(eta))
    )


def log_prior(params: ParameterPoint, hyper: Hyperparameters) -> float:
    k, c, a2 = hyper.kappa0, hyper.chi0, hyper.alpha0_sq
    lam = params.lam
    log_gamma = (k - 1) * np.log(lam) - lam / c - gammaln(k) - k * np.log(c)
    d = params.dim
    log_normal = -0.5 * d * np.log(2 * np.pi * a2) - 0.5 * float(params.beta @ params.beta) / a2
    return float(log_gamma + log_normal)


def log_posterior(data: Dataset, params: ParameterPoint, hyper: Hyperparameters) -> float:
    """Unnormalised log posterior density in ``(lam, beta)``."""
    if params.lam <= 0:
        raise ValueError("lam must be positive")
    return log_likelihood(data, params) + log_prior(params, hyper)


def log_posterior_grad(data: Dataset, params: ParameterPoint, hyper: Hyperparameters) -> np.ndarray:
    """Gradient of :func:`log_posterior` with respect to ``(lam, beta)``."""
    lam, beta = params.lam, params.beta
    if len(data):
        _check_dim(beta, data.dim)
        w = data.time * np.exp(data.X @ beta)
        s, sx = w.sum(), w @ data.X
    else:
        s, sx = 0.0, np.zeros_like(beta)
    phi = data.event_sum if len(data) else np.zeros_like(beta)
    g_lam = (data.n_events + hyper.kappa0 - 1) / lam - s - 1 / hyper.chi0
    g_beta = phi - lam * sx - beta / hyper.alpha0_sq
    return np.concatenate([[g_lam], g_beta])


@dataclass(frozen=True)
class MapFit:
    params: ParameterPoint
    converged: bool
    n_iter: int
    grad_norm: float


def _neg_log_post_logscale(data: Dataset, hyper: Hyperparameters):
    X, t = data.X, data.time
    a_coef = data.n_events + hyper.kappa0 - 1
    phi = data.event_sum if len(data) else np.zeros(data.dim)
    inv_chi, inv_a2 = 1 / hyper.chi0, 1 / hyper.alpha0_sq
    d = data.dim

    def fun(theta, idx, derivs):
        u, beta = theta[:, 0], theta[:, 1:]
        w = t[None, :] * np.exp(beta @ X.T)  # (B, n)
        r = inv_chi + w.sum(axis=1)
        lam = np.exp(u)
        f = -a_coef * u - beta @ phi + lam * r + 0.5 * inv_a2 * np.sum(beta**2, axis=1)
        if not derivs:
            return f
        wx = w @ X  # (B, d)
        g = np.empty_like(theta)
        g[:, 0] = -a_coef + lam * r
        g[:, 1:] = -phi + lam[:, None] * wx + inv_a2 * beta
        H = np.empty((theta.shape[0], d + 1, d + 1))
        H[:, 0, 0] = lam * r
        H[:, 0, 1:] = lam[:, None] * wx
        H[:, 1:, 0] = H[:, 0, 1:]
        H[:, 1:, 1:] = lam[:, None, None] * np.einsum("bn,ni,nj->bij", w, X, X) + inv_a2 * np.eye(d)
        return f, g, H

    return fun


def prior_mode(hyper: Hyperparameters, dim: int) -> ParameterPoint:
    lam = max(hyper.kappa0 - 1, 1e-3) * hyper.chi0
    return ParameterPoint(lam, np.zeros(dim))


def map_estimate(
    data: Dataset,
    hyper: Hyperparameters,
    init: ParameterPoint | None = None,
    tol: float = 1e-6,
    max_iter: int = 500,
) -> MapFit:
    """Posterior mode, searched over ``(log lam, beta)``.

    Non-convergence is reported through ``MapFit.converged``; the best point
    found is returned either way.
    """
    if init is None:
        init = prior_mode(hyper, data.dim)
    _check_dim(init.beta, data.dim)
    theta0 = np.concatenate([[np.log(init.lam)], init.beta])[None, :]
    res = minimize_batch(_neg_log_post_logscale(data, hyper), theta0, tol=tol, max_iter=max_iter)
    theta = res.x[0]
    return MapFit(
        params=ParameterPoint(float(np.exp(theta[0])), theta[1:].copy()),
        converged=bool(res.converged[0]),
        n_iter=int(res.n_iter[0]),
        grad_norm=float(np.abs(res.grad[0]).max()),
    )
