"""Expected-entropy acquisition: arm allocation, ideal candidate, recruitment."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from infotrial.model import Dataset, Hyperparameters, MapFit, ParameterPoint, map_estimate
from infotrial.variational import (
    KLProblem,
    VariationalFit,
    VariationalParams,
    fit_entropies,
    fit_variational,
)

EPS = 1e-12


# --- arms and covariate maps ------------------------------------------------


@dataclass(frozen=True)
class ArmSet:
    k_arms: int

    def __post_init__(self):
        if self.k_arms < 1:
            raise ValueError("need at least one arm")

    @property
    def indicators(self) -> np.ndarray:
        return np.eye(self.k_arms)

    def indicator(self, k: int) -> np.ndarray:
        return np.eye(self.k_arms)[k]


def _check_indicator(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or not np.all((z == 0) | (z == 1)) or z.sum() != 1:
        raise ValueError(f"malformed arm indicator {z!r}")
    return z


@dataclass(frozen=True)
class PlainFeatures:
    """x = y; arms (if any) do not enter the model."""

    def dim(self, n_features: int, k_arms: int) -> int:
        return n_features

    def __call__(self, y, z=None) -> np.ndarray:
        return np.asarray(y, dtype=float).copy()

    def batch(self, Y, z=None) -> np.ndarray:
        return np.asarray(Y, dtype=float).copy()


@dataclass(frozen=True)
class InteractionFeatures:
    """All biomarker-by-arm products, ordered biomarker-major:
    ``(y1 z1, y1 z2, ..., y1 zK, y2 z1, ...)``."""

    def dim(self, n_features: int, k_arms: int) -> int:
        return n_features * k_arms

    def __call__(self, y, z) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        z = _check_indicator(z)
        return np.outer(y, z).ravel()

    def batch(self, Y, z) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        z = _check_indicator(z)
        return (Y[:, :, None] * z[None, None, :]).reshape(Y.shape[0], -1)


FeatureMap = PlainFeatures | InteractionFeatures


def interaction_covariates(y, z) -> np.ndarray:
    """Six interaction covariates for a 2-biomarker, 3-arm design."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != (2,) or z.shape != (3,):
        raise ValueError("expected a 2-vector y and a 3-indicator z")
    return InteractionFeatures()(y, z)


# --- recruitment policies ----------------------------------------------------


@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class Step:
    p0: float

    def __post_init__(self):
        if not 0 <= self.p0 <= 1:
            raise ValueError("Step threshold p0 must lie in [0, 1]")


@dataclass(frozen=True)
class Tanh:
    beta0: float
    p0: float

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError("Tanh beta0 must be positive")


RecruitmentPolicy = Identity | Step | Tanh


def f0_eval(policy: RecruitmentPolicy, s: float) -> float:
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"ratio s={s!r} outside [0, 1]")
    if isinstance(policy, Identity):
        return float(s)
    if isinstance(policy, Step):
        return 1.0 if s - policy.p0 > 0 else 0.0
    if isinstance(policy, Tanh):
        # grouping as written: tanh(s / beta0 - p0), p0 not divided by beta0
        return float(0.5 * (1.0 + np.tanh(s / policy.beta0 - policy.p0)))
    raise TypeError(f"unknown policy {policy!r}")


# --- acquisition -------------------------------------------------------------


def default_box(n_features: int) -> np.ndarray:
    return np.tile([-1.0, 1.0], (n_features, 1))


class EntropyAcquisition:
    """Expected-entropy evaluations against one fixed data snapshot.

    The MAP fit and the baseline variational fit are computed once; every
    candidate evaluation refits q on the snapshot plus one imputed event,
    warm-started from the baseline fit.
    """

    def __init__(
        self,
        data: Dataset,
        hyper: Hyperparameters,
        map_init: ParameterPoint | None = None,
        vi_init: VariationalParams | None = None,
        map_fit: MapFit | None = None,
        base_fit: VariationalFit | None = None,
    ):
        self.data = data
        self.hyper = hyper
        self.map_fit = map_fit if map_fit is not None else map_estimate(data, hyper, map_init)
        self.base_fit = base_fit if base_fit is not None else fit_variational(data, hyper, vi_init)
        self.n_evaluations = 0
        self.n_failed_fits = int(not self.map_fit.converged) + int(not self.base_fit.converged)

    @property
    def entropy(self) -> float:
        return self.base_fit.entropy

    def imputed_times(self, X_star) -> np.ndarray:
        p = self.map_fit.params
        eta = np.clip(np.atleast_2d(X_star) @ p.beta, -700, 700)
        return np.exp(-eta) / p.lam

    def expected_entropy(self, X_star) -> np.ndarray:
        X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
        if X_star.shape[1] != self.data.dim:
            raise ValueError("candidate dimension mismatch")
        problem = KLProblem.augmented(self.data, X_star, self.imputed_times(X_star), self.hyper)
        ent, ok = fit_entropies(problem, self.base_fit.params)
        self.n_evaluations += X_star.shape[0]
        self.n_failed_fits += int(np.sum(~ok))
        return ent

    def objective(self, X_star) -> np.ndarray:
        return self.entropy - self.expected_entropy(X_star)

    def allocation_probabilities(self, y, arms: ArmSet, fmap: FeatureMap) -> np.ndarray:
        X = np.stack([fmap(y, z) for z in arms.indicators])
        gains = self.objective(X)
        return _normalise_gains(gains)

    def ideal_candidate(self, z, fmap: FeatureMap, box=None) -> tuple[np.ndarray, float]:
        """Maximiser of the objective over ``y`` in ``box`` for arm ``z``."""
        if box is None:
            box = default_box(_n_features(fmap, self.data.dim, z))
        box = np.asarray(box, dtype=float)
        lo, hi = box[:, 0], box[:, 1]
        if np.any(hi < lo):
            raise ValueError("empty search box")

        def score(Y):
            return self.objective(fmap.batch(Y, z))

        points = _seed_points(lo, hi)
        values = score(points)
        best = int(np.argmax(values))
        y, val = points[best].copy(), float(values[best])

        # coordinate moves at several scales, scored in one batch per round
        scales = (hi - lo)[None, :] / np.array([16.0, 32.0, 64.0, 128.0])[:, None]
        m = lo.shape[0]
        for _ in range(100):
            moves = []
            for step in scales:
                for j in range(m):
                    for sign in (1.0, -1.0):
                        cand = y.copy()
                        cand[j] = np.clip(cand[j] + sign * step[j], lo[j], hi[j])
                        if cand[j] != y[j]:
                            moves.append(cand)
            if not moves:
                break
            moves = np.array(moves)
            mv = score(moves)
            k = int(np.argmax(mv))
            if mv[k] - val < 1e-4:
                break
            y, val = moves[k], float(mv[k])
        return y, val

    def recruitment(self, y, z, policy: RecruitmentPolicy, fmap: FeatureMap, box=None):
        """Return ``(s, probability, y_ideal)`` for candidate ``y`` on arm ``z``."""
        gain = float(self.objective(fmap(y, z)[None, :])[0])
        y_ideal, gain_ideal = self.ideal_candidate(z, fmap, box)
        s = max(gain, EPS) / max(gain_ideal, EPS)
        s = min(max(s, 0.0), 1.0)
        return s, f0_eval(policy, s), y_ideal


def _n_features(fmap, d, z) -> int:
    if isinstance(fmap, InteractionFeatures):
        return d // len(z)
    return d


def _normalise_gains(gains) -> np.ndarray:
    gains = np.asarray(gains, dtype=float)
    if np.all(gains <= 0):
        return np.full(gains.shape, 1.0 / gains.size)
    g = np.maximum(gains, EPS)
    return g / g.sum()


def _seed_points(lo, hi) -> np.ndarray:
    m = lo.shape[0]
    corners = np.array(list(itertools.product(*[(a, b) for a, b in zip(lo, hi)])))
    if m <= 2:
        axes = [np.linspace(a, b, 9) for a, b in zip(lo, hi)]
        grid = np.array(list(itertools.product(*axes)))
    else:
        rng = np.random.default_rng(20240101)
        grid = lo + (hi - lo) * rng.random((50, m))
    return np.vstack([corners, grid])


# --- functional front end ----------------------------------------------------


def expected_entropy(data: Dataset, x_star, hyper: Hyperparameters) -> float:
    return float(EntropyAcquisition(data, hyper).expected_entropy(x_star)[0])


def objective(data: Dataset, x_star, hyper: Hyperparameters) -> float:
    return float(EntropyAcquisition(data, hyper).objective(x_star)[0])


def allocation_probabilities(data, y, arms: ArmSet, fmap: FeatureMap, hyper: Hyperparameters) -> np.ndarray:
    return EntropyAcquisition(data, hyper).allocation_probabilities(y, arms, fmap)


def ideal_candidate(data, arm_z, fmap: FeatureMap, box, hyper: Hyperparameters) -> np.ndarray:
    return EntropyAcquisition(data, hyper).ideal_candidate(arm_z, fmap, box)[0]


def recruitment_probability(data, y, arm_z, policy, fmap, hyper, box=None) -> float:
    return EntropyAcquisition(data, hyper).recruitment(y, arm_z, policy, fmap, box)[1]
