"""Episodic PI^2 with covariance matrix adaptation.

Each update samples a population around the mean, turns episode costs into
probability weights with a min-max normalised softmax, and moves the mean to
the reward-weighted average. The covariance moves towards the
reward-weighted sample covariance at rate ``cov_lr``; with ``cov_lr=1`` it
jumps there directly, which collapses exploration within a few updates.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class AllRolloutsFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class Pi2CmaState:
    mean: np.ndarray
    cov: np.ndarray
    n_samples: int = 20
    h: float = 10.0
    elite_frac: float = 1.0
    cov_floor: float = 1e-6
    cov_lr: float = 0.2

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("need at least two rollouts per update")
        if not 0.0 < self.cov_lr <= 1.0:
            raise ValueError("cov_lr must lie in (0, 1]")
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 1:
            cov = np.diag(cov)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))

    @classmethod
    def from_std(cls, mean, std, **kw):
        std = np.broadcast_to(np.asarray(std, dtype=float), np.shape(mean))
        return cls(np.asarray(mean, dtype=float), np.diag(std ** 2), **kw)


def probability_weights(costs, h=10.0):
    """``exp(-h (S - S_min) / (S_max - S_min))``, normalised to sum one.

    Equal costs give uniform weights. No epsilon is added to the span, so
    the weights do not change under ``S -> a S + b`` with ``a > 0``.
    """
    costs = np.asarray(costs, dtype=float)
    lo, hi = costs.min(), costs.max()
    if hi == lo:
        return np.full(costs.shape, 1.0 / costs.size)
    e = np.exp(-h * (costs - lo) / (hi - lo))
    return e / e.sum()


def sample(state: Pi2CmaState, rng) -> np.ndarray:
    return rng.multivariate_normal(state.mean, state.cov, size=state.n_samples, method="cholesky")


def _floor(cov, floor):
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= floor:
        return cov
    vals = np.maximum(vals, floor)
    cov = (vecs * vals) @ vecs.T
    return 0.5 * (cov + cov.T)


def update_from_samples(state: Pi2CmaState, thetas, returns) -> Pi2CmaState:
    """Reward-weighted mean and covariance from evaluated samples.

    Non-finite returns mark failed rollouts and get zero weight.
    """
    thetas = np.asarray(thetas, dtype=float)
    returns = np.asarray(returns, dtype=float)
    ok = np.isfinite(returns)
    if not ok.any():
        raise AllRolloutsFailed("every rollout in the batch failed")
    thetas, costs = thetas[ok], -returns[ok]
    if state.elite_frac < 1.0:
        n_keep = max(2, int(round(state.elite_frac * len(costs))))
        keep = np.argsort(costs, kind="stable")[:n_keep]
        thetas, costs = thetas[keep], costs[keep]
    p = probability_weights(costs, state.h)
    mean = p @ thetas
    d = thetas - state.mean
    cov = (d * p[:, None]).T @ d
    cov = (1.0 - state.cov_lr) * state.cov + state.cov_lr * cov
    return replace(state, mean=mean, cov=_floor(cov, state.cov_floor))


def pi2cma_update(state: Pi2CmaState, objective, rng):
    """One update. ``objective`` maps an (n, d) array of parameters to n returns.

    Returns ``(new_state, thetas, returns)``.
    """
    thetas = sample(state, rng)
    returns = np.asarray(objective(thetas), dtype=float)
    return update_from_samples(state, thetas, returns), thetas, returns
