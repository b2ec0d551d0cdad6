"""Natural policy gradient and its demo-augmented variant (DAPG).

The Fisher matrix is the empirical one, built from per-sample score vectors,
and is never formed: conjugate gradient only needs products ``F v``.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from ..policy import MlpPolicy
from .bc import stack_demos


class NonFiniteGradient(FloatingPointError):
    pass


def advantages(episodes):
    """Return-to-go minus the time-indexed batch mean of returns-to-go."""
    rtg = [ep.returns_to_go() for ep in episodes]
    T = max(len(r) for r in rtg)
    total = np.zeros(T)
    count = np.zeros(T)
    for r in rtg:
        total[: len(r)] += r
        count[: len(r)] += 1
    base = total / np.maximum(count, 1)
    return [r - base[: len(r)] for r in rtg]


def fisher_vector_product(scores, v):
    """``F v`` with ``F = mean_i s_i s_i^T``."""
    return scores.T @ (scores @ v) / len(scores)


def explicit_fisher(scores):
    return scores.T @ scores / len(scores)


def conjugate_gradient(Avp, b, iters=10, tol=1e-10):
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    for _ in range(iters):
        if rr < tol:
            break
        Ap = Avp(p)
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def _batch(episodes):
    obs = np.concatenate([ep.obs for ep in episodes])
    acts = np.concatenate([ep.actions for ep in episodes])
    adv = np.concatenate(advantages(episodes))
    return obs, acts, adv


def natural_step(policy: MlpPolicy, scores, g, delta, cg_iters=10, damping=1e-4):
    """Solve ``F x = g`` and scale so that ``0.5 x^T F x = delta``."""
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("policy gradient is not finite")
    if not np.any(g):
        return policy

    def fvp(v):
        return fisher_vector_product(scores, v) + damping * v

    x = conjugate_gradient(fvp, g, cg_iters)
    if not np.any(x):
        # gradient below the CG tolerance, e.g. every rollout earned the same return
        return policy
    quad = x @ fvp(x)
    if not (np.all(np.isfinite(x)) and math.isfinite(quad)) or quad <= 0:
        raise NonFiniteGradient("natural gradient direction is not finite")
    step = math.sqrt(2.0 * delta / quad)
    return policy.with_params(policy.params() + step * x)


def npg_update(policy: MlpPolicy, episodes, delta=0.05, cg_iters=10, damping=1e-4):
    """One natural gradient step from a batch of on-policy episodes."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("need at least one episode")
    obs, acts, adv = _batch(episodes)
    _, scores = policy.score(obs, acts)
    g = scores.T @ adv / len(adv)
    return natural_step(policy, scores, g, delta, cg_iters, damping)


@dataclass(frozen=True)
class DapgState:
    demos: tuple = ()
    lambda0: float | None = None   # None -> 0.1 * mean |advantage| of the current batch
    kappa: float = 0.97
    delta: float = 0.05
    cg_iters: int = 10
    damping: float = 1e-4

    def __post_init__(self):
        if self.lambda0 is not None and self.lambda0 < 0:
            raise ValueError("lambda0 must be non-negative")
        if not 0.0 < self.kappa <= 1.0:
            raise ValueError("kappa must lie in (0, 1]")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def bc_weight(self, epoch, adv=None):
        lam = self.lambda0
        if lam is None:
            lam = 0.1 * float(np.mean(np.abs(adv))) if adv is not None and len(adv) else 0.0
        return lam * self.kappa ** epoch


def dapg_update(policy: MlpPolicy, episodes, D, state: DapgState, epoch: int,
                return_weight=False):
    """NPG step on the policy gradient plus a decaying demo log-likelihood term.

    Both terms are per-sample means, so with as many demo samples as rollout
    samples this equals adding the summed demo gradient to the summed policy
    gradient. With ``return_weight`` the BC weight used is returned as well.
    """
    episodes = list(episodes)
    if not episodes:
        raise ValueError("need at least one episode")
    obs, acts, adv = _batch(episodes)
    _, scores = policy.score(obs, acts)
    g = scores.T @ adv / len(adv)
    w = state.bc_weight(epoch, adv)
    demos = D if D is not None else ()
    has_demos = not (isinstance(demos, (list, tuple)) and len(demos) == 0)
    if w > 0 and has_demos:
        d_obs, d_acts = stack_demos(demos)
        g = g + w * policy.grad_sum(d_obs, d_acts) / len(d_obs)
    else:
        w = 0.0
    new = natural_step(policy, scores, g, state.delta, state.cg_iters, state.damping)
    return (new, w) if return_weight else new
