"""Behavioural cloning for the Gaussian MLP policy."""
from __future__ import annotations

import numpy as np

from ..policy import Episode, MlpPolicy


class EmptyDemoSet(ValueError):
    pass


def stack_demos(demos):
    """Concatenate (obs, action) pairs from a list of episodes or an (obs, acts) pair."""
    if isinstance(demos, tuple) and len(demos) == 2 and not isinstance(demos[0], Episode):
        obs, acts = (np.asarray(v, dtype=float) for v in demos)
    else:
        demos = list(demos)
        if not demos:
            raise EmptyDemoSet("no demonstrations")
        obs = np.concatenate([d.obs for d in demos])
        acts = np.concatenate([d.actions for d in demos])
    if len(obs) == 0:
        raise EmptyDemoSet("no demonstration samples")
    if len(obs) != len(acts):
        raise ValueError("observations and actions disagree in length")
    return obs, acts


class Adam:
    def __init__(self, n, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.k = 0

    def ascent(self, theta, g):
        self.k += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1 ** self.k)
        vhat = self.v / (1 - self.b2 ** self.k)
        return theta + self.lr * mhat / (np.sqrt(vhat) + self.eps)


def bc_fit(policy: MlpPolicy, D, epochs=10, lr=3e-3, rng=None, batch_size=64,
           fit_std=False, history=None) -> MlpPolicy:
    """Maximise the demo log-likelihood with minibatch Adam.

    The log-std is held fixed unless ``fit_std`` is set, so cloning does not
    eat the exploration noise the policy-gradient stage needs. If a list is
    passed as ``history`` the mean negative log-likelihood of every epoch is
    appended to it.
    """
    obs, acts = stack_demos(D)
    if obs.shape[1] != policy.n_obs or acts.shape[1] != policy.n_act:
        raise ValueError("demo dimensions do not match the policy")
    if epochs <= 0:
        return policy
    rng = np.random.default_rng(0) if rng is None else rng
    theta = policy.params()
    n_std = policy.n_act
    opt = Adam(theta.size, lr)
    n = len(obs)
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start: start + batch_size]
            pol = policy.with_params(theta)
            losses.append(-np.sum(pol.log_prob(obs[idx], acts[idx])))
            g = pol.grad_sum(obs[idx], acts[idx]) / len(idx)
            if not fit_std:
                g[-n_std:] = 0.0
            theta = opt.ascent(theta, g)
        if history is not None:
            history.append(float(np.sum(losses) / n))
    return policy.with_params(theta)
