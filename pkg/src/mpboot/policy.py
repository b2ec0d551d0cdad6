"""Policy classes: per-joint discrete movement primitives and a Gaussian MLP.

Both expose a batched controller with ``begin(obs0)`` / ``act(t, obs, eps)``
so the simulator can run many rollouts in lock step. ``eps`` is a standard
normal draw of action shape, used only by stochastic policies.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np


@dataclass
class Episode:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    seed: int = 0
    source: str = "policy"
    gamma: float = 1.0
    final_obs: np.ndarray | None = None

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=float)
        self.actions = np.asarray(self.actions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        if not (len(self.obs) == len(self.actions) == len(self.rewards)):
            raise ValueError("episode sequences must have equal length")

    def __len__(self):
        return len(self.rewards)

    @property
    def ret(self) -> float:
        if self.gamma == 1.0:
            return float(np.sum(self.rewards))
        return float(np.sum(self.rewards * self.gamma ** np.arange(len(self))))

    def returns_to_go(self) -> np.ndarray:
        out = np.empty_like(self.rewards)
        acc = 0.0
        for t in range(len(self) - 1, -1, -1):
            acc = self.rewards[t] + self.gamma * acc
            out[t] = acc
        return out


# ---------------------------------------------------------------------------
# Dynamic movement primitives

ALPHA_Z = 25.0
BETA_Z = 6.25
ALPHA_X = 3.0


def basis_centers(n_basis: int, alpha_x: float = ALPHA_X):
    if n_basis == 1:
        return np.array([1.0]), np.array([1.0])
    c = np.exp(-alpha_x * np.arange(n_basis) / (n_basis - 1))
    # neighbouring kernels cross at half height
    h = np.empty(n_basis)
    h[:-1] = 4.0 * math.log(2.0) / np.diff(c) ** 2
    h[-1] = h[-2]
    return c, h


@dataclass(frozen=True)
class DmpPolicy:
    """One discrete DMP per joint sharing a canonical phase.

    ``weights`` has shape (n_joints, n_basis). The searchable parameters are
    the weights, the goals and the shared temporal scale ``tau``.
    """
    weights: np.ndarray
    goal: np.ndarray
    y0: np.ndarray
    tau: float
    alpha_z: float = ALPHA_Z
    beta_z: float = BETA_Z
    alpha_x: float = ALPHA_X

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float).reshape(-1))
        object.__setattr__(self, "y0", np.asarray(self.y0, dtype=float).reshape(-1))
        object.__setattr__(self, "tau", float(self.tau))
        if w.shape[1] < 1:
            raise ValueError("need at least one basis function")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not (len(self.goal) == len(self.y0) == w.shape[0]):
            raise ValueError("weights, goal and y0 disagree on joint count")

    @property
    def n_joints(self) -> int:
        return self.weights.shape[0]

    @property
    def n_basis(self) -> int:
        return self.weights.shape[1]

    @property
    def centers(self):
        return basis_centers(self.n_basis, self.alpha_x)

    def params(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.goal, [math.log(self.tau)]])

    def with_params(self, theta) -> "DmpPolicy":
        theta = np.asarray(theta, dtype=float)
        n, k = self.weights.shape
        if theta.shape != (n * k + n + 1,):
            raise ValueError(f"expected {n * k + n + 1} parameters, got {theta.shape}")
        return replace(self, weights=theta[: n * k].reshape(n, k).copy(),
                       goal=theta[n * k: n * k + n].copy(), tau=math.exp(theta[-1]))

    def initial_state(self, y=None):
        y = self.y0 if y is None else np.asarray(y, dtype=float)
        return DmpState(1.0, y.copy(), np.zeros_like(y), y.copy())

    def step(self, state: "DmpState", dt: float):
        """Advance one step; returns (joint velocities, new state)."""
        y, z, ydot, x = dmp_integrate_step(
            self.weights, self.goal, state.start, self.tau, state.x, state.y, state.z,
            dt, self.alpha_z, self.beta_z, self.alpha_x)
        return ydot, DmpState(x, y, z, state.start)

    def controller(self):
        return DmpController([self])


@dataclass(frozen=True)
class DmpState:
    x: float
    y: np.ndarray
    z: np.ndarray
    start: np.ndarray


def dmp_param_count(n_joints: int, n_basis: int) -> int:
    return n_joints * n_basis + n_joints + 1


def dmp_step(policy: DmpPolicy, state: DmpState, dt: float):
    return policy.step(state, dt)


def dmp_param_vector(policy: DmpPolicy) -> np.ndarray:
    """Flat ``[w (joint-major) | goals | log tau]``."""
    return policy.params()


def dmp_from_params(policy: DmpPolicy, theta) -> DmpPolicy:
    return policy.with_params(theta)


def forcing(weights, goal, start, x, centers, widths):
    """Forcing term for phase ``x``; leading dims of all inputs broadcast."""
    psi = np.exp(-widths * (x[..., None] - centers) ** 2)
    num = np.einsum("...jk,...k->...j", weights, psi)
    return num / psi.sum(-1)[..., None] * x[..., None] * (goal - start)


def dmp_integrate_step(weights, goal, start, tau, x, y, z, dt,
                       alpha_z=ALPHA_Z, beta_z=BETA_Z, alpha_x=ALPHA_X):
    """One semi-implicit Euler step of the transformation and canonical systems.

    Works on a single DMP or a population (leading batch axis on every array
    argument, ``tau`` and ``x`` shaped (B,)).
    """
    n_basis = np.shape(weights)[-1]
    c, h = basis_centers(n_basis, alpha_x)
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau, dtype=float)
    f = forcing(weights, goal, start, x, c, h)
    tau_ = tau[..., None]
    zdot = (alpha_z * (beta_z * (goal - y) - z) + f) / tau_
    z = z + dt * zdot
    ydot = z / tau_
    y = y + dt * ydot
    x = x - dt * alpha_x * x / tau
    if x.ndim == 0:
        x = float(x)
    return y, z, ydot, x


class DmpController:
    """Open-loop controller for a population of DMPs of identical shape."""

    def __init__(self, policies, dt=None):
        self.weights = np.stack([p.weights for p in policies])
        self.goal = np.stack([p.goal for p in policies])
        self.tau = np.array([p.tau for p in policies])
        self.consts = (policies[0].alpha_z, policies[0].beta_z, policies[0].alpha_x)
        self.n_act = policies[0].n_joints

    def __len__(self):
        return len(self.tau)

    def begin(self, obs0, dt):
        self.dt = dt
        self.start = np.array(obs0[:, : self.n_act], dtype=float)
        self.y = self.start.copy()
        self.z = np.zeros_like(self.y)
        self.x = np.ones(len(self.tau))

    def act(self, t, obs, eps):
        self.y, self.z, ydot, self.x = dmp_integrate_step(
            self.weights, self.goal, self.start, self.tau, self.x, self.y, self.z,
            self.dt, *self.consts)
        return ydot


def dmp_trajectory(policy: DmpPolicy, n_steps: int, dt: float, y0=None):
    """Positions (n_steps + 1, n) and velocity commands (n_steps, n)."""
    ctl = DmpController([policy])
    start = policy.y0 if y0 is None else np.asarray(y0, dtype=float)
    ctl.begin(start[None], dt)
    ys, vs = [start.copy()], []
    for t in range(n_steps):
        vs.append(ctl.act(t, None, None)[0])
        ys.append(ctl.y[0].copy())
    return np.array(ys), np.array(vs)


# ---------------------------------------------------------------------------
# Gaussian MLP

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MlpPolicy:
    """Gaussian policy with a tanh MLP mean and state-independent log-std."""
    weights: tuple
    biases: tuple
    log_std: np.ndarray

    @classmethod
    def init(cls, n_obs, n_act, rng, hidden=(32, 32), log_std=-1.0):
        sizes = (n_obs,) + tuple(hidden) + (n_act,)
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            ws.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            bs.append(rng.uniform(-bound, bound, fan_out))
        return cls(tuple(ws), tuple(bs), np.full(n_act, float(log_std)))

    def __post_init__(self):
        for w, b, w_next in zip(self.weights, self.biases, self.weights[1:] + (None,)):
            if w.shape[1] != b.shape[0] or (w_next is not None and w_next.shape[0] != w.shape[1]):
                raise ValueError("layer shapes do not chain")
        if self.log_std.shape != (self.weights[-1].shape[1],):
            raise ValueError("log_std must match the action dimension")

    @property
    def n_obs(self):
        return self.weights[0].shape[0]

    @property
    def n_act(self):
        return self.weights[-1].shape[1]

    @property
    def shapes(self):
        return [w.shape for w in self.weights]

    def params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b]
        parts.append(self.log_std)
        return np.concatenate(parts)

    def with_params(self, theta) -> "MlpPolicy":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        ws, bs, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(theta[i: i + w.size].reshape(w.shape).copy())
            i += w.size
            bs.append(theta[i: i + b.size].copy())
            i += b.size
        return MlpPolicy(tuple(ws), tuple(bs), theta[i:].copy())

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases)) + self.log_std.size

    def _forward(self, obs):
        acts = [obs]
        h = obs
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
            acts.append(h)
        return h @ self.weights[-1] + self.biases[-1], acts

    def mean(self, obs):
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.n_obs:
            raise ValueError(f"observation has {obs.shape[-1]} entries, policy expects {self.n_obs}")
        return self._forward(obs)[0]

    def act(self, obs, rng=None, deterministic=False):
        mu = self.mean(obs)
        if deterministic:
            return mu
        return mu + np.exp(self.log_std) * rng.standard_normal(mu.shape)

    def log_prob(self, obs, actions):
        mu = self.mean(obs)
        zs = (np.asarray(actions) - mu) / np.exp(self.log_std)
        return (-0.5 * np.sum(zs ** 2, -1) - np.sum(self.log_std)
                - 0.5 * self.n_act * LOG_2PI)

    def score(self, obs, actions):
        """Per-sample log-likelihood and its gradient, shapes (N,) and (N, n_params)."""
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        mu, acts = self._forward(obs)
        inv_var = np.exp(-2.0 * self.log_std)
        diff = actions - mu
        logp = (-0.5 * np.sum(diff ** 2 * inv_var, -1) - np.sum(self.log_std)
                - 0.5 * self.n_act * LOG_2PI)
        n = len(obs)
        grads = []
        delta = diff * inv_var
        layer_grads = []
        for i in range(len(self.weights) - 1, -1, -1):
            h = acts[i]
            layer_grads.append((np.einsum("ni,nj->nij", h, delta).reshape(n, -1), delta))
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - h ** 2)
        for gw, gb in reversed(layer_grads):
            grads += [gw, gb]
        grads.append(diff ** 2 * inv_var - 1.0)
        return logp, np.concatenate(grads, axis=1)

    def grad_sum(self, obs, actions, coef=None):
        """Gradient of ``sum_i coef_i * log pi(a_i|s_i)`` without per-sample storage."""
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        coef = np.ones(len(obs)) if coef is None else np.asarray(coef, dtype=float)
        mu, acts = self._forward(obs)
        inv_var = np.exp(-2.0 * self.log_std)
        diff = actions - mu
        delta = diff * inv_var * coef[:, None]
        parts = []
        for i in range(len(self.weights) - 1, -1, -1):
            h = acts[i]
            parts.append((h.T @ delta).ravel())
            parts.append(delta.sum(0))
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - h ** 2)
        ordered = []
        for k in range(len(self.weights) - 1, -1, -1):
            ordered += [parts[2 * k], parts[2 * k + 1]]
        ordered.append(np.sum(coef[:, None] * (diff ** 2 * inv_var - 1.0), 0))
        return np.concatenate(ordered)

    def controller(self, deterministic=True):
        return MlpController(self, deterministic)


def mlp_act(policy: MlpPolicy, obs, rng=None, deterministic=False):
    return policy.act(obs, rng, deterministic)


def mlp_logprob_grad(policy: MlpPolicy, obs, action):
    """Log-likelihood of one (obs, action) pair and its flat gradient."""
    logp, g = policy.score(np.asarray(obs)[None], np.asarray(action)[None])
    return float(logp[0]), g[0]


class MlpController:
    def __init__(self, policy, deterministic=True):
        self.policy = policy
        self.deterministic = deterministic
        self.n_act = policy.n_act
        self.std = np.exp(policy.log_std)

    def begin(self, obs0, dt):
        pass

    def act(self, t, obs, eps):
        mu = self.policy.mean(obs)
        if self.deterministic:
            return mu
        return mu + self.std * eps


class ActionReplay:
    """Feeds a fixed action sequence (B, T, n) to the simulator."""

    def __init__(self, actions):
        self.actions = np.asarray(actions, dtype=float)
        if self.actions.ndim == 2:
            self.actions = self.actions[None]
        self.n_act = self.actions.shape[-1]

    def __len__(self):
        return len(self.actions)

    def begin(self, obs0, dt):
        pass

    def act(self, t, obs, eps):
        if t < self.actions.shape[1]:
            return self.actions[:, t]
        return np.zeros((len(self.actions), self.n_act))


class StackedMlpController:
    """Lock-step controller for several MLPs, each driving a contiguous block of rows.

    Row block ``i`` (``rows_per_policy`` rows) is driven by ``policies[i]``;
    noise enters as ``mean + std * eps``, so rows fed zero noise act
    deterministically.
    """

    def __init__(self, policies, rows_per_policy):
        self.policies = list(policies)
        self.k = int(rows_per_policy)
        self.W = [np.stack(ws) for ws in zip(*(p.weights for p in self.policies))]
        self.b = [np.stack(bs)[:, None, :] for bs in zip(*(p.biases for p in self.policies))]
        self.std = np.repeat(np.exp(np.stack([p.log_std for p in self.policies])), self.k, axis=0)
        self.n_act = self.policies[0].n_act

    def __len__(self):
        return len(self.policies) * self.k

    def begin(self, obs0, dt):
        pass

    def mean(self, obs):
        h = obs.reshape(len(self.policies), self.k, -1)
        for w, b in zip(self.W[:-1], self.b[:-1]):
            h = np.tanh(h @ w + b)
        return (h @ self.W[-1] + self.b[-1]).reshape(len(obs), -1)

    def act(self, t, obs, eps):
        return self.mean(obs) + self.std * eps
