import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpboot.policy import (ALPHA_X, DmpPolicy, Episode, MlpPolicy, basis_centers,
                           dmp_from_params, dmp_param_count, dmp_param_vector, dmp_step,
                           dmp_trajectory, mlp_act, mlp_logprob_grad)


def dmp(w=None, goal=(1.0,), y0=(0.0,), tau=1.0, k=10):
    goal = np.asarray(goal, float)
    w = np.zeros((len(goal), k)) if w is None else w
    return DmpPolicy(w, goal, np.asarray(y0, float), tau)


def test_basis_layout():
    c, h = basis_centers(5)
    assert np.allclose(c, np.exp(-ALPHA_X * np.arange(5) / 4))
    assert h[-1] == h[-2] and np.all(h > 0)
    # neighbouring kernels meet at half height
    mid = 0.5 * (c[:-1] + c[1:])
    assert np.allclose(np.exp(-h[:-1] * (mid - c[:-1]) ** 2), 0.5)


def test_point_attractor_reaches_goal():
    p = dmp(tau=1.0)
    ys, _ = dmp_trajectory(p, int(3 * p.tau / 0.001), 0.001)
    assert abs(ys[-1, 0] - 1.0) < 0.05
    assert np.all(np.diff(ys[:, 0]) >= 0)


def test_at_attractor_is_still():
    p = dmp(goal=(0.4,), y0=(0.4,))
    _, vs = dmp_trajectory(p, 200, 0.01)
    assert np.all(vs == 0)


def test_dmp_step_function():
    p = dmp()
    s = p.initial_state()
    v, s2 = dmp_step(p, s, 0.01)
    assert s2.x < 1.0 and v.shape == (1,)


def test_time_scaling_invariance():
    rng = np.random.default_rng(0)
    w = rng.normal(0, 30, (1, 10))
    p1, p2 = dmp(w, tau=0.5), dmp(w, tau=1.0)
    dt = 1e-4
    y1, _ = dmp_trajectory(p1, int(1.5 / dt), dt)
    y2, _ = dmp_trajectory(p2, int(3.0 / dt), dt)
    assert np.max(np.abs(y1[:, 0] - y2[::2, 0])) < 1e-3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_goal_convergence_for_bounded_weights(seed):
    rng = np.random.default_rng(seed)
    p = DmpPolicy(rng.uniform(-50, 50, (3, 10)), rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3), 0.8)
    ys, _ = dmp_trajectory(p, int(5 * p.tau / 0.002), 0.002)
    assert np.max(np.abs(ys[-1] - p.goal)) < 0.05


def test_joints_couple_only_through_phase():
    rng = np.random.default_rng(1)
    w = rng.normal(0, 10, (3, 10))
    p = DmpPolicy(w, [0.5, 1.0, -0.3], [0.0, 0.2, 0.1], 1.0)
    w2 = w.copy()
    w2[1] += rng.normal(0, 10, 10)
    ya, _ = dmp_trajectory(p, 300, 0.01)
    yb, _ = dmp_trajectory(DmpPolicy(w2, p.goal, p.y0, 1.0), 300, 0.01)
    assert np.array_equal(ya[:, [0, 2]], yb[:, [0, 2]])
    assert not np.array_equal(ya[:, 1], yb[:, 1])


def test_param_vector_layout_and_round_trip():
    rng = np.random.default_rng(2)
    p = DmpPolicy(rng.normal(size=(3, 32)), rng.normal(size=3), rng.normal(size=3), 2.5)
    theta = dmp_param_vector(p)
    assert theta.size == 100 == dmp_param_count(3, 32)
    assert np.array_equal(theta[:32], p.weights[0])
    assert np.array_equal(theta[96:99], p.goal) and theta[-1] == math.log(2.5)
    q = dmp_from_params(p, theta)
    assert np.array_equal(dmp_param_vector(q), theta)
    assert dmp_param_count(3, 10) == 34
    with pytest.raises(ValueError):
        p.with_params(theta[:-1])


def test_dmp_validation():
    with pytest.raises(ValueError):
        DmpPolicy(np.zeros((1, 3)), [1.0], [0.0], 0.0)
    with pytest.raises(ValueError):
        DmpPolicy(np.zeros((2, 3)), [1.0], [0.0], 1.0)


# ---------------------------------------------------------------------------
# MLP

def test_mlp_shapes_and_init():
    rng = np.random.default_rng(0)
    p = MlpPolicy.init(4, 3, rng)
    assert [w.shape for w in p.weights] == [(4, 32), (32, 32), (32, 3)]
    assert np.all(p.log_std == -1.0)
    for w, fan_in in zip(p.weights, (4, 32, 32)):
        assert np.abs(w).max() <= 1 / math.sqrt(fan_in)
    assert np.array_equal(p.with_params(p.params()).params(), p.params())


def test_zero_network_mean_is_zero():
    p = MlpPolicy.init(4, 3, np.random.default_rng(0))
    z = p.with_params(np.concatenate([np.zeros(p.n_params - 3), p.log_std]))
    assert np.array_equal(z.mean(np.random.default_rng(1).normal(size=(5, 4))), np.zeros((5, 3)))


def test_deterministic_act_repeats():
    p = MlpPolicy.init(4, 3, np.random.default_rng(0))
    obs = np.ones(4)
    assert np.array_equal(mlp_act(p, obs, deterministic=True), mlp_act(p, obs, deterministic=True))
    with pytest.raises(ValueError):
        p.mean(np.ones(5))


def test_log_prob_matches_density_oracle():
    rng = np.random.default_rng(3)
    p = MlpPolicy.init(4, 3, rng)
    obs = rng.normal(size=4)
    a = mlp_act(p, obs, rng)
    mu, sd = p.mean(obs), np.exp(p.log_std)
    dens = np.prod(np.exp(-0.5 * ((a - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi)))
    assert abs(p.log_prob(obs, a) - math.log(dens)) < 1e-10


def test_log_prob_at_mean():
    p = MlpPolicy.init(4, 3, np.random.default_rng(0))
    obs = np.ones(4)
    lp, g = mlp_logprob_grad(p, obs, p.mean(obs))
    assert lp == pytest.approx(-np.sum(p.log_std) - 1.5 * math.log(2 * math.pi), abs=1e-12)
    assert np.all(g[:-3] == 0)


def fd_grad(p, obs, a, h=1e-6):
    theta = p.params()
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (p.with_params(theta + e).log_prob(obs, a) - p.with_params(theta - e).log_prob(obs, a)) / (2 * h)
    return g


def test_logprob_grad_matches_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(5):
        p = MlpPolicy.init(4, 2, rng, hidden=(6, 5))
        obs, a = rng.normal(size=4), rng.normal(size=2)
        _, g = mlp_logprob_grad(p, obs, a)
        ref = fd_grad(p, obs, a)
        assert np.linalg.norm(g - ref) / np.linalg.norm(ref) < 1e-4


def test_grad_sum_matches_score_rows():
    rng = np.random.default_rng(5)
    p = MlpPolicy.init(4, 3, rng)
    obs, acts, coef = rng.normal(size=(50, 4)), rng.normal(size=(50, 3)), rng.normal(size=50)
    _, G = p.score(obs, acts)
    assert np.allclose(p.grad_sum(obs, acts, coef), coef @ G, atol=1e-10)


def test_episode_return_and_rtg():
    ep = Episode(np.zeros((3, 1)), np.zeros((3, 1)), [1.0, 2.0, 3.0], gamma=0.5)
    assert ep.ret == pytest.approx(1 + 1 + 0.75)
    assert np.allclose(ep.returns_to_go(), [1 + 0.5 * (2 + 1.5), 2 + 1.5, 3])
    with pytest.raises(ValueError):
        Episode(np.zeros((3, 1)), np.zeros((2, 1)), [0, 0, 0])
