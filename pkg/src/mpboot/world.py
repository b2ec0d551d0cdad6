"""Deterministic planar simulator.

The robot is velocity controlled and purely kinematic. Objects have one
degree of freedom with latent inertia, viscous damping and Coulomb friction;
the robot moves them through one of three contact models:

``attach``  kinematic coupling at the grasp frame, limited by a maximum force
``push``    one-sided penalty contact between the end effector and a door leaf
``strike``  restitution impulse between the last arm link and a free ball

Everything is batched: states carry a leading rollout axis so a whole
population of rollouts advances in lock step.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .kinematics import KinematicChain, Segment, frame_pose_array, joint_frames
from .policy import Episode

ATTACH, PUSH, STRIKE = "attach", "push", "strike"


class InvalidAction(ValueError):
    pass


@dataclass(frozen=True)
class ObjectDynamics:
    inertia: float
    damping: float = 0.0
    friction: float = 0.0
    detent: tuple | None = None  # (stiffness, rest position)

    def __post_init__(self):
        if not self.inertia > 0 or self.damping < 0 or self.friction < 0:
            raise ValueError("inertia must be positive, damping and friction non-negative")


@dataclass(frozen=True)
class RewardSpec:
    goal: np.ndarray
    c: float = 60.0
    R: np.ndarray | None = None
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float).reshape(-1))
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    def penalty(self, n_act):
        return 0.001 * np.eye(n_act) if self.R is None else np.asarray(self.R, dtype=float)


def reward(spec: RewardSpec, q_o, a):
    """Per-step reward ``-c |q_o* - q_o|^2 - a^T R a`` (batched over leading axes)."""
    q_o = np.asarray(q_o, dtype=float)
    a = np.asarray(a, dtype=float)
    err = spec.goal - q_o
    R = spec.penalty(a.shape[-1])
    return -spec.c * np.sum(err * err, -1) - np.einsum("...i,ij,...j->...", a, R, a)


@dataclass(frozen=True)
class ContactParams:
    attach_radius: float = 0.03
    max_force: float = 20.0
    stiffness: float = 2000.0
    damping: float = 20.0
    ee_radius: float = 0.02
    push_depth: float = 0.06
    push_side: float = 1.0
    restitution: float = 0.8
    gravity: float = 9.81
    ball_radius: float = 0.04
    ground: float = 0.0
    substeps: int = 1


@dataclass
class WorldState:
    """Simulator state. Arrays may carry a leading batch axis."""
    q_r: np.ndarray
    dq_r: np.ndarray
    q_o: np.ndarray
    dq_o: np.ndarray
    ball_pos: np.ndarray = field(default_factory=lambda: np.zeros(2))
    ball_vel: np.ndarray = field(default_factory=lambda: np.zeros(2))
    attached: np.ndarray | bool = False
    launched: np.ndarray | bool = False
    landed: np.ndarray | bool = False
    k: int = 0
    dt: float = 0.02

    @property
    def t(self) -> float:
        return self.k * self.dt

    def batched(self, n=1) -> "WorldState":
        def rep(v):
            return np.repeat(np.asarray(v)[None], n, axis=0)
        return WorldState(rep(self.q_r), rep(self.dq_r), rep(self.q_o), rep(self.dq_o),
                          rep(self.ball_pos), rep(self.ball_vel), rep(self.attached),
                          rep(self.launched), rep(self.landed), self.k, self.dt)

    def row(self, i) -> "WorldState":
        return WorldState(self.q_r[i].copy(), self.dq_r[i].copy(), self.q_o[i].copy(),
                          self.dq_o[i].copy(), self.ball_pos[i].copy(), self.ball_vel[i].copy(),
                          bool(self.attached[i]), bool(self.launched[i]), bool(self.landed[i]),
                          self.k, self.dt)


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    robot: KinematicChain
    obj: KinematicChain
    dynamics: ObjectDynamics
    grasp_frame: str
    init: WorldState
    reward: RewardSpec
    mode: str
    horizon: int = 150
    dt: float = 0.02
    contact: ContactParams = ContactParams()
    vel_limit: float = 2.5
    start_noise: float = 0.0
    ee_frame: str = "tip"
    scene: tuple = ()
    plan_speed: float = 0.2
    grasp_offset: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.horizon < 1 or not self.dt > 0:
            raise ValueError("horizon must be >= 1 and dt > 0")
        if self.mode not in (ATTACH, PUSH, STRIKE):
            raise ValueError(f"unknown manipulation mode {self.mode!r}")
        if not self.obj.has_frame(self.grasp_frame):
            raise ValueError(f"object has no frame {self.grasp_frame!r}")

    @property
    def n_obs(self) -> int:
        return self.robot.dof + self.obj.dof

    @property
    def n_act(self) -> int:
        return self.robot.dof


def observe(state: WorldState) -> np.ndarray:
    """Observation ``[q_r, q_o]``; for the ball task ``q_o`` is its displacement."""
    return np.concatenate([state.q_r, state.q_o], axis=-1)


# ---------------------------------------------------------------------------
# object helpers (1-DoF objects, batched)

def _pivot_and_link(obj: KinematicChain, q_o):
    pre, post = joint_frames(obj, q_o)
    return pre[:, :, 0], post[:, :, -1]


def _point_velocity_jac(obj, pivot_pre, point):
    """d(point)/dq for a point rigidly attached to the last link of a 1-DoF object."""
    joint = obj.joints[0]
    if joint.kind == "revolute":
        return np.stack([-(point[:, 1] - pivot_pre[1]), point[:, 0] - pivot_pre[0]], -1)
    th = pivot_pre[2]
    return np.stack([np.cos(th), np.sin(th)], -1)


def _integrate_object(spec: TaskSpec, q, v, force, h):
    """Semi-implicit Euler with Coulomb friction that never reverses motion."""
    dyn = spec.dynamics
    total = force - dyn.damping * v
    if dyn.detent is not None:
        k, rest = dyn.detent
        total = total - k * (q - rest)
    v_tmp = v + h * total / dyn.inertia
    fric = dyn.friction * h / dyn.inertia
    v_new = np.where(np.abs(v_tmp) <= fric, 0.0, v_tmp - np.sign(v_tmp) * fric)
    q_new = q + h * v_new
    return _limit_object(spec.obj, q_new, v_new)


def _limit_object(obj, q, v):
    lo, hi = obj.lower, obj.upper
    below, above = q < lo, q > hi
    q = np.clip(q, lo, hi)
    v = np.where(below, np.maximum(v, 0.0), np.where(above, np.minimum(v, 0.0), v))
    return q, v


def _ee(spec, q_r):
    x, y, _ = frame_pose_array(spec.robot, q_r, spec.ee_frame)
    return np.stack([x, y], -1)


def _grasp_point(spec, q_o):
    gx, gy, _ = frame_pose_array(spec.obj, q_o, spec.grasp_frame)
    return np.stack([gx, gy], -1)


def _attach_substep(spec, st, ee_a, ee_b, h):
    c = spec.contact
    dyn = spec.dynamics
    pre, _ = _pivot_and_link(spec.obj, st.q_o)
    g = _grasp_point(spec, st.q_o)
    jg = _point_velocity_jac(spec.obj, pre, g)
    q, v = st.q_o[:, 0], st.dq_o[:, 0]
    engaged = np.hypot(*(ee_a - g).T) < c.attach_radius
    v_ee = (ee_b - ee_a) / h
    jj = np.sum(jg * jg, -1)
    v_t = np.sum(jg * v_ee, -1) / jj
    passive = -dyn.damping * v
    if dyn.detent is not None:
        passive = passive - dyn.detent[0] * (q - dyn.detent[1])
    f_req = dyn.inertia * (v_t - v) / h - passive + dyn.friction * np.sign(v_t)
    f_max = c.max_force * np.sqrt(jj)
    hold = engaged & (np.abs(f_req) <= f_max)
    slip_force = np.where(engaged & ~hold, np.clip(f_req, -f_max, f_max), 0.0)
    q_free, v_free = _integrate_object(spec, q, v, slip_force, h)
    q_held, v_held = _limit_object(spec.obj, q + h * v_t, v_t)
    st.q_o = np.where(hold, q_held, q_free)[:, None]
    st.dq_o = np.where(hold, v_held, v_free)[:, None]
    st.attached = hold


def _push_substep(spec, st, ee_a, ee_b, h):
    c = spec.contact
    seg = next(gm for gm in spec.obj.links[-1].geometry if isinstance(gm, Segment))
    pre, post = _pivot_and_link(spec.obj, st.q_o)
    lx, ly, lth = post
    cs, sn = np.cos(lth), np.sin(lth)
    dx, dy = ee_b[:, 0] - lx, ee_b[:, 1] - ly
    u = cs * dx + sn * dy
    s = -sn * dx + cs * dy
    u0, u1 = sorted((seg.p0[0], seg.p1[0]))
    s_face = seg.p0[1]
    depth = c.ee_radius - c.push_side * (s - s_face)
    touching = (u >= u0) & (u <= u1) & (depth > 0) & (depth < c.ee_radius + c.push_depth)
    normal = -c.push_side * np.stack([-sn, cs], -1)
    jp = _point_velocity_jac(spec.obj, pre, ee_b)
    q, v = st.q_o[:, 0], st.dq_o[:, 0]
    v_rel = np.sum(((ee_b - ee_a) / h - jp * v[:, None]) * normal, -1)
    f = np.where(touching, np.maximum(0.0, c.stiffness * depth + c.damping * v_rel), 0.0)
    gen = f * np.sum(normal * jp, -1)
    q_new, v_new = _integrate_object(spec, q, v, gen, h)
    st.q_o = q_new[:, None]
    st.dq_o = v_new[:, None]
    st.attached = touching


def _strike_substep(spec, st, qa, qb, h, x0):
    c = spec.contact
    _, post_a = joint_frames(spec.robot, qa)
    _, post_b = joint_frames(spec.robot, qb)
    A_a = np.stack([post_a[0, :, -1], post_a[1, :, -1]], -1)
    A_b = np.stack([post_b[0, :, -1], post_b[1, :, -1]], -1)
    B_a, B_b = _ee(spec, qa), _ee(spec, qb)
    p, vb = st.ball_pos, st.ball_vel
    seg = B_b - A_b
    u = np.clip(np.sum((p - A_b) * seg, -1) / np.maximum(np.sum(seg * seg, -1), 1e-12), 0.0, 1.0)
    cb = A_b + u[:, None] * seg
    ca = A_a + u[:, None] * (B_a - A_a)
    v_c = (cb - ca) / h
    d_vec = p - cb
    d = np.hypot(d_vec[:, 0], d_vec[:, 1])
    seg_n = np.stack([-seg[:, 1], seg[:, 0]], -1) / np.maximum(np.hypot(seg[:, 0], seg[:, 1]), 1e-12)[:, None]
    n = np.where((d > 1e-12)[:, None], d_vec / np.maximum(d, 1e-12)[:, None], seg_n)
    v_rel = np.sum((v_c - vb) * n, -1)
    hit = (d < c.ball_radius) & (v_rel > 0)
    vb = vb + np.where(hit[:, None], (1.0 + c.restitution) * v_rel[:, None] * n, 0.0)
    p = np.where(hit[:, None], cb + n * c.ball_radius, p)
    launched = st.launched | hit
    landed = st.landed & ~hit
    fly = launched & ~landed
    vb = vb + np.where(fly[:, None], np.array([0.0, -c.gravity * h]), 0.0)
    p = p + np.where(fly[:, None], h * vb, 0.0)
    touch = fly & (p[:, 1] <= c.ground + c.ball_radius) & (vb[:, 1] < 0)
    p = np.where(touch[:, None], np.stack([p[:, 0], np.full(len(p), c.ground + c.ball_radius)], -1), p)
    vb = np.where(touch[:, None], 0.0, vb)
    st.ball_pos, st.ball_vel = p, vb
    st.launched, st.landed = launched, landed | touch
    st.attached = hit
    st.q_o = (p[:, 0] - x0)[:, None]
    st.dq_o = vb[:, :1].copy()


def step_batch(state: WorldState, spec: TaskSpec, a):
    """Advance a batched state by one control step. Returns (new state, rewards)."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidAction("action contains NaN or inf")
    if a.shape != state.q_r.shape:
        raise InvalidAction(f"action shape {a.shape} does not match robot {state.q_r.shape}")
    a = np.clip(a, -spec.vel_limit, spec.vel_limit)
    dt = spec.dt
    q0 = state.q_r
    q1 = spec.robot.clamp(q0 + a * dt)
    st = WorldState(q1, (q1 - q0) / dt, state.q_o, state.dq_o, state.ball_pos,
                    state.ball_vel, state.attached, state.launched, state.landed,
                    state.k + 1, dt)
    n = spec.contact.substeps
    h = dt / n
    qs = [q0 + (q1 - q0) * (i / n) for i in range(n)] + [q1]
    if spec.mode == STRIKE:
        x0 = spec.init.ball_pos[0]
        for i in range(n):
            _strike_substep(spec, st, qs[i], qs[i + 1], h, x0)
    else:
        ees = [_ee(spec, qq) for qq in qs]
        sub = _attach_substep if spec.mode == ATTACH else _push_substep
        for i in range(n):
            sub(spec, st, ees[i], ees[i + 1], h)
    return st, reward(spec.reward, st.q_o, a)


def step(state: WorldState, spec: TaskSpec, a):
    """Single-rollout step: ``(state, a) -> (state, reward)``."""
    a = np.asarray(a, dtype=float)
    st, r = step_batch(state.batched(1), spec, a[None])
    return st.row(0), float(r[0])


def initial_state(spec: TaskSpec, rng=None) -> WorldState:
    st = replace(spec.init, dt=spec.dt, k=0)
    if spec.start_noise > 0 and rng is not None:
        st = replace(st, q_r=spec.robot.clamp(st.q_r + rng.normal(0.0, spec.start_noise, st.q_r.shape)))
    return st


def run_batch(spec: TaskSpec, controller, seeds, stochastic=False, source="policy",
              init_states=None, tolerate_invalid=False):
    """Roll out ``controller`` once per seed, all in lock step.

    Each seed owns its RNG stream: first the start-state perturbation, then the
    per-step action noise, so an episode depends only on (spec, policy, seed).
    ``stochastic`` is one flag or one flag per seed. With ``tolerate_invalid``
    a rollout whose controller emits a non-finite action is frozen (zero
    velocity from then on) and its rewards are NaN, instead of the whole batch
    raising :class:`InvalidAction`.
    """
    seeds = list(seeds)
    B, T, m = len(seeds), spec.horizon, spec.n_act
    rngs = [np.random.default_rng(s) for s in seeds]
    if init_states is None:
        init_states = [initial_state(spec, r) for r in rngs]
    st = WorldState(*(np.stack([getattr(s, f) for s in init_states])
                      for f in ("q_r", "dq_r", "q_o", "dq_o", "ball_pos", "ball_vel",
                                "attached", "launched", "landed")), k=0, dt=spec.dt)
    noisy = np.broadcast_to(np.asarray(stochastic, dtype=bool), (B,))
    eps = np.zeros((T, B, m))
    for i, r in enumerate(rngs):
        if noisy[i]:
            eps[:, i] = r.standard_normal((T, m))
    obs = np.empty((T, B, spec.n_obs))
    acts = np.empty((T, B, m))
    rews = np.empty((T, B))
    failed = np.zeros(B, dtype=bool)
    o = observe(st)
    controller.begin(o, spec.dt)
    for t in range(T):
        obs[t] = o
        a = controller.act(t, o, eps[t])
        if tolerate_invalid:
            failed |= ~np.all(np.isfinite(a), axis=-1)
            if failed.any():
                a = np.where(failed[:, None], 0.0, a)
        acts[t] = a
        st, rews[t] = step_batch(st, spec, a)
        o = observe(st)
    rews[:, failed] = np.nan
    episodes = [Episode(obs[:, i].copy(), acts[:, i].copy(), rews[:, i].copy(), seed=s,
                        source=source, gamma=spec.reward.gamma, final_obs=o[i].copy())
                for i, s in enumerate(seeds)]
    return episodes, st


def rollout(spec: TaskSpec, policy, seed: int, stochastic=False, source="policy") -> Episode:
    """Run one full-horizon episode of ``policy`` (anything with ``controller()``)."""
    if hasattr(policy, "begin"):
        ctl = policy
    elif stochastic:
        ctl = policy.controller(deterministic=False)
    else:
        ctl = policy.controller()
    if ctl.n_act != spec.n_act:
        raise ValueError("policy action dimension does not match the robot")
    eps, _ = run_batch(spec, ctl, [seed], stochastic=stochastic, source=source)
    return eps[0]
