"""Planar kinematic chains for the robot arm and articulated objects.

Every chain lives in SE(2). A chain is an ordered list of joints, each
followed by a rigid link. Link frames sit at the joint after its motion has
been applied; named frames (``"tip"``, ``"handle"``, ...) hang off links with
a fixed offset.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

REVOLUTE = "revolute"
PRISMATIC = "prismatic"


class KinematicsError(ValueError):
    pass


class UnknownFrame(KinematicsError):
    pass


class DimensionMismatch(KinematicsError):
    pass


class NonConvergent(RuntimeError):
    """IK ran out of iterations. Carries the best configuration found."""

    def __init__(self, q, residual):
        super().__init__(f"IK did not converge (residual {residual:.3e})")
        self.q = q
        self.residual = residual


def wrap_angle(theta):
    """Map angles to (-pi, pi]."""
    out = np.arctan2(np.sin(theta), np.cos(theta))
    out = np.where(out <= -np.pi, np.pi, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(self.x + c * other.x - s * other.y,
                     self.y + s * other.x + c * other.y,
                     self.theta + other.theta)

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    def apply(self, point):
        c, s = math.cos(self.theta), math.sin(self.theta)
        px, py = point
        return np.array([self.x + c * px - s * py, self.y + s * px + c * py])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class Joint:
    kind: str
    origin: Pose2 = Pose2()
    limits: tuple = (-math.pi, math.pi)

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC):
            raise KinematicsError(f"unknown joint kind {self.kind!r}")
        lo, hi = (float(v) for v in self.limits)
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise KinematicsError(f"bad joint limits {self.limits}")
        object.__setattr__(self, "limits", (lo, hi))


@dataclass(frozen=True)
class Segment:
    """Collision segment in link coordinates."""
    p0: tuple
    p1: tuple


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float


@dataclass(frozen=True)
class Link:
    name: str
    frames: dict = field(default_factory=dict)
    geometry: tuple = ()


@dataclass(frozen=True)
class KinematicChain:
    joints: tuple
    links: tuple
    base: Pose2 = Pose2()
    name: str = "chain"

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "links", tuple(self.links))
        if not self.joints:
            raise KinematicsError("a chain needs at least one joint")
        if len(self.links) != len(self.joints):
            raise KinematicsError("one link per joint")
        names = [link.name for link in self.links]
        for link in self.links:
            names.extend(link.frames)
        if len(names) != len(set(names)):
            raise KinematicsError(f"duplicate frame names in chain {self.name!r}")

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    def clamp(self, q):
        return np.clip(q, self.lower, self.upper)

    def wrap(self, q):
        """Wrap joints whose range spans a full turn, then clamp."""
        q = np.array(q, dtype=float)
        for j, joint in enumerate(self.joints):
            lo, hi = joint.limits
            if joint.kind == REVOLUTE and hi - lo >= 2.0 * math.pi - 1e-12:
                q[..., j] = lo + np.mod(q[..., j] - lo, 2.0 * math.pi)
        return self.clamp(q)

    def within_limits(self, q, tol=0.0) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def has_frame(self, name: str) -> bool:
        try:
            self.frame(name)
        except UnknownFrame:
            return False
        return True

    def frame(self, name: str):
        """Return ``(link_index, offset)`` for a link or named frame."""
        for i, link in enumerate(self.links):
            if link.name == name:
                return i, Pose2()
            if name in link.frames:
                return i, link.frames[name]
        raise UnknownFrame(f"chain {self.name!r} has no frame {name!r}")


def _check_q(chain, q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (chain.dof,):
        raise DimensionMismatch(
            f"configuration has shape {q.shape}, chain {chain.name!r} has {chain.dof} joints")
    return q


def joint_frames(chain: KinematicChain, q):
    """Poses of every joint frame before and after its motion.

    ``q`` may carry leading batch dimensions. Returns ``(pre, post)``, each a
    tuple ``(x, y, theta)`` of arrays shaped ``q.shape``; ``theta`` is left
    unwrapped.
    """
    q = _check_q(chain, q)
    batch = q.shape[:-1]
    x = np.full(batch, chain.base.x)
    y = np.full(batch, chain.base.y)
    th = np.full(batch, chain.base.theta)
    pre = np.empty((3,) + q.shape)
    post = np.empty((3,) + q.shape)
    for j, joint in enumerate(chain.joints):
        o = joint.origin
        c, s = np.cos(th), np.sin(th)
        x, y, th = x + c * o.x - s * o.y, y + s * o.x + c * o.y, th + o.theta
        pre[0, ..., j], pre[1, ..., j], pre[2, ..., j] = x, y, th
        if joint.kind == REVOLUTE:
            th = th + q[..., j]
        else:
            x = x + np.cos(th) * q[..., j]
            y = y + np.sin(th) * q[..., j]
        post[0, ..., j], post[1, ..., j], post[2, ..., j] = x, y, th
    return pre, post


def frame_pose_array(chain: KinematicChain, q, frame: str):
    """Vectorised fk: returns ``(x, y, theta)`` arrays with theta unwrapped."""
    link, off = chain.frame(frame)
    _, post = joint_frames(chain, q)
    x, y, th = post[0, ..., link], post[1, ..., link], post[2, ..., link]
    c, s = np.cos(th), np.sin(th)
    return x + c * off.x - s * off.y, y + s * off.x + c * off.y, th + off.theta


def fk(chain: KinematicChain, q, frame: str = "tip") -> Pose2:
    """Pose of ``frame`` in world coordinates."""
    q = _check_q(chain, q)
    if q.ndim != 1:
        raise DimensionMismatch("fk takes a single configuration")
    x, y, th = frame_pose_array(chain, q, frame)
    return Pose2(x, y, th)


def jacobian(chain: KinematicChain, q, frame: str = "tip") -> np.ndarray:
    """d(x, y, theta)/dq of ``frame``, shape (3, dof)."""
    q = _check_q(chain, q)
    link, _ = chain.frame(frame)
    pre, _ = joint_frames(chain, q)
    fx, fy, _ = frame_pose_array(chain, q, frame)
    J = np.zeros((3, chain.dof))
    for j, joint in enumerate(chain.joints[: link + 1]):
        if joint.kind == REVOLUTE:
            J[0, j] = -(fy - pre[1, j])
            J[1, j] = fx - pre[0, j]
            J[2, j] = 1.0
        else:
            J[0, j] = math.cos(pre[2, j])
            J[1, j] = math.sin(pre[2, j])
    return J


def ik(chain: KinematicChain, target: Pose2, q_init, frame: str = "tip",
       tol: float = 1e-4, max_iters: int = 200, damping: float = 0.1,
       max_step: float = 0.2, orientation_weight: float = 1.0) -> np.ndarray:
    """Damped least-squares IK.

    ``orientation_weight=0`` leaves the frame angle free. Revolute joints
    whose limits span a full turn are treated as continuous. Raises
    :class:`NonConvergent` when the residual is still above ``tol`` after
    ``max_iters`` updates.
    """
    q = chain.clamp(_check_q(chain, q_init).copy())
    rows = 3 if orientation_weight > 0 else 2
    lam2 = damping ** 2
    lo, hi = chain.lower, chain.upper
    best_q, best_res = q, np.inf
    for _ in range(max_iters + 1):
        x, y, th = frame_pose_array(chain, q, frame)
        e = np.array([target.x - x, target.y - y,
                      orientation_weight * wrap_angle(target.theta - th)])[:rows]
        pos_err = math.hypot(e[0], e[1])
        res = max(pos_err, abs(e[2])) if rows == 3 else pos_err
        if res < best_res:
            best_q, best_res = q, res
        if res <= tol:
            return q
        J = jacobian(chain, q, frame)[:rows]
        if rows == 3:
            J[2] *= orientation_weight
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(rows), e)
        # joints pinned at a limit and pushed outward are frozen; the rest re-solve
        pinned = ((q <= lo) & (dq < 0)) | ((q >= hi) & (dq > 0))
        if pinned.any() and not pinned.all():
            J[:, pinned] = 0.0
            dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(rows), e)
        peak = np.max(np.abs(dq))
        if peak > max_step:
            dq *= max_step / peak
        q = chain.wrap(q + dq)
    raise NonConvergent(best_q, best_res)


def link_segments(chain: KinematicChain, q):
    """World-frame collision geometry of every link at ``q``."""
    q = _check_q(chain, q)
    _, post = joint_frames(chain, q)
    shapes = []
    for i, link in enumerate(chain.links):
        pose = Pose2(post[0, i], post[1, i], post[2, i])
        for g in link.geometry:
            if isinstance(g, Segment):
                shapes.append(Segment(tuple(pose.apply(g.p0)), tuple(pose.apply(g.p1))))
            else:
                shapes.append(Circle(tuple(pose.apply(g.center)), g.radius))
    return shapes


def serial_arm(lengths, limits=None, base: Pose2 = Pose2(), name="arm") -> KinematicChain:
    """Planar revolute arm with straight links; the last link carries ``"tip"``."""
    lengths = [float(v) for v in lengths]
    if limits is None:
        limits = [(-math.pi, math.pi)] * len(lengths)
    joints, links = [], []
    for i, (length, lim) in enumerate(zip(lengths, limits)):
        origin = Pose2() if i == 0 else Pose2(lengths[i - 1], 0.0, 0.0)
        joints.append(Joint(REVOLUTE, origin, lim))
        frames = {"tip": Pose2(length, 0.0, 0.0)} if i == len(lengths) - 1 else {}
        links.append(Link(f"link{i + 1}", frames, (Segment((0.0, 0.0), (length, 0.0)),)))
    return KinematicChain(tuple(joints), tuple(links), base, name)
