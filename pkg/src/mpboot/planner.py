"""Demonstrations from kinematic planning.

Plan the object through its own configuration space, push that plan through
a fixed grasp frame to get an end-effector path, then track the path with
robot IK. Paths that leave the robot's workspace are cut at the last
reachable waypoint instead of failing.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .kinematics import (Circle, KinematicChain, NonConvergent, Pose2, Segment, fk, ik,
                         link_segments)
from .policy import ActionReplay, Episode
from .world import TaskSpec, initial_state, run_batch


class PlanNotFound(RuntimeError):
    pass


class MissingGraspLink(ValueError):
    pass


class TrackingFailed(RuntimeError):
    def __init__(self, index, partial):
        super().__init__(f"IK tracking failed at waypoint {index}")
        self.index = index
        self.partial = partial


@dataclass(frozen=True)
class Trajectory:
    dt: float
    waypoints: np.ndarray
    chain: str = ""
    truncated: bool = False

    def __post_init__(self):
        wp = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if len(wp) < 2:
            raise ValueError("a trajectory needs at least two waypoints")
        object.__setattr__(self, "waypoints", wp)

    def __len__(self):
        return len(self.waypoints)

    @property
    def duration(self) -> float:
        return (len(self) - 1) * self.dt


@dataclass(frozen=True)
class PosePath:
    poses: tuple
    free_orientation: tuple

    def __len__(self):
        return len(self.poses)


@dataclass(frozen=True)
class GraspFrame:
    link: str
    offset: Pose2 = Pose2()


# ---------------------------------------------------------------------------
# object configuration space

def _edge_valid(a, b, valid, resolution):
    n = max(1, int(math.ceil(np.max(np.abs(b - a)) / resolution)))
    for s in np.linspace(0.0, 1.0, n + 1)[1:]:
        if not valid(a + s * (b - a)):
            return False
    return True


def rrt(lo, hi, q0, q_goal, valid, rng, max_samples=50_000, goal_bias=0.1,
        step_frac=0.05, resolution_frac=1e-3):
    """Goal-biased RRT with a straight-line local planner. Returns a polyline."""
    diameter = float(np.linalg.norm(hi - lo))
    step = step_frac * diameter
    resolution = max(resolution_frac * diameter, 1e-12)
    if _edge_valid(q0, q_goal, valid, resolution):
        return np.array([q0, q_goal])
    nodes = [q0]
    parents = [-1]
    arr = np.array(nodes)
    for _ in range(max_samples):
        target = q_goal if rng.random() < goal_bias else rng.uniform(lo, hi)
        i = int(np.argmin(np.sum((arr - target) ** 2, -1)))
        d = target - nodes[i]
        dist = np.linalg.norm(d)
        new = target if dist <= step else nodes[i] + d * (step / dist)
        if not valid(new) or not _edge_valid(nodes[i], new, valid, resolution):
            continue
        nodes.append(new)
        parents.append(i)
        arr = np.vstack([arr, new])
        if _edge_valid(new, q_goal, valid, resolution) and np.linalg.norm(q_goal - new) <= step:
            path = [q_goal]
            j = len(nodes) - 1
            while j >= 0:
                path.append(nodes[j])
                j = parents[j]
            return np.array(path[::-1])
    raise PlanNotFound(f"no path after {max_samples} samples")


def shortcut(path, valid, resolution):
    """Greedy shortcutting: jump to the furthest directly reachable waypoint."""
    out = [path[0]]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not _edge_valid(path[i], path[j], valid, resolution):
            j -= 1
        out.append(path[j])
        i = j
    return np.array(out)


def retime(path, speed, dt):
    """Resample a polyline at constant configuration-space speed."""
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    length = s[-1]
    n = max(1, int(math.ceil(length / (speed * dt))))
    if length == 0.0:
        return np.array([path[0], path[0]])
    targets = np.linspace(0.0, length, n + 1)
    return np.stack([np.interp(targets, s, path[:, j]) for j in range(path.shape[1])], -1)


def plan_object_path(obj: KinematicChain, q0, q_goal, seed=0, speed=0.2, dt=0.02,
                     valid=None, **rrt_kw) -> Trajectory:
    """Collision-free object path from ``q0`` to ``q_goal`` at constant speed."""
    q0 = np.asarray(q0, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    if not (obj.within_limits(q0) and obj.within_limits(q_goal)):
        raise PlanNotFound("start or goal outside joint limits")
    lo, hi = obj.lower, obj.upper

    def ok(q):
        return obj.within_limits(q) and (valid is None or valid(q))

    if not (ok(q0) and ok(q_goal)):
        raise PlanNotFound("start or goal in collision")
    rng = np.random.default_rng(seed)
    path = rrt(lo, hi, q0, q_goal, ok, rng, **rrt_kw)
    resolution = max(1e-3 * float(np.linalg.norm(hi - lo)), 1e-12)
    path = shortcut(path, ok, resolution)
    return Trajectory(dt, retime(path, speed, dt), obj.name)


# ---------------------------------------------------------------------------
# grasp and end-effector path

def estimate_grasp(obj: KinematicChain, task: TaskSpec) -> GraspFrame:
    """Grasp at the part the task names (handle, ball)."""
    name = task.grasp_frame
    for link in obj.links:
        if link.name == name:
            return GraspFrame(link.name)
        if name in link.frames:
            return GraspFrame(link.name, link.frames[name])
    raise MissingGraspLink(f"object {obj.name!r} has no part named {name!r}")


def grasp_path(T_O: Trajectory, obj: KinematicChain, g: GraspFrame,
               free_orientation=True) -> PosePath:
    if T_O.waypoints.shape[1] != obj.dof:
        raise ValueError("trajectory does not belong to this object")
    poses = tuple(fk(obj, q, g.link).compose(g.offset) for q in T_O.waypoints)
    return PosePath(poses, (bool(free_orientation),) * len(poses))


def _segment_distance(p0, p1, q0, q1):
    """Distance between two 2-D segments."""
    p0, p1, q0, q1 = (np.asarray(v, dtype=float) for v in (p0, p1, q0, q1))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    d1, d2 = cross(q0, q1, p0), cross(q0, q1, p1)
    d3, d4 = cross(p0, p1, q0), cross(p0, p1, q1)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return 0.0

    def point_seg(p, a, b):
        ab = b - a
        t = np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-18), 0.0, 1.0)
        return float(np.linalg.norm(p - (a + t * ab)))

    return min(point_seg(p0, q0, q1), point_seg(p1, q0, q1),
               point_seg(q0, p0, p1), point_seg(q1, p0, p1))


def robot_in_collision(robot: KinematicChain, q, scene, clearance=0.0) -> bool:
    for link in link_segments(robot, q):
        for obs in scene:
            if isinstance(obs, Segment):
                if isinstance(link, Segment):
                    if _segment_distance(link.p0, link.p1, obs.p0, obs.p1) <= clearance:
                        return True
            elif isinstance(obs, Circle) and isinstance(link, Segment):
                if _segment_distance(link.p0, link.p1, obs.center, obs.center) <= obs.radius + clearance:
                    return True
    return False


def plan_robot_path(robot: KinematicChain, eepath: PosePath, q_start, dt=0.02, scene=(),
                    max_jump=0.3, retries=10, seed=0, frame="tip") -> Trajectory:
    """Track ``eepath`` with IK warm-started from the previous waypoint."""
    q_start = np.asarray(q_start, dtype=float)
    rng = np.random.default_rng(seed)
    qs = []
    prev = q_start
    for k, (pose, free) in enumerate(zip(eepath.poses, eepath.free_orientation)):
        w = 0.0 if free else 1.0
        q = None
        for attempt in range(retries + 1):
            seed_q = prev if attempt == 0 else robot.clamp(prev + rng.normal(0.0, 0.3, robot.dof))
            try:
                cand = ik(robot, pose, seed_q, frame=frame, orientation_weight=w)
            except NonConvergent:
                continue
            if np.max(np.abs(cand - prev)) > max_jump and k > 0:
                continue
            if scene and robot_in_collision(robot, cand, scene):
                continue
            q = cand
            break
        if q is None:
            partial = None
            if qs:
                wp = qs if len(qs) > 1 else [qs[0], qs[0]]
                partial = Trajectory(dt, np.array(wp), robot.name, truncated=True)
            raise TrackingFailed(k, partial)
        qs.append(q)
        prev = q
    if len(qs) == 1:
        qs.append(qs[0])
    return Trajectory(dt, np.array(qs), robot.name)


# ---------------------------------------------------------------------------
# full demonstration

def min_jerk(q0, q1, n):
    s = np.linspace(0.0, 1.0, n + 1)
    blend = 10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5
    return q0 + blend[:, None] * (q1 - q0)


def _limit_speed(waypoints, vmax, dt):
    """Insert intermediate waypoints wherever a step would exceed ``vmax``."""
    out = [waypoints[0]]
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        n = max(1, int(math.ceil(np.max(np.abs(b - a)) / (vmax * dt) - 1e-9)))
        for s in range(1, n + 1):
            out.append(a + (b - a) * (s / n))
    return np.array(out)


def initial_mp_demos(task: TaskSpec, robot=None, obj=None, q_goal=None, seed=0,
                     sigma=0.01, approach_speed=2.0) -> Trajectory:
    """Robot joint trajectory demonstrating ``task`` from planning alone.

    The start configuration and the object plan are perturbed with Gaussian
    noise of scale ``sigma`` (per joint) so that different seeds give distinct
    demonstrations. The result is at most ``task.horizon`` steps long.
    """
    robot = task.robot if robot is None else robot
    obj = task.obj if obj is None else obj
    q_goal = task.reward.goal if q_goal is None else np.asarray(q_goal, dtype=float)
    rng = np.random.default_rng(seed)
    q_start = robot.clamp(task.init.q_r + rng.normal(0.0, sigma, robot.dof))
    q_goal = obj.clamp(q_goal + rng.normal(0.0, sigma, obj.dof))

    T_O = plan_object_path(obj, task.init.q_o, q_goal, seed=seed, speed=task.plan_speed, dt=task.dt)
    g = estimate_grasp(obj, task)
    eepath = grasp_path(T_O, obj, g)

    # approach: one IK solve for the first grasp pose, then joint-space interpolation
    q_grasp = None
    for attempt in range(20):
        seed_q = q_start if attempt == 0 else robot.clamp(q_start + rng.normal(0.0, 0.5, robot.dof))
        try:
            cand = ik(robot, eepath.poses[0], seed_q, orientation_weight=0.0)
        except NonConvergent:
            continue
        if task.scene and robot_in_collision(robot, cand, task.scene):
            continue
        q_grasp = cand
        break
    if q_grasp is None:
        raise TrackingFailed(0, None)
    peak = 1.875 * np.max(np.abs(q_grasp - q_start))
    n_app = max(10, int(math.ceil(peak / approach_speed / task.dt)))
    approach = min_jerk(q_start, q_grasp, n_app)

    truncated = False
    try:
        T_R = plan_robot_path(robot, eepath, q_grasp, task.dt, task.scene, seed=seed)
        track = T_R.waypoints
    except TrackingFailed as err:
        truncated = True
        track = (err.partial.waypoints if err.partial is not None else q_grasp[None])
        if err.partial is not None and len(track) == 2 and np.array_equal(track[0], track[1]):
            track = track[:1]
    wp = np.vstack([approach[:-1], track])
    wp = _limit_speed(wp, 0.9 * task.vel_limit, task.dt)[: task.horizon + 1]
    return Trajectory(task.dt, wp, robot.name, truncated=truncated)


def demo_actions(traj: Trajectory, horizon: int):
    """Velocity commands that replay ``traj`` and then hold still."""
    v = np.diff(traj.waypoints, axis=0) / traj.dt
    out = np.zeros((horizon, traj.waypoints.shape[1]))
    n = min(horizon, len(v))
    out[:n] = v[:n]
    return out


def demo_episode(task: TaskSpec, seed=0, traj: Trajectory | None = None, **kw) -> Episode:
    """Execute a planner demonstration open loop and record it."""
    if traj is None:
        traj = initial_mp_demos(task, seed=seed, **kw)
    start = initial_state(task)
    start.q_r = traj.waypoints[0].copy()
    eps, _ = run_batch(task, ActionReplay(demo_actions(traj, task.horizon)), [seed],
                       source="planner", init_states=[start])
    return eps[0]
