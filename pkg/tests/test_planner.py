import math
from dataclasses import replace

import numpy as np
import pytest

from mpboot.kinematics import (PRISMATIC, REVOLUTE, Joint, KinematicChain, Link, NonConvergent,
                               Pose2, fk, ik)
from mpboot.planner import (GraspFrame, MissingGraspLink, PlanNotFound, PosePath, Trajectory,
                            TrackingFailed, _edge_valid, demo_actions, demo_episode, estimate_grasp,
                            grasp_path, initial_mp_demos, plan_object_path, plan_robot_path, retime,
                            rrt)
from mpboot.policy import ActionReplay
from mpboot.tasks import door, door_close, drawer, drawer_open, make_task, robot_arm, tee_ball
from mpboot.world import ObjectDynamics, initial_state, run_batch


def test_drawer_plan_is_linear_ramp():
    T = plan_object_path(drawer(), [0.0], [0.3], seed=0, speed=0.2, dt=0.02)
    wp = T.waypoints[:, 0]
    assert wp[0] == 0.0 and wp[-1] == pytest.approx(0.3)
    steps = np.diff(wp)
    assert np.allclose(steps, steps[0]) and steps[0] <= 0.2 * 0.02 + 1e-12


def test_identity_plan_has_two_waypoints():
    T = plan_object_path(drawer(), [0.1], [0.1], seed=0)
    assert len(T) == 2 and np.array_equal(T.waypoints[0], T.waypoints[1])


def test_plan_outside_limits():
    with pytest.raises(PlanNotFound):
        plan_object_path(drawer(), [0.0], [0.5], seed=0)


def _toy_2dof():
    return KinematicChain((Joint(REVOLUTE, Pose2(), (-2.0, 2.0)),
                           Joint(PRISMATIC, Pose2(0.5, 0, 0), (-1.0, 1.0))),
                          (Link("a"), Link("b")), name="toy")


def test_rrt_avoids_forbidden_interval():
    chain = _toy_2dof()

    def valid(q):
        # joint 1 may not sit in [-0.3, 0.3] unless joint 2 is above 0.6
        return not (-0.3 <= q[0] <= 0.3 and q[1] < 0.6)

    T = plan_object_path(chain, [-1.5, -0.8], [1.5, -0.8], seed=3, speed=1.0, valid=valid)
    res = 1e-3 * float(np.linalg.norm(chain.upper - chain.lower))
    for a, b in zip(T.waypoints[:-1], T.waypoints[1:]):
        assert _edge_valid(a, b, valid, res)
    assert np.allclose(T.waypoints[0], [-1.5, -0.8]) and np.allclose(T.waypoints[-1], [1.5, -0.8])


def test_rrt_gives_up():
    lo, hi = np.array([0.0, 0.0]), np.array([1.0, 1.0])
    with pytest.raises(PlanNotFound):
        rrt(lo, hi, np.array([0.1, 0.1]), np.array([0.9, 0.9]), lambda q: q[0] < 0.5,
            np.random.default_rng(0), max_samples=500)


def test_retime_constant_speed():
    path = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    wp = retime(path, 0.5, 0.1)
    d = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    assert np.allclose(d, d[0]) and d[0] <= 0.05 + 1e-12


def test_estimate_grasp_examples():
    g = estimate_grasp(drawer(), drawer_open())
    assert g.link == "handle" and g.offset == Pose2()
    g = estimate_grasp(tee_ball().obj, tee_ball())
    assert g.link == "ball" and g.offset == Pose2()
    g = estimate_grasp(door(), door_close())
    assert g.link == "door" and g.offset.x == pytest.approx(0.32)
    with pytest.raises(MissingGraspLink):
        estimate_grasp(_toy_2dof(), drawer_open())


def test_grasp_path_door_arc():
    obj = door()
    T = Trajectory(0.02, np.array([[0.0], [math.pi / 4], [math.pi / 2]]))
    g = estimate_grasp(obj, door_close())
    path = grasp_path(T, obj, g)
    hinge = obj.base.position
    r = math.hypot(0.32, 0.02)
    for p in path.poses:
        assert math.hypot(*(p.position - hinge)) == pytest.approx(r, abs=1e-12)


def test_grasp_path_drawer_collinear():
    obj = drawer()
    T = plan_object_path(obj, [0.0], [0.3], seed=0)
    pts = np.array([p.position for p in grasp_path(T, obj, GraspFrame("handle")).poses])
    d = np.diff(pts, axis=0)
    assert np.allclose(d, d[0], atol=1e-12)


def test_grasp_path_matches_fk():
    obj = door()
    rng = np.random.default_rng(0)
    T = Trajectory(0.02, rng.uniform(0, 1.5, (20, 1)))
    g = GraspFrame("door", Pose2(0.32, 0.02))
    for q, p in zip(T.waypoints, grasp_path(T, obj, g).poses):
        ref = fk(obj, q, "handle")
        assert np.allclose(p.as_array(), ref.as_array(), atol=1e-12)
    with pytest.raises(ValueError):
        grasp_path(Trajectory(0.02, np.zeros((3, 2))), obj, g)


def test_track_reachable_path():
    task = drawer_open()
    T = plan_object_path(task.obj, [0.0], [0.3], seed=0)
    path = grasp_path(T, task.obj, estimate_grasp(task.obj, task))
    q0 = ik(task.robot, path.poses[0], task.init.q_r, orientation_weight=0.0)
    R = plan_robot_path(task.robot, path, q0)
    assert len(R) == len(path)
    for q, pose in zip(R.waypoints, path.poses):
        assert np.linalg.norm(fk(task.robot, q).position - pose.position) < 1e-3
    assert np.max(np.abs(np.diff(R.waypoints, axis=0))) <= 0.3


def test_single_pose_path():
    robot = robot_arm()
    q = np.array([0.1, 0.5, -0.3])
    R = plan_robot_path(robot, PosePath((fk(robot, q),), (True,)), q)
    assert len(R) == 2 and np.allclose(R.waypoints[0], q) and np.allclose(R.waypoints[1], q)


def test_closed_door_handle_out_of_reach():
    task = door_close()
    handle = fk(task.obj, [0.0], "handle")
    rng = np.random.default_rng(0)
    for _ in range(10):
        with pytest.raises(NonConvergent):
            ik(task.robot, handle, rng.uniform(task.robot.lower, task.robot.upper),
               orientation_weight=0.0)


def test_door_tracking_truncates():
    task = door_close()
    T = plan_object_path(task.obj, task.init.q_o, [0.0], seed=0, speed=0.4)
    path = grasp_path(T, task.obj, estimate_grasp(task.obj, task))
    q0 = ik(task.robot, path.poses[0], task.init.q_r, orientation_weight=0.0)
    with pytest.raises(TrackingFailed) as info:
        plan_robot_path(task.robot, path, q0)
    assert 0 < info.value.index < len(path)
    assert info.value.partial.truncated


def test_drawer_demo_opens_drawer():
    task = drawer_open()
    for seed in range(3):
        ep = demo_episode(task, seed=seed)
        assert ep.source == "planner"
        assert ep.final_obs[-1] >= 0.8 * 0.3


def test_door_demo_moves_but_fails():
    task = door_close()
    traj = initial_mp_demos(task, seed=0)
    assert traj.truncated
    ep = demo_episode(task, seed=0, traj=traj)
    assert ep.final_obs[-1] < task.init.q_o[0] - 0.2
    assert abs(ep.final_obs[-1]) > 0.1


def test_demos_distinct_and_deterministic():
    task = drawer_open()
    trajs = [initial_mp_demos(task, seed=s) for s in range(10)]
    for i in range(10):
        for j in range(i + 1, 10):
            n = min(len(trajs[i]), len(trajs[j]))
            assert np.max(np.abs(trajs[i].waypoints[:n] - trajs[j].waypoints[:n])) > 0
    again = initial_mp_demos(task, seed=4)
    assert np.array_equal(again.waypoints, trajs[4].waypoints)


def test_demo_limits_and_horizon():
    for tid in ("drawer-open", "door-close", "tee-ball"):
        task = make_task(tid)
        traj = initial_mp_demos(task, seed=1)
        assert len(traj) <= task.horizon + 1
        assert all(task.robot.within_limits(q) for q in traj.waypoints)
        v = np.abs(np.diff(traj.waypoints, axis=0)) / task.dt
        assert v.max() <= task.vel_limit


def test_demo_actions_pad_with_zero():
    T = Trajectory(0.02, np.array([[0.0], [0.01], [0.03]]))
    a = demo_actions(T, 5)
    assert np.allclose(a[:, 0], [0.5, 1.0, 0, 0, 0])


def test_frictionless_tracking_reproduces_object_plan():
    task = replace(drawer_open(), dynamics=ObjectDynamics(inertia=1.0))
    traj = initial_mp_demos(task, seed=0, sigma=0.0)
    T_O = plan_object_path(task.obj, task.init.q_o, task.reward.goal, seed=0, speed=task.plan_speed)
    start = initial_state(task)
    start.q_r = traj.waypoints[0].copy()
    ep = run_batch(task, ActionReplay(demo_actions(traj, task.horizon)), [0], init_states=[start])[0][0]
    q_o = np.append(ep.obs[:, -1], ep.final_obs[-1])
    # the object starts moving once the approach ends: align on the first motion
    k0 = int(np.argmax(q_o > 0))
    n = min(len(T_O) - 1, len(q_o) - k0)
    err = np.abs(q_o[k0: k0 + n] - T_O.waypoints[1: n + 1, 0])
    assert np.all(err <= 0.05 * 0.3)
