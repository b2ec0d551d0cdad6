import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpboot.kinematics import (PRISMATIC, REVOLUTE, DimensionMismatch, Joint, KinematicChain,
                               KinematicsError, Link, NonConvergent, Pose2, UnknownFrame, fk, ik,
                               jacobian, serial_arm, wrap_angle)
from mpboot.tasks import door, drawer, robot_arm


def hom(x, y, th):
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


def matrix_fk(lengths, q):
    # independent oracle: product of homogeneous transforms
    T = np.eye(3)
    for length, qi in zip(lengths, q):
        T = T @ hom(0, 0, qi) @ hom(length, 0, 0)
    return T[0, 2], T[1, 2], math.atan2(T[1, 0], T[0, 0])


def test_two_link_straight():
    arm = serial_arm([1.0, 1.0])
    p = fk(arm, [0.0, 0.0])
    assert (p.x, p.y, p.theta) == pytest.approx((2.0, 0.0, 0.0), abs=1e-15)


def test_two_link_base_rotation():
    arm = serial_arm([1.0, 1.0])
    p = fk(arm, [math.pi / 2, 0.0])
    assert (p.x, p.y, p.theta) == pytest.approx((0.0, 2.0, math.pi / 2), abs=1e-12)


def test_three_link_matches_matrix_product():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lengths = rng.uniform(0.2, 1.5, 3)
        q = rng.uniform(-math.pi, math.pi, 3)
        p = fk(serial_arm(lengths), q)
        x, y, th = matrix_fk(lengths, q)
        assert abs(p.x - x) < 1e-12 and abs(p.y - y) < 1e-12
        assert abs(wrap_angle(p.theta - th)) < 1e-12


def test_fk_invariant_to_angle_representation():
    arm = robot_arm()
    q = np.array([0.3, -1.0, 0.7])
    a, b = fk(arm, q), fk(arm, q + np.array([2 * math.pi, -2 * math.pi, 4 * math.pi]))
    assert np.allclose(a.as_array(), b.as_array(), atol=1e-12)


def test_fk_errors():
    arm = serial_arm([1.0, 1.0])
    with pytest.raises(UnknownFrame):
        fk(arm, [0.0, 0.0], "handle")
    with pytest.raises(DimensionMismatch):
        fk(arm, [0.0, 0.0, 0.0])


def test_pose_theta_normalised():
    assert Pose2(0, 0, math.pi).theta == pytest.approx(math.pi)
    assert Pose2(0, 0, -math.pi).theta == pytest.approx(math.pi)
    assert Pose2(0, 0, 3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-10, 10),
       st.floats(-5, 5), st.floats(-5, 5), st.floats(-10, 10))
def test_pose_compose_inverse(x, y, t, u, v, w):
    a, b = Pose2(x, y, t), Pose2(u, v, w)
    back = a.inverse().compose(a.compose(b))
    assert np.allclose(back.position, b.position, atol=1e-9)
    assert abs(wrap_angle(back.theta - b.theta)) < 1e-9


def test_unit_link_jacobian_column():
    J = jacobian(serial_arm([1.0]), [0.0])
    assert np.allclose(J[:, 0], [0.0, 1.0, 1.0])


def test_prismatic_jacobian_column():
    chain = KinematicChain((Joint(PRISMATIC, Pose2(), (-1.0, 1.0)),), (Link("slider"),))
    J = jacobian(chain, [0.0], "slider")
    assert np.allclose(J[:, 0], [1.0, 0.0, 0.0])


def fd_jacobian(chain, q, frame, h=1e-6):
    J = np.zeros((3, len(q)))
    for j in range(len(q)):
        dq = np.zeros(len(q))
        dq[j] = h
        a, b = fk(chain, q + dq, frame), fk(chain, q - dq, frame)
        J[:2, j] = (a.position - b.position) / (2 * h)
        J[2, j] = wrap_angle(a.theta - b.theta) / (2 * h)
    return J


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    kinds = rng.choice([REVOLUTE, PRISMATIC], n)
    joints = tuple(Joint(k, Pose2(*rng.uniform(-0.5, 0.5, 3)), (-2.0, 2.0)) for k in kinds)
    links = tuple(Link(f"l{i}", {"tip": Pose2(0.3, 0.1, 0.2)} if i == n - 1 else {}) for i in range(n))
    chain = KinematicChain(joints, links, Pose2(*rng.uniform(-1, 1, 3)))
    q = rng.uniform(-1.5, 1.5, n)
    assert np.allclose(jacobian(chain, q, "tip"), fd_jacobian(chain, q, "tip"), atol=1e-5)


def test_object_chains_jacobian():
    for chain, frame, q in ((drawer(), "handle", [0.1]), (door(), "handle", [0.7])):
        assert np.allclose(jacobian(chain, q, frame), fd_jacobian(chain, np.array(q), frame), atol=1e-5)


def test_ik_fixed_point_returns_start():
    arm = robot_arm()
    q0 = np.array([0.2, 0.5, -0.4])
    q = ik(arm, fk(arm, q0), q0)
    assert np.array_equal(q, q0)


def test_ik_full_extension():
    arm = serial_arm([1.0, 1.0])
    q = ik(arm, Pose2(2.0, 0.0), [0.3, 0.4], orientation_weight=0.0)
    p = fk(arm, q)
    assert math.hypot(p.x - 2.0, p.y) < 1e-4
    # at the singularity position error is quadratic in joint error
    assert np.allclose(wrap_angle(q), [0.0, 0.0], atol=3e-2)


def test_ik_random_targets_converge():
    # unit three-link arm with continuous joints; targets from random configurations
    arm = serial_arm([1.0, 1.0, 1.0])
    rng = np.random.default_rng(7)
    ok = 0
    for _ in range(100):
        target = fk(arm, rng.uniform(-math.pi, math.pi, 3))
        try:
            q = ik(arm, target, rng.uniform(-math.pi, math.pi, 3))
        except NonConvergent:
            continue
        if np.linalg.norm(fk(arm, q).position - target.position) < 1e-4:
            ok += 1
    assert ok >= 95


def test_ik_task_arm_with_resampled_starts():
    # joint limits on the task arm trap some single starts; callers resample q_init
    arm = robot_arm()
    rng = np.random.default_rng(3)
    ok = 0
    for _ in range(100):
        target = fk(arm, rng.uniform(arm.lower, arm.upper))
        for _ in range(3):
            try:
                q = ik(arm, target, rng.uniform(arm.lower, arm.upper), orientation_weight=0.0)
            except NonConvergent:
                continue
            ok += np.linalg.norm(fk(arm, q).position - target.position) < 1e-4
            break
    assert ok >= 95


def test_ik_respects_limits_and_reports_best():
    arm = robot_arm()
    rng = np.random.default_rng(1)
    for _ in range(30):
        target = Pose2(*rng.uniform(-1.2, 1.2, 2), 0.0)
        try:
            q = ik(arm, target, np.zeros(3), orientation_weight=0.0)
        except NonConvergent as err:
            q = err.q
            assert err.residual > 1e-4
        assert arm.within_limits(q)


def test_unreachable_raises():
    arm = robot_arm()
    with pytest.raises(NonConvergent):
        ik(arm, Pose2(3.0, 0.0), np.zeros(3), orientation_weight=0.0)


def test_chain_validation():
    with pytest.raises(KinematicsError):
        Joint("ball", Pose2(), (0, 1))
    with pytest.raises(KinematicsError):
        Joint(REVOLUTE, Pose2(), (1.0, 0.0))
    with pytest.raises(KinematicsError):
        KinematicChain((), ())
    with pytest.raises(KinematicsError):
        KinematicChain((Joint(REVOLUTE),) * 2, (Link("a", {"tip": Pose2()}), Link("tip")))
