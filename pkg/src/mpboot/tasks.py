"""The three desk-scale benchmark scenes.

``drawer-open``  pull a drawer 0.3 m open (attach contact)
``door-close``   shut a door whose closed handle is out of reach (push contact)
``tee-ball``     knock a ball off a tee as far as possible (strike contact, vertical plane)
"""
from __future__ import annotations

from dataclasses import replace
import math

import numpy as np

from .kinematics import (PRISMATIC, REVOLUTE, Joint, KinematicChain, Link, Pose2, Segment,
                         serial_arm)
from .world import (ATTACH, PUSH, STRIKE, ContactParams, ObjectDynamics, RewardSpec,
                    TaskSpec, WorldState)

TASKS = ("drawer-open", "door-close", "tee-ball")

ARM_LENGTHS = (0.4, 0.35, 0.25)
ARM_LIMITS = ((-math.pi, math.pi), (-2.6, 2.6), (-2.6, 2.6))


def robot_arm() -> KinematicChain:
    return serial_arm(ARM_LENGTHS, ARM_LIMITS, name="robot")


def drawer(base=(0.8, 0.2)) -> KinematicChain:
    # opens towards the robot (-x)
    return KinematicChain(
        (Joint(PRISMATIC, Pose2(), (0.0, 0.35)),),
        (Link("handle", {}, (Segment((0.0, -0.1), (0.0, 0.1)),)),),
        Pose2(base[0], base[1], math.pi), "drawer")


def door(hinge=(0.55, -0.85), leaf=0.4, handle=0.32) -> KinematicChain:
    # q = 0 is closed (leaf along +x); opening rotates counter-clockwise
    return KinematicChain(
        (Joint(REVOLUTE, Pose2(), (0.0, 1.5)),),
        (Link("door", {"handle": Pose2(handle, 0.02, 0.0)}, (Segment((0.0, 0.0), (leaf, 0.0)),)),),
        Pose2(hinge[0], hinge[1], 0.0), "door")


def ball_track(center=(0.65, -0.15)) -> KinematicChain:
    # displacement of the ball along the horizontal hitting direction
    return KinematicChain(
        (Joint(PRISMATIC, Pose2(), (-1.0, 5.0)),),
        (Link("ball", {}, ()),),
        Pose2(center[0], center[1], 0.0), "tee")


def _state(q_r, q_o, ball=(0.0, 0.0)):
    q_r = np.asarray(q_r, dtype=float)
    q_o = np.atleast_1d(np.asarray(q_o, dtype=float))
    return WorldState(q_r, np.zeros_like(q_r), q_o, np.zeros_like(q_o),
                      np.asarray(ball, dtype=float), np.zeros(2))


def drawer_open(base=(0.8, 0.2), goal=0.3, q_r0=(-1.2, 1.6, 1.2)) -> TaskSpec:
    return TaskSpec(
        task_id="drawer-open", robot=robot_arm(), obj=drawer(base),
        dynamics=ObjectDynamics(inertia=1.0, damping=4.0, friction=3.0),
        grasp_frame="handle", init=_state(q_r0, 0.0),
        reward=RewardSpec(goal=[goal]), mode=ATTACH,
        contact=ContactParams(substeps=1), plan_speed=0.2)


def door_close(hinge=(0.55, -0.85), q_open=1.3, q_r0=(0.2, -1.6, -1.2)) -> TaskSpec:
    return TaskSpec(
        task_id="door-close", robot=robot_arm(), obj=door(hinge),
        dynamics=ObjectDynamics(inertia=0.1, damping=0.1, friction=0.05),
        grasp_frame="handle", init=_state(q_r0, q_open),
        reward=RewardSpec(goal=[0.0]), mode=PUSH,
        contact=ContactParams(substeps=2, push_side=1.0), plan_speed=0.4,
        start_noise=0.01)


def tee_ball(center=(0.65, -0.15), ground=-0.5, goal=1.5, q_r0=(0.28, -2.5, 2.2)) -> TaskSpec:
    ground_seg = Segment((-2.0, ground), (4.0, ground))
    return TaskSpec(
        task_id="tee-ball", robot=robot_arm(), obj=ball_track(center),
        dynamics=ObjectDynamics(inertia=0.05),
        grasp_frame="ball", init=_state(q_r0, 0.0, center),
        reward=RewardSpec(goal=[goal]), mode=STRIKE,
        contact=ContactParams(substeps=4, ground=ground, ball_radius=0.04),
        scene=(ground_seg,), plan_speed=0.5)


def make_task(task_id: str) -> TaskSpec:
    try:
        return {"drawer-open": drawer_open, "door-close": door_close, "tee-ball": tee_ball}[task_id]()
    except KeyError:
        raise ValueError(f"unknown task {task_id!r}; expected one of {TASKS}") from None


def randomize_scene(task_id: str, rng) -> TaskSpec:
    """A jittered copy of a scene: object placement, goal and robot start."""
    q_jit = rng.normal(0.0, 0.05, 3)
    if task_id == "drawer-open":
        base = (0.8 + rng.uniform(-0.08, 0.08), 0.2 + rng.uniform(-0.1, 0.1))
        return drawer_open(base=base, goal=rng.uniform(0.2, 0.33),
                           q_r0=np.array((-1.2, 1.6, 1.2)) + q_jit)
    if task_id == "door-close":
        hinge = (0.55 + rng.uniform(-0.08, 0.08), -0.85 + rng.uniform(-0.08, 0.08))
        return door_close(hinge=hinge, q_open=rng.uniform(1.2, 1.4),
                          q_r0=np.array((0.2, -1.6, -1.2)) + q_jit)
    if task_id == "tee-ball":
        center = (0.65 + rng.uniform(-0.05, 0.05), -0.15 + rng.uniform(-0.05, 0.05))
        return tee_ball(center=center, q_r0=np.array((0.28, -2.5, 2.2)) + q_jit)
    raise ValueError(f"unknown task {task_id!r}")
