"""Scripted expert controllers.

Each expert plans a joint-space waypoint schedule from privileged initial
scene state (object positions are read directly from the world), solving arm
IK for palm waypoints and a small Gauss-Newton problem for fingertip
placements. The plan is cached on the world, so the expert is a
deterministic function of (world initial state, step count): identical seeds
give identical action sequences.
"""
from __future__ import annotations

import math

import numpy as np

from .. import kincam, teleop
from ..kincam import Pose
from .world import SimulationError, World

def _ik_seed_postures(target: Pose) -> list[np.ndarray]:
    """Deterministic start postures spanning elbow folds and wrist wraps,
    with the base yaw aimed at the target azimuth and the wrist pitch
    pre-solving the target's total pitch."""
    yaw = math.atan2(target.position[1], target.position[0])
    # pitch of the palm z-axis relative to vertical, signed toward +x
    zc = target.rotation[:, 2]
    pitch = math.atan2(math.hypot(zc[0], zc[1]), zc[2])
    seeds = []
    for q2 in (0.6, 1.2, 1.8):
        for q3 in (0.6, 1.4, 2.2):
            for q4 in (-0.8, -1.8, -2.6):
                q6 = float(np.clip(pitch - (q2 + q3 + q4), -2.4, 2.4))
                seeds.append(np.array([yaw, q2, q3, q4, 0.0, q6]))
    return seeds


def arm_ik(tree, position, rotation, q_init=None, slack: float = 0.0) -> np.ndarray:
    """Deterministic multi-start arm IK for expert waypoints: canonical
    postures first, then seeded random restarts. ``slack`` allows returning
    the best near-miss (meters) for non-critical waypoints."""
    target = Pose(np.asarray(position, dtype=float), np.asarray(rotation, dtype=float))
    inits = []
    if q_init is not None:
        inits.append(np.asarray(q_init, dtype=float))
    inits.extend(_ik_seed_postures(target))
    limits = tree.joint_limits()[:6]
    restart_rng = np.random.default_rng(12345)
    inits.extend(restart_rng.uniform(limits[:, 0] * 0.9, limits[:, 1] * 0.9, size=(30, 6)))
    best = None
    for init in inits:
        res = teleop.solve_arm_ik(tree, target, init, max_iters=200)
        if res.converged:
            return res.q
        if best is None or res.position_error < best.position_error:
            best = res
    if best.position_error <= slack:
        return best.q
    raise SimulationError(
        f"expert arm IK failed for target {np.round(target.position, 3)} "
        f"(best position error {best.position_error:.4f} m)"
    )


def solve_fingertips(tree, targets: dict[int, np.ndarray], q_init: np.ndarray,
                     iters: int = 30) -> np.ndarray:
    """Gauss-Newton fingertip placement: move the listed fingers' tips (hand
    base frame targets, finger index 0=thumb..4=pinky) while keeping the
    remaining joints near ``q_init``."""
    limits = tree.joint_limits()
    cols = [tree.joint_order.index(n) for n in tree.hand_joint_names()]
    lo, hi = limits[cols, 0], limits[cols, 1]
    q = np.clip(np.asarray(q_init, dtype=float).copy(), lo, hi)
    reg = math.sqrt(1e-3)
    for _ in range(iters):
        tips, jacs = teleop._tips_and_jacobians(tree, q)
        res = [math.sqrt(1.0) * (tips[i] - targets[i]) for i in sorted(targets)]
        rows = [jacs[i] for i in sorted(targets)]
        res.append(reg * (q - q_init))
        rows.append(reg * np.eye(q.size))
        r = np.concatenate(res)
        J = np.vstack(rows)
        step = np.linalg.solve(J.T @ J + 1e-9 * np.eye(q.size), -J.T @ r)
        q_new = np.clip(q + step, lo, hi)
        if np.linalg.norm(q_new - q) < 1e-9:
            break
        q = q_new
    return q


def _hand_targets_world_to_base(world: World, palm: Pose, targets_world: dict[int, np.ndarray]):
    inv = palm.inverse()
    return {i: inv.position + inv.rotation @ np.asarray(p, dtype=float) for i, p in targets_world.items()}


class Plan:
    """Waypoint schedule advanced by state: a segment ends once the joints
    reach its target (within ``tol``) or its step budget runs out. Identical
    robot states therefore map to identical expert actions, which keeps the
    demonstrations unimodal for imitation."""

    REACH_TOL = 0.02  # radians, max over joints

    def __init__(self):
        self.segments: list[tuple[np.ndarray, int, bool]] = []

    def until(self, max_steps: int, arm: np.ndarray, hand: np.ndarray, state_triggered: bool = True):
        self.segments.append((np.concatenate([arm, hand]), max_steps, state_triggered))

    def action(self, world: World) -> np.ndarray:
        progress = world._cache.setdefault("plan_progress", {"index": 0, "steps": 0})
        idx = min(progress["index"], len(self.segments) - 1)
        target, max_steps, state_triggered = self.segments[idx]
        reached = state_triggered and float(np.abs(world.q - target).max()) < self.REACH_TOL
        if (reached or progress["steps"] >= max_steps) and idx < len(self.segments) - 1:
            progress["index"] = idx + 1
            progress["steps"] = 0
            target = self.segments[idx + 1][0]
        progress["steps"] += 1
        return target.copy()


def _curl(index_straight=True) -> np.ndarray:
    from .tasks import _curl_hand

    return _curl_hand(index_straight)


# ---------------------------------------------------------------------------
# per-task planners


def _index_tip_offset(flex: float, pitch: float, yaw: float) -> np.ndarray:
    """World offset palm -> index tip for a palm oriented Rz(yaw)Ry(pitch)
    with the index MCP flexed by ``flex`` (remaining index joints at zero)."""
    local = np.array([0.088 + 0.086 * math.cos(flex), 0.024, -0.086 * math.sin(flex)])
    return kincam.rpy_to_matrix(0, pitch, yaw) @ local


BUTTON_PITCH = 0.10
BUTTON_FLEX_IN = 0.32
BUTTON_FLEX_PRESS = 0.80


def _aim_yaw(tip_target: np.ndarray, flex: float, pitch: float) -> float:
    """Palm yaw such that the palm position lies in its own yawed arm plane
    while the index tip lands on the target (keeps the wrist unwrapped)."""
    psi = math.atan2(tip_target[1], tip_target[0])
    for _ in range(8):
        palm = tip_target - _index_tip_offset(flex, pitch, psi)
        psi = math.atan2(palm[1], palm[0])
    return psi


def _plan_button(world: World) -> Plan:
    """Stage in front of the opening, advance the straight-ish index finger
    through it, then flex the index MCP to press down onto the button. The
    palm stays outside the box; only the index enters."""
    tree = world.tree
    btn = world.params["button_pos"]
    press_tip = np.array([btn[0], btn[1], 0.0195])
    yaw = _aim_yaw(press_tip, BUTTON_FLEX_PRESS, BUTTON_PITCH)
    R = kincam.rpy_to_matrix(0, BUTTON_PITCH, yaw)

    palm_press = press_tip - _index_tip_offset(BUTTON_FLEX_PRESS, BUTTON_PITCH, yaw)
    palm_stage = palm_press + kincam.rpy_to_matrix(0, 0, yaw) @ np.array([-0.145, 0.0, 0.035])

    q0 = world.q[:6]
    arm_stage = arm_ik(tree, palm_stage, R, q_init=q0)
    arm_insert = arm_ik(tree, palm_press, R, q_init=arm_stage)

    hand_stage = _curl(index_straight=True)
    hand_insert = hand_stage.copy()
    hand_insert[5] = BUTTON_FLEX_IN
    hand_press = hand_stage.copy()
    hand_press[5] = BUTTON_FLEX_PRESS

    # time-based pacing, and the press holds to the end of the episode so
    # action chunks spanning the press never mix in a retreat
    plan = Plan()
    plan.until(10, arm_stage, hand_insert, state_triggered=False)
    plan.until(10, arm_insert, hand_insert, state_triggered=False)
    plan.until(10_000, arm_insert, hand_press, state_triggered=False)
    return plan


# hand-frame pinch geometry: the thumb opposes index+middle along the hand
# x-axis around this point (near the thumb's comfortable reach)
PINCH_CENTER = np.array([0.062, 0.015, -0.062])
PINCH_PITCH = 0.9


def _pinch_configs(tree, half_width: float):
    """(open, closed) hand joint vectors pinching an object of the given
    half-width along the hand x-axis at PINCH_CENTER."""
    c = PINCH_CENTER
    spread_open = half_width + 0.016
    spread_close = half_width + 0.0045
    y = {0: 0.003, 1: 0.009, 2: -0.009}

    def targets(spread):
        return {
            0: c + np.array([spread, y[0], 0.0]),
            1: c + np.array([-spread, y[1], 0.002]),
            2: c + np.array([-spread, y[2], 0.002]),
        }

    guess = np.zeros(20)
    guess[0:4] = (-0.8, 0.8, 0.5, 0.3)
    guess[4:8] = guess[8:12] = (0.0, 0.9, 0.7, 0.4)
    # ring and pinky take no part in the pinch; fold them out of the way
    guess[12:16] = guess[16:20] = (0.0, 1.5, 1.7, 1.5)
    hand_open = solve_fingertips(tree, targets(spread_open), guess)
    hand_close = solve_fingertips(tree, targets(spread_close), hand_open)
    return hand_open, hand_close


def _pinch_palm(obj_center, yaw: float = 0.0) -> Pose:
    """Palm pose placing PINCH_CENTER on the object center."""
    R = kincam.rpy_to_matrix(0.0, PINCH_PITCH, yaw)
    return Pose(np.asarray(obj_center, dtype=float) - R @ PINCH_CENTER, R)


def _plan_stick(world: World) -> Plan:
    tree = world.tree
    stick = world.scene["stick"]
    grasp = _pinch_palm(stick.center)
    hand_open, hand_close = _pinch_configs(tree, float(stick.half[2]))

    back = grasp.position + np.array([-0.050, 0.0, 0.0])
    hover = back + np.array([0.0, 0.0, 0.04])
    arm_hover = arm_ik(tree, hover, grasp.rotation, q_init=world.q[:6], slack=0.01)
    arm_back = arm_ik(tree, back, grasp.rotation, q_init=arm_hover)
    arm_grasp = arm_ik(tree, grasp.position, grasp.rotation, q_init=arm_back)
    lift = arm_ik(tree, grasp.position + np.array([0.0, 0.0, 0.12]), grasp.rotation, q_init=arm_grasp, slack=0.01)
    away = arm_ik(tree, grasp.position + np.array([-0.17, 0.0, 0.10]), grasp.rotation, q_init=lift, slack=0.02)

    plan = Plan()
    plan.until(12, arm_hover, hand_open)
    plan.until(8, arm_back, hand_open)
    plan.until(9, arm_grasp, hand_open)
    plan.until(10, arm_grasp, hand_close)
    plan.until(10, lift, hand_close)
    plan.until(10_000, away, hand_close)
    return plan


def _plan_curtain(world: World) -> Plan:
    tree = world.tree
    target = world.scene["target"]
    extent = float(target.half[0]) if target.kind == "box" else target.radius
    grasp = _pinch_palm(target.center)
    hand_open, hand_close = _pinch_configs(tree, extent)

    entry = np.array([0.30, grasp.position[1], grasp.position[2] + 0.01])
    back = grasp.position + np.array([-0.050, 0.0, 0.0])
    arm_entry = arm_ik(tree, entry, grasp.rotation, q_init=world.q[:6])
    arm_back = arm_ik(tree, back, grasp.rotation, q_init=arm_entry)
    arm_grasp = arm_ik(tree, grasp.position, grasp.rotation, q_init=arm_back)
    lift = arm_ik(tree, grasp.position + np.array([0.0, 0.0, 0.03]), grasp.rotation, q_init=arm_grasp, slack=0.01)
    away = arm_ik(tree, np.array([0.22, grasp.position[1], 0.21]), grasp.rotation, q_init=lift, slack=0.02)

    plan = Plan()
    plan.until(12, arm_entry, hand_open)
    plan.until(16, arm_back, hand_open)
    plan.until(9, arm_grasp, hand_open)
    plan.until(10, arm_grasp, hand_close)
    plan.until(7, lift, hand_close)
    plan.until(10_000, away, hand_close)
    return plan


def _plan_cabinet(world: World) -> Plan:
    tree = world.tree
    handle = world.scene["handle"].center.copy()
    hinge = world.params["hinge"]
    target = world.scene["target"]

    hand_hook = _curl(index_straight=True)
    hook_pitch = 0.1

    def hook_waypoint(tip_world, q_prev):
        yaw = _aim_yaw(np.asarray(tip_world, dtype=float), 0.0, hook_pitch)
        palm = np.asarray(tip_world, dtype=float) - _index_tip_offset(0.0, hook_pitch, yaw)
        return arm_ik(tree, palm, kincam.rpy_to_matrix(0, hook_pitch, yaw), q_init=q_prev)

    arm_pre = hook_waypoint(handle + np.array([-0.045, 0.0, 0.0]), world.q[:6])
    arm_hook = hook_waypoint(handle + np.array([-0.004, 0.0, 0.0]), arm_pre)

    # one arc target per step so the rate-limited tip stays glued to the
    # handle while dragging the door open
    radius = np.linalg.norm(handle[:2] - hinge)
    sweep_arms = []
    prev = arm_hook
    for phi in np.linspace(0.08, 1.38, 26):
        xy = hinge + kincam.rpy_to_matrix(0, 0, -phi)[:2, :2] @ np.array([0.0, -radius])
        tip = np.array([xy[0], xy[1], handle[2]])
        prev = hook_waypoint(tip, prev)
        sweep_arms.append(prev)

    extent = float(target.half[0]) if target.kind == "box" else target.radius
    grasp = _pinch_palm(target.center)
    hand_open, hand_close = _pinch_configs(tree, extent)

    entry = np.array([0.28, grasp.position[1], grasp.position[2] + 0.01])
    back = grasp.position + np.array([-0.050, 0.0, 0.0])
    arm_entry = arm_ik(tree, entry, grasp.rotation, q_init=sweep_arms[-1])
    arm_back = arm_ik(tree, back, grasp.rotation, q_init=arm_entry)
    arm_grasp = arm_ik(tree, grasp.position, grasp.rotation, q_init=arm_back)
    lift = arm_ik(tree, grasp.position + np.array([0.0, 0.0, 0.025]), grasp.rotation, q_init=arm_grasp, slack=0.01)
    away = arm_ik(tree, np.array([0.20, grasp.position[1], 0.22]), grasp.rotation, q_init=lift, slack=0.02)

    plan = Plan()
    plan.until(10, arm_pre, hand_hook)
    plan.until(8, arm_hook, hand_hook)
    for arm in sweep_arms:
        plan.until(1, arm, hand_hook, state_triggered=False)
    plan.until(5, sweep_arms[-1], hand_hook, state_triggered=False)
    plan.until(12, arm_entry, hand_open)
    plan.until(12, arm_back, hand_open)
    plan.until(7, arm_grasp, hand_open)
    plan.until(10, arm_grasp, hand_close)
    plan.until(6, lift, hand_close)
    plan.until(10_000, away, hand_close)
    return plan


_PLANNERS = {
    "button": _plan_button,
    "stick": _plan_stick,
    "curtain": _plan_curtain,
    "cabinet": _plan_cabinet,
}


def scripted_expert(world: World) -> np.ndarray:
    """Privileged expert action for the world's current step."""
    if world.task not in _PLANNERS:
        raise SimulationError(f"no scripted expert for task {world.task!r}")
    plan = world._cache.get("expert_plan")
    if plan is None:
        plan = _PLANNERS[world.task](world)
        world._cache["expert_plan"] = plan
    return plan.action(world)
