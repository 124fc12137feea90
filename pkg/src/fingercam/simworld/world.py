"""World state and step dynamics for the toy manipulation tasks.

Dynamics are deliberately simple and quasi-static: joints track commanded
targets under per-joint rate limits, fingertip spheres generate penetration
contacts against scene solids (force = stiffness * penetration), and task
scripts (button latch, hinged door, curtain strips, grasp attachment) run on
top. Everything is deterministic given (task, scenario, seed, actions).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .. import kincam
from ..kincam import KinematicTree, Pose
from . import geometry as geo

GRAVITY = 9.81
N_FINGERS = 5


class SimulationError(RuntimeError):
    """Raised for invalid actions or unknown task/scenario requests."""


@dataclass
class WorldConfig:
    dt: float = 0.1
    fingertip_res: int = 48
    third_res: int = 64
    fingertip_fov_deg: float = 135.0
    third_fov_deg: float = 60.0
    wrist_fov_deg: float = 90.0
    noise_sigma: float = 1.0
    current_gain: float = 8.0
    contact_stiffness: float = 1500.0
    tip_radius: float = 0.008
    arm_rate: float = 2.5  # rad/s
    hand_rate: float = 8.0
    render_robot: bool = True
    wrist_camera: bool = False
    paper_res: bool = False  # render every view at 224x224

    def resolutions(self) -> tuple[int, int]:
        if self.paper_res:
            return 224, 224
        return self.fingertip_res, self.third_res

    def rate_limits(self) -> np.ndarray:
        return np.array([self.arm_rate] * 6 + [self.hand_rate] * 20)

    def current_rest(self) -> np.ndarray:
        return 100.0 + 2.0 * np.arange(20.0)


@dataclass
class RawSensors:
    """One timestep of raw simulated sensing. Images are float32 in [0, 1];
    they are None when a step was taken with rendering disabled."""

    fingertip_images: np.ndarray | None  # (5, H, W, 3)
    third_image: np.ndarray | None  # (H2, W2, 3)
    currents: np.ndarray  # (20,)
    q: np.ndarray  # (26,)
    timestamp: float
    wrist_image: np.ndarray | None = None


@dataclass
class World:
    task: str
    scenario: str
    seed: int
    config: WorldConfig
    tree: KinematicTree
    rng: np.random.Generator
    q: np.ndarray
    scene: dict[str, geo.Prim]
    params: dict
    state: dict
    success: dict[str, bool]
    episode_len: int
    time: float = 0.0
    step_count: int = 0
    contacts: np.ndarray = field(default_factory=lambda: np.zeros(N_FINGERS))
    _cache: dict = field(default_factory=dict, repr=False)

    def fk(self) -> dict[str, Pose]:
        return kincam.forward_kinematics(self.tree, self.q)

    def tip_positions(self, poses=None) -> np.ndarray:
        poses = poses or self.fk()
        return np.stack([poses[m.link].position for m in self.tree.mounts_in_finger_order()])

    def observe(self, render: bool = True) -> RawSensors:
        """Sensors for the current state. Joint-current noise is drawn once
        per step (cached), so repeated observes are identical."""
        images = render_views(self) if render else (None, None, None)
        return RawSensors(
            fingertip_images=images[0],
            third_image=images[1],
            wrist_image=images[2],
            currents=self.state["currents"].copy(),
            q=self.q.copy(),
            timestamp=self.time,
        )

    def state_signature(self) -> str:
        """Hash of the full dynamic state; bit-identical runs agree exactly."""
        h = hashlib.sha256()
        h.update(self.q.tobytes())
        h.update(np.float64(self.time).tobytes())
        h.update(np.int64(self.step_count).tobytes())
        h.update(self.contacts.tobytes())
        for name in sorted(self.scene):
            p = self.scene[name]
            h.update(name.encode())
            h.update(p.center.tobytes())
            h.update(p.rotation.tobytes())
            h.update(p.color.tobytes())
            if p.half is not None:
                h.update(p.half.tobytes())
            h.update(np.float64(p.radius).tobytes())
        for key in sorted(self.state):
            h.update(key.encode())
            value = self.state[key]
            if isinstance(value, np.ndarray):
                h.update(value.tobytes())
            elif isinstance(value, Pose):
                h.update(value.position.tobytes())
                h.update(value.rotation.tobytes())
            else:
                h.update(repr(value).encode())
        h.update(json.dumps(self.success, sort_keys=True).encode())
        h.update(json.dumps(self.rng.bit_generator.state, sort_keys=True, default=str).encode())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# robot body rendering

HAND_COLOR = np.array([0.55, 0.57, 0.60])


def robot_prims(world: World, poses: dict[str, Pose]) -> list[geo.Prim]:
    tree = world.tree
    prims = []
    palm = poses[tree.hand_base]
    prims.append(
        geo.box(
            "robot/palm",
            palm.position + palm.rotation @ np.array([0.048, 0.004, 0.0]),
            (0.052, 0.040, 0.010),
            HAND_COLOR,
            rotation=palm.rotation,
        )
    )
    for mount in tree.mounts_in_finger_order():
        f = mount.finger
        chain = [j for j in tree.chain_to(mount.link) if j.joint_type == "revolute"]
        knuckle = poses[chain[-3].child].position
        pip = poses[chain[-2].child].position
        dip = poses[chain[-1].child].position
        tip = poses[mount.link].position
        prims.append(geo.segment_box(f"robot/{f}_prox", knuckle, pip, 0.0065, HAND_COLOR))
        prims.append(geo.segment_box(f"robot/{f}_mid", pip, dip, 0.006, HAND_COLOR))
        prims.append(geo.segment_box(f"robot/{f}_dist", dip, tip, 0.0055, HAND_COLOR))
        prims.append(geo.sphere(f"robot/{f}_tip", tip, world.config.tip_radius, HAND_COLOR * 1.05))
    return prims


def fingertip_cameras(world: World, poses: dict[str, Pose]) -> list[geo.Camera]:
    res, _ = world.config.resolutions()
    cams = []
    for mount in world.tree.mounts_in_finger_order():
        pose = poses[mount.link].compose(mount.origin)
        cams.append(geo.Camera(pose.position, pose.rotation, world.config.fingertip_fov_deg, res, res))
    return cams


def third_camera(world: World) -> geo.Camera:
    _, res = world.config.resolutions()
    pos, target = world.params["third_cam"]
    return geo.look_at_camera(pos, target, world.config.third_fov_deg, res, res)


def wrist_camera(world: World, poses: dict[str, Pose]) -> geo.Camera:
    res, _ = world.config.resolutions()
    offset = Pose(np.array([-0.02, 0.004, 0.035]), kincam.rpy_to_matrix(0.0, 1.9, 0.0))
    pose = poses[world.tree.hand_base].compose(offset)
    return geo.Camera(pose.position, pose.rotation, world.config.wrist_fov_deg, res, res)


def render_views(world: World):
    """Ray-cast the five fingertip views, the third view, and optionally the
    wrist view. Fingertip cameras exclude their own finger's distal geometry."""
    poses = world.fk()
    prims = list(world.scene.values())
    if world.config.render_robot:
        prims += robot_prims(world, poses)
    tips = []
    for cam, mount in zip(fingertip_cameras(world, poses), world.tree.mounts_in_finger_order()):
        exclude = {f"robot/{mount.finger}_dist", f"robot/{mount.finger}_tip"}
        tips.append(geo.render(prims, cam, exclude=exclude))
    third = geo.render(prims, third_camera(world))
    wrist = None
    if world.config.wrist_camera:
        wrist = geo.render(prims, wrist_camera(world, poses))
    return np.stack(tips), third, wrist


# ---------------------------------------------------------------------------
# stepping


def compute_joint_currents(world: World) -> np.ndarray:
    """Per-joint currents: rest + gain * contact force on the joint's finger,
    plus seeded Gaussian noise. Finger f owns joints 4f..4f+3 of the hand."""
    rest = world.config.current_rest()
    load = np.repeat(world.contacts, 4) * world.config.current_gain
    currents = rest + load
    if world.config.noise_sigma > 0:
        currents = currents + world.config.noise_sigma * world.rng.standard_normal(20)
    return np.clip(currents, 0.0, None)


def _contact_scan(world: World, tips: np.ndarray):
    """Sphere-vs-scene contacts per fingertip against solid scene prims."""
    per_finger: list[list[geo.Contact]] = [[] for _ in range(N_FINGERS)]
    solids = world.state.get("solid_prims")
    for i in range(N_FINGERS):
        for name in solids:
            prim = world.scene.get(name)
            if prim is None:
                continue
            c = geo.sphere_prim_contact(prim, tips[i], world.config.tip_radius)
            if c is not None:
                per_finger[i].append(c)
    return per_finger


def step(world: World, action: np.ndarray, render: bool = True) -> tuple[World, RawSensors]:
    """Advance one control period toward the commanded joint targets.

    Returns the same (mutated) world plus the sensors observed after the
    step. ``render=False`` skips image synthesis (identical dynamics) for
    fast privileged rollouts.
    """
    from . import tasks as _tasks

    action = np.asarray(action, dtype=float)
    if action.shape != (world.tree.num_joints,):
        raise SimulationError(f"action must have shape ({world.tree.num_joints},), got {action.shape}")
    if not np.isfinite(action).all():
        raise SimulationError("action contains non-finite values; world unchanged")

    max_dq = world.config.rate_limits() * world.config.dt
    dq = np.clip(action - world.q, -max_dq, max_dq)
    q_new, _ = kincam.clamp_to_limits(world.tree, world.q + dq)
    world.q = q_new

    poses = world.fk()
    tips = world.tip_positions(poses)
    contacts = _contact_scan(world, tips)
    _tasks.get_task(world.task).update(world, poses, tips, contacts)

    force = np.zeros(N_FINGERS)
    for i in range(N_FINGERS):
        force[i] = sum(world.config.contact_stiffness * c.penetration for c in contacts[i])
    extra = world.state.pop("_extra_contact_force", None)
    if extra is not None:
        force = force + extra
    world.contacts = force

    world.time += world.config.dt
    world.step_count += 1
    world.state["currents"] = compute_joint_currents(world)

    _tasks.latch_success(world)
    return world, world.observe(render=render)


def check_success(world: World) -> dict[str, bool]:
    """Current success metrics: the live geometric predicate OR'd with the
    monotone per-episode latch."""
    from . import tasks as _tasks

    live = _tasks.get_task(world.task).metrics(world)
    return {k: bool(live[k] or world.success.get(k, False)) for k in live}
