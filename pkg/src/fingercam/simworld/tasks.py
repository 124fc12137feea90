"""Task scenes, scenario variations, per-step task dynamics, and success
predicates for the four toy manipulation tasks: button, stick, curtain,
cabinet.

Scene dimensions are synthetic (chosen for task feasibility under the
reference hand's reach); color palettes are partitioned into disjoint train
and held-out sets so "unseen color" scenarios draw from colors never used in
training scenes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kincam, teleop
from ..kincam import Pose
from . import geometry as geo
from .world import GRAVITY, N_FINGERS, SimulationError, World, WorldConfig, compute_joint_currents

TASK_IDS = ("button", "stick", "curtain", "cabinet")

TRAIN_PALETTE = {
    "red": (0.85, 0.15, 0.12),
    "green": (0.15, 0.70, 0.20),
    "blue": (0.15, 0.30, 0.80),
    "yellow": (0.90, 0.80, 0.15),
    "orange": (0.90, 0.50, 0.10),
}
TEST_PALETTE = {
    "purple": (0.60, 0.20, 0.80),
    "cyan": (0.10, 0.80, 0.80),
    "magenta": (0.90, 0.10, 0.60),
    "white": (0.95, 0.95, 0.95),
}

WALL_COLOR = np.array([0.40, 0.44, 0.50])
FLOOR_PANEL_COLOR = np.array([0.28, 0.30, 0.34])
POST_COLOR = np.array([0.62, 0.60, 0.55])
STRIP_COLOR = np.array([0.52, 0.58, 0.52])
DOOR_COLOR = np.array([0.55, 0.46, 0.36])
BULB_OFF = np.array([0.25, 0.25, 0.25])
BULB_ON = np.array([1.00, 0.95, 0.30])

GRAB_MARGIN = 0.006  # tip sphere may be this far off the surface and still grasp
RELEASE_MARGIN = 0.022
KNOCK_PENETRATION = 0.008
HOLD_FORCE = 4.0  # synthetic per-finger load while an object is held, newtons
PUSH_FORCE = 2.0

_reference_tree = None
_home_cache: dict = {}


def reference_tree() -> kincam.KinematicTree:
    global _reference_tree
    if _reference_tree is None:
        _reference_tree = kincam.load_reference_tree()
    return _reference_tree


def pick_color(rng: np.random.Generator, palette: dict) -> tuple[str, np.ndarray]:
    names = sorted(palette)
    name = names[int(rng.integers(len(names)))]
    return name, np.array(palette[name])


def _curl_hand(index_straight: bool = True) -> np.ndarray:
    """Hand pose with thumb/middle/ring/pinky folded clear of the workspace."""
    q = np.zeros(20)
    q[1:4] = (1.2, 1.2, 1.0)  # thumb
    for f in (2, 3, 4):  # middle, ring, pinky
        q[4 * f + 1 : 4 * f + 4] = (1.5, 1.7, 1.5)
    if not index_straight:
        q[5:8] = (1.5, 1.7, 1.5)
    return q


def _home_pose(task: str, tree) -> np.ndarray:
    """Seed-independent initial joint vector (cached per task)."""
    from .expert import arm_ik

    if task in _home_cache:
        return _home_cache[task].copy()
    targets = {
        "button": (np.array([0.16, 0.0, 0.13]), np.eye(3), _curl_hand()),
        "stick": (np.array([0.24, 0.0, 0.23]), kincam.rpy_to_matrix(0, 1.15, 0), np.zeros(20)),
        "curtain": (np.array([0.22, 0.0, 0.20]), kincam.rpy_to_matrix(0, 1.15, 0), np.zeros(20)),
        "cabinet": (np.array([0.16, -0.04, 0.12]), np.eye(3), _curl_hand()),
    }[task]
    pos, rot, hand = targets
    q = np.concatenate([arm_ik(tree, pos, rot), hand])
    _home_cache[task] = q
    return q.copy()


def _box_walls(prefix, center, outer_half, t, open_faces, color=WALL_COLOR):
    """Axis-aligned hollow box made of panels; faces named -x,+x,-y,+y,-z,+z."""
    cx, cy, cz = center
    hx, hy, hz = outer_half
    panels = {
        "-z": ((cx, cy, cz - hz + t / 2), (hx, hy, t / 2), FLOOR_PANEL_COLOR),
        "+z": ((cx, cy, cz + hz - t / 2), (hx, hy, t / 2), color),
        "-y": ((cx, cy - hy + t / 2, cz), (hx, t / 2, hz - t), color),
        "+y": ((cx, cy + hy - t / 2, cz), (hx, t / 2, hz - t), color),
        "-x": ((cx - hx + t / 2, cy, cz), (t / 2, hy, hz - t), color),
        "+x": ((cx + hx - t / 2, cy, cz), (t / 2, hy, hz - t), color),
    }
    prims = {}
    for face, (c, h, col) in panels.items():
        if face in open_faces:
            continue
        name = f"{prefix}_{face}"
        prims[name] = geo.box(name, c, h, col)
    return prims


def _surface_gap(prim: geo.Prim, point: np.ndarray) -> float:
    """Distance from a point to the solid's surface (0 inside)."""
    if prim.kind == "sphere":
        return max(0.0, float(np.linalg.norm(point - prim.center)) - prim.radius)
    local = (point - prim.center) @ prim.rotation
    delta = np.abs(local) - prim.half
    return float(np.linalg.norm(np.clip(delta, 0.0, None)))


# ---------------------------------------------------------------------------
# shared grasp / carry machinery


def _grasp_update(world: World, name: str, poses, tips, grab_fingers=(1, 2), knockable=False):
    """resting -> grasped -> (released) falling -> settled object lifecycle.

    Grasp requires the thumb tip plus at least one of ``grab_fingers`` within
    GRAB_MARGIN of the surface. While held the object rides the palm frame
    and held fingers register a synthetic hold force.
    """
    obj = world.scene[name]
    state = world.state
    status = state[f"{name}_status"]
    tip_r = world.config.tip_radius
    extra = state.setdefault("_extra_contact_force", np.zeros(N_FINGERS))

    if status == "grasped":
        palm = poses[world.tree.hand_base]
        new_pose = palm.compose(state[f"{name}_offset"])
        obj.center = new_pose.position
        obj.rotation = new_pose.rotation
        gaps = [_surface_gap(obj, tips[i]) - tip_r for i in range(N_FINGERS)]
        near = [i for i in (0, *grab_fingers) if gaps[i] < RELEASE_MARGIN]
        if 0 not in near or len(near) < 2:
            state[f"{name}_status"] = "falling"
            state[f"{name}_vz"] = 0.0
            if name not in state["solid_prims"]:
                state["solid_prims"].append(name)
        else:
            for i in near:
                extra[i] += HOLD_FORCE
    elif status in ("resting", "settled"):
        gap_thumb = _surface_gap(obj, tips[0]) - tip_r
        gap_fingers = min(_surface_gap(obj, tips[i]) - tip_r for i in grab_fingers)
        if gap_thumb < GRAB_MARGIN and gap_fingers < GRAB_MARGIN:
            state[f"{name}_status"] = "grasped"
            palm = poses[world.tree.hand_base]
            state[f"{name}_offset"] = palm.inverse().compose(Pose(obj.center.copy(), obj.rotation.copy()))
            if name in state["solid_prims"]:
                state["solid_prims"].remove(name)
        elif knockable and status == "resting":
            pens = [
                geo.sphere_prim_contact(obj, tips[i], tip_r) for i in range(N_FINGERS)
            ]
            if any(c is not None and c.penetration > KNOCK_PENETRATION for c in pens):
                state[f"{name}_status"] = "falling"
                state[f"{name}_vz"] = 0.0
                state[f"{name}_dropped"] = True
    if state[f"{name}_status"] == "falling":
        state[f"{name}_dropped"] = True
        vz = state[f"{name}_vz"] - GRAVITY * world.config.dt
        state[f"{name}_vz"] = vz
        obj.center = obj.center + np.array([0.0, 0.0, vz * world.config.dt])
        floor_z = world.params.get("interior_floor_z", 0.01)
        bottom = obj.center[2] - (obj.half[2] if obj.kind == "box" else obj.radius)
        land = floor_z if _inside_footprint(world, obj.center) else 0.0
        if bottom <= land:
            obj.center[2] += land - bottom
            state[f"{name}_status"] = "settled"


def _inside_footprint(world: World, point) -> bool:
    center, half = world.params["container_aabb"]
    return abs(point[0] - center[0]) <= half[0] and abs(point[1] - center[1]) <= half[1]


def _outside_container(world: World, name: str) -> bool:
    center, half = world.params["container_aabb"]
    obj = world.scene[name]
    extent = obj.half.max() if obj.kind == "box" else obj.radius
    d = np.abs(obj.center - np.asarray(center)) - np.asarray(half)
    return bool((d > extent).any())


# ---------------------------------------------------------------------------
# button task


class ButtonTask:
    name = "button"
    episode_len = 40
    metric_names = ("success",)
    scenarios = {
        "nominal": dict(box_jitter=0.02, button_offset=0.0, palette="train", shape=1.0),
        "occluded": dict(box_jitter=0.02, button_offset=0.03, palette="train", shape=1.0),
        "unseen_color": dict(box_jitter=0.02, button_offset=0.0, palette="test", shape=1.0),
        "unseen_shape": dict(box_jitter=0.02, button_offset=0.0, palette="train", shape=1.5),
    }

    @staticmethod
    def build(spec: dict, rng: np.random.Generator, config: WorldConfig, tree):
        j = spec["box_jitter"]
        bx = 0.46 + rng.uniform(-j, j)
        by = 0.0 + rng.uniform(-j, j)
        dy = rng.uniform(-spec["button_offset"], spec["button_offset"]) if spec["button_offset"] else 0.0
        cname, color = pick_color(rng, TRAIN_PALETTE if spec["palette"] == "train" else TEST_PALETTE)

        center = np.array([bx, by, 0.06])
        outer = np.array([0.065, 0.065, 0.06])
        scene = _box_walls("box", center, outer, 0.01, open_faces=("-x",))
        s = spec["shape"]
        btn_pos = np.array([bx - 0.02, by + dy, 0.017])
        scene["button"] = geo.box("button", btn_pos, (0.011 * s, 0.011 * s, 0.007), color)
        scene["bulb"] = geo.box("bulb", (bx, by, 0.132), (0.012, 0.012, 0.012), BULB_OFF)

        params = {
            # steep vantage: the box lip occludes the interior button
            "third_cam": ((0.25, 0.28, 0.60), (0.45, 0.0, 0.05)),
            "box_center": center,
            "box_outer": outer,
            "button_pos": btn_pos.copy(),
            "button_color": cname,
            "press_depth": 0.005,
            "container_aabb": (center, outer),
            "interior_floor_z": 0.01,
        }
        state = {
            "solid_prims": [n for n in scene if n != "bulb"],
            "pressed": False,
        }
        return scene, params, state

    @staticmethod
    def update(world: World, poses, tips, contacts):
        if not world.state["pressed"]:
            for finger in contacts:
                for c in finger:
                    if c.prim_name == "button" and c.normal[2] > 0.8 and c.penetration >= world.params["press_depth"]:
                        world.state["pressed"] = True
                        world.scene["bulb"].color = BULB_ON.copy()
                        btn = world.scene["button"]
                        btn.half = btn.half * np.array([1.0, 1.0, 0.45])
                        btn.center = btn.center - np.array([0.0, 0.0, 0.004])
                        break

    @staticmethod
    def metrics(world: World) -> dict:
        return {"success": bool(world.state["pressed"])}


# ---------------------------------------------------------------------------
# stick task


class StickTask:
    name = "stick"
    episode_len = 50
    metric_names = ("success",)
    scenarios = {
        "nominal": dict(box_jitter=0.02, palette="train", shape="bar", half_len=0.07),
        "unseen_color": dict(box_jitter=0.02, palette="test", shape="bar", half_len=0.07),
        "unseen_shape": dict(box_jitter=0.02, palette="train", shape="flat", half_len=0.07),
        "unseen_length": dict(box_jitter=0.02, palette="train", shape="bar", half_len=0.095),
    }

    @staticmethod
    def build(spec, rng, config, tree):
        j = spec["box_jitter"]
        bx = 0.44 + rng.uniform(-j, j)
        by = 0.0 + rng.uniform(-j, j)
        cname, color = pick_color(rng, TRAIN_PALETTE if spec["palette"] == "train" else TEST_PALETTE)

        center = np.array([bx, by, 0.04])
        outer = np.array([0.08, 0.10, 0.04])
        scene = _box_walls("box", center, outer, 0.01, open_faces=("+z",))
        for side in (-1, 1):
            name = f"post_{'n' if side < 0 else 'p'}"
            scene[name] = geo.box(name, (bx, by + side * 0.05, 0.035), (0.004, 0.004, 0.025), POST_COLOR)
        if spec["shape"] == "bar":
            half = (0.006, spec["half_len"], 0.006)
        else:
            half = (0.010, spec["half_len"], 0.0035)
        scene["stick"] = geo.box("stick", (bx, by, 0.06 + half[2]), half, color)

        params = {
            "third_cam": ((0.10, 0.32, 0.48), (0.44, 0.0, 0.07)),
            "stick_rest": scene["stick"].center.copy(),
            "stick_color": cname,
            "container_aabb": (center, outer),
            "interior_floor_z": 0.01,
        }
        state = {
            "solid_prims": [n for n in scene],
            "stick_status": "resting",
            "stick_dropped": False,
        }
        return scene, params, state

    @staticmethod
    def update(world: World, poses, tips, contacts):
        _grasp_update(world, "stick", poses, tips, grab_fingers=(1, 2), knockable=True)

    @staticmethod
    def metrics(world: World) -> dict:
        ok = (
            world.state["stick_status"] == "grasped"
            and not world.state["stick_dropped"]
            and _outside_container(world, "stick")
        )
        return {"success": bool(ok)}


# ---------------------------------------------------------------------------
# curtain task


class CurtainTask:
    name = "curtain"
    episode_len = 60
    metric_names = ("success",)
    scenarios = {
        "nominal": dict(obj_jitter=0.02, palette="train", strip_color=STRIP_COLOR, strip_len=0.0925),
        "unseen_color": dict(obj_jitter=0.02, palette="test", strip_color=STRIP_COLOR, strip_len=0.0925),
        "unseen_material": dict(obj_jitter=0.02, palette="train", strip_color=np.array([0.7, 0.65, 0.45]), strip_len=0.0925),
        "unseen_length": dict(obj_jitter=0.02, palette="train", strip_color=STRIP_COLOR, strip_len=0.070),
    }

    STRIP_SLOTS = (-0.058, 0.0, 0.058)
    STRIP_HALF_Y = 0.0295
    MAX_ANGLE = 1.45
    RESTORE = 0.35

    @staticmethod
    def build(spec, rng, config, tree):
        bx, by = 0.48, 0.0
        center = np.array([bx, by, 0.105])
        outer = np.array([0.07, 0.09, 0.105])
        scene = _box_walls("cab", center, outer, 0.01, open_faces=("-x",))
        cname, color = pick_color(rng, TRAIN_PALETTE if spec["palette"] == "train" else TEST_PALETTE)
        ox = bx + rng.uniform(-0.01, 0.015)
        oy = by + rng.uniform(-spec["obj_jitter"], spec["obj_jitter"])
        scene["target"] = geo.box("target", (ox, oy, 0.01 + 0.022), (0.014, 0.014, 0.022), color)

        hinge_z = 0.105 + outer[2] - 0.01  # top of the opening
        params = {
            "third_cam": ((0.10, 0.30, 0.50), (0.48, 0.0, 0.08)),
            "hinge": np.array([bx - outer[0] + 0.004, 0.0, hinge_z]),
            "strip_len": spec["strip_len"],
            "strip_color": np.asarray(spec["strip_color"], dtype=float),
            "target_color": cname,
            "container_aabb": (center, outer),
            "interior_floor_z": 0.01,
        }
        state = {
            "solid_prims": list(scene),  # walls + target; strips interact via probes only
            "strip_angles": np.zeros(len(CurtainTask.STRIP_SLOTS)),
            "target_status": "resting",
            "target_dropped": False,
        }
        CurtainTask._place_strips(scene, params, state["strip_angles"])
        return scene, params, state

    @staticmethod
    def _place_strips(scene, params, angles):
        hinge = params["hinge"]
        half_len = params["strip_len"]
        for i, slot in enumerate(CurtainTask.STRIP_SLOTS):
            theta = angles[i]
            R = kincam.rpy_to_matrix(0.0, -theta, 0.0)  # swing +x into the cabinet
            center = hinge + R @ np.array([0.0, 0.0, -half_len]) + np.array([0.0, slot, 0.0])
            name = f"strip_{i}"
            scene[name] = geo.box(
                name, center, (0.002, CurtainTask.STRIP_HALF_Y, half_len), params["strip_color"], rotation=R
            )

    @staticmethod
    def _hand_probes(world: World, poses, tips) -> np.ndarray:
        palm = poses[world.tree.hand_base]
        pts = [tips[i] for i in range(N_FINGERS)]
        pts.append(palm.position + palm.rotation @ np.array([0.048, 0.004, 0.0]))
        pts.append(palm.position + palm.rotation @ np.array([0.088, 0.0, 0.0]))
        return np.stack(pts)

    @staticmethod
    def update(world: World, poses, tips, contacts):
        hinge = world.params["hinge"]
        half_len = world.params["strip_len"]
        angles = world.state["strip_angles"]
        probes = CurtainTask._hand_probes(world, poses, tips)
        extra = world.state.setdefault("_extra_contact_force", np.zeros(N_FINGERS))
        for i, slot in enumerate(CurtainTask.STRIP_SLOTS):
            required = 0.0
            for k, p in enumerate(probes):
                if abs(p[1] - slot) > CurtainTask.STRIP_HALF_Y + 0.008:
                    continue
                dx = p[0] - hinge[0]
                dz = hinge[2] - p[2]
                radius = math.hypot(dx, dz)
                if radius > 2 * half_len + 0.03 or dz <= 0:
                    continue
                alpha = math.atan2(dx, dz)
                if alpha > -0.05:
                    required = max(required, alpha + 0.12)
                    if k < N_FINGERS and alpha + 0.10 > angles[i]:
                        extra[k] += PUSH_FORCE
            angles[i] = float(np.clip(max(angles[i] - CurtainTask.RESTORE, required), 0.0, CurtainTask.MAX_ANGLE))
        CurtainTask._place_strips(world.scene, world.params, angles)
        _grasp_update(world, "target", poses, tips, grab_fingers=(1, 2))

    @staticmethod
    def metrics(world: World) -> dict:
        ok = (
            world.state["target_status"] == "grasped"
            and not world.state["target_dropped"]
            and _outside_container(world, "target")
        )
        return {"success": bool(ok)}


# ---------------------------------------------------------------------------
# cabinet task


class CabinetTask:
    name = "cabinet"
    episode_len = 90
    metric_names = ("open_door", "retrieve_object")
    scenarios = {
        "nominal": dict(obj_jitter=0.02, palette="train", handle_color=(0.82, 0.78, 0.70), obj_shape="box"),
        "unseen_color": dict(obj_jitter=0.02, palette="test", handle_color=(0.82, 0.78, 0.70), obj_shape="box"),
        "unseen_handle": dict(obj_jitter=0.02, palette="train", handle_color=(0.20, 0.55, 0.75), obj_shape="box"),
        "unseen_object": dict(obj_jitter=0.02, palette="test", handle_color=(0.82, 0.78, 0.70), obj_shape="sphere"),
    }

    OPEN_THRESHOLD = 1.05
    MAX_ANGLE = 1.45
    HOOK_RADIUS = 0.028

    @staticmethod
    def build(spec, rng, config, tree):
        bx, by = 0.50, 0.0
        center = np.array([bx, by, 0.105])
        outer = np.array([0.07, 0.10, 0.105])
        scene = _box_walls("cab", center, outer, 0.01, open_faces=("-x",))

        cname, color = pick_color(rng, TRAIN_PALETTE if spec["palette"] == "train" else TEST_PALETTE)
        ox = bx + rng.uniform(-0.005, 0.02)
        oy = by + rng.uniform(-spec["obj_jitter"], spec["obj_jitter"])
        if spec["obj_shape"] == "box":
            scene["target"] = geo.box("target", (ox, oy, 0.01 + 0.020), (0.013, 0.013, 0.020), color)
        else:
            scene["target"] = geo.sphere("target", (ox, oy, 0.01 + 0.018), 0.018, color)

        door_x = bx - outer[0] + 0.003
        hinge = np.array([door_x, by + 0.098])
        door_center0 = np.array([door_x, by, 0.105])
        handle_center0 = np.array([door_x - 0.011, by - 0.078, 0.105])
        scene["door"] = geo.box("door", door_center0, (0.003, 0.098, 0.0925), DOOR_COLOR)
        scene["handle"] = geo.box("handle", handle_center0, (0.008, 0.006, 0.014), np.asarray(spec["handle_color"]))

        params = {
            "third_cam": ((0.08, 0.32, 0.52), (0.50, 0.0, 0.09)),
            "hinge": hinge,
            "door_center0": door_center0,
            "handle_center0": handle_center0,
            "target_color": cname,
            "container_aabb": (center, outer),
            "interior_floor_z": 0.01,
        }
        state = {
            "solid_prims": list(scene),
            "door_angle": 0.0,
            "target_status": "resting",
            "target_dropped": False,
        }
        return scene, params, state

    @staticmethod
    def _place_door(world: World):
        phi = world.state["door_angle"]
        hinge = world.params["hinge"]
        R = kincam.rpy_to_matrix(0.0, 0.0, -phi)
        for name, c0 in (("door", world.params["door_center0"]), ("handle", world.params["handle_center0"])):
            rel = np.array([c0[0] - hinge[0], c0[1] - hinge[1], 0.0])
            rotated = R @ rel
            world.scene[name].center = np.array([hinge[0] + rotated[0], hinge[1] + rotated[1], c0[2]])
            world.scene[name].rotation = R

    @staticmethod
    def update(world: World, poses, tips, contacts):
        hinge = world.params["hinge"]
        handle = world.scene["handle"]
        extra = world.state.setdefault("_extra_contact_force", np.zeros(N_FINGERS))
        for i in range(N_FINGERS):
            if np.linalg.norm(tips[i] - handle.center) < CabinetTask.HOOK_RADIUS:
                v = tips[i][:2] - hinge
                n = np.linalg.norm(v)
                if n > 1e-9:
                    v = v / n
                    phi_tip = math.atan2(-v[0], -v[1])
                    if phi_tip > world.state["door_angle"]:
                        world.state["door_angle"] = float(
                            np.clip(phi_tip - 0.10, world.state["door_angle"], CabinetTask.MAX_ANGLE)
                        )
                        extra[i] += PUSH_FORCE * 1.5
        CabinetTask._place_door(world)
        _grasp_update(world, "target", poses, tips, grab_fingers=(1, 2))

    @staticmethod
    def metrics(world: World) -> dict:
        opened = bool(
            world.state["door_angle"] >= CabinetTask.OPEN_THRESHOLD or world.success.get("open_door", False)
        )
        # reaching through a closed door does not count as retrieval
        retrieved = (
            opened
            and world.state["target_status"] == "grasped"
            and not world.state["target_dropped"]
            and _outside_container(world, "target")
        )
        return {"open_door": opened, "retrieve_object": bool(retrieved)}


_TASKS = {t.name: t for t in (ButtonTask, StickTask, CurtainTask, CabinetTask)}


def get_task(task_id: str):
    try:
        return _TASKS[task_id]
    except KeyError:
        raise SimulationError(f"unknown task {task_id!r}; valid: {sorted(_TASKS)}") from None


def latch_success(world: World) -> None:
    live = get_task(world.task).metrics(world)
    for key, value in live.items():
        world.success[key] = bool(world.success.get(key, False) or value)


def create_task(
    task_id: str,
    scenario_id: str = "nominal",
    seed: int = 0,
    config: WorldConfig | None = None,
    tree: kincam.KinematicTree | None = None,
) -> World:
    """Deterministic initial world for (task, scenario, seed)."""
    import zlib

    task = get_task(task_id)
    if scenario_id not in task.scenarios:
        raise SimulationError(
            f"unknown scenario {scenario_id!r} for task {task_id!r}; valid: {sorted(task.scenarios)}"
        )
    config = config or WorldConfig()
    tree = tree or reference_tree()
    rng = np.random.default_rng(
        np.random.SeedSequence([zlib.crc32(task_id.encode()), zlib.crc32(scenario_id.encode()), seed])
    )
    scene, params, state = task.build(dict(task.scenarios[scenario_id]), rng, config, tree)
    world = World(
        task=task_id,
        scenario=scenario_id,
        seed=seed,
        config=config,
        tree=tree,
        rng=rng,
        q=_home_pose(task_id, tree),
        scene=scene,
        params=params,
        state=state,
        success={k: False for k in task.metric_names},
        episode_len=task.episode_len,
    )
    world.contacts = np.zeros(N_FINGERS)
    world.state["currents"] = compute_joint_currents(world)
    return world
