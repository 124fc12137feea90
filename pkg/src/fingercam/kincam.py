"""Kinematic model of the 26-DoF arm-hand system.

Parses the plain-text robot description format (see docs in the repo README),
computes forward kinematics, fingertip camera poses in the hand base frame,
geometric Jacobians, and the 6-D continuous rotation codec (first two columns
of the rotation matrix, reconstructed with Gram-Schmidt).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FINGER_ORDER = ("thumb", "index", "middle", "ring", "pinky")

ORTHONORMAL_TOL = 1e-6
AXIS_UNIT_TOL = 1e-9
DEGENERATE_TOL = 1e-8


class RobotDescriptionError(ValueError):
    """Raised when a robot description file is malformed."""


class KinematicsError(ValueError):
    """Raised for invalid kinematic queries (bad dimensions, unknown links)."""


class RotationCodecError(ValueError):
    """Raised for invalid rotation inputs to the 6-D codec."""


# ---------------------------------------------------------------------------
# basic SE(3) helpers


def rpy_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    Rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return Rz @ Ry @ Rx


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


@dataclass(frozen=True)
class Pose:
    """Rigid transform: position in meters plus a 3x3 rotation matrix."""

    position: np.ndarray
    rotation: np.ndarray

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.eye(3))

    @staticmethod
    def from_parts(position, rotation) -> "Pose":
        return Pose(np.asarray(position, dtype=float), np.asarray(rotation, dtype=float))

    @staticmethod
    def from_matrix(T: np.ndarray) -> "Pose":
        return Pose(T[:3, 3].copy(), T[:3, :3].copy())

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.position + self.rotation @ other.position, self.rotation @ other.rotation)

    def inverse(self) -> "Pose":
        RT = self.rotation.T
        return Pose(-RT @ self.position, RT)

    def orthonormality_error(self) -> float:
        return float(np.linalg.norm(self.rotation.T @ self.rotation - np.eye(3)))

    def validate(self, tol: float = 1e-9) -> None:
        if self.orthonormality_error() >= tol * 10 or abs(np.linalg.det(self.rotation) - 1.0) >= tol * 10:
            raise KinematicsError("pose rotation is not a valid SO(3) matrix")


# ---------------------------------------------------------------------------
# tree structures


@dataclass(frozen=True)
class Joint:
    name: str
    joint_type: str  # "revolute" | "fixed"
    parent: str
    child: str
    origin: Pose
    axis: np.ndarray | None = None
    lower: float = -math.pi
    upper: float = math.pi


@dataclass(frozen=True)
class CameraMount:
    finger: str
    link: str
    origin: Pose


@dataclass
class KinematicTree:
    """Rooted joint/link tree with optional fingertip camera mounts.

    ``joint_order`` holds the revolute joint names in declaration order; for
    the reference arm-hand description that is 6 arm joints followed by 20
    hand joints (4 per finger, thumb first).
    """

    links: tuple[str, ...]
    joints: tuple[Joint, ...]
    camera_mounts: tuple[CameraMount, ...]
    root: str
    hand_base: str
    joint_order: tuple[str, ...] = field(init=False)
    _parent_joint: dict[str, Joint] = field(init=False, repr=False)

    def __post_init__(self):
        self.joint_order = tuple(j.name for j in self.joints if j.joint_type == "revolute")
        self._parent_joint = {j.child: j for j in self.joints}

    @property
    def num_joints(self) -> int:
        return len(self.joint_order)

    def joint(self, name: str) -> Joint:
        for j in self.joints:
            if j.name == name:
                return j
        raise KinematicsError(f"unknown joint {name!r}")

    def joint_limits(self) -> np.ndarray:
        """(n, 2) array of [lower, upper] per revolute joint."""
        revolute = [j for j in self.joints if j.joint_type == "revolute"]
        return np.array([[j.lower, j.upper] for j in revolute])

    def chain_to(self, link: str) -> list[Joint]:
        """Joints from the root down to ``link``, in order."""
        if link not in self.links:
            raise KinematicsError(f"unknown link {link!r}")
        chain = []
        cur = link
        while cur != self.root:
            j = self._parent_joint[cur]
            chain.append(j)
            cur = j.parent
        chain.reverse()
        return chain

    def hand_joint_names(self) -> tuple[str, ...]:
        """Revolute joints in the subtree rooted at ``hand_base``."""
        below = set()
        changed = True
        reachable = {self.hand_base}
        while changed:
            changed = False
            for j in self.joints:
                if j.parent in reachable and j.child not in reachable:
                    reachable.add(j.child)
                    changed = True
        for j in self.joints:
            if j.joint_type == "revolute" and j.parent in reachable:
                below.add(j.name)
        return tuple(n for n in self.joint_order if n in below)

    def arm_joint_names(self) -> tuple[str, ...]:
        hand = set(self.hand_joint_names())
        return tuple(n for n in self.joint_order if n not in hand)

    def mounts_in_finger_order(self) -> tuple[CameraMount, ...]:
        by_finger = {m.finger: m for m in self.camera_mounts}
        return tuple(by_finger[f] for f in FINGER_ORDER if f in by_finger)

    def hand_landmark_links(self) -> tuple[str, ...]:
        """21 landmark link names: hand base, then 4 per finger (knuckle,
        mid, distal, tip), matching the 21-keypoint operator-hand layout."""
        names = [self.hand_base]
        for mount in self.mounts_in_finger_order():
            chain = self.chain_to(mount.link)
            revolute = [j for j in chain if j.joint_type == "revolute"]
            if len(revolute) < 4:
                raise KinematicsError(f"finger chain to {mount.link!r} has fewer than 4 revolute joints")
            names.extend([revolute[-3].child, revolute[-2].child, revolute[-1].child, mount.link])
        return tuple(names)


# ---------------------------------------------------------------------------
# description parsing


def _parse_vector(value: str, n: int, where: str) -> np.ndarray:
    parts = value.split(",")
    if len(parts) != n:
        raise RobotDescriptionError(f"{where}: expected {n} comma-separated numbers, got {value!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as e:
        raise RobotDescriptionError(f"{where}: {e}") from None


def _parse_fields(tokens: list[str], where: str) -> dict[str, str]:
    fields = {}
    for tok in tokens:
        if "=" not in tok:
            raise RobotDescriptionError(f"{where}: expected key=value, got {tok!r}")
        key, value = tok.split("=", 1)
        if key in fields:
            raise RobotDescriptionError(f"{where}: duplicate field {key!r}")
        fields[key] = value
    return fields


def _origin_from_fields(fields: dict[str, str], where: str) -> Pose:
    xyz = _parse_vector(fields.pop("origin_xyz", "0,0,0"), 3, where)
    rpy = _parse_vector(fields.pop("origin_rpy", "0,0,0"), 3, where)
    return Pose(xyz, rpy_to_matrix(*rpy))


def parse_robot_description(text: str) -> KinematicTree:
    """Parse the plain-text robot description format into a KinematicTree.

    Raises RobotDescriptionError naming the offending element for duplicate
    names, unknown link references, non-unit joint axes, cycles, and camera
    mounts on missing links.
    """
    links: list[str] = []
    joints: list[Joint] = []
    mounts: list[CameraMount] = []
    hand_base: str | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind, rest = tokens[0], tokens[1:]
        where = f"line {lineno} ({kind})"
        fields = _parse_fields(rest, where)

        if kind == "link":
            name = fields.pop("name", None)
            if name is None:
                raise RobotDescriptionError(f"{where}: link requires name=")
            if name in links:
                raise RobotDescriptionError(f"{where}: duplicate link name {name!r}")
            links.append(name)

        elif kind == "joint":
            try:
                name = fields.pop("name")
                jtype = fields.pop("type")
                parent = fields.pop("parent")
                child = fields.pop("child")
            except KeyError as e:
                raise RobotDescriptionError(f"{where}: missing required field {e.args[0]}") from None
            if any(j.name == name for j in joints):
                raise RobotDescriptionError(f"{where}: duplicate joint name {name!r}")
            if jtype not in ("revolute", "fixed"):
                raise RobotDescriptionError(f"{where}: joint {name!r} has unsupported type {jtype!r}")
            origin = _origin_from_fields(fields, where)
            axis = None
            lower, upper = -math.pi, math.pi
            if jtype == "revolute":
                axis = _parse_vector(fields.pop("axis", "0,0,1"), 3, where)
                if abs(np.linalg.norm(axis) - 1.0) > AXIS_UNIT_TOL:
                    raise RobotDescriptionError(f"{where}: joint {name!r} axis is not unit norm")
                if "limits" in fields:
                    lower, upper = _parse_vector(fields.pop("limits"), 2, where)
                    if lower >= upper:
                        raise RobotDescriptionError(f"{where}: joint {name!r} has empty limit range")
            fields.pop("axis", None)
            fields.pop("limits", None)
            joints.append(Joint(name, jtype, parent, child, origin, axis, float(lower), float(upper)))

        elif kind == "camera_mount":
            try:
                finger = fields.pop("finger")
                link = fields.pop("link")
            except KeyError as e:
                raise RobotDescriptionError(f"{where}: missing required field {e.args[0]}") from None
            if finger not in FINGER_ORDER:
                raise RobotDescriptionError(f"{where}: unknown finger {finger!r}")
            if any(m.finger == finger for m in mounts):
                raise RobotDescriptionError(f"{where}: duplicate camera mount for finger {finger!r}")
            mounts.append(CameraMount(finger, link, _origin_from_fields(fields, where)))

        elif kind == "hand_base":
            hand_base = fields.pop("link", None)
            if hand_base is None:
                raise RobotDescriptionError(f"{where}: hand_base requires link=")

        else:
            raise RobotDescriptionError(f"{where}: unknown element kind {kind!r}")

        if fields:
            raise RobotDescriptionError(f"{where}: unknown fields {sorted(fields)}")

    if not links:
        raise RobotDescriptionError("description declares no links")

    link_set = set(links)
    children = set()
    for j in joints:
        for role, name in (("parent", j.parent), ("child", j.child)):
            if name not in link_set:
                raise RobotDescriptionError(f"joint {j.name!r} references unknown {role} link {name!r}")
        if j.child in children:
            raise RobotDescriptionError(f"link {j.child!r} has more than one parent joint")
        children.add(j.child)

    roots = [l for l in links if l not in children]
    if len(roots) != 1:
        raise RobotDescriptionError(f"tree must have exactly one root link, found {roots}")
    root = roots[0]

    # cycle / connectivity check: walk each link up to the root
    parent_joint = {j.child: j for j in joints}
    for link in links:
        seen = {link}
        cur = link
        while cur != root:
            j = parent_joint.get(cur)
            if j is None:
                raise RobotDescriptionError(f"link {link!r} is not connected to the root")
            cur = j.parent
            if cur in seen:
                raise RobotDescriptionError(f"cycle detected through link {cur!r}")
            seen.add(cur)

    for m in mounts:
        if m.link not in link_set:
            raise RobotDescriptionError(f"camera mount for finger {m.finger!r} references missing link {m.link!r}")

    if hand_base is None:
        hand_base = root
    elif hand_base not in link_set:
        raise RobotDescriptionError(f"hand_base references unknown link {hand_base!r}")

    return KinematicTree(tuple(links), tuple(joints), tuple(mounts), root, hand_base)


def load_reference_tree() -> KinematicTree:
    """Parse the 26-DoF reference arm-hand description shipped in assets/."""
    from importlib import resources

    text = resources.files("fingercam.assets").joinpath("reference_hand.rdf").read_text()
    return parse_robot_description(text)


# ---------------------------------------------------------------------------
# forward kinematics


def forward_kinematics(tree: KinematicTree, q: np.ndarray) -> dict[str, Pose]:
    """Pose of every link in the root frame for joint vector ``q`` (radians)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (tree.num_joints,):
        raise KinematicsError(f"expected q of shape ({tree.num_joints},), got {q.shape}")
    q_by_name = dict(zip(tree.joint_order, q))
    poses = {tree.root: Pose.identity()}
    pending = list(tree.joints)
    while pending:
        progressed = False
        remaining = []
        for j in pending:
            if j.parent in poses:
                T = poses[j.parent].compose(j.origin)
                if j.joint_type == "revolute":
                    T = T.compose(Pose(np.zeros(3), axis_angle_matrix(j.axis, q_by_name[j.name])))
                poses[j.child] = T
                progressed = True
            else:
                remaining.append(j)
        if not progressed and remaining:
            raise KinematicsError("disconnected joints in tree")  # unreachable after parse validation
        pending = remaining
    return poses


def hand_forward_kinematics(tree: KinematicTree, q_hand: np.ndarray) -> dict[str, Pose]:
    """Link poses expressed in the hand base frame, arm joints at zero."""
    q_hand = np.asarray(q_hand, dtype=float)
    hand_names = tree.hand_joint_names()
    if q_hand.shape != (len(hand_names),):
        raise KinematicsError(f"expected hand joint vector of shape ({len(hand_names)},), got {q_hand.shape}")
    q = np.zeros(tree.num_joints)
    index = {n: i for i, n in enumerate(tree.joint_order)}
    for name, value in zip(hand_names, q_hand):
        q[index[name]] = value
    poses = forward_kinematics(tree, q)
    base_inv = poses[tree.hand_base].inverse()
    return {link: base_inv.compose(p) for link, p in poses.items()}


def fingertip_camera_poses(tree: KinematicTree, q_hand: np.ndarray) -> tuple[list[Pose], np.ndarray]:
    """Camera poses in the hand base frame plus the stacked 5x9 pose matrix.

    Row i is (position, 6-D rotation) for the finger in canonical order
    thumb/index/middle/ring/pinky.
    """
    mounts = tree.mounts_in_finger_order()
    if len(mounts) != len(FINGER_ORDER):
        raise KinematicsError(f"tree has {len(mounts)} camera mounts, expected {len(FINGER_ORDER)}")
    poses_b = hand_forward_kinematics(tree, q_hand)
    cams = []
    rows = []
    for mount in mounts:
        cam = poses_b[mount.link].compose(mount.origin)
        cams.append(cam)
        rows.append(np.concatenate([cam.position, rot_to_6d(cam.rotation)]))
    return cams, np.stack(rows)


def jacobian_from_poses(tree: KinematicTree, poses: dict[str, Pose], link: str) -> np.ndarray:
    """Geometric Jacobian of ``link`` from a precomputed FK pose map."""
    if link not in tree.links:
        raise KinematicsError(f"unknown link {link!r}")
    p_link = poses[link].position
    J = np.zeros((6, tree.num_joints))
    index = {n: i for i, n in enumerate(tree.joint_order)}
    for j in tree.chain_to(link):
        if j.joint_type != "revolute":
            continue
        frame = poses[j.parent].compose(j.origin)  # joint frame before rotation
        z = frame.rotation @ j.axis
        col = index[j.name]
        J[:3, col] = np.cross(z, p_link - frame.position)
        J[3:, col] = z
    return J


def jacobian(tree: KinematicTree, q: np.ndarray, link: str) -> np.ndarray:
    """Geometric Jacobian (6 x num_joints) of ``link`` in the root frame.

    Rows 0:3 are linear velocity, rows 3:6 angular; columns of joints not on
    the root-to-link path are zero.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (tree.num_joints,):
        raise KinematicsError(f"expected q of shape ({tree.num_joints},), got {q.shape}")
    return jacobian_from_poses(tree, forward_kinematics(tree, q), link)


# ---------------------------------------------------------------------------
# 6-D rotation codec


def rot_to_6d(R: np.ndarray) -> np.ndarray:
    """First two columns of R, stacked into a 6-vector."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise RotationCodecError(f"expected 3x3 rotation, got shape {R.shape}")
    if np.linalg.norm(R.T @ R - np.eye(3)) > ORTHONORMAL_TOL or abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOL:
        raise RotationCodecError("matrix is not orthonormal with determinant 1")
    return np.concatenate([R[:, 0], R[:, 1]])


def sixd_to_rot(r: np.ndarray) -> np.ndarray:
    """Gram-Schmidt reconstruction of a rotation matrix from its 6-D form."""
    r = np.asarray(r, dtype=float)
    if r.shape != (6,):
        raise RotationCodecError(f"expected 6-vector, got shape {r.shape}")
    a1, a2 = r[:3], r[3:]
    n1 = np.linalg.norm(a1)
    if n1 < DEGENERATE_TOL:
        raise RotationCodecError("first 3-vector is degenerate (near zero)")
    b1 = a1 / n1
    a2p = a2 - (b1 @ a2) * b1
    n2 = np.linalg.norm(a2p)
    if n2 < DEGENERATE_TOL:
        raise RotationCodecError("second 3-vector is degenerate (parallel to the first)")
    b2 = a2p / n2
    b3 = np.cross(b1, b2)
    return np.column_stack([b1, b2, b3])


def clamp_to_limits(tree: KinematicTree, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamp q into joint limits; returns (clamped q, out-of-range mask).

    Rollout streams may slightly exceed limits, so this warns via the mask
    instead of raising.
    """
    limits = tree.joint_limits()
    q = np.asarray(q, dtype=float)
    clamped = np.clip(q, limits[:, 0], limits[:, 1])
    return clamped, ~np.isclose(clamped, q)
