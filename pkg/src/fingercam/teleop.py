"""Teleoperation pipeline: keypoint packet codec, per-segment calibration,
hand retargeting, damped-least-squares arm IK, and a synthetic keypoint
stream generator that stands in for a live operator.

Keypoint layout (21 points, operator-hand frame): index 0 is the wrist,
then 4 points per finger in thumb/index/middle/ring/pinky order, each
finger ordered knuckle, mid joint, distal joint, fingertip.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kincam
from .kincam import FINGER_ORDER, KinematicTree, Pose

PACKET_MAGIC = b"FVIP"
PACKET_SIZE = 296
_PACKET_STRUCT = struct.Struct("<4sId63f3f4f")
assert _PACKET_STRUCT.size == PACKET_SIZE

KEYPOINT_COUNT = 21
STREAM_RATE_HZ = 60.0

# default retargeting weights; tuned for test-suite convergence only.
# the smoothness weight is small because tip residuals are meters while the
# smoothness residual is radians; a heavier value lags fast 60 Hz motion.
W_FINGERTIP = 1.0
W_COUPLING = 0.5
W_SMOOTHNESS = 1e-4
COUPLING_DISTANCE = 0.02
IK_DAMPING = 1e-2


class PacketError(ValueError):
    """Raised when a keypoint packet cannot be decoded."""


class CalibrationError(ValueError):
    """Raised when segment calibration inputs are degenerate."""


class RetargetError(ValueError):
    """Raised when the retargeting objective cannot be evaluated."""


class IKError(ValueError):
    """Raised when the arm IK problem is structurally unsolvable."""


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z convention, Hamilton product)


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    q = np.array([w, x, y, z])
    return q / np.linalg.norm(q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (robust near 0 and pi)."""
    cos_th = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = math.acos(cos_th)
    if theta < 1e-10:
        return np.zeros(3)
    if theta > math.pi - 1e-5:
        # near pi: extract axis from the symmetric part
        A = (R + np.eye(3)) * 0.5
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        # fix signs from off-diagonal terms
        i = int(np.argmax(axis))
        if axis[i] > 0:
            for k in range(3):
                if k != i and A[i, k] < 0:
                    axis[k] = -axis[k]
        axis = axis / np.linalg.norm(axis)
        return axis * theta
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return v * (theta / (2.0 * math.sin(theta)))


# ---------------------------------------------------------------------------
# wire protocol


@dataclass
class HandSample:
    """One tracked-hand sample: 21 keypoints plus a 7-D wrist pose."""

    timestamp: float
    keypoints: np.ndarray  # (21, 3) meters, operator-hand frame
    wrist_position: np.ndarray  # (3,)
    wrist_quaternion: np.ndarray  # (4,) w, x, y, z, unit norm
    seq: int = 0

    def validate(self) -> None:
        kp = np.asarray(self.keypoints)
        if kp.shape != (KEYPOINT_COUNT, 3):
            raise PacketError(f"expected {KEYPOINT_COUNT}x3 keypoints, got {kp.shape}")
        if not np.isfinite(kp).all() or not np.isfinite(self.wrist_position).all():
            raise PacketError("non-finite values in hand sample")
        norm = float(np.linalg.norm(self.wrist_quaternion))
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise PacketError(f"wrist quaternion norm {norm} is not 1 within 1e-6")


def encode_keypoint_packet(sample: HandSample) -> bytes:
    sample.validate()
    flat = np.asarray(sample.keypoints, dtype=np.float32).reshape(-1)
    wp = np.asarray(sample.wrist_position, dtype=np.float32)
    wq = np.asarray(sample.wrist_quaternion, dtype=np.float32)
    return _PACKET_STRUCT.pack(PACKET_MAGIC, sample.seq, sample.timestamp, *flat, *wp, *wq)


def decode_keypoint_packet(data: bytes) -> HandSample:
    if len(data) != PACKET_SIZE:
        raise PacketError(f"packet length {len(data)} != {PACKET_SIZE}")
    magic, seq, ts, *values = _PACKET_STRUCT.unpack(data)
    if magic != PACKET_MAGIC:
        raise PacketError(f"bad magic {magic!r}")
    values = np.array(values, dtype=np.float32)
    if not np.isfinite(values).all() or not math.isfinite(ts):
        raise PacketError("non-finite values in packet")
    # values are kept exactly as transmitted so encode(decode(p)) == p;
    # the quaternion is validated here and normalized only where consumed
    sample = HandSample(
        timestamp=ts,
        keypoints=values[:63].astype(np.float64).reshape(KEYPOINT_COUNT, 3),
        wrist_position=values[63:66].astype(np.float64),
        wrist_quaternion=values[66:70].astype(np.float64),
        seq=seq,
    )
    sample.validate()
    return sample


def read_packet_stream(path) -> list[HandSample]:
    """Decode a file of back-to-back 296-byte packets (offline replay)."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) % PACKET_SIZE != 0:
        raise PacketError(f"stream length {len(blob)} is not a multiple of {PACKET_SIZE}")
    return [decode_keypoint_packet(blob[i : i + PACKET_SIZE]) for i in range(0, len(blob), PACKET_SIZE)]


# ---------------------------------------------------------------------------
# calibration

# (parent, child) keypoint index pairs, 4 segments per finger
SEGMENT_PAIRS = tuple(
    (0 if s == 0 else 4 * f + s, 4 * f + s + 1) for f in range(5) for s in range(4)
)


@dataclass(frozen=True)
class CalibrationScales:
    """Per-phalangeal-segment scale factors mapping operator segment lengths
    onto the robot hand; identity calibration is all ones."""

    values: np.ndarray  # (20,)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(SEGMENT_PAIRS),):
            raise CalibrationError(f"expected {len(SEGMENT_PAIRS)} scales, got shape {v.shape}")
        if not (v > 0).all():
            raise CalibrationError("all segment scales must be positive")

    @staticmethod
    def identity() -> "CalibrationScales":
        return CalibrationScales(np.ones(len(SEGMENT_PAIRS)))


def robot_landmark_positions(tree: KinematicTree, q_hand: np.ndarray) -> np.ndarray:
    """(21, 3) landmark positions in the hand base frame."""
    poses = kincam.hand_forward_kinematics(tree, q_hand)
    return np.stack([poses[link].position for link in tree.hand_landmark_links()])


def robot_segment_lengths(tree: KinematicTree) -> np.ndarray:
    pts = robot_landmark_positions(tree, np.zeros(len(tree.hand_joint_names())))
    return np.array([np.linalg.norm(pts[c] - pts[p]) for p, c in SEGMENT_PAIRS])


def calibrate_segments(samples: list[HandSample], tree: KinematicTree) -> CalibrationScales:
    """scale_s = robot segment length / median operator segment length."""
    if len(samples) < 10:
        raise CalibrationError(f"need at least 10 samples, got {len(samples)}")
    lengths = np.empty((len(samples), len(SEGMENT_PAIRS)))
    for i, sample in enumerate(samples):
        kp = np.asarray(sample.keypoints, dtype=float)
        for s, (p, c) in enumerate(SEGMENT_PAIRS):
            seg = np.linalg.norm(kp[c] - kp[p])
            if seg < 1e-6:
                raise CalibrationError(f"sample {i}: keypoints {p} and {c} are coincident")
            lengths[i, s] = seg
    human = np.median(lengths, axis=0)
    return CalibrationScales(robot_segment_lengths(tree) / human)


def scaled_keypoints(sample: HandSample, scales: CalibrationScales) -> np.ndarray:
    """Rebuild the operator skeleton relative to the wrist with each segment
    vector multiplied by its calibration scale."""
    kp = np.asarray(sample.keypoints, dtype=float)
    out = np.zeros_like(kp)
    for s, (p, c) in enumerate(SEGMENT_PAIRS):
        out[c] = out[p] + scales.values[s] * (kp[c] - kp[p])
    return out


# ---------------------------------------------------------------------------
# hand retargeting

TIP_KEYPOINTS = (4, 8, 12, 16, 20)  # fingertip rows in the 21-point layout
COUPLING_PAIRS = ((4, 8), (4, 12), (4, 16), (4, 20))  # thumb tip vs other tips


@dataclass
class RetargetResult:
    q: np.ndarray  # (20,) hand joint angles
    converged: bool
    objective: float
    iterations: int
    objective_trace: list[float] = None  # objective after each accepted iterate


def _hand_fk_tips(tree: KinematicTree, q_hand: np.ndarray) -> np.ndarray:
    poses = kincam.hand_forward_kinematics(tree, q_hand)
    return np.stack([poses[m.link].position for m in tree.mounts_in_finger_order()])


def _tips_and_jacobians(tree: KinematicTree, q_hand: np.ndarray):
    """Fingertip positions (5, 3) and position Jacobians (5, 3, 20) w.r.t.
    the hand joints, in the hand base frame, from a single FK pass."""
    hand_names = tree.hand_joint_names()
    cols = [tree.joint_order.index(n) for n in hand_names]
    q = np.zeros(tree.num_joints)
    q[cols] = q_hand
    poses = kincam.forward_kinematics(tree, q)
    base = poses[tree.hand_base]
    base_inv = base.inverse()
    tips = np.empty((5, 3))
    jacs = np.empty((5, 3, len(hand_names)))
    for i, m in enumerate(tree.mounts_in_finger_order()):
        tips[i] = base_inv.compose(poses[m.link]).position
        J = kincam.jacobian_from_poses(tree, poses, m.link)
        jacs[i] = base.rotation.T @ J[:3, cols]
    return tips, jacs


def _retarget_residuals(tree, q, targets, couple_dist, q_prev):
    """Stacked residual vector and Jacobian for the Gauss-Newton solve."""
    tips, Jt = _tips_and_jacobians(tree, q)
    n = q.size
    res = []
    rows = []
    sw1 = math.sqrt(W_FINGERTIP)
    for i in range(5):
        res.append(sw1 * (tips[i] - targets[i]))
        rows.append(sw1 * Jt[i])
    sw2 = math.sqrt(W_COUPLING)
    for pair_idx, (ka, kb) in enumerate(COUPLING_PAIRS):
        d_h = couple_dist[pair_idx]
        if d_h >= COUPLING_DISTANCE:
            continue
        fa, fb = TIP_KEYPOINTS.index(ka), TIP_KEYPOINTS.index(kb)
        diff = tips[fa] - tips[fb]
        dist = np.linalg.norm(diff)
        if dist < 1e-9:
            continue
        res.append(np.array([sw2 * (dist - d_h)]))
        rows.append((sw2 * (diff / dist) @ (Jt[fa] - Jt[fb])).reshape(1, n))
    sw3 = math.sqrt(W_SMOOTHNESS)
    res.append(sw3 * (q - q_prev))
    rows.append(sw3 * np.eye(n))
    r = np.concatenate(res)
    J = np.vstack(rows)
    return r, J


def retarget_hand(
    sample: HandSample,
    scales: CalibrationScales,
    q_prev: np.ndarray,
    tree: KinematicTree,
    max_iters: int = 20,
) -> RetargetResult:
    """Map one operator-hand sample to the 20 robot hand joints.

    Minimizes fingertip tracking error against the segment-scaled operator
    skeleton, a thumb-fingertip coupling term active for near-pinch
    configurations, and deviation from the previous solution.
    """
    sample.validate()
    q_prev = np.asarray(q_prev, dtype=float)
    hand_names = tree.hand_joint_names()
    if q_prev.shape != (len(hand_names),):
        raise RetargetError(f"q_prev must have shape ({len(hand_names)},)")
    kp = scaled_keypoints(sample, scales)
    targets = kp[list(TIP_KEYPOINTS)]
    couple_dist = np.array([np.linalg.norm(kp[a] - kp[b]) for a, b in COUPLING_PAIRS])

    limits = tree.joint_limits()
    hand_cols = [tree.joint_order.index(n) for n in hand_names]
    lo, hi = limits[hand_cols, 0], limits[hand_cols, 1]

    q = np.clip(q_prev, lo, hi)
    r, J = _retarget_residuals(tree, q, targets, couple_dist, q_prev)
    obj = float(r @ r)
    if not math.isfinite(obj):
        raise RetargetError("non-finite retargeting objective")

    converged = False
    it = 0
    trace = [obj]
    for it in range(1, max_iters + 1):
        H = J.T @ J + 1e-9 * np.eye(q.size)
        step = np.linalg.solve(H, -J.T @ r)
        alpha = 1.0
        improved = False
        for _ in range(10):
            q_new = np.clip(q + alpha * step, lo, hi)
            r_new, J_new = _retarget_residuals(tree, q_new, targets, couple_dist, q_prev)
            obj_new = float(r_new @ r_new)
            if math.isfinite(obj_new) and obj_new <= obj:
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        moved = float(np.linalg.norm(q_new - q))
        q, r, J, obj = q_new, r_new, J_new, obj_new
        trace.append(obj)
        if moved < 1e-10:
            converged = True
            break
    else:
        converged = True  # used the full budget without stalling
    if obj < 1e-12:
        converged = True
    return RetargetResult(q=q, converged=converged, objective=obj, iterations=it, objective_trace=trace)


# ---------------------------------------------------------------------------
# arm inverse kinematics


@dataclass
class IKResult:
    q: np.ndarray  # (n_arm,)
    converged: bool
    position_error: float
    rotation_error: float
    iterations: int
    residual_trace: list[float] = None  # pose-error norm after each accepted step


def solve_arm_ik(
    tree: KinematicTree,
    wrist_target: Pose,
    q_init: np.ndarray,
    max_iters: int = 50,
    pos_tol: float = 1e-4,
    rot_tol: float = 1e-3,
    damping: float = IK_DAMPING,
) -> IKResult:
    """Damped-least-squares IK for the arm joints, targeting the hand base
    link pose. Hand joints are irrelevant to the target and left at zero."""
    arm_names = tree.arm_joint_names()
    n_arm = len(arm_names)
    q_arm = np.asarray(q_init, dtype=float).copy()
    if q_arm.shape != (n_arm,):
        raise IKError(f"q_init must have shape ({n_arm},)")
    arm_cols = [tree.joint_order.index(n) for n in arm_names]
    limits = tree.joint_limits()[arm_cols]

    def full_q(qa):
        q = np.zeros(tree.num_joints)
        q[arm_cols] = qa
        return q

    def pose_error(qa):
        pose = kincam.forward_kinematics(tree, full_q(qa))[tree.hand_base]
        e_pos = wrist_target.position - pose.position
        e_rot = rotation_log(wrist_target.rotation @ pose.rotation.T)
        return np.concatenate([e_pos, e_rot])

    e = pose_error(q_arm)
    lam = damping
    it = 0
    trace = [float(np.linalg.norm(e))]
    for it in range(1, max_iters + 1):
        if np.linalg.norm(e[:3]) < pos_tol and np.linalg.norm(e[3:]) < rot_tol:
            return IKResult(
                q_arm, True, float(np.linalg.norm(e[:3])), float(np.linalg.norm(e[3:])), it - 1, trace
            )
        J = kincam.jacobian(tree, full_q(q_arm), tree.hand_base)[:, arm_cols]
        if np.abs(J).max() < 1e-12:
            raise IKError("arm Jacobian is identically zero")
        improved = False
        # step halving plus Levenberg-style damping growth when a step fails
        while lam < 1.0:
            dq = J.T @ np.linalg.solve(J @ J.T + lam**2 * np.eye(6), e)
            alpha = 1.0
            for _ in range(6):
                q_new = np.clip(q_arm + alpha * dq, limits[:, 0], limits[:, 1])
                e_new = pose_error(q_new)
                if np.linalg.norm(e_new) < np.linalg.norm(e):
                    improved = True
                    break
                alpha *= 0.5
            if improved:
                lam = max(lam * 0.5, damping)
                break
            lam *= 4.0
        if not improved:
            break
        q_arm, e = q_new, e_new
        trace.append(float(np.linalg.norm(e)))
    pos_err = float(np.linalg.norm(e[:3]))
    rot_err = float(np.linalg.norm(e[3:]))
    return IKResult(q_arm, pos_err < pos_tol and rot_err < rot_tol, pos_err, rot_err, it, trace)


# ---------------------------------------------------------------------------
# synthetic keypoint streams


def synthesize_keypoint_stream(
    tree: KinematicTree,
    joint_trajectory: np.ndarray,
    rate_hz: float = STREAM_RATE_HZ,
    start_time: float = 0.0,
) -> list[HandSample]:
    """Generate operator-like keypoint samples from a robot joint trajectory.

    Keypoints are the robot hand landmarks in the hand base frame, so a
    stream synthesized at joint vector q retargets back to q; the wrist pose
    comes from arm forward kinematics.
    """
    joint_trajectory = np.asarray(joint_trajectory, dtype=float)
    if joint_trajectory.ndim != 2 or joint_trajectory.shape[1] != tree.num_joints:
        raise kincam.KinematicsError(
            f"expected trajectory of shape (T, {tree.num_joints}), got {joint_trajectory.shape}"
        )
    hand_cols = [tree.joint_order.index(n) for n in tree.hand_joint_names()]
    samples = []
    for k, q in enumerate(joint_trajectory):
        keypoints = robot_landmark_positions(tree, q[hand_cols])
        wrist = kincam.forward_kinematics(tree, q)[tree.hand_base]
        samples.append(
            HandSample(
                timestamp=start_time + k / rate_hz,
                keypoints=keypoints,
                wrist_position=wrist.position,
                wrist_quaternion=quat_from_matrix(wrist.rotation),
                seq=k,
            )
        )
    return samples
