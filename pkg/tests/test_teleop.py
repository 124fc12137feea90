import math

import numpy as np
import pytest

from fingercam import kincam, teleop
from fingercam.teleop import (
    CalibrationError,
    CalibrationScales,
    HandSample,
    IKError,
    PacketError,
    calibrate_segments,
    decode_keypoint_packet,
    encode_keypoint_packet,
    retarget_hand,
    solve_arm_ik,
    synthesize_keypoint_stream,
)

GOLDEN_PACKET_HEX = (
    "465649502a000000000000000000f83f000000000ad7233c0ad7a33c8fc2f53c0ad7233dcdcc4c3d8fc2753d"
    "295c8f3d0ad7a33dec51b83dcdcccc3dae47e13d8fc2f53db81e053e295c0f3e9a99193e0ad7233e7b142e3e"
    "ec51383e5c8f423ecdcc4c3e3d0a573eae47613e1f856b3e8fc2753e0000803eb81e853e713d8a3e295c8f3e"
    "e17a943e9a99993e52b89e3e0ad7a33ec3f5a83e7b14ae3e3333b33eec51b83ea470bd3e5c8fc23e14aec73e"
    "cdcccc3e85ebd13e3d0ad73ef628dc3eae47e13e6666e63e1f85eb3ed7a3f03e8fc2f53e48e1fa3e0000003f"
    "5c8f023fb81e053f14ae073f713d0a3fcdcc0c3f295c0f3f85eb113fe17a143f3d0a173f9a99193ff6281c3f"
    "52b81e3f0000803e000000be0000803d0000003f0000003f0000003f0000003f"
)


def make_sample(rng, seq=0):
    kp = rng.normal(scale=0.05, size=(21, 3)).astype(np.float32).astype(np.float64)
    quat = rng.normal(size=4)
    quat = (quat / np.linalg.norm(quat)).astype(np.float32).astype(np.float64)
    pos = rng.normal(size=3).astype(np.float32).astype(np.float64)
    return HandSample(float(rng.random()), kp, pos, quat, seq=seq)


# ---------------------------------------------------------------------------
# wire protocol


def test_golden_packet_decodes_to_known_sample():
    sample = decode_keypoint_packet(bytes.fromhex(GOLDEN_PACKET_HEX))
    assert sample.seq == 42
    assert sample.timestamp == 1.5
    expected_kp = (np.arange(63).reshape(21, 3) * 0.01).astype(np.float32)
    assert np.allclose(sample.keypoints, expected_kp, atol=0)
    assert np.allclose(sample.wrist_position, np.array([0.25, -0.125, 0.0625]))
    assert np.allclose(sample.wrist_quaternion, [0.5, 0.5, 0.5, 0.5])
    assert encode_keypoint_packet(sample) == bytes.fromhex(GOLDEN_PACKET_HEX)


def test_roundtrip_random_samples_bit_identical(rng):
    for i in range(1000):
        sample = make_sample(rng, seq=i)
        pkt = encode_keypoint_packet(sample)
        assert len(pkt) == teleop.PACKET_SIZE
        assert encode_keypoint_packet(decode_keypoint_packet(pkt)) == pkt


def test_short_packet_rejected():
    with pytest.raises(PacketError, match="length"):
        decode_keypoint_packet(b"\x00" * 295)


def test_bad_magic_rejected(rng):
    pkt = bytearray(encode_keypoint_packet(make_sample(rng)))
    pkt[:4] = b"NOPE"
    with pytest.raises(PacketError, match="magic"):
        decode_keypoint_packet(bytes(pkt))


def test_non_finite_rejected(rng):
    pkt = bytearray(encode_keypoint_packet(make_sample(rng)))
    pkt[16:20] = np.array([np.nan], dtype="<f4").tobytes()
    with pytest.raises(PacketError, match="finite"):
        decode_keypoint_packet(bytes(pkt))


def test_non_unit_quaternion_rejected(rng):
    sample = make_sample(rng)
    sample.wrist_quaternion = np.array([1.0, 1.0, 0.0, 0.0])
    with pytest.raises(PacketError, match="quaternion"):
        encode_keypoint_packet(sample)


def test_packet_stream_file_roundtrip(tmp_path, rng):
    samples = [make_sample(rng, seq=i) for i in range(5)]
    blob = b"".join(encode_keypoint_packet(s) for s in samples)
    path = tmp_path / "stream.bin"
    path.write_bytes(blob)
    back = teleop.read_packet_stream(path)
    assert [s.seq for s in back] == [0, 1, 2, 3, 4]


# ---------------------------------------------------------------------------
# calibration


def test_self_calibration_is_identity(tree):
    stream = synthesize_keypoint_stream(tree, np.zeros((12, 26)))
    scales = calibrate_segments(stream, tree)
    assert np.abs(scales.values - 1.0).max() < 1e-9


def test_uniform_scale_calibration(tree):
    stream = synthesize_keypoint_stream(tree, np.zeros((12, 26)))
    for s in stream:
        s.keypoints = s.keypoints * 0.8
    scales = calibrate_segments(stream, tree)
    assert np.abs(scales.values - 1.25).max() < 1e-6


def test_coincident_keypoints_error(tree):
    stream = synthesize_keypoint_stream(tree, np.zeros((12, 26)))
    stream[3].keypoints[2] = stream[3].keypoints[1]
    with pytest.raises(CalibrationError, match="coincident"):
        calibrate_segments(stream, tree)


def test_too_few_samples_error(tree):
    stream = synthesize_keypoint_stream(tree, np.zeros((5, 26)))
    with pytest.raises(CalibrationError, match="10"):
        calibrate_segments(stream, tree)


def test_scales_must_be_positive():
    with pytest.raises(CalibrationError):
        CalibrationScales(np.zeros(20))


# ---------------------------------------------------------------------------
# retargeting


def test_retarget_recovers_generating_pose(tree, rng):
    q_hand = np.zeros(20)
    q_hand[[1, 5, 6, 10, 14]] = [0.7, 0.5, 0.4, 0.6, 0.3]
    stream = synthesize_keypoint_stream(tree, np.concatenate([np.zeros(6), q_hand])[None])
    res = retarget_hand(stream[0], CalibrationScales.identity(), q_hand, tree)
    tips_rec = teleop._hand_fk_tips(tree, res.q)
    tips_true = teleop._hand_fk_tips(tree, q_hand)
    assert np.linalg.norm(tips_rec - tips_true, axis=1).max() < 1e-3


def test_retarget_constant_stream_fixed_point(tree):
    q_hand = np.full(20, 0.2)
    q_hand[0] = -0.2
    stream = synthesize_keypoint_stream(tree, np.tile(np.concatenate([np.zeros(6), q_hand]), (3, 1)))
    q_prev = q_hand.copy()
    for sample in stream:
        res = retarget_hand(sample, CalibrationScales.identity(), q_prev, tree)
        assert np.abs(res.q - q_hand).max() < 1e-9
        q_prev = res.q


def test_retarget_objective_non_increasing(tree, rng):
    q_hand = rng.uniform(0.0, 0.8, 20)
    stream = synthesize_keypoint_stream(tree, np.concatenate([np.zeros(6), q_hand])[None])
    res = retarget_hand(stream[0], CalibrationScales.identity(), np.zeros(20), tree)
    trace = np.asarray(res.objective_trace)
    assert (np.diff(trace) <= 1e-12).all()


def test_retarget_pinch_coupling(tree):
    # drive thumb and index together, synthesize, and check the retargeted
    # pinch distance stays within 2 mm of the generating distance
    q_pinch = np.zeros(20)
    q_pinch[0:4] = (-0.6, 1.0, 0.7, 0.4)
    q_pinch[4:8] = (0.0, 1.2, 0.96, 0.6)
    tips = teleop._hand_fk_tips(tree, q_pinch)
    human_dist = np.linalg.norm(tips[0] - tips[1])
    assert human_dist < teleop.COUPLING_DISTANCE  # the coupling term is active
    stream = synthesize_keypoint_stream(tree, np.concatenate([np.zeros(6), q_pinch])[None])
    res = retarget_hand(stream[0], CalibrationScales.identity(), q_pinch * 0.9, tree)
    tips_r = teleop._hand_fk_tips(tree, res.q)
    robot_dist = np.linalg.norm(tips_r[0] - tips_r[1])
    assert robot_dist <= human_dist + 2e-3


# ---------------------------------------------------------------------------
# arm IK


def test_ik_already_at_target(tree):
    q0 = np.array([0.1, 0.8, 1.2, -1.5, 0.2, -0.4])
    target = kincam.forward_kinematics(tree, np.concatenate([q0, np.zeros(20)]))[tree.hand_base]
    res = solve_arm_ik(tree, target, q0)
    assert res.converged and res.iterations == 0
    assert np.array_equal(res.q, q0)


def test_ik_reachable_targets_from_nearby(tree, rng):
    failures = 0
    for _ in range(100):
        q_true = rng.uniform([-1.0, 0.3, 0.5, -2.2, -1.0, -1.2], [1.0, 1.8, 2.2, -0.5, 1.0, 1.2])
        target = kincam.forward_kinematics(tree, np.concatenate([q_true, np.zeros(20)]))[tree.hand_base]
        q_init = q_true + rng.uniform(-0.3, 0.3, 6) / math.sqrt(6)
        res = solve_arm_ik(tree, target, q_init)
        if not (res.converged and res.position_error < 1e-4):
            failures += 1
    assert failures == 0


def test_ik_unreachable_returns_flagged_finite(tree):
    target = kincam.Pose(np.array([10.0, 0.0, 0.0]), np.eye(3))
    res = solve_arm_ik(tree, target, np.zeros(6))
    assert not res.converged
    assert np.isfinite(res.q).all()


def test_ik_residual_monotone_under_line_search(tree, rng):
    q_true = np.array([0.3, 1.0, 1.5, -1.8, 0.1, -0.2])
    target = kincam.forward_kinematics(tree, np.concatenate([q_true, np.zeros(20)]))[tree.hand_base]
    res = solve_arm_ik(tree, target, q_true + 0.25)
    trace = np.asarray(res.residual_trace)
    assert (np.diff(trace) < 0).all()


def test_ik_zero_jacobian_error():
    text = """
link name=a
link name=b
joint name=f type=fixed parent=a child=b origin_xyz=0.1,0,0
"""
    t = kincam.parse_robot_description(text)
    # no revolute joints at all -> empty jacobian; q_init must be empty too
    with pytest.raises((IKError, IndexError, ValueError)):
        solve_arm_ik(t, kincam.Pose(np.array([1.0, 0, 0]), np.eye(3)), np.zeros(0))


# ---------------------------------------------------------------------------
# synthetic streams


def test_stream_timing_and_sequence(tree):
    stream = synthesize_keypoint_stream(tree, np.zeros((30, 26)))
    dts = np.diff([s.timestamp for s in stream])
    assert np.allclose(dts, 1.0 / 60.0, atol=1e-12)
    seqs = [s.seq for s in stream]
    assert all(b > a for a, b in zip(seqs, seqs[1:]))


def test_closed_loop_stream_recovery(tree):
    T = 90
    ts = np.linspace(0, 1.5, T)
    traj = np.zeros((T, 26))
    traj[:, 7] = 0.8 * np.sin(ts * 2.0) ** 2
    traj[:, 11] = 0.7 * np.sin(ts * 1.5) ** 2
    traj[:, 15] = 0.5 * np.sin(ts * 2.5) ** 2
    stream = synthesize_keypoint_stream(tree, traj)
    scales = calibrate_segments(stream[:10], tree)
    q_prev = traj[0, 6:].copy()
    worst = 0.0
    for k, sample in enumerate(stream):
        res = retarget_hand(sample, scales, q_prev, tree)
        q_prev = res.q
        err = np.linalg.norm(
            teleop._hand_fk_tips(tree, res.q) - teleop._hand_fk_tips(tree, traj[k, 6:]), axis=1
        ).max()
        worst = max(worst, err)
    assert worst < 1e-3
