import copy

import numpy as np
import pytest
import torch

from fingercam import policy as pol
from fingercam import simworld as sw
from fingercam.policy import (
    ActionChunk,
    DemoDataset,
    DiffusionPolicy,
    DiffusionSchedule,
    EpisodeFrames,
    NormStats,
    Observation,
    PolicyConfig,
    SamplingError,
    TokenBuilder,
    Trainer,
    denormalize_actions,
    normalize_actions,
    q_sample,
    token_widths,
)

SMALL = dict(model_dim=64, layers=2, heads=8, denoise_steps=8, beta_start=0.01, beta_end=0.1)


def synthetic_episode(rng, frames=10, views=pol.CAMERA_SETS["full"], image_hw=10, vary=True):
    images = {}
    for v in views:
        if vary:
            images[v] = rng.random((frames, image_hw, image_hw, 3)).astype(np.float32)
        else:
            images[v] = np.tile(rng.random((1, image_hw, image_hw, 3)).astype(np.float32), (frames, 1, 1, 1))
    joints = 0.3 * np.sin(np.linspace(0, 2, frames))[:, None] * np.ones((frames, 26)) * rng.uniform(0.5, 1, 26)
    currents = 100 + 5 * rng.random((frames, 20))
    actions = joints + 0.05 * rng.standard_normal((frames, 26))
    return EpisodeFrames(images=images, joints=joints, currents=currents, actions=actions)


def make_stats(rng):
    return NormStats.from_data(
        rng.uniform(-1, 1, (30, 26)),
        100 + rng.random((30, 20)),
        np.stack([np.full(26, -3.0), np.full(26, 3.0)], axis=1),
    )


@pytest.fixture
def small_policy(rng, tree):
    policy = DiffusionPolicy(PolicyConfig(**SMALL, seed=0))
    policy.stats = NormStats.from_data(
        rng.uniform(-1, 1, (30, 26)), 100 + rng.random((30, 20)), tree.joint_limits()
    )
    return policy


def sim_observation(seed=0):
    w = sw.create_task("button", "nominal", seed=seed)
    return w, pol.observation_from_sensors(w.tree, w.observe())


# ---------------------------------------------------------------------------
# encoder contract


def test_encoder_deterministic_frozen(rng):
    enc = pol.ViewEncoder(768, frozen=True, seed=3)
    img = rng.random((20, 20, 3))
    f1, f2 = enc.encode_view(img), enc.encode_view(img)
    assert np.array_equal(f1, f2)


def test_encoder_768_for_multiple_resolutions(rng):
    enc = pol.ViewEncoder(768, frozen=True, seed=0)
    assert enc.encode_view(rng.random((48, 48, 3))).shape == (768,)
    assert enc.encode_view(rng.random((224, 224, 3))).shape == (768,)


def test_encoder_distinguishes_constant_images():
    enc = pol.ViewEncoder(256, frozen=True, seed=0)
    z = enc.encode_view(np.zeros((32, 32, 3)))
    o = enc.encode_view(np.ones((32, 32, 3)))
    assert np.abs(z - o).max() > 1e-6


def test_encoder_rejects_out_of_range():
    enc = pol.ViewEncoder(64, frozen=True, seed=0)
    with pytest.raises(pol.EncoderInputError, match=r"\[0, 1\]"):
        enc.encode_view(np.full((8, 8, 3), 1.5))


def test_frozen_encoder_params_never_change(rng, tree):
    policy = DiffusionPolicy(PolicyConfig(**SMALL, seed=1))
    before = {n: p.detach().clone() for n, p in policy.encoder.named_parameters()}
    ds = DemoDataset([synthetic_episode(rng)], policy, tree)
    trainer = Trainer(policy, ds, batch_size=8)
    trainer.run(10)
    for n, p in policy.encoder.named_parameters():
        assert torch.equal(before[n], p)


# ---------------------------------------------------------------------------
# tokens


def test_full_config_token_ledger():
    b = TokenBuilder(768, "full")
    assert b.sequence_length == 64
    w = token_widths(768)
    assert (w["visual"], w["position"], w["rotation"], w["current"]) == (384, 128, 128, 128)
    assert sum(w.values()) == 768


def test_ftc_and_tvc_lengths():
    assert TokenBuilder(768, "ftc").sequence_length == 62
    assert TokenBuilder(768, "tvc").sequence_length == 54


def test_single_joint_token_mode():
    b = TokenBuilder(128, "full", joint_token_mode="single")
    assert b.sequence_length == 2 * (6 + 1)


def test_width_partition_sums_for_odd_dims():
    for dim in (64, 96, 100, 768):
        assert sum(token_widths(dim).values()) == dim


def test_tokens_from_sim_observation(small_policy):
    w, obs = sim_observation()
    seq = small_policy.build_tokens(obs, obs)
    assert seq.tokens.shape == (1, 64, 64)
    kinds = [k for k, _, _ in seq.layout]
    assert kinds.count("camera") == 12 and kinds.count("joint") == 52
    steps = {s for _, _, s in seq.layout}
    assert steps == {0, 1}


def test_pose_matrix_consistent_with_kinematics(tree):
    w, obs = sim_observation(seed=3)
    from fingercam import kincam

    _, P = kincam.fingertip_camera_poses(tree, obs.joints[6:])
    assert np.allclose(obs.camera_poses, P, atol=0)


def test_ablation_masks_zero_slices(small_policy, rng, tree):
    w, obs = sim_observation()
    widths = token_widths(64)
    full = small_policy.build_tokens(obs, obs).tokens[0]

    cfg = PolicyConfig(**SMALL, seed=0, use_camera_poses=False)
    masked = DiffusionPolicy(cfg)
    masked.stats = small_policy.stats
    # identical initialization makes the unmasked slices comparable
    masked.builder.load_state_dict(small_policy.builder.state_dict())
    masked_tokens = masked.build_tokens(obs, obs).tokens[0]

    v, p, r, c = widths["visual"], widths["position"], widths["rotation"], widths["current"]
    for row, (kind, name, _) in enumerate(small_policy.builder(
        small_policy.encode_observation(obs), small_policy.encode_observation(obs)).layout):
        if kind == "camera" and name in ("thumb", "index", "middle", "ring", "pinky"):
            assert torch.allclose(masked_tokens[row, v : v + p + r], torch.zeros(p + r))
            assert torch.allclose(masked_tokens[row, :v], full[row, :v])
            assert torch.allclose(masked_tokens[row, v + p + r :], full[row, v + p + r :])


def test_bad_pose_shape_rejected(small_policy):
    w, obs = sim_observation()
    obs.camera_poses = obs.camera_poses[:4]
    with pytest.raises(pol.tokens.TokenShapeError):
        small_policy.build_tokens(obs, obs)


# ---------------------------------------------------------------------------
# diffusion schedule


def test_schedule_invariants():
    sch = DiffusionSchedule(50)
    assert sch.alpha_bar[0] == 1.0
    assert ((sch.betas > 0) & (sch.betas < 1)).all()
    assert (np.diff(sch.alpha_bar) < 0).all()


def test_q_sample_boundaries():
    sch = DiffusionSchedule(20)
    x0 = torch.randn(3, 16, 26, generator=torch.Generator().manual_seed(0))
    assert torch.equal(q_sample(x0, 0, torch.zeros_like(x0), sch), x0)
    xk = q_sample(x0, 5, torch.zeros_like(x0), sch)
    assert torch.allclose(xk, float(np.sqrt(sch.alpha_bar[5])) * x0)
    with pytest.raises(ValueError, match="k must be"):
        q_sample(x0, 21, torch.zeros_like(x0), sch)


def test_q_sample_unit_variance():
    sch = DiffusionSchedule(50)
    g = torch.Generator().manual_seed(0)
    x0 = torch.randn(100_000, 1, generator=g)
    eps = torch.randn(100_000, 1, generator=g)
    for k in (1, 25, 50):
        v = q_sample(x0, k, eps, sch).var().item()
        assert abs(v - 1.0) < 0.02


# ---------------------------------------------------------------------------
# training


def test_train_determinism(rng, tree):
    curves = []
    for _ in range(2):
        policy = DiffusionPolicy(PolicyConfig(**SMALL, seed=7))
        ds = DemoDataset([synthetic_episode(np.random.default_rng(0))], policy, tree)
        trainer = Trainer(policy, ds, batch_size=8)
        curves.append(trainer.run(15))
    assert curves[0] == curves[1]


def test_conditioning_is_live(small_policy, rng):
    w, obs = sim_observation()
    toks = small_policy.build_tokens(obs, obs).tokens
    x = torch.randn(1, 16, 26, generator=torch.Generator().manual_seed(0))
    k = torch.tensor([4])
    with torch.no_grad():
        a = small_policy.denoiser(x, k, toks)
        b = small_policy.denoiser(x, k, torch.zeros_like(toks))
    assert (a - b).abs().max() > 0


def test_non_finite_loss_aborts_step(rng, tree, caplog):
    policy = DiffusionPolicy(PolicyConfig(**SMALL, seed=0))
    ds = DemoDataset([synthetic_episode(rng)], policy, tree)
    trainer = Trainer(policy, ds, batch_size=4)
    batch = ds.batch(torch.arange(4))
    batch["actions"] = batch["actions"].clone()
    batch["actions"][0, 0, 0] = float("nan")
    before = {n: p.detach().clone() for n, p in policy.named_parameters()}
    import logging

    with caplog.at_level(logging.WARNING):
        loss = pol.train_step(policy, batch, trainer.optimizer, trainer.generator)
    assert not np.isfinite(loss)
    assert any("non-finite" in r.message for r in caplog.records)
    for n, p in policy.named_parameters():
        assert torch.equal(before[n], p)


def test_ablation_gradients_zero_throughout_training(rng, tree):
    for flag, key in (("use_camera_poses", "pose_grad"), ("use_joint_currents", "current_grad")):
        cfg = PolicyConfig(**SMALL, seed=0, **{flag: False})
        policy = DiffusionPolicy(cfg)
        ds = DemoDataset([synthetic_episode(rng)], policy, tree)
        trainer = Trainer(policy, ds, batch_size=8)
        trainer.run(12)
        assert max(trainer.history[key]) == 0.0
        other = "current_grad" if key == "pose_grad" else "pose_grad"
        assert max(trainer.history[other]) > 0.0


# ---------------------------------------------------------------------------
# sampling and control


def test_sample_shape_and_determinism(small_policy):
    w, obs = sim_observation()
    toks = small_policy.build_tokens(obs, obs)
    c1 = small_policy.sample_actions(toks, seed=5)
    c2 = small_policy.sample_actions(toks, seed=5)
    c3 = small_policy.sample_actions(toks, seed=6)
    assert c1.actions.shape == (16, 26)
    assert np.array_equal(c1.actions, c2.actions)
    assert not np.array_equal(c1.actions, c3.actions)


def test_sampling_error_reports_step(small_policy):
    w, obs = sim_observation()
    toks = small_policy.build_tokens(obs, obs)
    with torch.no_grad():
        small_policy.denoiser.head[-1].weight.fill_(float("nan"))
    with pytest.raises(SamplingError, match="k="):
        small_policy.sample_actions(toks, seed=0, use_ema=False)


def test_receding_horizon_inference_count(small_policy):
    w = sw.create_task("button", "nominal", seed=0)
    record = pol.receding_horizon_control(small_policy, w, episode_len=80, seed=0, render=True)
    assert record.inference_calls == 10  # 80 steps / 8 executed per chunk
    assert len(record.actions) == 80


def test_rollout_replayable(small_policy):
    w = sw.create_task("button", "nominal", seed=2)
    record = pol.receding_horizon_control(small_policy, w, episode_len=16, seed=1)
    sig = w.state_signature()
    w2 = sw.create_task("button", "nominal", seed=2)
    pol.replay_actions(w2, record.actions_array)
    assert w2.state_signature() == sig


def test_action_chunk_validation():
    with pytest.raises(ValueError, match="finite"):
        ActionChunk(np.full((16, 26), np.nan), 8)
    with pytest.raises(ValueError, match="prefix"):
        ActionChunk(np.zeros((4, 26)), 8)


# ---------------------------------------------------------------------------
# normalization


def test_normalize_roundtrip(rng):
    stats = make_stats(rng)
    x = rng.uniform(-1, 1, (5, 26))
    assert np.abs(denormalize_actions(normalize_actions(x, stats), stats) - x).max() < 1e-9


def test_normalize_min_maps_to_minus_one(rng):
    stats = make_stats(rng)
    assert np.allclose(normalize_actions(stats.action_min, stats), -1.0)
    assert np.allclose(normalize_actions(stats.action_max, stats), 1.0)


def test_constant_dim_convention(rng):
    actions = rng.uniform(-1, 1, (30, 26))
    actions[:, 7] = 0.42
    stats = NormStats.from_data(actions, 100 + rng.random((30, 20)),
                                np.stack([np.full(26, -3.0), np.full(26, 3.0)], axis=1))
    normed = normalize_actions(actions[0], stats)
    assert normed[7] == 0.0
    back = denormalize_actions(normed, stats)
    assert back[7] == pytest.approx(0.42)


def test_missing_stats_error():
    with pytest.raises(pol.normalize.NormStatsError, match="missing"):
        normalize_actions(np.zeros(26), None)


# ---------------------------------------------------------------------------
# checkpointing


def test_checkpoint_roundtrip(tmp_path, small_policy, rng, tree):
    ds = DemoDataset([synthetic_episode(rng)], small_policy, tree)
    Trainer(small_policy, ds, batch_size=8).run(5)
    w, obs = sim_observation()
    toks = small_policy.build_tokens(obs, obs)
    chunk = small_policy.sample_actions(toks, seed=0)

    path = tmp_path / "p.ckpt"
    pol.save_checkpoint(small_policy, path)
    loaded = pol.load_checkpoint(path)
    assert loaded.train_steps == small_policy.train_steps
    toks2 = loaded.build_tokens(obs, obs)
    chunk2 = loaded.sample_actions(toks2, seed=0)
    assert np.allclose(chunk.actions, chunk2.actions, atol=1e-6)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 100)
    with pytest.raises(pol.CheckpointError, match="magic"):
        pol.load_checkpoint(path)
