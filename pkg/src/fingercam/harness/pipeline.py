"""Demo collection and policy training pipelines."""
from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from .. import recorder
from ..policy import DemoDataset, DiffusionPolicy, Trainer, episode_from_store, save_checkpoint
from ..simworld import check_success, create_task, reference_tree, scripted_expert, step
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

PROPRIO_STREAMS = ("commands", "joints", "currents")


def _episode_streams(world) -> list[recorder.StreamSpec]:
    rate = 1.0 / world.config.dt
    res_tip, res_third = world.config.resolutions()
    specs = [
        recorder.StreamSpec(f"cam_{finger}", rate, (res_tip, res_tip, 3), "|u1")
        for finger in ("thumb", "index", "middle", "ring", "pinky")
    ]
    specs.append(recorder.StreamSpec("cam_third", rate, (res_third, res_third, 3), "|u1"))
    if world.config.wrist_camera:
        specs.append(recorder.StreamSpec("cam_wrist", rate, (res_tip, res_tip, 3), "|u1"))
    specs += [
        recorder.StreamSpec("commands", rate, (26,), "<f8"),
        recorder.StreamSpec("joints", rate, (26,), "<f8"),
        recorder.StreamSpec("currents", rate, (20,), "<f8"),
    ]
    return specs


def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def record_episode(world, controller, out_path, episode_len: int | None = None) -> tuple[recorder.EpisodeStore, dict]:
    """Roll one episode under ``controller(world) -> action`` while recording
    the full multi-stream capture set into an episode store."""
    episode_len = episode_len or world.episode_len
    specs = _episode_streams(world)
    session = recorder.open_session(
        specs,
        out_path,
        meta={"task": world.task, "scenario": world.scenario, "seed": world.seed},
    )
    for spec in specs:
        session.mark_ready(spec.stream_id)
    session.start(start_time=0.0)

    sensors = world.observe()
    for _ in range(episode_len):
        action = controller(world)
        t = world.time
        for i, finger in enumerate(("thumb", "index", "middle", "ring", "pinky")):
            session.append(f"cam_{finger}", t, _to_u8(sensors.fingertip_images[i]), receipt_time=t)
        session.append("cam_third", t, _to_u8(sensors.third_image), receipt_time=t)
        if world.config.wrist_camera:
            session.append("cam_wrist", t, _to_u8(sensors.wrist_image), receipt_time=t)
        session.append("commands", t, action, receipt_time=t)
        session.append("joints", t, sensors.q, receipt_time=t)
        session.append("currents", t, sensors.currents, receipt_time=t)
        session.drain()
        _, sensors = step(world, action)
    store = session.finalize(align_rate_hz=1.0 / world.config.dt)
    return store, check_success(world)


def collect_demos(exp: ExperimentConfig, out_dir=None) -> list[Path]:
    """Scripted-expert demonstrations. Failed expert episodes are excluded
    from the training set and logged."""
    out_dir = Path(out_dir if out_dir is not None else Path(exp.out_dir) / "demos")
    out_dir.mkdir(parents=True, exist_ok=True)
    tree = reference_tree()
    paths: list[Path] = []
    failures = []
    seed = exp.demo_seed0
    attempts = 0
    max_attempts = 2 * exp.demos + 10
    while len(paths) < exp.demos and attempts < max_attempts:
        world = create_task(exp.task, exp.demo_scenario, seed, config=exp.world_config(), tree=tree)
        path = out_dir / f"ep_{len(paths):05d}"
        episode_len = exp.episode_len or world.episode_len
        _, success = record_episode(world, scripted_expert, path, episode_len)
        if all(success.values()):
            paths.append(path)
        else:
            failures.append(seed)
            logger.warning("expert failed on seed %d (%s); episode excluded", seed, success)
            for child in sorted(path.rglob("*"), reverse=True):
                child.unlink() if child.is_file() else child.rmdir()
            path.rmdir()
        seed += 1
        attempts += 1
    if len(paths) < exp.demos:
        raise RuntimeError(f"collected only {len(paths)}/{exp.demos} successful demos")
    (out_dir / "collection.json").write_text(
        json.dumps({"task": exp.task, "scenario": exp.demo_scenario, "demos": len(paths),
                    "failed_seeds": failures, "seed0": exp.demo_seed0}, indent=1)
    )
    return paths


def default_lr_schedule(steps: int, lr: float) -> dict[int, float]:
    # short warmup, then two decay stages
    return {0: lr / 10, min(200, steps // 10): lr, int(steps * 0.55): lr / 4, int(steps * 0.8): lr / 16}


def train_policy(exp: ExperimentConfig, demo_paths: list[Path], out_path=None) -> Path:
    """Train a diffusion policy on the given demonstration stores and write
    a checkpoint plus the training history (loss and masked-input gradient
    logs)."""
    out_path = Path(out_path if out_path is not None else Path(exp.out_dir) / "policy.ckpt")
    tree = reference_tree()
    policy = DiffusionPolicy(exp.policy_config())
    episodes = [episode_from_store(p, policy.config.views) for p in demo_paths]
    dataset = DemoDataset(episodes, policy, tree)
    trainer = Trainer(
        policy,
        dataset,
        batch_size=exp.batch_size,
        lr_schedule=default_lr_schedule(exp.train_steps, exp.learning_rate),
    )
    t0 = time.time()
    trainer.run(exp.train_steps, log_every=max(1, exp.train_steps // 10))
    history = {
        "loss": trainer.history["loss"],
        "pose_grad_max": max(trainer.history["pose_grad"], default=0.0),
        "current_grad_max": max(trainer.history["current_grad"], default=0.0),
        "train_seconds": time.time() - t0,
        "config_hash": exp.hash(),
    }
    save_checkpoint(policy, out_path)
    Path(str(out_path) + ".history.json").write_text(json.dumps(history))
    return out_path
