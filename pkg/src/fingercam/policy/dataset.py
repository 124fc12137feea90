"""Demonstration dataset assembly: aligned episode stores (or in-memory
rollouts) -> stacked tensors of visual features, pose matrices, currents,
joints, and normalized action chunks.

With a frozen encoder the per-view features are computed once here, which
makes training steps encoder-free.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .. import kincam, recorder
from .core import DiffusionPolicy
from .normalize import NormStats, normalize_actions, normalize_currents, normalize_joints

VIEW_STREAMS = {
    "thumb": "cam_thumb",
    "index": "cam_index",
    "middle": "cam_middle",
    "ring": "cam_ring",
    "pinky": "cam_pinky",
    "third": "cam_third",
    "wrist": "cam_wrist",
}


@dataclass
class EpisodeFrames:
    """Raw per-frame arrays for one demonstration."""

    images: dict[str, np.ndarray]  # view -> (F, H, W, 3) float32 in [0, 1]
    joints: np.ndarray  # (F, 26)
    currents: np.ndarray  # (F, 20)
    actions: np.ndarray  # (F, 26)

    @property
    def num_frames(self) -> int:
        return int(self.joints.shape[0])


def episode_from_store(path, views: tuple[str, ...], rate_hz: float | None = None) -> EpisodeFrames:
    aligned = recorder.load_episode(path, rate_hz)
    images = {}
    for view in views:
        stream = VIEW_STREAMS[view]
        frames = aligned.samples[stream]
        if frames.dtype == np.uint8:
            frames = frames.astype(np.float32) / 255.0
        images[view] = frames.astype(np.float32)
    return EpisodeFrames(
        images=images,
        joints=aligned.samples["joints"].astype(np.float64),
        currents=aligned.samples["currents"].astype(np.float64),
        actions=aligned.samples["commands"].astype(np.float64),
    )


class DemoDataset:
    """Stacked training tensors over a set of demonstration episodes.

    Sample t of an episode pairs observation steps (t-1, t) with the
    normalized action chunk actions[t : t+horizon] (end-padded by repetition).
    """

    def __init__(
        self,
        episodes: list[EpisodeFrames],
        policy: DiffusionPolicy,
        tree: kincam.KinematicTree,
        stats: NormStats | None = None,
    ):
        config = policy.config
        views = config.views
        if stats is None:
            all_actions = np.concatenate([e.actions for e in episodes])
            all_currents = np.concatenate([e.currents for e in episodes])
            stats = NormStats.from_data(all_actions, all_currents, tree.joint_limits())
        self.stats = stats
        policy.stats = stats
        dtype = config.torch_dtype()

        feats, P_all, C_all, Q_all, A_all = [], [], [], [], []
        prev_idx, cur_idx, chunk_idx = [], [], []
        offset = 0
        keep_images = not config.encoder_frozen
        images_all = {v: [] for v in views} if keep_images else None
        for ep in episodes:
            F = ep.num_frames
            if keep_images:
                for v in views:
                    images_all[v].append(torch.as_tensor(ep.images[v], dtype=dtype))
            else:
                with torch.no_grad():
                    view_feats = [
                        policy.encoder(torch.as_tensor(ep.images[v], dtype=dtype)) for v in views
                    ]
                feats.append(torch.stack(view_feats, dim=1))  # (F, V, D)
            P = np.stack([kincam.fingertip_camera_poses(tree, q[6:])[1] for q in ep.joints])
            P_all.append(torch.as_tensor(P, dtype=dtype))
            C_all.append(torch.as_tensor(normalize_currents(ep.currents, stats), dtype=dtype))
            Q_all.append(torch.as_tensor(normalize_joints(ep.joints, stats), dtype=dtype))
            A_all.append(torch.as_tensor(normalize_actions(ep.actions, stats), dtype=dtype))
            for t in range(F):
                prev_idx.append(offset + max(t - 1, 0))
                cur_idx.append(offset + t)
                chunk_idx.append([offset + min(t + j, F - 1) for j in range(config.horizon)])
            offset += F

        self.views = views
        self.feats = torch.cat(feats) if feats else None
        self.images = {v: torch.cat(images_all[v]) for v in views} if keep_images else None
        self.P = torch.cat(P_all)
        self.C = torch.cat(C_all)
        self.Q = torch.cat(Q_all)
        self.A = torch.cat(A_all)
        self.prev_idx = torch.as_tensor(prev_idx, dtype=torch.long)
        self.cur_idx = torch.as_tensor(cur_idx, dtype=torch.long)
        self.chunk_idx = torch.as_tensor(chunk_idx, dtype=torch.long)
        self._encoder = policy.encoder

    def __len__(self) -> int:
        return int(self.prev_idx.shape[0])

    def _obs_inputs(self, frame_rows: torch.Tensor) -> dict:
        if self.feats is not None:
            feats = {v: self.feats[frame_rows, i] for i, v in enumerate(self.views)}
        else:
            feats = {v: self._encoder(self.images[v][frame_rows]) for v in self.views}
        return {
            "feats": feats,
            "P": self.P[frame_rows],
            "C_norm": self.C[frame_rows],
            "Q_norm": self.Q[frame_rows],
        }

    def batch(self, sample_rows: torch.Tensor) -> dict:
        """Rows of samples -> builder inputs plus normalized action chunks."""
        return {
            "prev": self._obs_inputs(self.prev_idx[sample_rows]),
            "cur": self._obs_inputs(self.cur_idx[sample_rows]),
            "actions": self.A[self.chunk_idx[sample_rows]],  # (B, horizon, 26)
        }
