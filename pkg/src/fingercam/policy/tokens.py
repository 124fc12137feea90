"""Observation tokenization.

Each enabled fingertip camera contributes one token per observation step:
a shared visual projection concatenated with that camera's pose embedding
(position and 6-D rotation projected separately) and its finger's current
embedding. The third (and optional wrist) view projects through its own
full-width layer. Joint angles contribute per-joint tokens by default. A
learned observation-step embedding distinguishes the previous and current
steps. Ablation flags zero the pose/current slices, which also zeroes
their gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from ..kincam import FINGER_ORDER
from .normalize import NormStats, normalize_currents, normalize_joints

CAMERA_SETS = {
    "full": FINGER_ORDER + ("third",),
    "ftc": FINGER_ORDER,
    "tvc": ("third",),
    "wc": ("wrist",),
    "tvc_wc": ("third", "wrist"),
    "ftc_wc": FINGER_ORDER + ("wrist",),
    "full_wc": FINGER_ORDER + ("third", "wrist"),
}


class TokenShapeError(ValueError):
    pass


def token_widths(model_dim: int) -> dict[str, int]:
    """Slice widths for fingertip tokens. At the default 768 these are
    exactly 384 visual + 128 position + 128 rotation + 128 current; other
    widths split proportionally with largest-remainder rounding."""
    visual = model_dim // 2
    rest = model_dim - visual
    base, rem = divmod(rest, 3)
    return {
        "visual": visual,
        "position": base + (1 if rem >= 1 else 0),
        "rotation": base + (1 if rem >= 2 else 0),
        "current": base,
    }


@dataclass
class Observation:
    """One timestep: per-view images, camera pose matrix, currents, joints."""

    images: dict[str, np.ndarray]  # view name -> (H, W, 3) in [0, 1]
    camera_poses: np.ndarray  # (5, 9): position + 6-D rotation per fingertip
    currents: np.ndarray  # (20,)
    joints: np.ndarray  # (26,)

    def validate(self) -> None:
        if np.asarray(self.camera_poses).shape != (5, 9):
            raise TokenShapeError(f"camera pose matrix must be 5x9, got {np.asarray(self.camera_poses).shape}")
        if np.asarray(self.currents).shape != (20,):
            raise TokenShapeError("currents must be a 20-vector")
        if np.asarray(self.joints).shape != (26,):
            raise TokenShapeError("joints must be a 26-vector")


@dataclass
class TokenSequence:
    """(B, L, D) conditioning tokens plus a per-token layout descriptor of
    (kind, identifier, observation step) triples."""

    tokens: torch.Tensor
    layout: tuple[tuple[str, str, int], ...]

    @property
    def length(self) -> int:
        return int(self.tokens.shape[-2])

    @property
    def width(self) -> int:
        return int(self.tokens.shape[-1])


class TokenBuilder(nn.Module):
    def __init__(
        self,
        model_dim: int,
        camera_set: str,
        use_camera_poses: bool = True,
        use_joint_currents: bool = True,
        joint_token_mode: str = "per_joint",
        num_joints: int = 26,
    ):
        super().__init__()
        if camera_set not in CAMERA_SETS:
            raise TokenShapeError(f"unknown camera set {camera_set!r}; valid: {sorted(CAMERA_SETS)}")
        if joint_token_mode not in ("per_joint", "single"):
            raise TokenShapeError(f"unknown joint token mode {joint_token_mode!r}")
        self.model_dim = model_dim
        self.camera_set = camera_set
        self.views = CAMERA_SETS[camera_set]
        self.fingertip_views = tuple(v for v in self.views if v in FINGER_ORDER)
        self.global_views = tuple(v for v in self.views if v not in FINGER_ORDER)
        self.use_camera_poses = use_camera_poses
        self.use_joint_currents = use_joint_currents
        self.joint_token_mode = joint_token_mode
        self.num_joints = num_joints

        w = token_widths(model_dim)
        self.widths = w
        if model_dim == 768:
            assert (w["visual"], w["position"], w["rotation"], w["current"]) == (384, 128, 128, 128)

        if self.fingertip_views:
            self.fingertip_proj = nn.Linear(model_dim, w["visual"])  # shared across fingertips
            self.position_proj = nn.Linear(3, w["position"])
            self.rotation_proj = nn.Linear(6, w["rotation"])
            self.current_proj = nn.Linear(4, w["current"])  # applied per finger
        self.global_projs = nn.ModuleDict({v: nn.Linear(model_dim, model_dim) for v in self.global_views})

        if joint_token_mode == "per_joint":
            self.joint_scalar = nn.Linear(1, model_dim)
            self.joint_index_embed = nn.Embedding(num_joints, model_dim)
        else:
            self.joint_vector = nn.Linear(num_joints, model_dim)
        self.obs_step_embed = nn.Embedding(2, model_dim)

    @property
    def tokens_per_step(self) -> int:
        joints = self.num_joints if self.joint_token_mode == "per_joint" else 1
        return len(self.views) + joints

    @property
    def sequence_length(self) -> int:
        return 2 * self.tokens_per_step

    def _fingertip_slice_mask(self, dtype) -> torch.Tensor:
        """Per-channel mask so ablated slices of fingertip tokens stay
        exactly zero (including their share of the step embedding)."""
        w = self.widths
        mask = torch.ones(self.model_dim, dtype=dtype)
        if not self.use_camera_poses:
            mask[w["visual"] : w["visual"] + w["position"] + w["rotation"]] = 0.0
        if not self.use_joint_currents:
            mask[w["visual"] + w["position"] + w["rotation"] :] = 0.0
        return mask

    def _step_tokens(self, feats, P, C_norm, Q_norm, step: int):
        pose_flag = 1.0 if self.use_camera_poses else 0.0
        cur_flag = 1.0 if self.use_joint_currents else 0.0
        step_vec = self.obs_step_embed.weight[step].view(1, -1)
        tokens = []
        layout = []
        if self.fingertip_views:
            tip_step = step_vec * self._fingertip_slice_mask(step_vec.dtype)
        for view in self.fingertip_views:
            i = FINGER_ORDER.index(view)
            visual = self.fingertip_proj(feats[view])
            pos = pose_flag * self.position_proj(P[:, i, :3])
            rot = pose_flag * self.rotation_proj(P[:, i, 3:])
            cur = cur_flag * self.current_proj(C_norm[:, 4 * i : 4 * i + 4])
            tokens.append(torch.cat([visual, pos, rot, cur], dim=-1) + tip_step)
            layout.append(("camera", view, step))
        for view in self.global_views:
            tokens.append(self.global_projs[view](feats[view]) + step_vec)
            layout.append(("camera", view, step))
        if self.joint_token_mode == "per_joint":
            per = self.joint_scalar(Q_norm.unsqueeze(-1))  # (B, 26, D)
            per = per + self.joint_index_embed.weight.unsqueeze(0) + step_vec.unsqueeze(0)
            for j in range(self.num_joints):
                layout.append(("joint", str(j), step))
            tokens = [t.unsqueeze(1) for t in tokens] + [per]
            stacked = torch.cat(tokens, dim=1)
        else:
            tokens.append(self.joint_vector(Q_norm) + step_vec)
            layout.append(("joint", "all", step))
            stacked = torch.stack(tokens, dim=1)
        return stacked, layout

    def forward(self, prev: dict, cur: dict) -> TokenSequence:
        """Each of ``prev``/``cur`` maps: 'feats' (view -> (B, model_dim)),
        'P' (B, 5, 9), 'C_norm' (B, 20), 'Q_norm' (B, 26)."""
        for d in (prev, cur):
            if d["P"].shape[-2:] != (5, 9):
                raise TokenShapeError(f"camera pose matrix must be (B, 5, 9), got {tuple(d['P'].shape)}")
        t0, l0 = self._step_tokens(prev["feats"], prev["P"], prev["C_norm"], prev["Q_norm"], 0)
        t1, l1 = self._step_tokens(cur["feats"], cur["P"], cur["C_norm"], cur["Q_norm"], 1)
        return TokenSequence(tokens=torch.cat([t0, t1], dim=1), layout=tuple(l0 + l1))
