"""Training-set normalization statistics and the action [-1, 1] codec."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NormStatsError(ValueError):
    pass


@dataclass
class NormStats:
    """Per-dimension action min/max, current mean/std, and joint ranges.

    Constant action dimensions normalize to 0 and denormalize back to the
    constant; zero-variance currents are flagged by std = 1.
    """

    action_min: np.ndarray
    action_max: np.ndarray
    current_mean: np.ndarray
    current_std: np.ndarray
    joint_lower: np.ndarray
    joint_upper: np.ndarray

    def __post_init__(self):
        if not (self.action_max >= self.action_min).all():
            raise NormStatsError("action max must be >= min per dimension")
        if not (self.joint_upper > self.joint_lower).all():
            raise NormStatsError("joint ranges must be non-empty")
        if not (self.current_std > 0).all():
            raise NormStatsError("current std must be positive (constant dims use 1.0)")

    @property
    def action_constant_mask(self) -> np.ndarray:
        return self.action_max == self.action_min

    @staticmethod
    def from_data(actions: np.ndarray, currents: np.ndarray, joint_limits: np.ndarray) -> "NormStats":
        """actions (N, 26), currents (N, 20), joint_limits (26, 2)."""
        std = currents.std(axis=0)
        std = np.where(std > 1e-9, std, 1.0)
        return NormStats(
            action_min=actions.min(axis=0),
            action_max=actions.max(axis=0),
            current_mean=currents.mean(axis=0),
            current_std=std,
            joint_lower=joint_limits[:, 0].copy(),
            joint_upper=joint_limits[:, 1].copy(),
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in (
            "action_min", "action_max", "current_mean", "current_std", "joint_lower", "joint_upper")}

    @staticmethod
    def from_dict(d: dict) -> "NormStats":
        return NormStats(**{k: np.asarray(v, dtype=float) for k, v in d.items()})


def normalize_actions(x: np.ndarray, stats: NormStats) -> np.ndarray:
    """Per-dimension affine map of actions onto [-1, 1]; constant dims -> 0."""
    if stats is None:
        raise NormStatsError("normalization stats are missing")
    span = stats.action_max - stats.action_min
    safe = np.where(span > 0, span, 1.0)
    out = 2.0 * (x - stats.action_min) / safe - 1.0
    return np.where(stats.action_constant_mask, 0.0, out)


def denormalize_actions(x: np.ndarray, stats: NormStats) -> np.ndarray:
    if stats is None:
        raise NormStatsError("normalization stats are missing")
    span = stats.action_max - stats.action_min
    out = (x + 1.0) / 2.0 * span + stats.action_min
    return np.where(stats.action_constant_mask, stats.action_min, out)


def normalize_currents(c: np.ndarray, stats: NormStats) -> np.ndarray:
    return (c - stats.current_mean) / stats.current_std


def normalize_joints(q: np.ndarray, stats: NormStats) -> np.ndarray:
    return 2.0 * (q - stats.joint_lower) / (stats.joint_upper - stats.joint_lower) - 1.0
