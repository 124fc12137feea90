"""Visuomotor diffusion policy: tokenization, DDPM training, inference."""

from .checkpoint import CheckpointError, config_hash, load_checkpoint, save_checkpoint
from .control import RolloutRecord, receding_horizon_control, replay_actions
from .core import ActionChunk, DiffusionPolicy, PolicyConfig, observation_from_sensors
from .dataset import DemoDataset, EpisodeFrames, episode_from_store
from .diffusion import DiffusionSchedule, SamplingError, ancestral_sample, q_sample
from .encoder import EncoderInputError, ViewEncoder, encode_view
from .model import ActionDenoiser
from .normalize import (
    NormStats,
    denormalize_actions,
    normalize_actions,
    normalize_currents,
    normalize_joints,
)
from .tokens import CAMERA_SETS, Observation, TokenBuilder, TokenSequence, token_widths
from .training import Trainer, masked_input_grad_norms, train_step

__all__ = [
    "ActionChunk",
    "ActionDenoiser",
    "CAMERA_SETS",
    "CheckpointError",
    "DemoDataset",
    "DiffusionPolicy",
    "DiffusionSchedule",
    "EncoderInputError",
    "EpisodeFrames",
    "NormStats",
    "Observation",
    "PolicyConfig",
    "RolloutRecord",
    "SamplingError",
    "TokenBuilder",
    "TokenSequence",
    "Trainer",
    "ViewEncoder",
    "ancestral_sample",
    "config_hash",
    "denormalize_actions",
    "encode_view",
    "episode_from_store",
    "load_checkpoint",
    "masked_input_grad_norms",
    "normalize_actions",
    "normalize_currents",
    "normalize_joints",
    "observation_from_sensors",
    "q_sample",
    "receding_horizon_control",
    "replay_actions",
    "save_checkpoint",
    "token_widths",
    "train_step",
]
