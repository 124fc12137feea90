"""Policy bundle: config, encoder, token builder, denoiser, schedule, and
normalization stats, with EMA weights and seeded sampling."""
from __future__ import annotations

import contextlib
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .. import kincam
from .diffusion import DiffusionSchedule, ancestral_sample, q_sample
from .encoder import ViewEncoder
from .model import ActionDenoiser
from .normalize import NormStats, denormalize_actions, normalize_currents, normalize_joints
from .tokens import CAMERA_SETS, Observation, TokenBuilder, TokenSequence


@dataclass
class PolicyConfig:
    camera_set: str = "full"
    use_camera_poses: bool = True
    use_joint_currents: bool = True
    model_dim: int = 768
    layers: int = 4
    heads: int = 8
    ffn_mult: int = 4
    horizon: int = 16
    exec_prefix: int = 8
    action_dim: int = 26
    denoise_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    joint_token_mode: str = "per_joint"
    encoder_frozen: bool = True
    seed: int = 0
    learning_rate: float = 1e-4
    ema_decay: float = 0.999
    dtype: str = "float32"
    # 'epsilon' regresses the injected noise (the default contract);
    # 'sample' regresses the clean chunk, which weights every noise level's
    # conditional structure equally and trains usable conditioning at small
    # step budgets
    prediction_target: str = "epsilon"

    def __post_init__(self):
        if self.exec_prefix > self.horizon:
            raise ValueError("exec_prefix must be <= horizon")
        if self.camera_set not in CAMERA_SETS:
            raise ValueError(f"unknown camera set {self.camera_set!r}")
        if self.prediction_target not in ("epsilon", "sample"):
            raise ValueError(f"unknown prediction target {self.prediction_target!r}")

    @property
    def views(self) -> tuple[str, ...]:
        return CAMERA_SETS[self.camera_set]

    def torch_dtype(self):
        return {"float32": torch.float32, "float64": torch.float64}[self.dtype]


@dataclass
class ActionChunk:
    """Predicted joint-command chunk; only the first ``exec_prefix`` actions
    are executed before re-planning."""

    actions: np.ndarray  # (horizon, 26) radians
    exec_prefix: int

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=float)
        if self.exec_prefix > self.actions.shape[0]:
            raise ValueError("exec prefix exceeds horizon")
        if not np.isfinite(self.actions).all():
            raise ValueError("action chunk contains non-finite values")

    @property
    def executed(self) -> np.ndarray:
        return self.actions[: self.exec_prefix]


class DiffusionPolicy:
    """Conditional diffusion policy over whole-body joint actions."""

    def __init__(self, config: PolicyConfig, stats: NormStats | None = None):
        self.config = config
        self.stats = stats
        torch.manual_seed(config.seed)
        dtype = config.torch_dtype()
        self.encoder = ViewEncoder(config.model_dim, frozen=config.encoder_frozen, seed=config.seed + 1)
        self.builder = TokenBuilder(
            config.model_dim,
            config.camera_set,
            use_camera_poses=config.use_camera_poses,
            use_joint_currents=config.use_joint_currents,
            joint_token_mode=config.joint_token_mode,
            num_joints=config.action_dim,
        )
        self.denoiser = ActionDenoiser(
            model_dim=config.model_dim,
            layers=config.layers,
            heads=config.heads,
            ffn_mult=config.ffn_mult,
            horizon=config.horizon,
            action_dim=config.action_dim,
            max_denoise_steps=config.denoise_steps,
        )
        if dtype is torch.float64:
            self.encoder.double()
            self.builder.double()
            self.denoiser.double()
        self.schedule = DiffusionSchedule(config.denoise_steps, config.beta_start, config.beta_end)
        self.train_steps = 0
        self._ema: dict[str, torch.Tensor] | None = None
        if config.ema_decay:
            self._ema = {n: p.detach().clone() for n, p in self.named_parameters()}

    # -- parameter plumbing ------------------------------------------------

    def trainable_modules(self):
        mods = {"builder": self.builder, "denoiser": self.denoiser}
        if not self.config.encoder_frozen:
            mods["encoder"] = self.encoder
        return mods

    def named_parameters(self):
        for mod_name, mod in self.trainable_modules().items():
            for name, p in mod.named_parameters():
                yield f"{mod_name}.{name}", p

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def all_named_tensors(self):
        """Every parameter including the (possibly frozen) encoder."""
        mods = {"builder": self.builder, "denoiser": self.denoiser, "encoder": self.encoder}
        for mod_name, mod in mods.items():
            for name, p in mod.named_parameters():
                yield f"{mod_name}.{name}", p

    def update_ema(self):
        if self._ema is None:
            return
        d = self.config.ema_decay
        with torch.no_grad():
            for name, p in self.named_parameters():
                self._ema[name].mul_(d).add_(p.detach(), alpha=1 - d)

    @contextlib.contextmanager
    def ema_weights(self):
        """Temporarily swap in the EMA parameter averages (used at eval)."""
        if self._ema is None:
            yield
            return
        backup = {}
        with torch.no_grad():
            for name, p in self.named_parameters():
                backup[name] = p.detach().clone()
                p.copy_(self._ema[name])
        try:
            yield
        finally:
            with torch.no_grad():
                for name, p in self.named_parameters():
                    p.copy_(backup[name])

    # -- observation plumbing ----------------------------------------------

    def encode_observation(self, obs: Observation) -> dict:
        """Single observation -> builder inputs (batch of one)."""
        obs.validate()
        if self.stats is None:
            raise ValueError("policy has no normalization stats; train or load first")
        dtype = self.config.torch_dtype()
        feats = {}
        with torch.no_grad():
            for view in self.config.views:
                if view not in obs.images or obs.images[view] is None:
                    raise ValueError(f"observation missing image for enabled view {view!r}")
                img = torch.as_tensor(np.asarray(obs.images[view]), dtype=dtype).unsqueeze(0)
                feats[view] = self.encoder(img)
        return {
            "feats": feats,
            "P": torch.as_tensor(obs.camera_poses, dtype=dtype).unsqueeze(0),
            "C_norm": torch.as_tensor(normalize_currents(obs.currents, self.stats), dtype=dtype).unsqueeze(0),
            "Q_norm": torch.as_tensor(normalize_joints(obs.joints, self.stats), dtype=dtype).unsqueeze(0),
        }

    def build_tokens(self, obs_prev: Observation, obs_cur: Observation) -> TokenSequence:
        with torch.no_grad():
            return self.builder(self.encode_observation(obs_prev), self.encode_observation(obs_cur))

    # -- inference -----------------------------------------------------------

    def sample_actions(self, tokens: TokenSequence, seed: int = 0, use_ema: bool = True) -> ActionChunk:
        """Ancestral DDPM sampling conditioned on the given tokens."""
        gen = torch.Generator().manual_seed(seed)
        B = tokens.tokens.shape[0]
        shape = (B, self.config.horizon, self.config.action_dim)
        ctx = self.ema_weights() if use_ema else contextlib.nullcontext()
        with torch.no_grad(), ctx:
            x0 = ancestral_sample(
                self.denoiser, tokens.tokens, self.schedule, shape, gen,
                prediction_target=self.config.prediction_target,
            )
        actions = denormalize_actions(x0.squeeze(0).numpy(), self.stats)
        return ActionChunk(actions=actions, exec_prefix=self.config.exec_prefix)


def observation_from_sensors(tree: kincam.KinematicTree, sensors) -> Observation:
    """RawSensors -> Observation, recomputing the fingertip camera pose
    matrix from the hand joint angles."""
    _, P = kincam.fingertip_camera_poses(tree, sensors.q[6:])
    images = {}
    if sensors.fingertip_images is not None:
        for i, finger in enumerate(kincam.FINGER_ORDER):
            images[finger] = sensors.fingertip_images[i]
    if sensors.third_image is not None:
        images["third"] = sensors.third_image
    if sensors.wrist_image is not None:
        images["wrist"] = sensors.wrist_image
    return Observation(images=images, camera_poses=P, currents=sensors.currents, joints=sensors.q)
