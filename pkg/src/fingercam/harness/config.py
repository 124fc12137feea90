"""Experiment configuration: a documented key=value text format with
include/override semantics, validated into a typed ExperimentConfig.

Format rules: one `key = value` per line; `#` starts a comment;
`include <relative-path>` splices another file's keys (later assignments
override earlier ones, so post-include lines win). Values are parsed as
bool/int/float when they look like one, else kept as strings.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..policy.tokens import CAMERA_SETS
from ..simworld.tasks import TASK_IDS, get_task


class ConfigError(ValueError):
    """Raised for malformed config files or invalid/unknown keys."""


def parse_config_text(text: str, base_dir: Path | None = None) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("include"):
            rel = line[len("include"):].strip()
            if not rel:
                raise ConfigError(f"line {lineno}: include needs a path")
            inc = (base_dir or Path(".")) / rel
            if not inc.exists():
                raise ConfigError(f"line {lineno}: include file not found: {inc}")
            out.update(parse_config_text(inc.read_text(), inc.parent))
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = _coerce(value)
    return out


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), path.parent)


@dataclass
class ExperimentConfig:
    task: str = "button"
    camera_set: str = "full"
    use_camera_poses: bool = True
    use_joint_currents: bool = True

    demos: int = 100
    demo_scenario: str = "nominal"
    demo_seed0: int = 0

    train_steps: int = 5000
    batch_size: int = 32
    learning_rate: float = 1e-3
    model_dim: int = 96
    layers: int = 3
    heads: int = 8
    ffn_mult: int = 4
    # the top noise level must be (nearly) pure noise for ancestral sampling:
    # alpha_bar_K = prod(1-beta) ~ 0.02 with these values
    denoise_steps: int = 16
    beta_start: float = 0.02
    beta_end: float = 0.45
    # sample prediction weights every noise level's conditional structure
    # equally; epsilon prediction barely rewards conditioning at high noise
    # and needs far larger training budgets (see README notes)
    prediction_target: str = "sample"
    joint_token_mode: str = "per_joint"
    encoder_frozen: bool = True
    ema_decay: float = 0.999
    seed: int = 0

    eval_scenarios: str = "nominal:50"
    eval_seed0: int = 10000
    episode_len: int = 0  # 0 -> task default

    frame_rate_hz: float = 10.0
    wrist_camera: bool = False
    noise_sigma: float = 1.0
    out_dir: str = "runs/exp"

    def __post_init__(self):
        try:
            get_task(self.task)
        except Exception as e:
            raise ConfigError(str(e)) from None
        if self.camera_set not in CAMERA_SETS:
            raise ConfigError(f"invalid camera_set {self.camera_set!r}; valid: {sorted(CAMERA_SETS)}")
        if "wrist" in CAMERA_SETS[self.camera_set] and not self.wrist_camera:
            raise ConfigError(f"camera_set {self.camera_set!r} needs wrist_camera = true in the sim config")
        if self.demos < 1:
            raise ConfigError("demos must be >= 1")
        for scenario, count in self.eval_pairs():
            if count < 1:
                raise ConfigError(f"rollout count for {scenario!r} must be >= 1")

    @staticmethod
    def from_dict(data: dict, **overrides) -> "ExperimentConfig":
        merged = dict(data)
        merged.update(overrides)
        valid = {f.name for f in fields(ExperimentConfig)}
        unknown = sorted(set(merged) - valid)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return ExperimentConfig(**merged)

    @staticmethod
    def from_file(path, **overrides) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(load_config_file(path), **overrides)

    def eval_pairs(self) -> list[tuple[str, int]]:
        pairs = []
        for item in str(self.eval_scenarios).split(","):
            item = item.strip()
            if not item:
                continue
            if ":" in item:
                scenario, count = item.split(":", 1)
                pairs.append((scenario.strip(), int(count)))
            else:
                pairs.append((item, 50))
        if not pairs:
            raise ConfigError("eval_scenarios must name at least one scenario")
        task = get_task(self.task)
        for scenario, _ in pairs:
            if scenario not in task.scenarios:
                raise ConfigError(f"unknown eval scenario {scenario!r} for task {self.task!r}")
        return pairs

    def eval_seeds(self, count: int) -> list[int]:
        """Seed list shared by every config evaluated in one comparison."""
        return [self.eval_seed0 + i for i in range(count)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]

    def policy_config(self):
        from ..policy import PolicyConfig

        return PolicyConfig(
            camera_set=self.camera_set,
            use_camera_poses=self.use_camera_poses,
            use_joint_currents=self.use_joint_currents,
            model_dim=self.model_dim,
            layers=self.layers,
            heads=self.heads,
            ffn_mult=self.ffn_mult,
            denoise_steps=self.denoise_steps,
            beta_start=self.beta_start,
            beta_end=self.beta_end,
            joint_token_mode=self.joint_token_mode,
            encoder_frozen=self.encoder_frozen,
            seed=self.seed,
            learning_rate=self.learning_rate,
            ema_decay=self.ema_decay,
            prediction_target=self.prediction_target,
        )

    def world_config(self):
        from ..simworld import WorldConfig

        return WorldConfig(wrist_camera=self.wrist_camera, noise_sigma=self.noise_sigma)
