"""DDPM training loop: noise-prediction regression with seeded determinism,
EMA tracking, and per-step gradient logs for the masked-input assertions."""
from __future__ import annotations

import logging

import torch

from .core import DiffusionPolicy
from .dataset import DemoDataset
from .diffusion import q_sample

logger = logging.getLogger(__name__)


def train_step(
    policy: DiffusionPolicy,
    batch: dict,
    optimizer: torch.optim.Optimizer,
    generator: torch.Generator,
) -> float:
    """One optimization step of the denoising objective.

    Samples a noise level uniformly from 1..K and Gaussian noise per batch
    element, regresses the model's noise estimate, and applies one optimizer
    step plus an EMA update. A non-finite loss aborts the step (parameters
    untouched) and is reported via logging.
    """
    x0 = batch["actions"]
    B = x0.shape[0]
    K = policy.schedule.K
    k = torch.randint(1, K + 1, (B,), generator=generator)
    noise = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    x_k = q_sample(x0, k, noise, policy.schedule)

    tokens = policy.builder(batch["prev"], batch["cur"])
    pred = policy.denoiser(x_k, k, tokens.tokens)
    target = noise if policy.config.prediction_target == "epsilon" else x0
    loss = torch.mean((pred - target) ** 2)

    if not torch.isfinite(loss):
        logger.warning("non-finite training loss %s; step aborted", loss.item())
        optimizer.zero_grad(set_to_none=True)
        return float(loss.item())

    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    policy.update_ema()
    policy.train_steps += 1
    return float(loss.item())


def masked_input_grad_norms(policy: DiffusionPolicy) -> dict[str, float]:
    """Max-abs gradient currently held by the pose and current projection
    parameters (zero whenever the corresponding input is ablated)."""
    out = {}
    builder = policy.builder
    for label, attr in (("pose", "position_proj"), ("pose", "rotation_proj"), ("current", "current_proj")):
        mod = getattr(builder, attr, None)
        if mod is None:
            continue
        worst = 0.0
        for p in mod.parameters():
            if p.grad is not None:
                worst = max(worst, float(p.grad.abs().max()))
        out[label] = max(out.get(label, 0.0), worst)
    return out


class Trainer:
    """Seeded mini-batch training over a DemoDataset."""

    def __init__(
        self,
        policy: DiffusionPolicy,
        dataset: DemoDataset,
        batch_size: int = 32,
        learning_rate: float | None = None,
        seed: int | None = None,
        lr_schedule: dict[int, float] | None = None,
    ):
        self.policy = policy
        self.dataset = dataset
        self.batch_size = batch_size
        lr = policy.config.learning_rate if learning_rate is None else learning_rate
        self.optimizer = torch.optim.Adam(policy.parameters(), lr=lr)
        self.generator = torch.Generator().manual_seed(policy.config.seed if seed is None else seed)
        self.lr_schedule = dict(lr_schedule or {})
        self.history: dict[str, list[float]] = {"loss": [], "pose_grad": [], "current_grad": []}
        self._order = torch.empty(0, dtype=torch.long)
        self._pos = 0
        self._step_index = 0

    def _next_rows(self) -> torch.Tensor:
        n = len(self.dataset)
        rows = []
        need = min(self.batch_size, n)
        while need > 0:
            if self._pos >= self._order.numel():
                self._order = torch.randperm(n, generator=self.generator)
                self._pos = 0
            take = min(need, self._order.numel() - self._pos)
            rows.append(self._order[self._pos : self._pos + take])
            self._pos += take
            need -= take
        return torch.cat(rows)

    def step(self) -> float:
        if self._step_index in self.lr_schedule:
            for group in self.optimizer.param_groups:
                group["lr"] = self.lr_schedule[self._step_index]
        self._step_index += 1
        batch = self.dataset.batch(self._next_rows())
        loss = train_step(self.policy, batch, self.optimizer, self.generator)
        grads = masked_input_grad_norms(self.policy)
        self.history["loss"].append(loss)
        self.history["pose_grad"].append(grads.get("pose", 0.0))
        self.history["current_grad"].append(grads.get("current", 0.0))
        return loss

    def run(self, steps: int, log_every: int = 0) -> list[float]:
        for i in range(steps):
            loss = self.step()
            if log_every and (i + 1) % log_every == 0:
                logger.info("step %d loss %.5f", i + 1, loss)
        return self.history["loss"]
