"""Denoising-diffusion machinery: noise schedule, forward noising, and
ancestral sampling over action chunks.

Index convention: noise levels run k = 0..K where level 0 is the clean
signal (alpha_bar[0] = 1 by convention) and level K is (nearly) pure noise.
Training draws k uniformly from 1..K; sampling walks K -> 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch


class SamplingError(RuntimeError):
    """Raised when a denoising step produces non-finite values."""


@dataclass
class DiffusionSchedule:
    """Linear-beta DDPM schedule with K denoising steps."""

    num_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    betas: np.ndarray = field(init=False)
    alphas: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)  # length K+1, alpha_bar[0] = 1

    def __post_init__(self):
        K = self.num_steps
        if K < 1:
            raise ValueError("schedule needs at least one step")
        self.betas = np.linspace(self.beta_start, self.beta_end, K)
        if not ((self.betas > 0) & (self.betas < 1)).all():
            raise ValueError("all betas must lie in (0, 1)")
        self.alphas = 1.0 - self.betas
        self.alpha_bar = np.concatenate([[1.0], np.cumprod(self.alphas)])
        if not (np.diff(self.alpha_bar) < 0).all():
            raise ValueError("alpha_bar must be strictly decreasing")

    @property
    def K(self) -> int:
        return self.num_steps

    def beta(self, k: int) -> float:
        """beta for the transition to noise level k (k in 1..K)."""
        return float(self.betas[k - 1])

    def to_dict(self) -> dict:
        return {"num_steps": self.num_steps, "beta_start": self.beta_start, "beta_end": self.beta_end}


def q_sample(x0: torch.Tensor, k, noise: torch.Tensor, schedule: DiffusionSchedule) -> torch.Tensor:
    """Forward noising: x_k = sqrt(abar_k) x0 + sqrt(1 - abar_k) noise.

    ``k`` may be an int or a (B,) tensor of per-sample levels in 0..K;
    k = 0 returns x0 exactly.
    """
    k_arr = torch.as_tensor(k, dtype=torch.long)
    if k_arr.dim() == 0:
        k_arr = k_arr.expand(x0.shape[0])
    if int(k_arr.min()) < 0 or int(k_arr.max()) > schedule.K:
        raise ValueError(f"noise level k must be in [0, {schedule.K}]")
    abar = torch.as_tensor(schedule.alpha_bar, dtype=x0.dtype, device=x0.device)[k_arr]
    shape = (-1,) + (1,) * (x0.dim() - 1)
    return abar.sqrt().reshape(shape) * x0 + (1.0 - abar).sqrt().reshape(shape) * noise


def ancestral_sample(
    model,
    memory: torch.Tensor,
    schedule: DiffusionSchedule,
    shape: tuple[int, ...],
    generator: torch.Generator,
    prediction_target: str = "epsilon",
) -> torch.Tensor:
    """DDPM ancestral sampling of a normalized action chunk.

    ``model(x_k, k, memory)`` predicts the noise when ``prediction_target``
    is 'epsilon', or the clean sample when it is 'sample' (the posterior
    mean is then formed from the clamped x0 estimate). Starts from Gaussian
    noise at level K and walks down to the clean sample.
    """
    device = memory.device
    dtype = memory.dtype
    x = torch.randn(shape, generator=generator, dtype=dtype, device=device)
    abar = schedule.alpha_bar
    for k in range(schedule.K, 0, -1):
        k_t = torch.full((shape[0],), k, dtype=torch.long, device=device)
        pred = model(x, k_t, memory)
        beta = schedule.beta(k)
        alpha = 1.0 - beta
        if prediction_target == "epsilon":
            mean = (x - beta / np.sqrt(1.0 - abar[k]) * pred) / np.sqrt(alpha)
        else:
            x0_hat = pred.clamp(-1.0, 1.0)
            coef0 = np.sqrt(abar[k - 1]) * beta / (1.0 - abar[k])
            coefk = np.sqrt(alpha) * (1.0 - abar[k - 1]) / (1.0 - abar[k])
            mean = coef0 * x0_hat + coefk * x
        if k > 1:
            var = beta * (1.0 - abar[k - 1]) / (1.0 - abar[k])
            noise = torch.randn(shape, generator=generator, dtype=dtype, device=device)
            x = mean + np.sqrt(var) * noise
        else:
            x = mean
        if not torch.isfinite(x).all():
            raise SamplingError(f"non-finite sample at denoising step k={k}")
    return x
