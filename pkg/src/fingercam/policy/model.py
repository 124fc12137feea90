"""Noise-prediction transformer.

Noisy action chunks enter as input tokens (one per horizon step) prefixed
with a learned denoising-step token; observation tokens condition every
layer through multi-head cross-attention. An MLP head decodes each action
token back to a joint-space noise estimate.
"""
from __future__ import annotations

import torch
import torch.nn as nn


class ActionDenoiser(nn.Module):
    def __init__(
        self,
        model_dim: int = 768,
        layers: int = 4,
        heads: int = 8,
        ffn_mult: int = 4,
        horizon: int = 16,
        action_dim: int = 26,
        max_denoise_steps: int = 1000,
    ):
        super().__init__()
        self.horizon = horizon
        self.action_dim = action_dim
        self.action_in = nn.Linear(action_dim, model_dim)
        self.position_embed = nn.Parameter(torch.zeros(horizon, model_dim))
        self.step_embed = nn.Embedding(max_denoise_steps + 1, model_dim)
        layer = nn.TransformerDecoderLayer(
            d_model=model_dim,
            nhead=heads,
            dim_feedforward=ffn_mult * model_dim,
            dropout=0.0,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.decoder = nn.TransformerDecoder(layer, num_layers=layers)
        # observation tokens mix modalities with very different raw scales;
        # normalizing the memory makes cross-attention usable from the start
        self.memory_norm = nn.LayerNorm(model_dim)
        # no LayerNorm in the head: epsilon prediction needs the residual
        # stream's scale, which normalization would erase
        self.head = nn.Sequential(
            nn.Linear(model_dim, model_dim),
            nn.GELU(),
            nn.Linear(model_dim, action_dim),
        )
        nn.init.normal_(self.position_embed, std=0.02)
        nn.init.normal_(self.step_embed.weight, std=0.02)

    def forward(self, x_k: torch.Tensor, k: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        """x_k (B, horizon, action_dim), k (B,) denoise level, memory
        (B, L, model_dim) observation tokens -> predicted noise like x_k."""
        tgt = self.action_in(x_k) + self.position_embed.unsqueeze(0)
        step_tok = self.step_embed(k).unsqueeze(1)
        tgt = torch.cat([step_tok, tgt], dim=1)
        out = self.decoder(tgt, self.memory_norm(memory))
        return self.head(out[:, 1:])
