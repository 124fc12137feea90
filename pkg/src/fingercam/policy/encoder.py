"""Pluggable view encoder.

Stands in for a large pretrained vision backbone: a small convolutional
network with a spatial-grid readout, emitting one fixed-width feature per
view at any input resolution. In frozen mode (the default) the parameters
are seeded at construction and never updated by training.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn


class EncoderInputError(ValueError):
    """Raised for images outside [0, 1] or with a bad shape."""


class ViewEncoder(nn.Module):
    """image (H, W, 3) in [0, 1] -> feature vector of width ``feature_dim``."""

    def __init__(self, feature_dim: int = 768, frozen: bool = True, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.feature_dim = feature_dim
        self.frozen = frozen
        self.conv = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.GELU(),
        )
        self.pool = nn.AdaptiveAvgPool2d((6, 6))
        self.out = nn.Linear(64 * 36, feature_dim)
        with torch.no_grad():
            for p in self.parameters():
                if p.dim() > 1:
                    nn.init.kaiming_uniform_(p, a=5**0.5, generator=gen)
                else:
                    p.zero_()
        if frozen:
            self.requires_grad_(False)
            self.eval()

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, H, W, 3) -> (B, feature_dim)."""
        if images.dim() != 4 or images.shape[-1] != 3:
            raise EncoderInputError(f"expected (B, H, W, 3) images, got {tuple(images.shape)}")
        if float(images.min()) < -1e-6 or float(images.max()) > 1.0 + 1e-6:
            raise EncoderInputError("image values must lie in [0, 1]")
        x = images.permute(0, 3, 1, 2) - 0.5
        x = self.pool(self.conv(x)).flatten(1)
        return self.out(x)

    def encode_view(self, image: np.ndarray) -> np.ndarray:
        """Single (H, W, 3) image in [0, 1] -> (feature_dim,) numpy vector."""
        t = torch.as_tensor(np.asarray(image), dtype=torch.float32).unsqueeze(0)
        with torch.no_grad():
            return self.forward(t).squeeze(0).numpy()


def encode_view(encoder: ViewEncoder, image: np.ndarray) -> np.ndarray:
    return encoder.encode_view(image)
