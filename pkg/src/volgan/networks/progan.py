"""Progressively grown volumetric generator.

A dense layer reshapes the latent code to a (8c, d1/32, d2/32, d3/32) grid;
five stages of [upsample, conv, conv] refine it, with per-stage sigmoid
output convolutions and smooth fade-in between consecutive stages.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .layers import (
    EqualizedConv3d,
    EqualizedDense,
    PixelNorm,
    StageState,
    channel_schedule,
    swish,
    upsample_nearest,
)


class _SynthesisBlock(nn.Module):
    """Upsample then two swish convolutions with pixelwise normalization."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = EqualizedConv3d(in_channels, out_channels, 3, padding=1)
        self.conv2 = EqualizedConv3d(out_channels, out_channels, 3, padding=1)
        self.norm = PixelNorm()

    def forward(self, x):
        x = upsample_nearest(x)
        x = self.norm(swish(self.conv1(x)))
        x = self.norm(swish(self.conv2(x)))
        return x


class ProGenerator(nn.Module):
    """Five-stage progressive generator emitting volumes in (0,1).

    full_shape is the stage-5 output extent and must be divisible by 32 on
    every axis; stage s emits full_shape / 2^(5-s).
    """

    def __init__(self, full_shape: tuple[int, int, int] = (32, 288, 224),
                 channel_base: int = 16, latent_dim: int = 512):
        super().__init__()
        if any(s % 32 for s in full_shape):
            raise ValueError(f"full shape {full_shape} must be divisible by 32")
        self.full_shape = tuple(full_shape)
        self.channel_base = channel_base
        self.latent_dim = latent_dim
        self.base_shape = tuple(s // 32 for s in full_shape)

        channels = channel_schedule(channel_base)
        base_voxels = math.prod(self.base_shape)
        self.input_dense = EqualizedDense(latent_dim, channels[0] * base_voxels, gain=1.0)
        self.blocks = nn.ModuleList(
            _SynthesisBlock(channels[max(s - 1, 0)], channels[s])
            for s in range(len(channels))
        )
        self.to_image = nn.ModuleList(
            EqualizedConv3d(ch, 1, 3, padding=1, gain=1.0) for ch in channels
        )

    def forward(self, z: torch.Tensor, state: StageState) -> torch.Tensor:
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ValueError(f"latent batch must be (B, {self.latent_dim}), got {tuple(z.shape)}")
        if not torch.isfinite(z).all():
            raise ValueError("non-finite latent code")

        x = self.input_dense(z)
        x = x.reshape(z.shape[0], -1, *self.base_shape)
        prev = None
        for s in range(state.stage):
            prev = x
            x = self.blocks[s](x)

        img = torch.sigmoid(self.to_image[state.stage - 1](x))
        if state.fade_alpha < 1.0 and state.stage > 1:
            # prev holds the stage-(s-1) features; its image is upsampled and blended in
            prev_img = torch.sigmoid(self.to_image[state.stage - 2](prev))
            img = state.fade_alpha * img + (1.0 - state.fade_alpha) * upsample_nearest(prev_img)
        return img

    def first_linear_matrix(self) -> torch.Tensor:
        """Effective weight of the latent-facing dense layer, rows x 512."""
        return (self.input_dense.weight * self.input_dense.scale).detach()
