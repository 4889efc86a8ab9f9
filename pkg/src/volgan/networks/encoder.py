"""Inversion encoder and the latent-space discriminator.

The encoder mirrors the generator upside down: five [conv, conv, pool]
stages walk a full-resolution volume to the base grid, a dense layer maps
it to a 512-vector. No pixelwise feature normalization anywhere. The
style variant appends two LReLU dense layers at the bottom.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .layers import EqualizedConv3d, EqualizedDense, channel_schedule, downsample_avg, lrelu, swish


class _EncoderBlock(nn.Module):
    """Two convolutions then 2x block-average downsampling."""

    def __init__(self, in_channels: int, out_channels: int, activation):
        super().__init__()
        self.conv1 = EqualizedConv3d(in_channels, out_channels, 3, padding=1)
        self.conv2 = EqualizedConv3d(out_channels, out_channels, 3, padding=1)
        self.activation = activation

    def forward(self, x):
        x = self.activation(self.conv1(x))
        x = self.activation(self.conv2(x))
        return downsample_avg(x)


class VolumeEncoder(nn.Module):
    """Maps a full-resolution volume to a 512-dim latent code.

    arch selects the activation family and head: the progressive variant
    uses swish and a single dense head, the style variant uses LReLU and
    two extra dense layers at the bottom.
    """

    def __init__(self, full_shape: tuple[int, int, int] = (32, 288, 224),
                 channel_base: int = 16, latent_dim: int = 512, arch: str = "progan"):
        super().__init__()
        if arch not in ("progan", "stylegan"):
            raise ValueError(f"arch must be progan or stylegan, got {arch!r}")
        if any(s % 32 for s in full_shape):
            raise ValueError(f"full shape {full_shape} must be divisible by 32")
        self.full_shape = tuple(full_shape)
        self.channel_base = channel_base
        self.latent_dim = latent_dim
        self.arch = arch

        widths = channel_schedule(channel_base)[::-1]  # [c, 2c, 4c, 8c, 8c]
        outs = widths[1:] + [8 * channel_base]
        activation = swish if arch == "progan" else lrelu
        self.from_image = EqualizedConv3d(1, widths[0], 3, padding=1)
        self.blocks = nn.ModuleList(
            _EncoderBlock(widths[i], outs[i], activation) for i in range(5)
        )
        self.activation = activation
        base_voxels = math.prod(s // 32 for s in full_shape)
        self.head = EqualizedDense(8 * channel_base * base_voxels, latent_dim, gain=1.0)
        if arch == "stylegan":
            self.extra = nn.ModuleList(
                EqualizedDense(latent_dim, latent_dim) for _ in range(2)
            )
        else:
            self.extra = nn.ModuleList()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 5 or x.shape[1] != 1 or tuple(x.shape[2:]) != self.full_shape:
            raise ValueError(
                f"input must be (B, 1, {', '.join(map(str, self.full_shape))}), got {tuple(x.shape)}"
            )
        h = self.activation(self.from_image(x))
        for block in self.blocks:
            h = block(h)
        code = self.head(h.reshape(h.shape[0], -1))
        for layer in self.extra:
            code = layer(lrelu(code))
        return code


class LatentDiscriminator(nn.Module):
    """Judges whether a 512-vector lies in the learned latent space W.

    Three dense layers 512 -> 256 -> 128 -> 1 with LReLU and a sigmoid head;
    output is strictly inside (0,1).
    """

    def __init__(self, latent_dim: int = 512):
        super().__init__()
        self.latent_dim = latent_dim
        self.dense1 = EqualizedDense(latent_dim, 256)
        self.dense2 = EqualizedDense(256, 128)
        self.dense3 = EqualizedDense(128, 1, gain=1.0)

    def forward(self, code: torch.Tensor) -> torch.Tensor:
        if code.ndim != 2 or code.shape[1] != self.latent_dim:
            raise ValueError(f"code batch must be (B, {self.latent_dim}), got {tuple(code.shape)}")
        h = lrelu(self.dense1(code))
        h = lrelu(self.dense2(h))
        return torch.sigmoid(self.dense3(h)).squeeze(1)
