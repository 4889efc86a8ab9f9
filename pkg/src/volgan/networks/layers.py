"""Shared building blocks: equalized layers, demodulated conv, noise, norms.

All dense and convolution weights are stored as standard-normal draws and
rescaled at runtime by a per-layer constant (equalized learning rate), so
the optimizer sees identically scaled parameters everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

N_STAGES = 5


@dataclass(frozen=True)
class StageState:
    """Growth position: stage 1..5 plus fade-in progress (1 = fully grown in)."""

    stage: int
    fade_alpha: float = 1.0

    def __post_init__(self):
        if not 1 <= self.stage <= N_STAGES:
            raise ValueError(f"stage must be in 1..{N_STAGES}, got {self.stage}")
        if not 0.0 <= self.fade_alpha <= 1.0:
            raise ValueError(f"fade_alpha must be in [0,1], got {self.fade_alpha}")


def stage_resolution(full_shape: tuple[int, int, int], stage: int) -> tuple[int, int, int]:
    """Spatial output extent at a growth stage: full shape over 2^(5-stage)."""
    div = 2 ** (N_STAGES - stage)
    return tuple(s // div for s in full_shape)


def channel_schedule(channel_base: int) -> list[int]:
    """Generator widths per stage, coarse to fine."""
    c = channel_base
    return [8 * c, 8 * c, 4 * c, 2 * c, c]


class EqualizedDense(nn.Module):
    """Dense layer with N(0,1) weights scaled by gain/sqrt(fan_in) at runtime."""

    def __init__(self, in_features: int, out_features: int, gain: float = math.sqrt(2.0),
                 bias: bool = True, bias_init: float = 0.0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_features, in_features))
        self.bias = nn.Parameter(torch.full((out_features,), bias_init)) if bias else None
        self.scale = gain / math.sqrt(in_features)

    def forward(self, x):
        return F.linear(x, self.weight * self.scale, self.bias)


class EqualizedConv3d(nn.Module):
    """3D convolution with runtime-equalized weight scale."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, gain: float = math.sqrt(2.0)):
        super().__init__()
        self.weight = nn.Parameter(
            torch.randn(out_channels, in_channels, kernel_size, kernel_size, kernel_size)
        )
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.scale = gain / math.sqrt(in_channels * kernel_size**3)
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return F.conv3d(x, self.weight * self.scale, self.bias,
                        stride=self.stride, padding=self.padding)


class PixelNorm(nn.Module):
    """Normalize each voxel's feature vector to roughly unit length."""

    def __init__(self, eps: float = 1e-8):
        super().__init__()
        self.eps = eps

    def forward(self, x):
        return x * torch.rsqrt(torch.mean(x * x, dim=1, keepdim=True) + self.eps)


class ModulatedConv3d(nn.Module):
    """Style-modulated 3D convolution with weight demodulation.

    Per sample, input channels are scaled by the style vector, then each
    output filter is renormalized by 1/sqrt(sum(w_mod^2) + 1e-8). Realized
    as a grouped convolution over the batch.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 demodulate: bool = True, gain: float = math.sqrt(2.0)):
        super().__init__()
        self.weight = nn.Parameter(
            torch.randn(out_channels, in_channels, kernel_size, kernel_size, kernel_size)
        )
        self.scale = gain / math.sqrt(in_channels * kernel_size**3)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.padding = kernel_size // 2
        self.demodulate = demodulate

    def forward(self, x, style):
        if style.shape != (x.shape[0], self.in_channels):
            raise ValueError(
                f"style shape {tuple(style.shape)} does not match "
                f"(batch, in_channels)=({x.shape[0]}, {self.in_channels})"
            )
        b = x.shape[0]
        w = self.weight * self.scale
        w = w.unsqueeze(0) * style[:, None, :, None, None, None]
        if self.demodulate:
            denom = torch.rsqrt(torch.sum(w * w, dim=(2, 3, 4, 5), keepdim=True) + 1e-8)
            w = w * denom
        w = w.reshape(b * self.out_channels, self.in_channels, *w.shape[3:])
        out = F.conv3d(x.reshape(1, -1, *x.shape[2:]), w, padding=self.padding, groups=b)
        return out.reshape(b, self.out_channels, *out.shape[2:])


class NoiseInjection(nn.Module):
    """Add per-channel bias plus a noise map scaled by one learnable scalar.

    The noise scale starts at zero, so a freshly initialized generator is
    deterministic; a broadcast single-channel map is drawn when none is given.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.bias = nn.Parameter(torch.zeros(channels))
        self.noise_scale = nn.Parameter(torch.zeros(()))

    def forward(self, x, noise=None, rng: torch.Generator | None = None):
        if noise is None:
            shape = (x.shape[0], 1, *x.shape[2:])
            noise = torch.randn(shape, generator=rng, dtype=x.dtype, device=x.device)
        return x + self.bias.view(1, -1, 1, 1, 1) + self.noise_scale * noise


def upsample_nearest(x):
    """Double every spatial dimension by nearest-neighbor repetition."""
    return F.interpolate(x, scale_factor=2, mode="nearest")


def downsample_avg(x):
    """Halve every spatial dimension by 2x2x2 block averaging."""
    return F.avg_pool3d(x, kernel_size=2)


def swish(x):
    return F.silu(x)


def lrelu(x):
    return F.leaky_relu(x, negative_slope=0.2)
