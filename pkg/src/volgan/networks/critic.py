"""Staged Wasserstein critic with a patch-map head.

Five strided convolutions walk the resolution down to the base grid, where
a 1-channel convolution emits patch realness scores; the scalar critic
value is their mean. Per-stage input convolutions link the image domain to
the feature widths, mirroring the generator ladder in reverse.
"""

from __future__ import annotations

import torch
from torch import nn

from .layers import (
    EqualizedConv3d,
    StageState,
    channel_schedule,
    downsample_avg,
    lrelu,
    stage_resolution,
)


class PatchCritic(nn.Module):
    """Scores volumes at any growth stage; unbounded patch scores plus mean."""

    def __init__(self, full_shape: tuple[int, int, int] = (32, 288, 224),
                 channel_base: int = 16):
        super().__init__()
        if any(s % 32 for s in full_shape):
            raise ValueError(f"full shape {full_shape} must be divisible by 32")
        self.full_shape = tuple(full_shape)
        self.channel_base = channel_base

        # widths while descending: entry c, then 2c, 4c, 8c, 8c, 8c at the base
        gen_widths = channel_schedule(channel_base)[::-1]  # [c, 2c, 4c, 8c, 8c]
        trunk_out = gen_widths[1:] + [8 * channel_base]    # [2c, 4c, 8c, 8c, 8c]
        self.blocks = nn.ModuleList(
            EqualizedConv3d(gen_widths[i], trunk_out[i], 3, stride=2, padding=1)
            for i in range(5)
        )
        # from_image[s-1] feeds stage s, entering the trunk at block 5-s
        entry_widths = [gen_widths[5 - s] for s in range(1, 6)]
        self.from_image = nn.ModuleList(
            EqualizedConv3d(1, width, 3, padding=1) for width in entry_widths
        )
        self.out_conv = EqualizedConv3d(8 * channel_base, 1, 3, padding=1, gain=1.0)

    def _check_input(self, x: torch.Tensor, state: StageState) -> None:
        expected = stage_resolution(self.full_shape, state.stage)
        if x.ndim != 5 or x.shape[1] != 1:
            raise ValueError(f"input must be (B, 1, d1, d2, d3), got {tuple(x.shape)}")
        if tuple(x.shape[2:]) != expected:
            raise ValueError(
                f"stage {state.stage} expects spatial shape {expected}, got {tuple(x.shape[2:])}"
            )

    def _trunk(self, x: torch.Tensor, state: StageState) -> torch.Tensor:
        """Features at the base grid (after all strided convolutions)."""
        self._check_input(x, state)
        entry = 5 - state.stage
        h = lrelu(self.from_image[state.stage - 1](x))
        h = lrelu(self.blocks[entry](h))
        if state.fade_alpha < 1.0 and state.stage > 1:
            skip = lrelu(self.from_image[state.stage - 2](downsample_avg(x)))
            h = state.fade_alpha * h + (1.0 - state.fade_alpha) * skip
        for i in range(entry + 1, 5):
            h = lrelu(self.blocks[i](h))
        return h

    def forward(self, x: torch.Tensor, state: StageState) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (patch score map, per-sample mean score)."""
        h = self._trunk(x, state)
        scores = self.out_conv(h)
        return scores, scores.mean(dim=(1, 2, 3, 4))

    def score(self, x: torch.Tensor, state: StageState) -> torch.Tensor:
        """Scalar critic value per sample."""
        return self.forward(x, state)[1]

    def penultimate_features(self, x: torch.Tensor, state: StageState) -> torch.Tensor:
        """Flattened features feeding the output convolution, one row per sample."""
        h = self._trunk(x, state)
        return h.reshape(h.shape[0], -1)
