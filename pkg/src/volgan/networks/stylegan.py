"""Style-based volumetric generator: mapping network plus synthesis network.

The synthesis network starts from a constant grid with a learned scale and
applies 15 demodulated convolutions (three per stage), each driven by its
own affine projection of w and followed by noise injection and LReLU. The
first convolution of each stage runs before the upsample.
"""

from __future__ import annotations

import torch
from torch import nn

from .layers import (
    EqualizedConv3d,
    EqualizedDense,
    ModulatedConv3d,
    NoiseInjection,
    StageState,
    channel_schedule,
    lrelu,
    upsample_nearest,
)

N_STYLE_LAYERS = 15
MAPPING_DEPTH = 6


class MappingNetwork(nn.Module):
    """Six LReLU dense layers taking z to the learned latent space W."""

    def __init__(self, latent_dim: int = 512):
        super().__init__()
        self.latent_dim = latent_dim
        self.layers = nn.ModuleList(
            EqualizedDense(latent_dim, latent_dim) for _ in range(MAPPING_DEPTH)
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ValueError(f"latent batch must be (B, {self.latent_dim}), got {tuple(z.shape)}")
        if not torch.isfinite(z).all():
            raise ValueError("non-finite latent code")
        w = z
        for layer in self.layers:
            w = lrelu(layer(w))
        return w


class StyleGenerator(nn.Module):
    """Five-stage synthesis network consuming 15 per-layer style codes.

    forward() accepts either a single w per sample, broadcast to all 15
    convolutions, or a (B, 15, 512) tensor assigning one w per convolution
    (the style-mixing hook).
    """

    def __init__(self, full_shape: tuple[int, int, int] = (32, 288, 224),
                 channel_base: int = 16, latent_dim: int = 512, const_seed: int = 0):
        super().__init__()
        if any(s % 32 for s in full_shape):
            raise ValueError(f"full shape {full_shape} must be divisible by 32")
        self.full_shape = tuple(full_shape)
        self.channel_base = channel_base
        self.latent_dim = latent_dim
        self.base_shape = tuple(s // 32 for s in full_shape)

        channels = channel_schedule(channel_base)
        rng = torch.Generator().manual_seed(const_seed)
        self.register_buffer(
            "const_input", torch.randn((channels[0], *self.base_shape), generator=rng)
        )
        self.const_scale = nn.Parameter(torch.ones(()))

        convs, noises, affines = [], [], []
        for s in range(5):
            in_ch = channels[max(s - 1, 0)]
            out_ch = channels[s]
            stage_io = [(in_ch, out_ch), (out_ch, out_ch), (out_ch, out_ch)]
            for cin, cout in stage_io:
                convs.append(ModulatedConv3d(cin, cout, 3))
                noises.append(NoiseInjection(cout))
                affines.append(EqualizedDense(latent_dim, cin, gain=1.0, bias_init=1.0))
        self.convs = nn.ModuleList(convs)
        self.noises = nn.ModuleList(noises)
        self.affines = nn.ModuleList(affines)
        self.to_image = nn.ModuleList(
            EqualizedConv3d(ch, 1, 3, padding=1, gain=1.0) for ch in channels
        )

    def _expand_styles(self, w: torch.Tensor) -> torch.Tensor:
        if w.ndim == 2:
            w = w.unsqueeze(1).expand(-1, N_STYLE_LAYERS, -1)
        if w.ndim != 3 or w.shape[1] != N_STYLE_LAYERS or w.shape[2] != self.latent_dim:
            raise ValueError(
                f"styles must be (B, {N_STYLE_LAYERS}, {self.latent_dim}) or (B, {self.latent_dim}), "
                f"got {tuple(w.shape)}"
            )
        if not torch.isfinite(w).all():
            raise ValueError("non-finite style code")
        return w

    def forward(self, w: torch.Tensor, state: StageState,
                rng: torch.Generator | None = None) -> torch.Tensor:
        """Synthesize volumes from w codes; rng pins the injected noise."""
        w = self._expand_styles(w)
        b = w.shape[0]
        x = self.const_scale * self.const_input
        x = x.unsqueeze(0).expand(b, -1, -1, -1, -1).to(w.dtype)

        prev = None
        layer = 0
        for s in range(state.stage):
            prev = x
            for j in range(3):
                if j == 1:
                    x = upsample_nearest(x)
                style = self.affines[layer](w[:, layer])
                x = self.convs[layer](x, style)
                x = lrelu(self.noises[layer](x, rng=rng))
                layer += 1

        img = torch.sigmoid(self.to_image[state.stage - 1](x))
        if state.fade_alpha < 1.0 and state.stage > 1:
            prev_img = torch.sigmoid(self.to_image[state.stage - 2](prev))
            img = state.fade_alpha * img + (1.0 - state.fade_alpha) * upsample_nearest(prev_img)
        return img

    def style_affine_matrix(self) -> torch.Tensor:
        """Row-concatenation of the 15 effective affine weights, rows x 512."""
        mats = [(a.weight * a.scale).detach() for a in self.affines]
        return torch.cat(mats, dim=0)
