"""Network definitions: generators, critic, encoders, latent discriminator."""

from .layers import (
    StageState,
    EqualizedDense,
    EqualizedConv3d,
    ModulatedConv3d,
    NoiseInjection,
    PixelNorm,
    upsample_nearest,
    downsample_avg,
)
from .progan import ProGenerator
from .stylegan import MappingNetwork, StyleGenerator, N_STYLE_LAYERS
from .critic import PatchCritic
from .encoder import VolumeEncoder, LatentDiscriminator
from .checkpoint import GANBundle, new_bundle, save_bundle, load_bundle

__all__ = [
    "StageState",
    "EqualizedDense",
    "EqualizedConv3d",
    "ModulatedConv3d",
    "NoiseInjection",
    "PixelNorm",
    "upsample_nearest",
    "downsample_avg",
    "ProGenerator",
    "MappingNetwork",
    "StyleGenerator",
    "N_STYLE_LAYERS",
    "PatchCritic",
    "VolumeEncoder",
    "LatentDiscriminator",
    "GANBundle",
    "new_bundle",
    "save_bundle",
    "load_bundle",
]
