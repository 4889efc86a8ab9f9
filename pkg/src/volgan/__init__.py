"""Volumetric GAN toolkit: training, inversion and latent-space exploration
for progressively grown and style-based 3D generators."""

from .volume import (
    Volume,
    VolumeFormatError,
    PhantomSpec,
    make_phantom,
    phantom_corpus,
    read_volume,
    write_volume,
)

__version__ = "0.1.0"

__all__ = [
    "Volume",
    "VolumeFormatError",
    "PhantomSpec",
    "make_phantom",
    "phantom_corpus",
    "read_volume",
    "write_volume",
    "__version__",
]
