"""Preprocessing pipeline for raw scans.

Steps: constant-size centered crop/pad with mirrored padding, synthesis of a
noise volume by clipping cosine-basis coefficients, replacement of padded
regions by that noise, block-average subsampling, overlapping slice-stack
splitting, and random in-plane rotation/zoom augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy.ndimage import affine_transform

from .volume import Volume

PAPER_TARGET_SHAPE = (168, 576, 448)
PAPER_DCT_CLIP = 1000.0


@dataclass(frozen=True)
class PreprocessConfig:
    target_shape: tuple[int, int, int] = PAPER_TARGET_SHAPE
    dct_clip: float = PAPER_DCT_CLIP
    subsample_factor: int = 2
    stack_depth: int = 32
    n_stacks: int = 4
    rot_range_deg: tuple[float, float] = (-10.0, 10.0)
    zoom_range: tuple[float, float] = (1.0, 1.15)

    def validate(self) -> None:
        d1, d2, d3 = self.target_shape
        f = self.subsample_factor
        if f < 1:
            raise ValueError("subsample_factor must be >= 1")
        if d2 % f or d3 % f or d1 % f:
            raise ValueError(f"target shape {self.target_shape} not divisible by factor {f}")
        train_shape = (self.stack_depth, d2 // f, d3 // f)
        if any(s % 32 for s in train_shape):
            raise ValueError(
                f"training shape {train_shape} must be divisible by 32 on every axis"
            )
        if self.stack_depth > d1 // f:
            raise ValueError("stack_depth exceeds subsampled depth")
        if self.zoom_range[0] < 1.0:
            raise ValueError("zoom factors must be >= 1 (zoom-in only)")

    @property
    def train_shape(self) -> tuple[int, int, int]:
        f = self.subsample_factor
        return (self.stack_depth, self.target_shape[1] // f, self.target_shape[2] // f)


def _pad_crop_amounts(src: int, target: int) -> tuple[int, int, int]:
    """(crop_start, pad_left, pad_right) for one axis."""
    if src >= target:
        return (src - target) // 2, 0, 0
    total = target - src
    left = total // 2
    return 0, left, total - left


def pad_or_crop(volume: Volume, target: tuple[int, int, int]) -> Volume:
    """Center-crop or mirror-pad each axis to the target extent.

    Padding reflects about the boundary without repeating the edge voxel;
    a pad exceeding the source extent tiles the reflection.
    """
    data = volume.data
    pads = []
    for axis, (src, tgt) in enumerate(zip(data.shape, target)):
        start, left, right = _pad_crop_amounts(src, tgt)
        if start or src > tgt:
            data = np.take(data, np.arange(start, start + tgt), axis=axis)
        pads.append((left, right))
    if any(l or r for l, r in pads):
        data = np.pad(data, pads, mode="reflect")
    return volume.with_data(data.astype(np.float32))


def pad_mask(src_shape: tuple[int, int, int], target: tuple[int, int, int]) -> np.ndarray:
    """Boolean grid over the target shape, True where voxels were padded in."""
    mask = np.ones(target, dtype=bool)
    slices = []
    for src, tgt in zip(src_shape, target):
        _, left, _ = _pad_crop_amounts(src, tgt)
        slices.append(slice(left, left + min(src, tgt)))
    mask[tuple(slices)] = False
    return mask


def dct_clip_noise(volume: Volume, clip: float) -> Volume:
    """Clamp the orthonormal 3D cosine-basis coefficients to [-clip, clip].

    Returns the inverse transform of the clamped coefficients; with a clip
    that never binds this is the identity up to float rounding.
    """
    if clip <= 0:
        raise ValueError("clip must be > 0")
    data = volume.data.astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise ValueError("non-finite input volume")
    coeff = scipy.fft.dctn(data, type=2, norm="ortho")
    np.clip(coeff, -clip, clip, out=coeff)
    noise = scipy.fft.idctn(coeff, type=2, norm="ortho")
    return volume.with_data(noise.astype(np.float32))


def composite_padded_regions(padded: Volume, noise: Volume, mask: np.ndarray) -> Volume:
    """Voxelwise select: noise where mask is True, padded elsewhere."""
    if padded.shape != noise.shape or padded.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: padded {padded.shape}, noise {noise.shape}, mask {mask.shape}"
        )
    data = np.where(mask, noise.data, padded.data)
    return padded.with_data(data)


def subsample(volume: Volume, factor: int) -> Volume:
    """Block-average downsampling by an integer factor; spacing scales up."""
    if factor == 1:
        return volume
    d1, d2, d3 = volume.shape
    if d1 % factor or d2 % factor or d3 % factor:
        raise ValueError(f"shape {volume.shape} not divisible by factor {factor}")
    data = volume.data.reshape(d1 // factor, factor, d2 // factor, factor, d3 // factor, factor)
    data = data.mean(axis=(1, 3, 5), dtype=np.float64).astype(np.float32)
    return volume.with_data(data, spacing_um=volume.spacing_um * factor)


def stack_offsets(depth: int, stack_depth: int, n_stacks: int) -> list[int]:
    """Start offsets evenly spaced over [0, depth - stack_depth], rounded."""
    if stack_depth > depth:
        raise ValueError(f"stack_depth {stack_depth} exceeds volume depth {depth}")
    if n_stacks < 1:
        raise ValueError("n_stacks must be >= 1")
    span = depth - stack_depth
    if n_stacks == 1:
        return [0]
    return [int(np.rint(span * i / (n_stacks - 1))) for i in range(n_stacks)]


def split_stacks(volume: Volume, stack_depth: int, n_stacks: int) -> list[Volume]:
    """Slice the depth axis into n overlapping stacks covering the volume."""
    offsets = stack_offsets(volume.shape[0], stack_depth, n_stacks)
    return [volume.with_data(volume.data[o : o + stack_depth].copy()) for o in offsets]


def augment(volume: Volume, angle_deg: float, zoom: float) -> Volume:
    """In-plane rotation about the slice center followed by a central zoom-in.

    Single trilinear resampling pass; out-of-bounds samples take mirrored
    values. Output shape equals input shape.
    """
    if zoom < 1.0:
        raise ValueError(f"zoom must be >= 1 (zoom-in only), got {zoom}")
    theta = np.deg2rad(angle_deg)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    m2 = rot.T / zoom  # output->input map: inverse rotation, shrunken sampling range
    matrix = np.eye(3)
    matrix[1:, 1:] = m2
    center = (np.array(volume.shape) - 1) / 2.0
    offset = center - matrix @ center
    data = affine_transform(
        volume.data.astype(np.float64), matrix, offset=offset, order=1, mode="mirror"
    )
    return volume.with_data(data.astype(np.float32))


def draw_augmentation(
    cfg: PreprocessConfig, corpus_seed: int, volume_id: int, aug_id: int
) -> tuple[float, float]:
    """Uniform (angle, zoom) draw from a counter-based stream.

    The stream is keyed on (corpus_seed, volume_id, aug_id) so results do
    not depend on worker scheduling.
    """
    rng = np.random.default_rng((corpus_seed, volume_id, aug_id))
    angle = rng.uniform(*cfg.rot_range_deg)
    zoom = rng.uniform(*cfg.zoom_range)
    return float(angle), float(zoom)


def preprocess_volume(
    volume: Volume,
    cfg: PreprocessConfig,
    intensity_range: tuple[float, float] | None = None,
) -> list[Volume]:
    """Full pipeline: pad/crop + noise composite + subsample + stack split.

    intensity_range supplies corpus-level (min, max) for the final rescale
    to [0, 1]; defaults to the volume's own range.
    """
    cfg.validate()
    padded = pad_or_crop(volume, cfg.target_shape)
    mask = pad_mask(volume.shape, cfg.target_shape)
    noise = dct_clip_noise(padded, cfg.dct_clip)
    composed = composite_padded_regions(padded, noise, mask)

    lo, hi = intensity_range if intensity_range is not None else (
        float(composed.data.min()),
        float(composed.data.max()),
    )
    scale = 1.0 / (hi - lo) if hi > lo else 1.0
    normed = composed.with_data(np.clip((composed.data - lo) * scale, 0.0, 1.0))

    small = subsample(normed, cfg.subsample_factor)
    return split_stacks(small, cfg.stack_depth, cfg.n_stacks)


def preprocess_corpus(
    volumes: list[Volume],
    cfg: PreprocessConfig,
    augmentations_per_stack: int = 0,
    seed: int = 0,
) -> list[Volume]:
    """Preprocess a corpus; optionally append seeded random augmentations.

    Augmentation seeds derive from (seed, volume index, stack index, k) so
    the corpus is reproducible regardless of execution order.
    """
    lo = min(float(v.data.min()) for v in volumes)
    hi = max(float(v.data.max()) for v in volumes)
    out: list[Volume] = []
    for vol_id, volume in enumerate(volumes):
        stacks = preprocess_volume(volume, cfg, intensity_range=(lo, hi))
        for stack_id, stack in enumerate(stacks):
            out.append(stack)
            for k in range(augmentations_per_stack):
                angle, zoom = draw_augmentation(cfg, seed, vol_id * 1000 + stack_id, k)
                out.append(augment(stack, angle, zoom))
    return out
