"""Volume container, .vgan file format and the procedural phantom generator.

A volume is a 3D gray-scale voxel grid in [0, 1] with isotropic spacing.
The on-disk container is self-describing: one JSON header line followed
by the raw little-endian float32 voxel buffer in (d1, d2, d3) row-major
order. Adapters for external imaging formats belong outside this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

DEFAULT_SPACING_UM = 121.4
DTYPE_TAG = "f32le"


class VolumeFormatError(ValueError):
    """Raised when a .vgan file violates the container contract."""


@dataclass
class Volume:
    """3D gray-scale image: float32 data of shape (d1, d2, d3)."""

    data: np.ndarray
    spacing_um: float = DEFAULT_SPACING_UM
    provenance: str = "real"

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError(f"all shape components must be >= 1, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("volume contains non-finite voxels")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def with_data(self, data: np.ndarray, **changes) -> "Volume":
        return replace(self, data=data, **changes)


def write_volume(volume: Volume, path: str | Path) -> None:
    """Write a volume as JSON-header + raw float32 buffer. Bit-exact round trip."""
    path = Path(path)
    header = {
        "shape": list(volume.shape),
        "spacing_um": float(volume.spacing_um),
        "dtype": DTYPE_TAG,
        "provenance": volume.provenance,
    }
    payload = np.ascontiguousarray(volume.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def volume_to_bytes(volume: Volume) -> bytes:
    """The exact byte content write_volume would put on disk."""
    header = {
        "shape": list(volume.shape),
        "spacing_um": float(volume.spacing_um),
        "dtype": DTYPE_TAG,
        "provenance": volume.provenance,
    }
    return json.dumps(header).encode("utf-8") + b"\n" + np.ascontiguousarray(volume.data, dtype="<f4").tobytes()


def volume_from_bytes(blob: bytes) -> Volume:
    """Parse the .vgan container from memory."""
    newline = blob.find(b"\n")
    if newline < 0:
        raise VolumeFormatError("missing header line")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise VolumeFormatError(f"unreadable header: {exc}") from exc
    try:
        shape = tuple(int(s) for s in header["shape"])
        spacing = float(header.get("spacing_um", DEFAULT_SPACING_UM))
        dtype_tag = header.get("dtype", DTYPE_TAG)
    except (KeyError, TypeError, ValueError) as exc:
        raise VolumeFormatError(f"malformed header fields: {exc}") from exc
    if len(shape) != 3 or min(shape) < 1:
        raise VolumeFormatError(f"invalid shape {shape}")
    if dtype_tag != DTYPE_TAG:
        raise VolumeFormatError(f"unsupported dtype tag {dtype_tag!r}")
    payload = blob[newline + 1 :]
    expected = shape[0] * shape[1] * shape[2] * 4
    if len(payload) != expected:
        raise VolumeFormatError(
            f"payload is {len(payload)} bytes, header shape {shape} requires {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return Volume(data=data.copy(), spacing_um=spacing, provenance=header.get("provenance", "real"))


def read_volume(path: str | Path) -> Volume:
    """Inverse of write_volume."""
    with open(path, "rb") as fh:
        return volume_from_bytes(fh.read())


def walk_corpus(directory: str | Path) -> Iterator[Path]:
    """Yield .vgan files under a directory in sorted order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory {directory} does not exist")
    yield from sorted(directory.rglob("*.vgan"))


def load_corpus(directory: str | Path) -> list[Volume]:
    return [read_volume(p) for p in walk_corpus(directory)]


# ---------------------------------------------------------------------------
# Procedural phantom: annular bright shell (cortical analogue) around a
# speckled interior (trabecular analogue) over background noise. Substitutes
# for patient scans in every test and desk-scale run.
# ---------------------------------------------------------------------------

BACKGROUND_LEVEL = 0.15
CORTICAL_LEVEL = 0.85
TRABECULAR_LEVEL = 0.65


@dataclass(frozen=True)
class PhantomSpec:
    outer_radius_frac: float = 0.7
    cortical_thickness_frac: float = 0.15
    trabecular_density: float = 0.4
    trabecular_scale_vox: int = 2
    noise_sigma: float = 0.03
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.outer_radius_frac < 1.0:
            raise ValueError(f"outer_radius_frac must be in (0,1), got {self.outer_radius_frac}")
        if not 0.0 < self.cortical_thickness_frac < 0.5:
            raise ValueError(
                f"cortical_thickness_frac must be in (0,0.5), got {self.cortical_thickness_frac}"
            )
        if self.cortical_thickness_frac >= self.outer_radius_frac:
            raise ValueError("cortical shell thicker than its outer radius")
        if not 0.0 <= self.trabecular_density <= 1.0:
            raise ValueError(f"trabecular_density must be in [0,1], got {self.trabecular_density}")
        if self.trabecular_scale_vox < 1:
            raise ValueError("trabecular_scale_vox must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def _radius_grid(d2: int, d3: int) -> np.ndarray:
    cy, cx = (d2 - 1) / 2.0, (d3 - 1) / 2.0
    yy, xx = np.mgrid[0:d2, 0:d3]
    return np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)


def shell_mask(spec: PhantomSpec, shape: tuple[int, int, int]) -> np.ndarray:
    """Boolean mask of the cortical annulus, constant along the depth axis."""
    d1, d2, d3 = shape
    half = min(d2, d3) / 2.0
    outer = spec.outer_radius_frac * half
    inner = outer - spec.cortical_thickness_frac * half
    r = _radius_grid(d2, d3)
    plane = (r <= outer) & (r > inner)
    return np.broadcast_to(plane, (d1, d2, d3)).copy()


def interior_mask(spec: PhantomSpec, shape: tuple[int, int, int]) -> np.ndarray:
    """Boolean mask of the trabecular interior (inside the shell)."""
    d1, d2, d3 = shape
    half = min(d2, d3) / 2.0
    inner = (spec.outer_radius_frac - spec.cortical_thickness_frac) * half
    plane = _radius_grid(d2, d3) <= inner
    return np.broadcast_to(plane, (d1, d2, d3)).copy()


def make_phantom(spec: PhantomSpec, shape: tuple[int, int, int]) -> Volume:
    """Deterministic procedural phantom for the given seed.

    Structure: background Gaussian noise everywhere, a bright annular shell,
    and a speckled interior whose bright-cell fraction follows
    trabecular_density. Raising the density at fixed seed only ever turns
    more cells bright, so interior mean intensity is monotone in it.
    """
    spec.validate()
    d1, d2, d3 = shape
    half = min(d2, d3) / 2.0
    outer = spec.outer_radius_frac * half
    if outer + 1.0 > half:
        raise ValueError(
            f"shell of radius {outer:.1f} plus margin does not fit a {d2}x{d3} cross-section"
        )

    rng = np.random.default_rng(spec.seed)
    vol = BACKGROUND_LEVEL + spec.noise_sigma * rng.standard_normal((d1, d2, d3))

    shell = shell_mask(spec, shape)
    vol[shell] = CORTICAL_LEVEL + 0.5 * (vol[shell] - BACKGROUND_LEVEL)

    if spec.trabecular_density > 0:
        scale = spec.trabecular_scale_vox
        cells = (
            -(-d1 // scale),
            -(-d2 // scale),
            -(-d3 // scale),
        )
        cell_u = rng.random(cells)
        speckle = np.kron(cell_u < spec.trabecular_density, np.ones((scale,) * 3, dtype=bool))
        speckle = speckle[:d1, :d2, :d3]
        inner = interior_mask(spec, shape)
        hit = speckle & inner
        vol[hit] = TRABECULAR_LEVEL + (vol[hit] - TRABECULAR_LEVEL) * 0.1
    else:
        # draw and discard so the seed stream stays aligned across densities
        scale = spec.trabecular_scale_vox
        rng.random((-(-d1 // scale), -(-d2 // scale), -(-d3 // scale)))

    np.clip(vol, 0.0, 1.0, out=vol)
    return Volume(data=vol.astype(np.float32), provenance="phantom")


def phantom_corpus(
    count: int,
    shape: tuple[int, int, int],
    base_seed: int = 0,
    spec: PhantomSpec | None = None,
    vary: bool = True,
) -> list[Volume]:
    """A reproducible list of phantoms; per-item seeds derive from base_seed.

    With vary=True the shell geometry and speckle density jitter from item
    to item so the corpus has usable diversity for GAN training.
    """
    base = spec or PhantomSpec()
    rng = np.random.default_rng(base_seed)
    out = []
    for i in range(count):
        seed = int(np.random.default_rng((base_seed, i)).integers(0, 2**63 - 1))
        if vary:
            item = replace(
                base,
                outer_radius_frac=float(np.clip(base.outer_radius_frac + rng.uniform(-0.12, 0.12), 0.3, 0.9)),
                cortical_thickness_frac=float(
                    np.clip(base.cortical_thickness_frac + rng.uniform(-0.05, 0.05), 0.05, 0.3)
                ),
                trabecular_density=float(np.clip(base.trabecular_density + rng.uniform(-0.2, 0.2), 0.05, 0.9)),
                seed=seed,
            )
        else:
            item = replace(base, seed=seed)
        out.append(make_phantom(item, shape))
    return out
