"""Checkpoint container and on-disk format.

A checkpoint is a directory holding manifest.json plus one little-endian
float32 blob per tensor, named by its layer path. The manifest records the
architecture, channel base, growth position and, when estimated, the mean
style latent with its sample count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .critic import PatchCritic
from .encoder import LatentDiscriminator, VolumeEncoder
from .layers import StageState
from .progan import ProGenerator
from .stylegan import MappingNetwork, StyleGenerator

MANIFEST_NAME = "manifest.json"
FORMAT_TAG = "volgan-checkpoint-1"


@dataclass
class GANBundle:
    """All networks of one experiment plus growth position and latent stats."""

    arch: str
    full_shape: tuple[int, int, int]
    channel_base: int
    latent_dim: int = 512
    stage: int = 1
    fade_alpha: float = 1.0
    generator: nn.Module = None
    mapping: MappingNetwork | None = None
    critic: PatchCritic = None
    encoder: VolumeEncoder | None = None
    latent_disc: LatentDiscriminator | None = None
    w_mean: torch.Tensor | None = None
    w_mean_samples: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def state(self) -> StageState:
        return StageState(self.stage, self.fade_alpha)

    def modules(self) -> dict[str, nn.Module]:
        named = {"generator": self.generator, "critic": self.critic,
                 "mapping": self.mapping, "encoder": self.encoder,
                 "latent_disc": self.latent_disc}
        return {k: v for k, v in named.items() if v is not None}

    def synthesize(self, codes: torch.Tensor, rng: torch.Generator | None = None,
                   code_space: str = "z") -> torch.Tensor:
        """Volumes from latent codes; code_space picks z, w, or per-layer styles."""
        if self.arch == "progan":
            if code_space != "z":
                raise ValueError("progressive generator takes z codes only")
            return self.generator(codes, self.state)
        if code_space == "z":
            codes = self.mapping(codes)
        elif code_space not in ("w", "styles"):
            raise ValueError(f"unknown code space {code_space!r}")
        return self.generator(codes, self.state, rng=rng)

    def freeze(self) -> "GANBundle":
        for module in self.modules().values():
            module.eval().requires_grad_(False)
        return self


def new_bundle(arch: str, full_shape: tuple[int, int, int], channel_base: int,
               latent_dim: int = 512, seed: int = 0, with_encoder: bool = False) -> GANBundle:
    """Freshly initialized networks with a pinned init stream."""
    if arch not in ("progan", "stylegan"):
        raise ValueError(f"arch must be progan or stylegan, got {arch!r}")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        if arch == "progan":
            generator = ProGenerator(full_shape, channel_base, latent_dim)
            mapping = None
        else:
            generator = StyleGenerator(full_shape, channel_base, latent_dim)
            mapping = MappingNetwork(latent_dim)
        critic = PatchCritic(full_shape, channel_base)
        encoder = VolumeEncoder(full_shape, channel_base, latent_dim, arch) if with_encoder else None
        latent_disc = LatentDiscriminator(latent_dim) if with_encoder and arch == "stylegan" else None
    return GANBundle(arch=arch, full_shape=tuple(full_shape), channel_base=channel_base,
                     latent_dim=latent_dim, generator=generator, mapping=mapping,
                     critic=critic, encoder=encoder, latent_disc=latent_disc)


def save_bundle(bundle: GANBundle, directory: str | Path) -> Path:
    """Write manifest plus one float32 blob per tensor; returns the directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for comp_name, module in bundle.modules().items():
        for tensor_name, tensor in module.state_dict().items():
            key = f"{comp_name}.{tensor_name}"
            blob = tensor.detach().cpu().numpy().astype("<f4")
            filename = f"{key}.bin"
            (directory / filename).write_bytes(blob.tobytes())
            tensors[key] = {"file": filename, "shape": list(tensor.shape)}
    manifest = {
        "format": FORMAT_TAG,
        "arch": bundle.arch,
        "full_shape": list(bundle.full_shape),
        "channel_base": bundle.channel_base,
        "latent_dim": bundle.latent_dim,
        "stage": bundle.stage,
        "fade_alpha": bundle.fade_alpha,
        "has_encoder": bundle.encoder is not None,
        "has_latent_disc": bundle.latent_disc is not None,
        "tensors": tensors,
        "w_mean": None if bundle.w_mean is None else [float(v) for v in bundle.w_mean],
        "w_mean_samples": bundle.w_mean_samples,
        "extra": bundle.extra,
    }
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1))
    return directory


def load_bundle(directory: str | Path) -> GANBundle:
    """Reconstruct networks from a checkpoint directory."""
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_NAME).read_text())
    if manifest.get("format") != FORMAT_TAG:
        raise ValueError(f"unrecognized checkpoint format in {directory}")
    bundle = new_bundle(
        manifest["arch"], tuple(manifest["full_shape"]), manifest["channel_base"],
        manifest["latent_dim"], with_encoder=manifest["has_encoder"],
    )
    if manifest["has_latent_disc"] and bundle.latent_disc is None:
        bundle.latent_disc = LatentDiscriminator(manifest["latent_dim"])
    bundle.stage = manifest["stage"]
    bundle.fade_alpha = manifest["fade_alpha"]
    bundle.extra = manifest.get("extra", {})

    for comp_name, module in bundle.modules().items():
        state = {}
        for tensor_name, ref in module.state_dict().items():
            key = f"{comp_name}.{tensor_name}"
            entry = manifest["tensors"].get(key)
            if entry is None:
                raise ValueError(f"checkpoint missing tensor {key}")
            raw = (directory / entry["file"]).read_bytes()
            arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
            state[tensor_name] = torch.from_numpy(arr).to(ref.dtype)
        module.load_state_dict(state, strict=True)

    if manifest.get("w_mean") is not None:
        bundle.w_mean = torch.tensor(manifest["w_mean"], dtype=torch.float32)
        bundle.w_mean_samples = manifest.get("w_mean_samples", 0)
    return bundle
