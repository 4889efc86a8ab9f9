"""Conversions between Volume records and network tensors."""

from __future__ import annotations

import numpy as np
import torch

from .volume import Volume


def volumes_to_tensor(volumes: list[Volume], dtype=torch.float32) -> torch.Tensor:
    """Stack volumes into a (B, 1, d1, d2, d3) tensor."""
    if not volumes:
        raise ValueError("empty volume list")
    shape = volumes[0].shape
    for v in volumes[1:]:
        if v.shape != shape:
            raise ValueError(f"mixed shapes in batch: {shape} vs {v.shape}")
    stack = np.stack([v.data for v in volumes])[:, None]
    return torch.from_numpy(stack).to(dtype)


def tensor_to_volumes(batch: torch.Tensor, spacing_um: float = 121.4,
                      provenance: str = "generated") -> list[Volume]:
    """Split a (B, 1, d1, d2, d3) tensor into Volume records."""
    if batch.ndim != 5 or batch.shape[1] != 1:
        raise ValueError(f"expected (B, 1, d1, d2, d3), got {tuple(batch.shape)}")
    arr = batch.detach().cpu().numpy().astype(np.float32)
    return [Volume(arr[i, 0], spacing_um=spacing_um, provenance=provenance)
            for i in range(arr.shape[0])]
