"""Evaluation suite: Fréchet distance, k-NN precision/recall, realism score,
and a small trainable 3D feature extractor for desk-scale runs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.spatial.distance import cdist
from torch import nn

from .volume import Volume

DEFAULT_K = 3
REALISM_CAP = 1e6


@dataclass
class FeatureSet:
    """Feature cloud of one corpus under one extractor."""

    features: np.ndarray  # (N, D)
    extractor_name: str
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a (N, D) matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature entries")

    def __len__(self):
        return self.features.shape[0]


def _check_pair(real: FeatureSet, gen: FeatureSet) -> None:
    if real.extractor_name != gen.extractor_name:
        raise ValueError(
            f"extractor mismatch: {real.extractor_name!r} vs {gen.extractor_name!r}"
        )


def _psd_sqrt_trace(mat: np.ndarray) -> float:
    """Trace of the PSD square root, tolerating slightly negative eigenvalues."""
    sym = (mat + mat.T) / 2.0
    eigvals = np.linalg.eigvalsh(sym)
    if eigvals.min() < -1e-6 * max(1.0, abs(eigvals.max())):
        raise ValueError(f"matrix is not PSD within tolerance: min eigenvalue {eigvals.min()}")
    return float(np.sqrt(np.clip(eigvals, 0.0, None)).sum())


def fid(real: FeatureSet, gen: FeatureSet) -> float:
    """Fréchet distance between Gaussian fits of the two feature clouds."""
    _check_pair(real, gen)
    if len(real) < 2 or len(gen) < 2:
        raise ValueError("FID needs at least 2 samples per side")
    mu_r, mu_g = real.features.mean(axis=0), gen.features.mean(axis=0)
    sigma_r = np.cov(real.features, rowvar=False).reshape(mu_r.size, mu_r.size)
    sigma_g = np.cov(gen.features, rowvar=False).reshape(mu_g.size, mu_g.size)

    # Tr((Sr Sg)^1/2) computed as Tr((Sr^1/2 Sg Sr^1/2)^1/2), which is symmetric PSD
    eigvals_r, eigvecs_r = np.linalg.eigh((sigma_r + sigma_r.T) / 2.0)
    root_r = (eigvecs_r * np.sqrt(np.clip(eigvals_r, 0.0, None))) @ eigvecs_r.T
    trace_cross = _psd_sqrt_trace(root_r @ sigma_g @ root_r)

    diff = mu_r - mu_g
    return float(diff @ diff + np.trace(sigma_r) + np.trace(sigma_g) - 2.0 * trace_cross)


def _knn_radii(features: np.ndarray, k: int) -> np.ndarray:
    """Distance to the k-th nearest neighbor, self excluded, per row."""
    dists = cdist(features, features)
    np.fill_diagonal(dists, np.inf)
    dists.sort(axis=1)
    return dists[:, k - 1]


def precision_recall(real: FeatureSet, gen: FeatureSet, k: int = DEFAULT_K) -> tuple[float, float]:
    """Manifold membership rates: generated-in-real and real-in-generated."""
    _check_pair(real, gen)
    if k >= len(real) or k >= len(gen):
        raise ValueError(f"k={k} needs more than k samples per side")
    real_radii = _knn_radii(real.features, k)
    gen_radii = _knn_radii(gen.features, k)
    cross = cdist(gen.features, real.features)
    precision = float(np.mean((cross <= real_radii[None, :]).any(axis=1)))
    recall = float(np.mean((cross.T <= gen_radii[None, :]).any(axis=1)))
    return precision, recall


def realism(real: FeatureSet, phi_g: np.ndarray, k: int = DEFAULT_K,
            cap: float = REALISM_CAP) -> float:
    """Largest ratio of a real point's k-NN radius to its distance from phi_g."""
    if k >= len(real):
        raise ValueError(f"k={k} needs more than k real samples")
    phi_g = np.asarray(phi_g, dtype=np.float64).reshape(1, -1)
    radii = _knn_radii(real.features, k)
    dists = cdist(phi_g, real.features)[0]
    with np.errstate(divide="ignore"):
        ratios = np.where(dists > 0, radii / np.maximum(dists, 1e-300), np.inf)
    return float(min(ratios.max(), cap))


def select_axial_slices(volume: Volume, seed: int, n_slices: int = 2) -> list[np.ndarray]:
    """Random distinct axial slices, the 2D feature path's input convention."""
    depth = volume.shape[0]
    if depth < n_slices:
        raise ValueError(f"volume depth {depth} cannot supply {n_slices} distinct slices")
    rng = np.random.default_rng(seed)
    idx = rng.choice(depth, size=n_slices, replace=False)
    return [volume.data[i] for i in idx]


class SliceFeatureExtractor:
    """2D feature path: pools features of exactly two random axial slices.

    slice_features maps one 2D array to a 1D feature vector; the default
    averages each slice over an 8x8 grid. Slice choice is seed-controlled
    per volume so feature sets are reproducible.
    """

    def __init__(self, slice_features=None, name: str = "inc2d", grid: int = 8):
        self.name = name
        self.grid = grid
        self._slice_features = slice_features or self._grid_features

    def _grid_features(self, plane: np.ndarray) -> np.ndarray:
        g = self.grid
        h, w = plane.shape
        rows = np.array_split(np.arange(h), g)
        cols = np.array_split(np.arange(w), g)
        return np.array([plane[np.ix_(r, c)].mean() for r in rows for c in cols])

    def extract(self, volumes: list[Volume], seed: int = 0) -> FeatureSet:
        rows = []
        for i, volume in enumerate(volumes):
            slices = select_axial_slices(volume, seed=seed * 100003 + i)
            feats = [self._slice_features(s) for s in slices]
            rows.append(np.mean(feats, axis=0))
        return FeatureSet(np.stack(rows), self.name)


class _ToyNet(nn.Module):
    """Three strided convolutions, global pooling, dense head."""

    def __init__(self, feature_dim: int, n_classes: int):
        super().__init__()
        self.convs = nn.Sequential(
            nn.Conv3d(1, 8, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv3d(8, 16, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv3d(16, 32, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
        )
        self.feature_layer = nn.Linear(32, feature_dim)
        self.classifier = nn.Linear(feature_dim, n_classes)

    def features(self, x):
        h = self.convs(x).mean(dim=(2, 3, 4))
        return self.feature_layer(h)

    def forward(self, x):
        return self.classifier(torch.relu(self.features(x)))


class ToyExtractor:
    """Trained 3D classifier whose penultimate activations are the features."""

    def __init__(self, net: _ToyNet, feature_dim: int):
        self.name = "toy3d"
        self.net = net.eval()
        self.feature_dim = feature_dim

    def extract(self, volumes: list[Volume], seed: int = 0) -> FeatureSet:
        batch = np.stack([v.data for v in volumes])[:, None]
        with torch.no_grad():
            feats = self.net.features(torch.from_numpy(batch))
        return FeatureSet(feats.numpy(), self.name)


def train_toy_extractor(volumes: list[Volume], labels: list[int],
                        feature_dim: int = 16, epochs: int = 20,
                        lr: float = 2e-3, seed: int = 0) -> ToyExtractor:
    """Fit the small classifier on labeled phantoms; features come from the
    penultimate layer. Warns when the class balance is badly skewed."""
    if len(volumes) != len(labels):
        raise ValueError("one label per volume required")
    counts = np.bincount(np.asarray(labels))
    if counts.min() < 0.1 * counts.max():
        warnings.warn(f"strong label imbalance: {counts.tolist()}")
    n_classes = int(max(labels)) + 1
    torch.manual_seed(seed)
    net = _ToyNet(feature_dim, n_classes)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    x = torch.from_numpy(np.stack([v.data for v in volumes])[:, None])
    y = torch.tensor(labels, dtype=torch.long)
    order = torch.randperm(len(volumes))
    batch = 16
    net.train()
    for _ in range(epochs):
        for start in range(0, len(volumes), batch):
            idx = order[start : start + batch]
            loss = loss_fn(net(x[idx]), y[idx])
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
    return ToyExtractor(net, feature_dim)


def classify_accuracy(extractor: ToyExtractor, volumes: list[Volume],
                      labels: list[int]) -> float:
    """Held-out accuracy of the toy classifier."""
    x = torch.from_numpy(np.stack([v.data for v in volumes])[:, None])
    with torch.no_grad():
        pred = extractor.net(x).argmax(dim=1)
    return float((pred == torch.tensor(labels)).float().mean())
