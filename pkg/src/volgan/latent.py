"""Latent-space operations: truncation, transition, style mixing, and
attribute-direction discovery with editing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats
import torch

from .inversion import InversionConfig, invert
from .networks import GANBundle, N_STYLE_LAYERS

DEFAULT_TRUNC_LEVEL = 1.8
DEFAULT_PSI = 0.8
W_MEAN_SAMPLES = 10000
DEFAULT_EDIT_STRENGTH = 4.0


@dataclass(frozen=True)
class TruncationConfig:
    """Sampling restriction: coordinate bound for z, psi-interpolation for w."""

    mode: str = "progan_truncnorm"
    level: float = DEFAULT_TRUNC_LEVEL
    psi: float = DEFAULT_PSI

    def validate(self) -> None:
        if self.mode not in ("progan_truncnorm", "stylegan_psi", "none"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.mode == "progan_truncnorm" and self.level <= 0:
            raise ValueError("truncation level must be positive")
        if self.mode == "stylegan_psi" and not 0.0 <= self.psi <= 1.0:
            raise ValueError("psi must lie in [0,1]")


def sample_truncated(cfg: TruncationConfig, count: int, seed: int,
                     bundle: GANBundle | None = None,
                     latent_dim: int = 512) -> torch.Tensor:
    """Draw latent codes under the configured truncation.

    progan_truncnorm: each coordinate is N(0,1) conditioned on |v| <= level
    and the returned codes live in Z. stylegan_psi: w = Phi(z) is pulled
    toward the stored mean, w_norm = w_bar + psi * (w - w_bar), and the
    returned codes live in W. mode none returns plain normal draws.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    if cfg.mode == "progan_truncnorm":
        draws = scipy.stats.truncnorm.rvs(-cfg.level, cfg.level,
                                          size=(count, latent_dim), random_state=rng)
        return torch.from_numpy(draws).to(torch.float32)
    z = torch.from_numpy(rng.standard_normal((count, latent_dim))).to(torch.float32)
    if cfg.mode == "none":
        return z
    if bundle is None or bundle.mapping is None:
        raise ValueError("psi truncation needs a bundle with a mapping network")
    if bundle.w_mean is None:
        raise ValueError("psi truncation needs the stored mean style latent")
    with torch.no_grad():
        w = bundle.mapping(z)
    if cfg.psi == 1.0:
        return w  # skip the interpolation so psi=1 is exactly the identity
    return bundle.w_mean.unsqueeze(0) + cfg.psi * (w - bundle.w_mean.unsqueeze(0))


def estimate_w_mean(bundle: GANBundle, samples: int = W_MEAN_SAMPLES,
                    seed: int = 0) -> GANBundle:
    """Monte-Carlo mean of Phi(z); stored on the bundle with its count."""
    if bundle.mapping is None:
        raise ValueError("bundle has no mapping network")
    rng = np.random.default_rng(seed)
    total = torch.zeros(bundle.latent_dim)
    chunk = 1000
    remaining = samples
    with torch.no_grad():
        while remaining > 0:
            n = min(chunk, remaining)
            z = torch.from_numpy(rng.standard_normal((n, bundle.latent_dim))).to(torch.float32)
            total += bundle.mapping(z).sum(dim=0)
            remaining -= n
    bundle.w_mean = total / samples
    bundle.w_mean_samples = samples
    return bundle


def transition(z1: torch.Tensor, z2: torch.Tensor, alphas: list[float],
               bundle: GANBundle, rng: torch.Generator | None = None,
               code_space: str = "z") -> list[torch.Tensor]:
    """Volumes along the straight latent path alpha*z1 + (1-alpha)*z2."""
    if z1.shape != z2.shape:
        raise ValueError(f"code shapes differ: {tuple(z1.shape)} vs {tuple(z2.shape)}")
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"transition weight {a} outside [0,1]")
    out = []
    with torch.no_grad():
        for a in alphas:
            code = a * z1 + (1.0 - a) * z2
            out.append(bundle.synthesize(code.reshape(1, -1), rng=rng,
                                         code_space=code_space))
    return out


def style_mix(bundle: GANBundle, w_source: torch.Tensor, w_target: torch.Tensor,
              boundary: int, rng: torch.Generator | None = None) -> torch.Tensor:
    """Feed w_source to the first `boundary` convolutions, w_target to the rest."""
    if bundle.arch != "stylegan":
        raise ValueError("style mixing needs a style-based generator")
    if not 0 <= boundary <= N_STYLE_LAYERS:
        raise ValueError(f"boundary must lie in 0..{N_STYLE_LAYERS}, got {boundary}")
    ws = w_source.reshape(1, 1, -1)
    wt = w_target.reshape(1, 1, -1)
    styles = torch.cat([ws.expand(1, boundary, -1),
                        wt.expand(1, N_STYLE_LAYERS - boundary, -1)], dim=1)
    with torch.no_grad():
        return bundle.synthesize(styles, rng=rng, code_space="styles")


@dataclass
class DirectionSet:
    """Orthonormal latent directions sorted by descending eigenvalue."""

    directions: np.ndarray  # (k, latent_dim)
    eigenvalues: np.ndarray  # (k,)
    source: str

    def __post_init__(self):
        gram = self.directions @ self.directions.T
        if not np.allclose(gram, np.eye(len(self.directions)), atol=1e-6):
            raise ValueError("directions are not orthonormal")
        if np.any(np.diff(self.eigenvalues) > 1e-9):
            raise ValueError("eigenvalues must be sorted descending")


def find_directions(a_matrix: np.ndarray, k: int, source: str = "custom") -> DirectionSet:
    """Leading eigenvectors of A^T A, the directions most amplified by A.

    Signs are fixed by making each direction's first nonzero component
    positive; near-degenerate eigenvalues yield an arbitrary but
    deterministic orthonormal basis of the eigenspace.
    """
    a = np.asarray(a_matrix, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("A must be a matrix")
    dim = a.shape[1]
    if k < 1 or k > dim:
        raise ValueError(f"k must lie in 1..{dim}, got {k}")
    gram = a.T @ a
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(eigvals)[::-1][:k]
    values = np.clip(eigvals[order], 0.0, None)
    vectors = eigvecs[:, order].T.copy()
    for vec in vectors:
        nonzero = np.nonzero(np.abs(vec) > 1e-12)[0]
        if len(nonzero) and vec[nonzero[0]] < 0:
            vec *= -1.0
    return DirectionSet(directions=vectors, eigenvalues=values, source=source)


def bundle_directions(bundle: GANBundle, k: int = 4) -> DirectionSet:
    """Directions from the generator's latent-facing linear maps."""
    if bundle.arch == "progan":
        a = bundle.generator.first_linear_matrix().numpy()
        source = "progan_first_linear"
    else:
        a = bundle.generator.style_affine_matrix().numpy()
        source = "stylegan_concat_15"
    return find_directions(a, k, source=source)


def edit(bundle: GANBundle, x: torch.Tensor, direction: np.ndarray,
         strength: float = DEFAULT_EDIT_STRENGTH,
         cfg: InversionConfig = InversionConfig()) -> dict:
    """Invert x, push the code along a direction, and regenerate.

    Returns the edited volume, the signed residual (edited minus input),
    the reconstruction at the unedited code, and the refined code.
    """
    result = invert(bundle, x, cfg)
    n = torch.from_numpy(np.asarray(direction, dtype=np.float32)).reshape(1, -1)
    code = result.code.reshape(1, -1)
    rng = torch.Generator().manual_seed(cfg.noise_seed)
    with torch.no_grad():
        space = "w" if bundle.arch == "stylegan" else "z"
        recon = bundle.synthesize(code, rng=rng, code_space=space)
        rng = torch.Generator().manual_seed(cfg.noise_seed)
        edited = bundle.synthesize(code + strength * n, rng=rng, code_space=space)
    return {"edited": edited, "residual": edited - x, "reconstruction": recon,
            "code": result.code, "refine": result}
