"""Hybrid inversion: encoder initialization plus per-image code refinement.

Encoder training minimizes distortion + perceptual + code-plausibility
terms against a frozen generator and critic; the style variant replaces
the norm prior with a latent discriminator trained in 1:1 alternation.
Refinement runs a fixed number of Adam updates on the code alone and
returns the best iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .networks import GANBundle, LatentDiscriminator, StageState, VolumeEncoder
from .training import DivergenceError


@dataclass(frozen=True)
class InversionConfig:
    encoder_adam: tuple[float, float, float] = (3e-3, 0.5, 0.9)
    refine_steps: int = 100
    refine_lr: float = 7e-3
    style_loss_weights: tuple[float, float, float] = (5.0, 1.0, 0.04)
    encoder_steps: int = 200
    batch_size: int = 8
    noise_seed: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.refine_steps < 0:
            raise ValueError("refine_steps must be >= 0")
        if min(self.encoder_adam) <= 0 or self.refine_lr <= 0:
            raise ValueError("optimizer hyperparameters must be positive")
        if min(self.style_loss_weights) <= 0:
            raise ValueError("style loss weights must be positive")


def loss_dist(x: torch.Tensor, recon: torch.Tensor) -> torch.Tensor:
    """Half mean squared voxel error."""
    if x.shape != recon.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(recon.shape)}")
    return 0.5 * torch.mean((x - recon) ** 2)


def loss_perc(x: torch.Tensor, recon: torch.Tensor, features) -> torch.Tensor:
    """Half mean squared error over penultimate critic features."""
    if x.shape != recon.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(recon.shape)}")
    return 0.5 * torch.mean((features(x) - features(recon)) ** 2)


def loss_latent(codes: torch.Tensor) -> torch.Tensor:
    """Squared-norm prior, summed per code and scaled by 1/1024."""
    if codes.ndim == 1:
        codes = codes.unsqueeze(0)
    return torch.mean(torch.sum(codes**2, dim=1) / 1024.0)


def loss_latent_style(codes: torch.Tensor, latent_disc: LatentDiscriminator) -> torch.Tensor:
    """Negative log plausibility under the latent discriminator.

    The per-coordinate sum and the 1/512 scale cancel, leaving -log D_W.
    """
    p = latent_disc(codes).clamp_min(1e-12)
    return -torch.log(p).mean()


def _critic_features(bundle: GANBundle):
    state = StageState(5, 1.0)
    return lambda x: bundle.critic.penultimate_features(x, state)


def _synth(bundle: GANBundle, codes: torch.Tensor,
           rng: torch.Generator | None = None) -> torch.Tensor:
    state = StageState(5, 1.0)
    if bundle.arch == "progan":
        return bundle.generator(codes, state)
    return bundle.generator(codes, state, rng=rng)


def train_encoder(bundle: GANBundle, corpus_batch: torch.Tensor,
                  cfg: InversionConfig = InversionConfig()) -> GANBundle:
    """Fit the inversion encoder against the frozen generator and critic.

    corpus_batch holds full-resolution training volumes (N, 1, d1, d2, d3).
    The encoder (and, for the style variant, the latent discriminator) is
    attached to the bundle and returned with it.
    """
    cfg.validate()
    if bundle.stage != 5:
        raise ValueError("encoder training needs a stage-5 generator")
    if tuple(corpus_batch.shape[2:]) != bundle.full_shape:
        raise ValueError(
            f"corpus shape {tuple(corpus_batch.shape[2:])} does not match {bundle.full_shape}"
        )
    for module in (bundle.generator, bundle.critic, bundle.mapping):
        if module is not None:
            module.requires_grad_(False)

    torch.manual_seed(cfg.seed)
    if bundle.encoder is None:
        bundle.encoder = VolumeEncoder(bundle.full_shape, bundle.channel_base,
                                       bundle.latent_dim, bundle.arch)
    lr, b1, b2 = cfg.encoder_adam
    opt_e = torch.optim.Adam(bundle.encoder.parameters(), lr=lr, betas=(b1, b2))

    style = bundle.arch == "stylegan"
    if style and bundle.latent_disc is None:
        bundle.latent_disc = LatentDiscriminator(bundle.latent_dim)
    opt_d = (torch.optim.Adam(bundle.latent_disc.parameters(), lr=lr, betas=(b1, b2))
             if style else None)
    bce = torch.nn.BCELoss()
    features = _critic_features(bundle)
    w_dist, w_perc, w_lat = cfg.style_loss_weights
    n = corpus_batch.shape[0]

    for step in range(cfg.encoder_steps):
        idx = torch.randint(0, n, (min(cfg.batch_size, n),))
        x = corpus_batch[idx]
        codes = bundle.encoder(x)
        recon = _synth(bundle, codes)
        if style:
            objective = (w_dist * loss_dist(x, recon)
                         + w_perc * loss_perc(x, recon, features)
                         + w_lat * loss_latent_style(codes, bundle.latent_disc))
        else:
            objective = (loss_dist(x, recon)
                         + loss_perc(x, recon, features)
                         + loss_latent(codes))
        if not torch.isfinite(objective):
            raise DivergenceError(f"encoder objective non-finite at step {step}")
        opt_e.zero_grad(set_to_none=True)
        objective.backward()
        opt_e.step()

        if style:
            z = torch.randn(x.shape[0], bundle.latent_dim)
            real_w = bundle.mapping(z)
            fake_w = codes.detach()
            pred = bundle.latent_disc(torch.cat([real_w, fake_w]))
            target = torch.cat([torch.ones(real_w.shape[0]), torch.zeros(fake_w.shape[0])])
            d_loss = bce(pred, target)
            if not torch.isfinite(d_loss):
                raise DivergenceError(f"latent discriminator loss non-finite at step {step}")
            opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            opt_d.step()
    return bundle


@dataclass
class RefineResult:
    """Outcome of code refinement: best iterate plus per-step diagnostics."""

    code: torch.Tensor
    objective_trace: list[float] = field(default_factory=list)
    dist_trace: list[float] = field(default_factory=list)
    chosen_step: int = 0
    warning: bool = False


def refine(x_hat: torch.Tensor, init_code: torch.Tensor, bundle: GANBundle,
           cfg: InversionConfig = InversionConfig()) -> RefineResult:
    """Optimize a single latent code toward reconstructing x_hat.

    The progressive objective balances voxel distance, penultimate-feature
    distance and the squared code norm; the style objective keeps only the
    feature term and optimizes w directly. Among all visited iterates the
    one with the lowest objective is returned, restricted to iterates whose
    plain reconstruction error does not exceed the initial code's, so the
    hybrid result never reconstructs worse than the encoder alone.
    """
    cfg.validate()
    if x_hat.ndim != 5 or x_hat.shape[0] != 1:
        raise ValueError(f"refine expects a single (1, 1, d1, d2, d3) volume, got {tuple(x_hat.shape)}")
    features = _critic_features(bundle)
    n_vox = x_hat.numel()
    style = bundle.arch == "stylegan"

    code = init_code.detach().reshape(1, -1).clone().requires_grad_(True)
    target_feat = features(x_hat).detach()
    n_feat = target_feat.numel()

    def evaluate(c: torch.Tensor) -> tuple[torch.Tensor, float]:
        rng = torch.Generator().manual_seed(cfg.noise_seed) if style else None
        recon = _synth(bundle, c, rng=rng)
        feat_term = torch.sum((target_feat - features(recon)) ** 2) / n_feat
        dist = torch.mean((x_hat - recon) ** 2).detach().item()
        if style:
            return feat_term, dist
        vox_term = torch.sum((x_hat - recon) ** 2) / n_vox
        norm_term = torch.sum(c**2) / 512.0
        return vox_term + feat_term + norm_term, dist

    opt = torch.optim.Adam([code], lr=cfg.refine_lr)
    result = RefineResult(code=init_code.detach().reshape(-1).clone())
    best_obj = None
    init_dist = None

    for step in range(cfg.refine_steps + 1):
        objective, dist = evaluate(code)
        obj_val = objective.detach().item()
        if not math.isfinite(obj_val):
            result.warning = True
            break
        result.objective_trace.append(obj_val)
        result.dist_trace.append(dist)
        if init_dist is None:
            init_dist = dist
        if dist <= init_dist + 1e-9 and (best_obj is None or obj_val < best_obj):
            best_obj = obj_val
            result.code = code.detach().reshape(-1).clone()
            result.chosen_step = step
        if step == cfg.refine_steps:
            break
        opt.zero_grad(set_to_none=True)
        objective.backward()
        opt.step()
    return result


def invert(bundle: GANBundle, x: torch.Tensor,
           cfg: InversionConfig = InversionConfig()) -> RefineResult:
    """Encoder initialization followed by refinement for one volume."""
    if bundle.encoder is None:
        raise ValueError("bundle has no trained encoder")
    with torch.no_grad():
        init = bundle.encoder(x)
    return refine(x, init, bundle, cfg)
