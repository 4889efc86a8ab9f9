"""Wasserstein training with gradient penalty under the progressive schedule.

One generator update follows n_critic critic updates. Stages grow 1 to 5;
the fade-in weight ramps linearly over the first half of stages 2..5, the
learning rates shrink by 0.85 at every stage entry, and gradients are
norm-clipped at 2. A held-out split is scored periodically to watch for
critic overfitting.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .networks import GANBundle, StageState, downsample_avg, save_bundle
from .networks.checkpoint import new_bundle
from .tensors import volumes_to_tensor
from .volume import Volume

PAPER_STAGE_SAMPLES = (180000, 360000, 360000, 360000, 360000)
PAPER_BATCHES = (24, 24, 12, 6, 3)


class DivergenceError(RuntimeError):
    """Raised when a loss turns non-finite during optimization."""


@dataclass(frozen=True)
class TrainConfig:
    p1: float = 10.0
    p2: float = 1e-3
    lr_g: float = 4e-3
    lr_c: float = 4e-3
    betas: tuple[float, float] = (0.0, 0.98)
    eps_g: float = 1e-7
    eps_c: float = 5e-5
    n_critic: int = 5
    grad_clip_norm: float = 2.0
    stage_samples: tuple[int, ...] = PAPER_STAGE_SAMPLES
    lr_decay_per_stage: float = 0.85
    batch_per_stage: tuple[int, ...] = PAPER_BATCHES
    map_lr_mult: float = 0.02
    val_fraction: float = 0.10
    cycles_per_stage: int | None = None  # overrides stage_samples when set
    val_every: int = 25
    checkpoint_every: int = 0  # extra checkpoints every N cycles; 0 = stage ends only
    overfit_factor: float = 5.0
    overfit_patience: int = 3
    seed: int = 0

    def validate(self) -> None:
        positives = {"p1": self.p1, "p2": self.p2, "lr_g": self.lr_g, "lr_c": self.lr_c,
                     "eps_g": self.eps_g, "eps_c": self.eps_c,
                     "grad_clip_norm": self.grad_clip_norm,
                     "lr_decay_per_stage": self.lr_decay_per_stage,
                     "map_lr_mult": self.map_lr_mult}
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 5 <= self.n_critic <= 8:
            raise ValueError(f"n_critic must lie in 5..8, got {self.n_critic}")
        if len(self.batch_per_stage) != 5:
            raise ValueError("batch_per_stage needs one entry per stage")
        if len(self.stage_samples) != 5:
            raise ValueError("stage_samples needs one entry per stage")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0,1)")


def desk_config(cycles_per_stage: int = 300, seed: int = 0) -> TrainConfig:
    """Scaled-down schedule: cycle counts replace sample budgets."""
    return TrainConfig(cycles_per_stage=cycles_per_stage,
                       batch_per_stage=(16, 16, 8, 4, 3), seed=seed)


def critic_loss(f, G, x_real: torch.Tensor, z: torch.Tensor, cfg: TrainConfig,
                rng: torch.Generator | None = None) -> torch.Tensor:
    """Empirical critic objective with two-sided gradient penalty and drift term.

    f maps a volume batch to per-sample scores, G maps latent codes to
    volumes (treated as a constant sampler here). Interpolates use one
    uniform weight per sample.
    """
    fake = G(z).detach()
    if fake.shape != x_real.shape:
        raise ValueError(f"real batch {tuple(x_real.shape)} vs generated {tuple(fake.shape)}")
    u = torch.rand((x_real.shape[0], 1, 1, 1, 1), generator=rng,
                   dtype=x_real.dtype, device=x_real.device)
    x_mix = (u * x_real + (1.0 - u) * fake).requires_grad_(True)
    mix_scores = f(x_mix)
    grads = torch.autograd.grad(mix_scores.sum(), x_mix, create_graph=True)[0]
    grad_norm = grads.reshape(grads.shape[0], -1).norm(dim=1)

    score_real = f(x_real)
    score_fake = f(fake)
    loss = (score_fake - score_real
            + cfg.p1 * (grad_norm - 1.0) ** 2
            + cfg.p2 * score_real**2).mean()
    if not torch.isfinite(loss):
        raise DivergenceError(
            f"critic loss non-finite: real {score_real.mean().item():.4g}, "
            f"fake {score_fake.mean().item():.4g}, grad norm {grad_norm.mean().item():.4g}"
        )
    return loss


def generator_loss(f, G, z: torch.Tensor) -> torch.Tensor:
    """Mean negated critic score of generated volumes."""
    loss = -f(G(z)).mean()
    if not torch.isfinite(loss):
        raise DivergenceError(f"generator loss non-finite: {loss.item()}")
    return loss


def stage_real_tensor(volumes: list[Volume], stage: int) -> torch.Tensor:
    """Block-average full-resolution volumes down to the stage resolution."""
    batch = volumes_to_tensor(volumes)
    for _ in range(5 - stage):
        batch = downsample_avg(batch)
    return batch


class TrainSink:
    """Metrics and checkpoint writer rooted at one output directory."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.metrics_path = self.out_dir / "metrics.jsonl"
        self._fh = self.metrics_path.open("a")
        self.checkpoints: list[Path] = []

    def log(self, record: dict) -> None:
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def checkpoint(self, bundle: GANBundle, tag: str) -> Path:
        path = save_bundle(bundle, self.out_dir / f"checkpoint-{tag}")
        self.checkpoints.append(path)
        return path

    def close(self) -> None:
        self._fh.close()


def _stage_cycles(cfg: TrainConfig, stage: int) -> int:
    if cfg.cycles_per_stage is not None:
        return cfg.cycles_per_stage
    samples = cfg.stage_samples[stage - 1]
    per_cycle = cfg.n_critic * cfg.batch_per_stage[stage - 1]
    return math.ceil(samples / per_cycle)


def train(corpus: list[Volume], cfg: TrainConfig, arch: str, out_dir: str | Path,
          channel_base: int = 16, latent_dim: int = 512) -> GANBundle:
    """Run the five-stage schedule and return the final (or last good) bundle."""
    cfg.validate()
    batch_min = min(cfg.batch_per_stage)
    n_val = max(1, round(len(corpus) * cfg.val_fraction))
    if len(corpus) - n_val < batch_min:
        raise ValueError(
            f"corpus of {len(corpus)} leaves fewer than one batch after the validation split"
        )
    full_shape = corpus[0].shape

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(corpus))
    val_set = [corpus[i] for i in order[:n_val]]
    train_set = [corpus[i] for i in order[n_val:]]

    bundle = new_bundle(arch, full_shape, channel_base, latent_dim, seed=cfg.seed)
    sink = TrainSink(out_dir)
    global_step = 0
    overfit_strikes = 0

    def gen_param_groups(lr: float):
        groups = [{"params": list(bundle.generator.parameters()), "lr": lr}]
        if bundle.mapping is not None:
            groups.append({"params": list(bundle.mapping.parameters()),
                           "lr": lr * cfg.map_lr_mult})
        return groups

    try:
        for stage in range(1, 6):
            decay = cfg.lr_decay_per_stage ** (stage - 1)
            lr_g = cfg.lr_g * decay
            lr_c = cfg.lr_c * decay
            opt_c = torch.optim.Adam(bundle.critic.parameters(), lr=lr_c,
                                     betas=cfg.betas, eps=cfg.eps_c)
            opt_g = torch.optim.Adam(gen_param_groups(lr_g), lr=lr_g,
                                     betas=cfg.betas, eps=cfg.eps_g)

            batch = cfg.batch_per_stage[stage - 1]
            cycles = _stage_cycles(cfg, stage)
            fade_cycles = cycles // 2 if stage > 1 else 0
            reals = stage_real_tensor(train_set, stage)
            vals = stage_real_tensor(val_set, stage)

            for cycle in range(cycles):
                if stage == 1 or cycle >= fade_cycles:
                    alpha = 1.0
                else:
                    alpha = (cycle + 1) / (fade_cycles + 1)
                bundle.stage, bundle.fade_alpha = stage, alpha
                state = StageState(stage, alpha)
                f = lambda x: bundle.critic.score(x, state)
                if arch == "progan":
                    G = lambda z: bundle.generator(z, state)
                else:
                    G = lambda z: bundle.generator(bundle.mapping(z), state)

                for _ in range(cfg.n_critic):
                    idx = rng.choice(len(train_set), size=batch, replace=True)
                    x = reals[idx]
                    z = torch.randn(batch, latent_dim)
                    loss_c = critic_loss(f, G, x, z, cfg)
                    opt_c.zero_grad(set_to_none=True)
                    loss_c.backward()
                    torch.nn.utils.clip_grad_norm_(bundle.critic.parameters(),
                                                   cfg.grad_clip_norm)
                    opt_c.step()
                    global_step += 1
                    sink.log({"step": global_step, "kind": "critic", "stage": stage,
                              "fade": alpha, "loss_c": loss_c.item(), "lr": lr_c})

                z = torch.randn(batch, latent_dim)
                loss_g = generator_loss(f, G, z)
                opt_g.zero_grad(set_to_none=True)
                loss_g.backward()
                all_gen = [p for grp in opt_g.param_groups for p in grp["params"]]
                torch.nn.utils.clip_grad_norm_(all_gen, cfg.grad_clip_norm)
                opt_g.step()
                global_step += 1
                sink.log({"step": global_step, "kind": "generator", "stage": stage,
                          "fade": alpha, "loss_g": loss_g.item(), "lr": lr_g})

                if (cycle + 1) % cfg.val_every == 0:
                    with torch.no_grad():
                        vidx = rng.choice(len(val_set), size=min(batch, len(val_set)),
                                          replace=False)
                        val_scores = f(vals[vidx])
                        fake_scores = f(G(torch.randn(len(vidx), latent_dim)))
                        val_loss = (fake_scores.mean() - val_scores.mean()).item()
                    sink.log({"step": global_step, "kind": "validation", "stage": stage,
                              "fade": alpha, "val_loss_c": val_loss,
                              "loss_c": loss_c.item()})
                    if abs(val_loss) > cfg.overfit_factor * max(abs(loss_c.item()), 1e-8):
                        overfit_strikes += 1
                        if overfit_strikes >= cfg.overfit_patience:
                            warnings.warn("validation critic loss diverging from training "
                                          "loss; possible critic overfitting")
                            sink.log({"step": global_step, "kind": "overfit_warning",
                                      "stage": stage})
                            overfit_strikes = 0
                    else:
                        overfit_strikes = 0

                if cfg.checkpoint_every and (cycle + 1) % cfg.checkpoint_every == 0:
                    sink.checkpoint(bundle, f"step{global_step}")

            bundle.stage, bundle.fade_alpha = stage, 1.0
            sink.checkpoint(bundle, f"stage{stage}")
    except DivergenceError as err:
        sink.log({"step": global_step, "kind": "divergence", "error": str(err)})
        sink.checkpoint(bundle, "halted")
        sink.close()
        raise
    if arch == "stylegan":
        from .latent import estimate_w_mean

        with torch.no_grad():
            estimate_w_mean(bundle)
    sink.checkpoint(bundle, "final")
    sink.close()
    return bundle
