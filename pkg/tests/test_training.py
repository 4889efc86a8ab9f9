import json
import math

import numpy as np
import pytest
import torch

from volgan.networks import StageState, load_bundle
from volgan.training import (
    DivergenceError,
    PAPER_BATCHES,
    PAPER_STAGE_SAMPLES,
    TrainConfig,
    _stage_cycles,
    critic_loss,
    desk_config,
    generator_loss,
    stage_real_tensor,
    train,
)
from volgan.volume import phantom_corpus

SHAPE = (32, 64, 64)


def _mean_critic(x):
    return x.mean(dim=(1, 2, 3, 4))


# --- loss oracles ------------------------------------------------------------

def test_critic_loss_closed_form_mean_critic():
    # with f = per-sample mean over a (1,2,2) volume the interpolate gradient
    # is 1/4 everywhere, so its norm is 1/2 no matter where u lands
    cfg = TrainConfig()
    real = torch.full((1, 1, 1, 2, 2), 0.8)
    G = lambda z: torch.full((1, 1, 1, 2, 2), 0.3)
    loss = critic_loss(_mean_critic, G, real, torch.zeros(1, 512), cfg)
    want = (0.3 - 0.8) + 10.0 * (0.5 - 1.0) ** 2 + 1e-3 * 0.8**2
    assert loss.item() == pytest.approx(want, abs=1e-6)


def test_critic_loss_closed_form_custom_penalties():
    cfg = TrainConfig(p1=3.0, p2=0.5)
    real = torch.full((1, 1, 1, 2, 2), 0.8)
    G = lambda z: torch.full((1, 1, 1, 2, 2), 0.3)
    loss = critic_loss(_mean_critic, G, real, torch.zeros(1, 512), cfg)
    want = (0.3 - 0.8) + 3.0 * 0.25 + 0.5 * 0.64
    assert loss.item() == pytest.approx(want, abs=1e-6)


def test_critic_loss_closed_form_batch_mean():
    cfg = TrainConfig()
    real = torch.cat([torch.full((1, 1, 1, 2, 2), 0.8),
                      torch.full((1, 1, 1, 2, 2), 0.2)])
    G = lambda z: torch.full((2, 1, 1, 2, 2), 0.3)
    loss = critic_loss(_mean_critic, G, real, torch.zeros(2, 512), cfg)
    per = [(0.3 - 0.8) + 2.5 + 1e-3 * 0.64,
           (0.3 - 0.2) + 2.5 + 1e-3 * 0.04]
    assert loss.item() == pytest.approx(sum(per) / 2, abs=1e-6)


def test_critic_loss_drift_term_only_on_real_scores():
    # doubling the fake score must not touch the quadratic drift contribution
    cfg = TrainConfig(p1=0.0, p2=1.0)
    real = torch.full((1, 1, 1, 2, 2), 0.5)
    loss_a = critic_loss(_mean_critic, lambda z: torch.full((1, 1, 1, 2, 2), 0.1),
                         real, torch.zeros(1, 512), cfg)
    loss_b = critic_loss(_mean_critic, lambda z: torch.full((1, 1, 1, 2, 2), 0.2),
                         real, torch.zeros(1, 512), cfg)
    assert (loss_b - loss_a).item() == pytest.approx(0.1, abs=1e-6)


class _ToyGen(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.scale = torch.nn.Parameter(torch.tensor(0.7, dtype=torch.float64))
        self.shift = torch.nn.Parameter(torch.tensor(-0.2, dtype=torch.float64))

    def forward(self, z):
        base = torch.sigmoid(self.scale * z.mean(dim=1) + self.shift)
        return base.reshape(-1, 1, 1, 1, 1).expand(-1, 1, 2, 2, 2)


def test_generator_loss_gradients_match_finite_differences():
    torch.manual_seed(0)
    gen = _ToyGen()
    k = torch.randn(8, dtype=torch.float64)
    f = lambda x: (x.reshape(x.shape[0], -1) @ k).tanh() * 2.0
    z = torch.randn(4, 6, dtype=torch.float64)

    loss = generator_loss(f, gen, z)
    grads = torch.autograd.grad(loss, [gen.scale, gen.shift])

    h = 1e-6
    for param, grad in zip((gen.scale, gen.shift), grads):
        with torch.no_grad():
            param += h
        up = generator_loss(f, gen, z).item()
        with torch.no_grad():
            param -= 2 * h
        down = generator_loss(f, gen, z).item()
        with torch.no_grad():
            param += h
        fd = (up - down) / (2 * h)
        assert abs(grad.item() - fd) <= 1e-3 * max(abs(fd), 1e-12)


class _ToyCritic(torch.nn.Module):
    def __init__(self):
        super().__init__()
        gen = torch.Generator().manual_seed(1)
        self.w = torch.nn.Parameter(torch.randn(8, generator=gen, dtype=torch.float64))
        self.b = torch.nn.Parameter(torch.tensor(0.1, dtype=torch.float64))

    def forward(self, x):
        return torch.tanh(x.reshape(x.shape[0], -1) @ self.w) + self.b


def test_critic_loss_gradients_match_finite_differences():
    # pinning the interpolation weights makes the loss a deterministic
    # function of the critic parameters, so central differences apply
    torch.manual_seed(1)
    cfg = TrainConfig()
    critic = _ToyCritic()
    real = torch.rand(3, 1, 2, 2, 2, dtype=torch.float64)
    G = lambda z: torch.rand(3, 1, 2, 2, 2, dtype=torch.float64,
                             generator=torch.Generator().manual_seed(7))

    def eval_loss():
        return critic_loss(critic, G, real, torch.zeros(3, 512), cfg,
                           rng=torch.Generator().manual_seed(5))

    loss = eval_loss()
    grads = torch.autograd.grad(loss, [critic.w, critic.b])

    h = 1e-6
    for param, grad in zip((critic.w, critic.b), grads):
        flat_grad = grad.reshape(-1)
        for i in range(flat_grad.numel()):
            with torch.no_grad():
                param.reshape(-1)[i] += h
            up = eval_loss().item()
            with torch.no_grad():
                param.reshape(-1)[i] -= 2 * h
            down = eval_loss().item()
            with torch.no_grad():
                param.reshape(-1)[i] += h
            fd = (up - down) / (2 * h)
            assert abs(flat_grad[i].item() - fd) <= 1e-3 * max(abs(fd), 1e-9)


def test_generator_loss_is_negated_mean_score():
    G = lambda z: torch.full((2, 1, 1, 2, 2), 0.25)
    loss = generator_loss(_mean_critic, G, torch.zeros(2, 512))
    assert loss.item() == pytest.approx(-0.25, abs=1e-7)


def test_loss_divergence_raises_with_diagnostics():
    bad = lambda x: x.mean(dim=(1, 2, 3, 4)) * float("nan")
    G = lambda z: torch.full((1, 1, 1, 2, 2), 0.3)
    with pytest.raises(DivergenceError, match="non-finite"):
        critic_loss(bad, G, torch.full((1, 1, 1, 2, 2), 0.8),
                    torch.zeros(1, 512), TrainConfig())
    with pytest.raises(DivergenceError):
        generator_loss(bad, G, torch.zeros(1, 512))


def test_critic_loss_shape_mismatch():
    G = lambda z: torch.full((1, 1, 2, 4, 4), 0.3)
    with pytest.raises(ValueError, match="real batch"):
        critic_loss(_mean_critic, G, torch.full((1, 1, 1, 2, 2), 0.8),
                    torch.zeros(1, 512), TrainConfig())


# --- staging helpers ---------------------------------------------------------

def test_stage_real_tensor_matches_block_mean_oracle(small_phantoms):
    vols = small_phantoms[:3]
    for stage, factor in ((5, 1), (4, 2), (3, 4)):
        got = stage_real_tensor(vols, stage).numpy()
        stacked = np.stack([v.data for v in vols])[:, None]
        b, c, d, h, w = stacked.shape
        want = stacked.reshape(b, c, d // factor, factor, h // factor, factor,
                               w // factor, factor).mean(axis=(3, 5, 7))
        assert got.shape == want.shape
        np.testing.assert_allclose(got, want, atol=1e-5)


def test_stage_cycle_budgets():
    cfg = TrainConfig()
    for stage in range(1, 6):
        want = math.ceil(PAPER_STAGE_SAMPLES[stage - 1]
                         / (cfg.n_critic * PAPER_BATCHES[stage - 1]))
        assert _stage_cycles(cfg, stage) == want
    assert _stage_cycles(desk_config(300), 1) == 300
    assert _stage_cycles(TrainConfig(cycles_per_stage=7), 4) == 7


def test_config_validation():
    for bad in (TrainConfig(n_critic=4), TrainConfig(n_critic=9),
                TrainConfig(lr_g=0.0), TrainConfig(val_fraction=1.0),
                TrainConfig(batch_per_stage=(2, 2)), TrainConfig(p1=-1.0)):
        with pytest.raises(ValueError):
            bad.validate()
    desk_config().validate()
    assert desk_config().batch_per_stage == (16, 16, 8, 4, 3)
    assert desk_config(42).cycles_per_stage == 42


def test_train_rejects_corpus_smaller_than_a_batch(tmp_path):
    vols = phantom_corpus(3, SHAPE, base_seed=0)
    with pytest.raises(ValueError, match="batch"):
        train(vols, desk_config(1), "progan", tmp_path / "run")


# --- end to end at micro scale ----------------------------------------------

def _micro_config(cycles=2):
    return TrainConfig(cycles_per_stage=cycles, batch_per_stage=(2,) * 5,
                       val_every=2, seed=0)


def test_micro_progan_run_logs_and_checkpoints(tmp_path):
    vols = phantom_corpus(12, SHAPE, base_seed=3)
    out = tmp_path / "run"
    bundle = train(vols, _micro_config(), "progan", out, channel_base=2)

    assert bundle.stage == 5 and bundle.fade_alpha == 1.0
    out_vol = bundle.synthesize(torch.randn(1, 512))
    assert tuple(out_vol.shape) == (1, 1, *SHAPE)

    records = [json.loads(line) for line in
               (out / "metrics.jsonl").read_text().splitlines()]
    kinds = {r["kind"] for r in records}
    assert {"critic", "generator", "validation"} <= kinds
    critic_recs = [r for r in records if r["kind"] == "critic"]
    # 5 stages x 2 cycles x 5 critic steps
    assert len(critic_recs) == 50
    assert all(np.isfinite(r["loss_c"]) for r in critic_recs)
    gen_recs = [r for r in records if r["kind"] == "generator"]
    assert len(gen_recs) == 10
    steps = [r["step"] for r in records if r["kind"] in ("critic", "generator")]
    assert steps == sorted(steps) == list(range(1, 61))

    # fade ramps over the first half of every stage past the first
    stage2 = [r["fade"] for r in gen_recs if r["stage"] == 2]
    assert stage2 == [0.5, 1.0]
    assert all(r["fade"] == 1.0 for r in gen_recs if r["stage"] == 1)

    for tag in ["stage1", "stage2", "stage3", "stage4", "stage5", "final"]:
        assert (out / f"checkpoint-{tag}" / "manifest.json").exists()
    final = load_bundle(out / "checkpoint-final")
    assert torch.equal(final.synthesize(torch.randn(1, 512, generator=torch.Generator().manual_seed(0))),
                       bundle.synthesize(torch.randn(1, 512, generator=torch.Generator().manual_seed(0))))


def test_micro_stylegan_run_estimates_mean_style(tmp_path):
    vols = phantom_corpus(12, SHAPE, base_seed=4)
    out = tmp_path / "run"
    bundle = train(vols, _micro_config(cycles=1), "stylegan", out, channel_base=2)
    assert bundle.mapping is not None
    assert bundle.w_mean is not None and bundle.w_mean.shape == (512,)
    assert bundle.w_mean_samples > 0
    final = load_bundle(out / "checkpoint-final")
    assert torch.allclose(final.w_mean, bundle.w_mean)


def test_train_lr_decay_logged_per_stage(tmp_path):
    vols = phantom_corpus(12, SHAPE, base_seed=5)
    out = tmp_path / "run"
    train(vols, _micro_config(cycles=1), "progan", out, channel_base=2)
    records = [json.loads(line) for line in
               (out / "metrics.jsonl").read_text().splitlines()]
    by_stage = {r["stage"]: r["lr"] for r in records if r["kind"] == "critic"}
    for stage in range(1, 6):
        assert by_stage[stage] == pytest.approx(4e-3 * 0.85 ** (stage - 1))
