import math

import numpy as np
import pytest
import scipy.stats
import torch

from volgan.latent import (
    DEFAULT_EDIT_STRENGTH,
    DEFAULT_PSI,
    DEFAULT_TRUNC_LEVEL,
    DirectionSet,
    TruncationConfig,
    W_MEAN_SAMPLES,
    bundle_directions,
    edit,
    estimate_w_mean,
    find_directions,
    sample_truncated,
    style_mix,
    transition,
)
from volgan.inversion import InversionConfig
from volgan.networks import new_bundle

SHAPE = (32, 64, 64)


def truncated_normal_variance(level: float) -> float:
    phi = scipy.stats.norm.pdf(level)
    mass = 2.0 * scipy.stats.norm.cdf(level) - 1.0
    return 1.0 - 2.0 * level * phi / mass


# --- truncated sampling ------------------------------------------------------

def test_truncation_defaults():
    cfg = TruncationConfig()
    assert cfg.mode == "progan_truncnorm"
    assert cfg.level == DEFAULT_TRUNC_LEVEL == 1.8
    assert cfg.psi == DEFAULT_PSI == 0.8
    assert W_MEAN_SAMPLES == 10000


def test_truncnorm_draws_respect_bound():
    codes = sample_truncated(TruncationConfig(), 200, seed=0)
    assert codes.shape == (200, 512)
    assert codes.abs().max().item() <= 1.8
    tight = sample_truncated(TruncationConfig(level=0.5), 50, seed=1)
    assert tight.abs().max().item() <= 0.5


def test_truncnorm_variance_matches_closed_form():
    # closed form agrees with the reference distribution, then with draws
    want = truncated_normal_variance(1.8)
    assert want == pytest.approx(scipy.stats.truncnorm.var(-1.8, 1.8), abs=1e-12)
    codes = sample_truncated(TruncationConfig(), 200, seed=2).numpy()
    got = codes.var()
    assert abs(got - want) / want < 0.02
    assert abs(codes.mean()) < 0.02


def test_truncnorm_is_seeded():
    a = sample_truncated(TruncationConfig(), 4, seed=7)
    b = sample_truncated(TruncationConfig(), 4, seed=7)
    c = sample_truncated(TruncationConfig(), 4, seed=8)
    assert torch.equal(a, b)
    assert not torch.equal(a, c)


def test_psi_one_returns_mapped_codes(stylegan_bundle):
    estimate_w_mean(stylegan_bundle, samples=500)
    cfg = TruncationConfig(mode="stylegan_psi", psi=1.0)
    got = sample_truncated(cfg, 8, seed=3, bundle=stylegan_bundle)
    rng = np.random.default_rng(3)
    z = torch.from_numpy(rng.standard_normal((8, 512))).to(torch.float32)
    with torch.no_grad():
        want = stylegan_bundle.mapping(z)
    assert torch.allclose(got, want, atol=1e-6)


def test_psi_zero_collapses_to_mean(stylegan_bundle):
    estimate_w_mean(stylegan_bundle, samples=500)
    cfg = TruncationConfig(mode="stylegan_psi", psi=0.0)
    got = sample_truncated(cfg, 5, seed=4, bundle=stylegan_bundle)
    assert (got == stylegan_bundle.w_mean.unsqueeze(0)).all()


def test_psi_interpolates_toward_mean(stylegan_bundle):
    estimate_w_mean(stylegan_bundle, samples=500)
    full = sample_truncated(TruncationConfig(mode="stylegan_psi", psi=1.0), 6,
                            seed=5, bundle=stylegan_bundle)
    half = sample_truncated(TruncationConfig(mode="stylegan_psi", psi=0.5), 6,
                            seed=5, bundle=stylegan_bundle)
    w_bar = stylegan_bundle.w_mean.unsqueeze(0)
    assert torch.allclose(half, w_bar + 0.5 * (full - w_bar), atol=1e-6)


def test_mode_none_is_plain_normal():
    codes = sample_truncated(TruncationConfig(mode="none"), 100, seed=6)
    assert codes.abs().max().item() > 1.8  # effectively certain for 51200 draws


def test_truncation_validation(progan_bundle):
    for bad in (TruncationConfig(mode="clip"),
                TruncationConfig(level=0.0),
                TruncationConfig(mode="stylegan_psi", psi=1.5),
                TruncationConfig(mode="stylegan_psi", psi=-0.1)):
        with pytest.raises(ValueError):
            bad.validate()
    with pytest.raises(ValueError, match="mapping"):
        sample_truncated(TruncationConfig(mode="stylegan_psi"), 1, 0, bundle=progan_bundle)
    fresh = new_bundle("stylegan", SHAPE, 2, seed=0)
    with pytest.raises(ValueError, match="mean"):
        sample_truncated(TruncationConfig(mode="stylegan_psi"), 1, 0, bundle=fresh)


def test_estimate_w_mean_records_sample_count():
    bundle = new_bundle("stylegan", SHAPE, 2, seed=1)
    estimate_w_mean(bundle, samples=2500, seed=0)
    assert bundle.w_mean.shape == (512,)
    assert bundle.w_mean_samples == 2500
    again = new_bundle("stylegan", SHAPE, 2, seed=1)
    estimate_w_mean(again, samples=2500, seed=0)
    assert torch.equal(bundle.w_mean, again.w_mean)
    other = new_bundle("stylegan", SHAPE, 2, seed=1)
    estimate_w_mean(other, samples=2500, seed=9)
    assert (bundle.w_mean - other.w_mean).abs().max().item() < 0.1


# --- transitions -------------------------------------------------------------

def test_transition_endpoints_reproduce_sources(progan_bundle):
    gen = torch.Generator().manual_seed(0)
    z1, z2 = torch.randn(512, generator=gen), torch.randn(512, generator=gen)
    frames = transition(z1, z2, [1.0, 0.5, 0.0], progan_bundle)
    assert len(frames) == 3
    assert torch.equal(frames[0], progan_bundle.synthesize(z1.reshape(1, -1)))
    assert torch.equal(frames[2], progan_bundle.synthesize(z2.reshape(1, -1)))


def test_transition_midpoint_uses_code_average(progan_bundle):
    gen = torch.Generator().manual_seed(1)
    z1, z2 = torch.randn(512, generator=gen), torch.randn(512, generator=gen)
    frames = transition(z1, z2, [0.25], progan_bundle)
    direct = progan_bundle.synthesize((0.25 * z1 + 0.75 * z2).reshape(1, -1))
    assert torch.equal(frames[0], direct)


def test_transition_in_style_space(stylegan_bundle):
    gen = torch.Generator().manual_seed(2)
    w1 = stylegan_bundle.mapping(torch.randn(1, 512, generator=gen)).detach()[0]
    w2 = stylegan_bundle.mapping(torch.randn(1, 512, generator=gen)).detach()[0]
    frames = transition(w1, w2, [1.0], stylegan_bundle,
                        rng=torch.Generator().manual_seed(0), code_space="w")
    want = stylegan_bundle.synthesize(w1.reshape(1, -1),
                                      rng=torch.Generator().manual_seed(0),
                                      code_space="w")
    assert torch.equal(frames[0], want)


def test_transition_validation(progan_bundle):
    z = torch.randn(512)
    with pytest.raises(ValueError, match="outside"):
        transition(z, z, [1.2], progan_bundle)
    with pytest.raises(ValueError, match="differ"):
        transition(z, torch.randn(256), [0.5], progan_bundle)


# --- style mixing ------------------------------------------------------------

def test_style_mix_boundary_extremes(stylegan_bundle):
    gen = torch.Generator().manual_seed(3)
    w_s = stylegan_bundle.mapping(torch.randn(1, 512, generator=gen)).detach()[0]
    w_t = stylegan_bundle.mapping(torch.randn(1, 512, generator=gen)).detach()[0]
    rng = lambda: torch.Generator().manual_seed(0)
    all_source = style_mix(stylegan_bundle, w_s, w_t, 15, rng=rng())
    all_target = style_mix(stylegan_bundle, w_s, w_t, 0, rng=rng())
    from_s = stylegan_bundle.synthesize(w_s.reshape(1, -1), rng=rng(), code_space="w")
    from_t = stylegan_bundle.synthesize(w_t.reshape(1, -1), rng=rng(), code_space="w")
    assert torch.allclose(all_source, from_s, atol=1e-7)
    assert torch.allclose(all_target, from_t, atol=1e-7)
    assert (from_s - from_t).abs().max().item() > 1e-5


def test_style_mix_equal_codes_ignore_boundary(stylegan_bundle):
    gen = torch.Generator().manual_seed(4)
    w = stylegan_bundle.mapping(torch.randn(1, 512, generator=gen)).detach()[0]
    rng = lambda: torch.Generator().manual_seed(0)
    plain = stylegan_bundle.synthesize(w.reshape(1, -1), rng=rng(), code_space="w")
    for boundary in (3, 7, 12):
        mixed = style_mix(stylegan_bundle, w, w, boundary, rng=rng())
        assert torch.allclose(mixed, plain, atol=1e-7)


def test_style_mix_interior_boundary_blends(stylegan_bundle):
    gen = torch.Generator().manual_seed(5)
    w_s = stylegan_bundle.mapping(torch.randn(1, 512, generator=gen)).detach()[0]
    w_t = stylegan_bundle.mapping(torch.randn(1, 512, generator=gen)).detach()[0]
    rng = lambda: torch.Generator().manual_seed(0)
    mixed = style_mix(stylegan_bundle, w_s, w_t, 7, rng=rng())
    from_s = stylegan_bundle.synthesize(w_s.reshape(1, -1), rng=rng(), code_space="w")
    from_t = stylegan_bundle.synthesize(w_t.reshape(1, -1), rng=rng(), code_space="w")
    assert (mixed - from_s).abs().max().item() > 1e-5
    assert (mixed - from_t).abs().max().item() > 1e-5


def test_style_mix_validation(stylegan_bundle, progan_bundle):
    w = torch.randn(512)
    with pytest.raises(ValueError, match="style"):
        style_mix(progan_bundle, w, w, 7)
    for bad in (-1, 16):
        with pytest.raises(ValueError, match="boundary"):
            style_mix(stylegan_bundle, w, w, bad)


# --- attribute directions ----------------------------------------------------

def _orthonormal(n, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q


def test_find_directions_recovers_known_spectrum():
    # A built from an explicit SVD has known principal input directions
    u = _orthonormal(24, 0)[:, :6]
    v = _orthonormal(16, 1)[:, :6]
    singulars = np.array([5.0, 4.0, 3.0, 2.0, 1.0, 0.5])
    a = u @ np.diag(singulars) @ v.T
    ds = find_directions(a, 4)
    np.testing.assert_allclose(ds.eigenvalues, singulars[:4] ** 2, atol=1e-8)
    for i in range(4):
        overlap = abs(float(ds.directions[i] @ v[:, i]))
        assert overlap == pytest.approx(1.0, abs=1e-8)


def test_find_directions_matches_power_iteration():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((40, 12))
    ds = find_directions(a, 3)
    gram = a.T @ a
    deflated = gram.copy()
    for i in range(3):
        vec = np.ones(12) / math.sqrt(12)
        for _ in range(5000):
            nxt = deflated @ vec
            nxt /= np.linalg.norm(nxt)
            if np.linalg.norm(nxt - vec) < 1e-14:
                vec = nxt
                break
            vec = nxt
        value = float(vec @ gram @ vec)
        assert abs(value - ds.eigenvalues[i]) <= 1e-6 * max(value, 1.0)
        assert abs(float(vec @ ds.directions[i])) == pytest.approx(1.0, abs=1e-6)
        deflated -= value * np.outer(vec, vec)


def test_directions_are_orthonormal_and_sorted():
    rng = np.random.default_rng(3)
    ds = find_directions(rng.standard_normal((30, 20)), 6)
    np.testing.assert_allclose(ds.directions @ ds.directions.T, np.eye(6), atol=1e-6)
    assert np.all(np.diff(ds.eigenvalues) <= 1e-9)
    for vec in ds.directions:
        first = vec[np.abs(vec) > 1e-12][0]
        assert first > 0


def test_direction_amplification_equals_eigenvalue():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((50, 16))
    ds = find_directions(a, 5)
    for vec, val in zip(ds.directions, ds.eigenvalues):
        amplified = float(np.sum((a @ vec) ** 2))
        assert abs(amplified - val) <= 1e-5 * max(val, 1.0)


def test_find_directions_validation():
    a = np.eye(4)
    for bad_k in (0, 5):
        with pytest.raises(ValueError):
            find_directions(a, bad_k)
    with pytest.raises(ValueError):
        find_directions(np.ones(4), 1)


def test_direction_set_validation():
    good = np.eye(3)[:2]
    DirectionSet(directions=good, eigenvalues=np.array([2.0, 1.0]), source="t")
    with pytest.raises(ValueError, match="orthonormal"):
        DirectionSet(directions=np.ones((2, 3)), eigenvalues=np.array([2.0, 1.0]), source="t")
    with pytest.raises(ValueError, match="descending"):
        DirectionSet(directions=good, eigenvalues=np.array([1.0, 2.0]), source="t")


def test_bundle_directions_both_archs(progan_bundle, stylegan_bundle):
    ds_p = bundle_directions(progan_bundle, k=4)
    assert ds_p.source == "progan_first_linear"
    assert ds_p.directions.shape == (4, 512)
    a = progan_bundle.generator.first_linear_matrix().numpy().astype(np.float64)
    for vec, val in zip(ds_p.directions, ds_p.eigenvalues):
        assert abs(float(np.sum((a @ vec) ** 2)) - val) <= 1e-5 * max(val, 1.0)

    ds_s = bundle_directions(stylegan_bundle, k=2)
    assert ds_s.source == "stylegan_concat_15"
    assert ds_s.directions.shape == (2, 512)


# --- editing -----------------------------------------------------------------

def test_edit_moves_code_along_direction(progan_bundle, small_phantoms):
    x = torch.from_numpy(small_phantoms[0].data).reshape(1, 1, *SHAPE)
    ds = bundle_directions(progan_bundle, k=2)
    cfg = InversionConfig(refine_steps=2)
    out = edit(progan_bundle, x, ds.directions[0], strength=4.0, cfg=cfg)
    assert set(out) == {"edited", "residual", "reconstruction", "code", "refine"}
    assert torch.equal(out["residual"], out["edited"] - x)
    assert not torch.allclose(out["edited"], out["reconstruction"], atol=1e-5)
    code = out["code"].reshape(1, -1)
    want = progan_bundle.synthesize(code + 4.0 * torch.from_numpy(
        ds.directions[0].astype(np.float32)).reshape(1, -1))
    assert torch.allclose(out["edited"], want, atol=1e-6)


def test_edit_zero_strength_returns_reconstruction(progan_bundle, small_phantoms):
    x = torch.from_numpy(small_phantoms[1].data).reshape(1, 1, *SHAPE)
    ds = bundle_directions(progan_bundle, k=1)
    out = edit(progan_bundle, x, ds.directions[0], strength=0.0,
               cfg=InversionConfig(refine_steps=1))
    assert torch.equal(out["edited"], out["reconstruction"])
    assert DEFAULT_EDIT_STRENGTH == 4.0
