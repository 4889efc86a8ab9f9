import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volgan.volume import (
    PhantomSpec,
    Volume,
    VolumeFormatError,
    interior_mask,
    make_phantom,
    phantom_corpus,
    read_volume,
    shell_mask,
    volume_from_bytes,
    volume_to_bytes,
    write_volume,
)


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    vol = Volume(rng.random((5, 7, 3), dtype=np.float32), spacing_um=80.0, provenance="real")
    path = tmp_path / "v.vgan"
    write_volume(vol, path)
    back = read_volume(path)
    assert back.shape == vol.shape
    assert back.spacing_um == vol.spacing_um
    assert back.provenance == "real"
    assert np.array_equal(back.data, vol.data)


def test_bytes_roundtrip_matches_file(tmp_path):
    vol = Volume(np.zeros((2, 2, 2), dtype=np.float32))
    path = tmp_path / "v.vgan"
    write_volume(vol, path)
    assert path.read_bytes() == volume_to_bytes(vol)
    assert np.array_equal(volume_from_bytes(volume_to_bytes(vol)).data, vol.data)


def test_malformed_containers_rejected():
    good = volume_to_bytes(Volume(np.zeros((2, 3, 4), dtype=np.float32)))
    with pytest.raises(VolumeFormatError):
        volume_from_bytes(b"not json at all")
    with pytest.raises(VolumeFormatError):
        volume_from_bytes(good[:-4])  # truncated payload
    with pytest.raises(VolumeFormatError):
        volume_from_bytes(b'{"shape": [2, 3], "dtype": "f32le"}\n' + b"\x00" * 24)
    with pytest.raises(VolumeFormatError):
        volume_from_bytes(b'{"shape": [1, 1, 1], "dtype": "f64le"}\n' + b"\x00" * 8)


def test_volume_validation():
    with pytest.raises(ValueError):
        Volume(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Volume(np.full((2, 2, 2), np.nan))


def test_phantom_deterministic():
    spec = PhantomSpec(seed=3)
    a = make_phantom(spec, (16, 32, 32))
    b = make_phantom(spec, (16, 32, 32))
    assert np.array_equal(a.data, b.data)
    c = make_phantom(PhantomSpec(seed=4), (16, 32, 32))
    assert not np.array_equal(a.data, c.data)


def test_phantom_range_and_structure():
    vol = make_phantom(PhantomSpec(seed=0), (16, 32, 32))
    assert vol.data.min() >= 0.0 and vol.data.max() <= 1.0
    shell = shell_mask(PhantomSpec(seed=0), vol.shape)
    outside = ~shell & ~interior_mask(PhantomSpec(seed=0), vol.shape)
    assert vol.data[shell].mean() > vol.data[outside].mean() + 0.3


def test_phantom_density_monotone():
    # same seed, higher density only ever brightens interior cells
    lo = make_phantom(PhantomSpec(trabecular_density=0.2, seed=5), (16, 32, 32))
    hi = make_phantom(PhantomSpec(trabecular_density=0.7, seed=5), (16, 32, 32))
    inner = interior_mask(PhantomSpec(seed=5), (16, 32, 32))
    assert hi.data[inner].mean() > lo.data[inner].mean()


def test_phantom_spec_validation():
    with pytest.raises(ValueError):
        PhantomSpec(outer_radius_frac=1.2).validate()
    with pytest.raises(ValueError):
        PhantomSpec(cortical_thickness_frac=0.9).validate()
    with pytest.raises(ValueError):
        make_phantom(PhantomSpec(outer_radius_frac=0.99), (4, 8, 8))


def test_corpus_reproducible_and_varied():
    a = phantom_corpus(4, (16, 32, 32), base_seed=7)
    b = phantom_corpus(4, (16, 32, 32), base_seed=7)
    for va, vb in zip(a, b):
        assert np.array_equal(va.data, vb.data)
    assert not np.array_equal(a[0].data, a[1].data)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(8, 20), st.integers(8, 20))
def test_container_roundtrip_any_shape(d1, d2, d3):
    rng = np.random.default_rng(d1 * 1000 + d2 * 10 + d3)
    vol = Volume(rng.random((d1, d2, d3), dtype=np.float32))
    assert np.array_equal(volume_from_bytes(volume_to_bytes(vol)).data, vol.data)
