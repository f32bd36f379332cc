import time

import numpy as np
import pytest
import torch

from igcfat.nets import (OCFAB, CFATGenerator, DiscriminatorConfig, GeneratorConfig, SemanticUNetDiscriminator,
                         ToyFeatureExtractor, available_extractors, get_extractor, pvm_features, rect_merge,
                         rect_partition, spectral_norms, tri_merge, tri_partition, triangle_labels)
from igcfat.validation import ConfigError

from .conftest import TINY_DISC, TINY_GEN


def _index_map(h, w):
    return torch.arange(h * w, dtype=torch.float64).reshape(1, h, w, 1)


@pytest.mark.parametrize("window", [4, 8])
@pytest.mark.parametrize("h", range(8, 18))
@pytest.mark.parametrize("w", [8, 11, 16, 17])
def test_partitions_are_exact_covers(window, h, w):
    x = _index_map(h, w) + 1  # zero marks padding
    for part, merge in ((rect_partition, rect_merge), (tri_partition, tri_merge)):
        groups, info = part(x, window)
        vals = groups[..., 0].flatten()
        real = vals[vals > 0]
        assert real.numel() == h * w
        assert torch.equal(torch.sort(real).values, torch.arange(1, h * w + 1, dtype=torch.float64))
        assert torch.equal(merge(groups, info), x)


def test_rect_partition_counts():
    tiles, _ = rect_partition(torch.rand(1, 8, 8, 2), 4)
    assert tiles.shape == (4, 4, 4, 2)
    tiles, info = rect_partition(torch.rand(1, 7, 7, 2), 4)
    assert tiles.shape[0] == 4 and (info.padded_height, info.padded_width) == (8, 8)


def test_triangle_labels_are_rotations():
    for ws in (2, 4, 8):
        lab = triangle_labels(ws)
        assert set(np.unique(lab)) == {0, 1, 2, 3}
        assert all((lab == k).sum() == ws * ws // 4 for k in range(4))
        assert np.array_equal(np.rot90(lab == 0, -1), lab == 1)
    with pytest.raises(ValueError):
        triangle_labels(5)


@pytest.mark.parametrize("size", [(16, 16), (17, 23), (8, 8), (9, 64)])
def test_generator_shape(size):
    gen = CFATGenerator(TINY_GEN).eval()
    with torch.no_grad():
        out = gen(torch.rand(1, 3, *size))
    assert out.shape == (1, 3, 4 * size[0], 4 * size[1])


def test_generator_default_config_ragged_dims():
    gen = CFATGenerator().eval()
    with torch.no_grad():
        assert gen(torch.rand(1, 3, 17, 23)).shape == (1, 3, 68, 92)


def test_generator_eval_determinism():
    gen = CFATGenerator(TINY_GEN).eval()
    x = torch.rand(1, 3, 12, 12)
    with torch.no_grad():
        assert torch.equal(gen(x), gen(x))


def test_generator_rejects_nonfinite():
    gen = CFATGenerator(TINY_GEN)
    x = torch.rand(1, 3, 8, 8)
    x[0, 0, 0, 0] = float("nan")
    with pytest.raises(ValueError):
        gen(x)


def test_generator_all_params_get_gradient():
    gen = CFATGenerator()
    x, y = torch.rand(2, 3, 16, 16), torch.rand(2, 3, 64, 64)
    (gen(x) - y).abs().mean().backward()
    dead = [n for n, p in gen.named_parameters() if p.grad is None or not torch.any(p.grad != 0)]
    assert dead == []


def test_ocfab_zero_overlap_shape():
    block = OCFAB(16, 2, 4, 0.0)
    assert block.overlap_window == 4
    assert block(torch.rand(1, 9, 10, 16)).shape == (1, 9, 10, 16)  # channels last, ragged dims


def test_generator_config_validation():
    with pytest.raises(ConfigError):
        GeneratorConfig(embed_dim=10, num_heads=4)
    with pytest.raises(ConfigError):
        GeneratorConfig(tri_window=7)
    with pytest.raises(ConfigError):
        GeneratorConfig.from_dict({"embed_dims": 4})


def test_toy_extractor_frozen_and_deterministic():
    ext = ToyFeatureExtractor()
    x = torch.rand(1, 3, 32, 32)
    a, b = pvm_features(x, ext), pvm_features(x.clone(), "toy")
    assert torch.equal(a.features, b.features)
    assert a.features.shape == (1, ext.semantic_dim, 8, 8) and a.stride == 4
    assert torch.isfinite(a.features).all()
    assert not any(p.requires_grad for p in ext.parameters())
    ext.train()
    assert not ext.training


def test_unknown_extractor():
    assert "toy" in available_extractors()
    with pytest.raises(ConfigError):
        get_extractor("resnet9000")


@pytest.fixture
def disc_and_inputs():
    disc = SemanticUNetDiscriminator(TINY_DISC)
    img = torch.rand(2, 3, 64, 64)
    return disc, img, pvm_features(img, "toy")


def test_discriminator_pixelwise_and_finite(disc_and_inputs):
    disc, img, sem = disc_and_inputs
    out = disc(img, sem)
    assert out.shape == (2, 64, 64)
    assert torch.isfinite(out).all()


def test_discriminator_semantic_sensitivity(disc_and_inputs):
    disc, img, sem = disc_and_inputs
    with torch.no_grad():
        base = disc(img, sem.features, 4)
        other = disc(img, torch.rand_like(sem.features), 4)
    assert (base - other).abs().mean() > 0


def test_discriminator_rejects_inconsistent_semantics(disc_and_inputs):
    disc, img, sem = disc_and_inputs
    with pytest.raises(ValueError):
        disc(img, sem.features[..., :4, :], 4)
    with pytest.raises(ValueError):
        disc(img[:1], sem.features, 4)


def test_spectral_norms_bounded_after_updates(disc_and_inputs):
    disc, img, sem = disc_and_inputs
    opt = torch.optim.Adam(disc.parameters(), lr=1e-2)
    for _ in range(5):
        opt.zero_grad()
        disc(img, sem).pow(2).mean().backward()
        opt.step()
    norms = spectral_norms(disc)
    assert len(norms) > 0
    assert max(norms.values()) <= 1 + 1e-3


def test_spectral_norm_can_be_disabled():
    disc = SemanticUNetDiscriminator(DiscriminatorConfig(base_channels=4, unet_depth=1, use_spectral_norm=False))
    assert spectral_norms(disc) == {}
