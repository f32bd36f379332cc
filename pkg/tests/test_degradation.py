import math
import time

import numpy as np
import pytest

from igcfat.config import load_config
from igcfat.degradation import (LEVELS, DegradationConfig, DegradationLevelSpec, RoundSpec, add_noise, apply_draw,
                                degrade, derive_seed, draw_in_range, jpeg_round_trip, make_blur_kernel, sample_draw,
                                sample_level)
from igcfat.imageops import psnr
from igcfat.validation import ConfigError

from .oracles import chi_square_pvalue, gaussian_center_weight


@pytest.fixture(scope="module")
def shipped():
    return load_config().degradation


def test_degenerate_probs_always_pick_d1():
    rng = np.random.default_rng(0)
    assert {sample_level(rng, (1.0, 0.0, 0.0)) for _ in range(500)} == {"D1"}


def test_sample_level_frequencies_and_determinism():
    rng = np.random.default_rng(2024)
    draws = [sample_level(rng, (0.3, 0.3, 0.4)) for _ in range(100_000)]
    freq = np.array([draws.count(lv) for lv in LEVELS]) / len(draws)
    np.testing.assert_allclose(freq, [0.3, 0.3, 0.4], atol=0.01)
    again = np.random.default_rng(2024)
    assert [sample_level(again, (0.3, 0.3, 0.4)) for _ in range(1000)] == draws[:1000]


def test_chi_square_on_level_counts():
    rng = np.random.default_rng(7)
    counts = np.bincount([LEVELS.index(sample_level(rng, (0.3, 0.3, 0.4))) for _ in range(20_000)], minlength=3)
    assert chi_square_pvalue(counts, (0.3, 0.3, 0.4)) > 0.01


@pytest.mark.parametrize("probs", [(0.3, 0.3, 0.3), (0.5, 0.6, -0.1), (0.5, 0.5)])
def test_bad_probs_rejected(shipped, probs):
    with pytest.raises(ConfigError, match="probabilities|simplex|expected"):
        DegradationConfig(shipped.levels, probs)


def test_level_order_enforced(shipped):
    d1, d2, d3 = shipped.levels
    with pytest.raises(ConfigError):
        DegradationConfig((d1, d2, DegradationLevelSpec("D3", d3.rounds[:1])))
    with pytest.raises(ConfigError):
        DegradationLevelSpec("D4", d1.rounds)


def test_shipped_d2_contains_d1(shipped):
    assert shipped["D2"].rounds[0].contains(shipped["D1"].rounds[0])
    assert shipped["D3"].rounds[0].contains(shipped["D2"].rounds[0])


def test_roundspec_validation():
    with pytest.raises(ConfigError):
        RoundSpec(blur_kernel_size_range=(6, 21))
    with pytest.raises(ConfigError):
        RoundSpec(jpeg_quality_range=(50, 101))
    with pytest.raises(ConfigError):
        RoundSpec(resize_scale_range=(1.2, 0.5))
    with pytest.raises(ConfigError):
        RoundSpec.from_dict({"blur_prob": 0.5, "bogus": 1})


@pytest.mark.parametrize("kind", ["iso-gaussian", "aniso-gaussian", "sinc"])
def test_blur_kernels_normalized(kind):
    k = make_blur_kernel(kind, 1.3, 0.6, 0.4, 15, omega=1.2)
    assert k.shape == (15, 15)
    assert abs(k.sum() - 1.0) <= 1e-8


def test_iso_gaussian_symmetry():
    k = make_blur_kernel("iso-gaussian", 2.1, size=13)
    np.testing.assert_allclose(k, k.T, atol=1e-15)
    np.testing.assert_allclose(k, k[::-1], atol=1e-15)


def test_narrow_gaussian_is_nearly_delta():
    k = make_blur_kernel("iso-gaussian", 0.1, size=21)
    assert k[10, 10] > 0.99
    assert k[10, 10] == pytest.approx(gaussian_center_weight(0.1, 21), abs=1e-12)


def test_blur_kernel_errors():
    with pytest.raises(ValueError):
        make_blur_kernel("iso-gaussian", 1.0, size=4)
    with pytest.raises(ValueError):
        make_blur_kernel("box", 1.0, size=5)


def test_noise_zero_strength_is_copy(rng):
    img = rng.random((8, 8, 3))
    np.testing.assert_array_equal(add_noise(img, "gaussian", 0.0, False, rng), img)


def test_gray_gaussian_noise_keeps_channel_differences():
    img = np.stack([np.full((32, 32), v) for v in (0.4, 0.5, 0.6)], axis=-1)
    out = add_noise(img, "gaussian", 0.02, True, np.random.default_rng(1))
    interior = np.all((out > 0) & (out < 1), axis=-1)
    diffs = (out[..., 1] - out[..., 0])[interior]
    np.testing.assert_allclose(diffs, 0.1, atol=1e-12)


def test_gaussian_noise_std():
    out = add_noise(np.full((256, 256), 0.5), "gaussian", 0.05, False, np.random.default_rng(3))
    assert 0.045 <= out.std() <= 0.055


def test_poisson_noise_zero_mean(rng):
    img = np.full((128, 128, 3), 0.5)
    out = add_noise(img, "poisson", 1.0, False, rng)
    assert abs(out.mean() - 0.5) < 0.005
    # shot noise: std = sqrt(x / levels) at unit scale
    assert out.std() == pytest.approx(np.sqrt(0.5 / 256), rel=0.05)


def test_jpeg_quality_100_on_gradient():
    x = np.linspace(0, 1, 64)
    img = np.stack([np.add.outer(x, x) / 2] * 3, axis=-1)
    assert psnr(jpeg_round_trip(img, 100), img) > 40


@pytest.mark.parametrize("quality", [75, 90, 100])
def test_jpeg_constant_survives(quality):
    for k in (0, 77, 128, 181, 255):
        img = np.full((32, 32, 3), k / 255)
        assert psnr(jpeg_round_trip(img, quality), img) > 50


@pytest.mark.parametrize("quality", [50, 60])
def test_jpeg_constant_within_one_level(quality):
    # coarser DC quantization: off by at most one 8-bit level
    for k in range(0, 256, 17):
        img = np.full((16, 16, 3), k / 255)
        assert np.max(np.abs(jpeg_round_trip(img, quality) - img)) <= 1 / 255 + 1e-12


def test_jpeg_quality_bounds():
    with pytest.raises(ValueError):
        jpeg_round_trip(np.zeros((8, 8, 3)), 0)


@pytest.mark.parametrize("level", LEVELS)
def test_degrade_shape_and_replay(shipped, level, rng):
    hr = rng.random((256, 256, 3))
    lr, draw = degrade(hr, shipped[level], seed=99)
    assert lr.shape == (64, 64, 3)
    assert draw.order == (2 if level == "D3" else 1)
    lr2, draw2 = degrade(hr, shipped[level], seed=draw.seed)
    np.testing.assert_array_equal(lr, lr2)
    assert draw2 == draw
    np.testing.assert_array_equal(apply_draw(hr, draw), lr)


def test_degrade_rejects_non_divisible(shipped):
    with pytest.raises(ValueError):
        degrade(np.zeros((30, 32, 3)), shipped["D1"], 0)


def test_benign_spec_keeps_constants(benign_spec):
    hr = np.full((64, 64, 3), 0.6)
    lr, _ = degrade(hr, benign_spec, seed=1)
    assert np.max(np.abs(lr - 0.6)) <= 1 / 255


def test_config_degrade_uses_probs(shipped):
    only_d3 = DegradationConfig(shipped.levels, (0.0, 0.0, 1.0))
    _, draw = only_d3.degrade(np.zeros((32, 32, 3)), 5)
    assert draw.level == "D3" and draw.order == 2


def test_draws_in_range_small_fuzz(shipped):
    rng = np.random.default_rng(0)
    for _ in range(500):
        level = sample_level(rng, shipped.probs)
        draw = sample_draw(shipped[level], rng, seed=0, hr_size=(64, 96))
        assert draw_in_range(draw, shipped[level])


def test_derive_seed_streams_differ():
    assert derive_seed(1, 0) != derive_seed(1, 1)
    assert derive_seed(1, 0) == derive_seed(1, 0)


def test_draw_to_dict_is_json_safe(shipped):
    import json

    _, draw = shipped.degrade(np.zeros((32, 32, 3)), 3)
    json.dumps(draw.to_dict())
