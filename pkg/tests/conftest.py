import numpy as np
import pytest
import torch

from igcfat.degradation import DegradationLevelSpec, RoundSpec
from igcfat.nets import DiscriminatorConfig, GeneratorConfig

# Small enough for sub-second steps on one CPU core.
TINY_GEN = GeneratorConfig(embed_dim=16, num_heads=2, num_dwab=1, num_swab=1, rect_window=4, tri_window=4,
                           mlp_ratio=1.0)
TINY_DISC = DiscriminatorConfig(base_channels=8, unet_depth=2, semantic_channels=8)


def benign_round(**kw):
    base = dict(
        blur_prob=0.0,
        resize_scale_range=(1.0, 1.0),
        resize_kernel_weights={"area": 1.0},
        gaussian_noise_prob=1.0,
        gaussian_noise_sigma_range=(0.0, 0.0),
        gray_noise_prob=0.0,
        jpeg_quality_range=(100, 100),
    )
    base.update(kw)
    return RoundSpec(**base)


@pytest.fixture
def benign_spec():
    return DegradationLevelSpec("D1", (benign_round(),))


@pytest.fixture
def tiny_gen():
    return TINY_GEN


@pytest.fixture
def tiny_disc():
    return TINY_DISC


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)


@pytest.fixture(scope="session")
def micro_images():
    from igcfat.data import micro_dataset

    return micro_dataset(size=(64, 64), count=6)


@pytest.fixture(scope="session")
def micro_val():
    from igcfat.data import micro_dataset

    imgs = micro_dataset(size=(96, 128), count=8)
    return [(k, v) for k, v in list(imgs.items())[:8]]


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
