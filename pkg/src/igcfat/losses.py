"""Pixel, perceptual, adversarial and wavelet terms of the generator objective."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F

from .validation import ConfigError
from .wavelet import WaveletLossConfig, wavelet_loss

__all__ = [
    "GAN_MODES",
    "LossWeights",
    "l1_loss",
    "perceptual_loss",
    "gan_loss_g",
    "gan_loss_d",
    "total_generator_loss",
]

GAN_MODES = ("vanilla", "lsgan")


@dataclass(frozen=True)
class LossWeights:
    w_l1: float = 1.0
    w_perceptual: float = 1.0
    w_swt: float = 1.0
    w_gan: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigError(f"loss_weights.{name}: must be a finite nonnegative real, got {value}")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d or {}) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"loss_weights: unknown keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in (d or {}).items()})


def _check_pair(sr, gt):
    if sr.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(sr.shape)} vs {tuple(gt.shape)}")


def l1_loss(sr: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    _check_pair(sr, gt)
    return (sr - gt.to(sr.dtype)).abs().mean()


def perceptual_loss(sr: torch.Tensor, gt: torch.Tensor, extractor) -> torch.Tensor:
    """Sum over extractor stages of the mean absolute feature difference."""
    _check_pair(sr, gt)
    with torch.no_grad():
        target = extractor(gt.to(sr.dtype))
    feats = extractor(sr)
    total = sr.new_zeros(())
    for a, b in zip(feats, target):
        total = total + (a - b).abs().mean()
    return total


def gan_loss_g(fake: torch.Tensor, mode: str = "vanilla") -> torch.Tensor:
    """Generator adversarial loss on a pixel-wise realness map.

    ``vanilla`` is the non-saturating form ``softplus(-D(G(x)))`` (always
    positive, tends to 0 as the fake logits grow); ``lsgan`` is ``(D - 1)^2``.
    """
    if mode == "vanilla":
        return F.softplus(-fake).mean()
    if mode == "lsgan":
        return ((fake - 1.0) ** 2).mean()
    raise ConfigError(f"gan_mode: expected one of {GAN_MODES}, got {mode!r}")


def gan_loss_d(real: torch.Tensor, fake: torch.Tensor, mode: str = "vanilla") -> torch.Tensor:
    """Discriminator loss: real pixels pushed toward 1, fake toward 0."""
    if mode == "vanilla":
        return F.softplus(-real).mean() + F.softplus(fake).mean()
    if mode == "lsgan":
        return 0.5 * (((real - 1.0) ** 2).mean() + (fake**2).mean())
    raise ConfigError(f"gan_mode: expected one of {GAN_MODES}, got {mode!r}")


def total_generator_loss(sr, gt, disc_out_fake=None, weights: LossWeights | None = None,
                         wavelet_cfg: WaveletLossConfig | None = None, extractor=None,
                         gan_mode: str = "vanilla"):
    """Weighted four-term generator loss; returns ``(total, breakdown)``.

    Terms with zero weight are not evaluated (and report 0). ``breakdown``
    holds the unweighted detached term values.
    """
    weights = weights or LossWeights()
    zero = sr.new_zeros(())
    terms = {"l1": zero, "perceptual": zero, "swt": zero, "gan": zero}
    if weights.w_l1:
        terms["l1"] = l1_loss(sr, gt)
    if weights.w_perceptual:
        if extractor is None:
            raise ConfigError("perceptual term requires a feature extractor")
        terms["perceptual"] = perceptual_loss(sr, gt, extractor)
    if weights.w_swt:
        terms["swt"] = wavelet_loss(sr, gt, wavelet_cfg)
    if weights.w_gan:
        if disc_out_fake is None:
            raise ValueError("adversarial term requires the discriminator output on sr")
        terms["gan"] = gan_loss_g(disc_out_fake, gan_mode)
    total = (weights.w_l1 * terms["l1"] + weights.w_perceptual * terms["perceptual"]
             + weights.w_swt * terms["swt"] + weights.w_gan * terms["gan"])
    breakdown = {k: float(v.detach()) for k, v in terms.items()}
    breakdown["total"] = float(total.detach())
    return total, breakdown
