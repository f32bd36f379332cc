"""Single-level stationary wavelet transform of the luma plane and the subband L1 loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .imageops import RGB_TO_YCBCR
from .validation import ConfigError

__all__ = [
    "WAVELETS",
    "SUBBANDS",
    "SWTSubbands",
    "WaveletLossConfig",
    "wavelet_filters",
    "swt2",
    "rgb_to_y_torch",
    "wavelet_loss",
]

SUBBANDS = ("ll", "lh", "hl", "hh")

_S3 = math.sqrt(3.0)
# Lowpass taps scaled to unit sum; highpass is the quadrature mirror (zero sum).
_LOWPASS = {
    "haar": np.array([0.5, 0.5]),
    "db2": np.array([1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3]) / 8.0,
}
WAVELETS = tuple(_LOWPASS)


def wavelet_filters(wavelet: str = "haar") -> tuple[np.ndarray, np.ndarray]:
    """``(lowpass, highpass)`` taps; lowpass sums to 1, highpass to 0."""
    if wavelet not in _LOWPASS:
        raise ConfigError(f"wavelet: unknown family {wavelet!r}; choose from {WAVELETS}")
    lo = _LOWPASS[wavelet]
    hi = lo[::-1] * (-1.0) ** np.arange(lo.size)
    return lo, hi


@dataclass
class SWTSubbands:
    """Undecimated subbands. First letter: filter along width, second: along height."""

    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor
    wavelet: str = "haar"
    level: int = 1

    def __iter__(self):
        return iter((self.ll, self.lh, self.hl, self.hh))

    def as_dict(self):
        return dict(zip(SUBBANDS, self))


@dataclass(frozen=True)
class WaveletLossConfig:
    # Chosen defaults; weights grow toward the diagonal detail band.
    lambdas: tuple = (0.05, 0.10, 0.10, 0.15)
    wavelet: str = "haar"

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambdas)
        if len(lam) != 4 or any(v < 0 or not math.isfinite(v) for v in lam):
            raise ConfigError(f"wavelet.lambdas: expected 4 nonnegative reals, got {list(self.lambdas)}")
        object.__setattr__(self, "lambdas", lam)
        wavelet_filters(self.wavelet)


def _kernel_bank(wavelet, dtype, device):
    lo, hi = wavelet_filters(wavelet)
    # (width filter, height filter) per subband; kernel[r, c] = h_filter[r] * w_filter[c]
    pairs = ((lo, lo), (lo, hi), (hi, lo), (hi, hi))
    bank = np.stack([np.outer(fh, fw) for fw, fh in pairs])[:, None]
    return torch.as_tensor(bank, dtype=dtype, device=device)


def swt2(y, wavelet: str = "haar") -> SWTSubbands:
    """Decompose a plane ``(H, W)`` or batch ``(N, 1, H, W)`` into four H x W subbands.

    Output sample ``(i, j)`` correlates the filters with input rows/cols
    starting ``(L - 1) // 2`` samples before ``(i, j)``; edges are reflected.
    """
    t = torch.as_tensor(y)
    if not t.is_floating_point():
        t = t.double()
    squeeze = t.ndim == 2
    if squeeze:
        t = t[None, None]
    if t.ndim != 4 or t.shape[1] != 1:
        raise ValueError(f"expected (H, W) or (N, 1, H, W), got {tuple(t.shape)}")
    lo, _ = wavelet_filters(wavelet)
    L = lo.size
    h, w = t.shape[-2:]
    if h < L or w < L:
        raise ValueError(f"plane {h}x{w} smaller than {wavelet} filter length {L}")
    left = (L - 1) // 2
    right = L - 1 - left
    padded = F.pad(t, (left, right, left, right), mode="reflect")
    out = F.conv2d(padded, _kernel_bank(wavelet, t.dtype, t.device))
    bands = [out[:, i:i + 1] for i in range(4)]
    if squeeze:
        bands = [b[0, 0] for b in bands]
    return SWTSubbands(*bands, wavelet=wavelet, level=1)


def rgb_to_y_torch(img: torch.Tensor) -> torch.Tensor:
    """Luma of ``(N, 3, H, W)`` RGB, kept as ``(N, 1, H, W)``."""
    coeffs = torch.as_tensor(RGB_TO_YCBCR[0], dtype=img.dtype, device=img.device)
    return (img * coeffs.view(1, 3, 1, 1)).sum(dim=1, keepdim=True)


def _as_batch(img):
    t = torch.as_tensor(img)
    if isinstance(img, np.ndarray):
        t = t.permute(2, 0, 1) if t.ndim == 3 else t.permute(0, 3, 1, 2)
    if t.ndim == 3:
        t = t[None]
    if t.ndim != 4 or t.shape[1] != 3:
        raise ValueError(f"expected RGB images (N, 3, H, W), got {tuple(t.shape)}")
    return t


def wavelet_loss(sr, gt, cfg: WaveletLossConfig | None = None) -> torch.Tensor:
    """Weighted sum over subbands of the mean absolute luma-SWT difference.

    Tensors are ``(N, 3, H, W)`` or ``(3, H, W)``; numpy inputs are taken as
    ``(H, W, 3)``. Differentiable with respect to ``sr``.
    """
    cfg = cfg or WaveletLossConfig()
    sr, gt = _as_batch(sr), _as_batch(gt)
    if sr.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(sr.shape)} vs {tuple(gt.shape)}")
    gt = gt.to(sr.dtype)
    bands_sr = swt2(rgb_to_y_torch(sr), cfg.wavelet)
    bands_gt = swt2(rgb_to_y_torch(gt), cfg.wavelet)
    total = sr.new_zeros(())
    for lam, a, b in zip(cfg.lambdas, bands_sr, bands_gt):
        if lam:
            total = total + lam * (a - b).abs().mean()
    return total
