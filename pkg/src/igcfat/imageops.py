"""Pixel-level primitives: color conversion, resampling, unsharp masking, PSNR.

Images are numpy arrays with samples in ``[0, 1]``: a plane is ``(H, W)``, a
stack is ``(H, W, C)``. Every function here is pure.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage, sparse

from .validation import check_image, check_same_shape

__all__ = [
    "RGB_TO_YCBCR",
    "YCBCR_OFFSET",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
    "rgb_to_y",
    "resize",
    "resize_to",
    "unsharp_mask",
    "psnr",
    "PSNR_CAP",
    "read_png",
    "write_png",
    "to_uint8",
]

# Full-range BT.601 (JFIF). Luma row sums to 1, chroma rows sum to 0.
RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
YCBCR_OFFSET = np.array([0.0, 0.5, 0.5])
_YCBCR_TO_RGB = np.linalg.inv(RGB_TO_YCBCR)

#: Returned by :func:`psnr` when the two images are identical.
PSNR_CAP = math.inf


def _require_three_planes(img):
    img = check_image(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected a 3-plane image, got shape {img.shape}")
    return img


def rgb_to_ycbcr(img):
    img = _require_three_planes(img)
    return img @ RGB_TO_YCBCR.T + YCBCR_OFFSET


def ycbcr_to_rgb(img):
    img = _require_three_planes(img)
    return (img - YCBCR_OFFSET) @ _YCBCR_TO_RGB.T


def rgb_to_y(img):
    """Luma plane of an RGB stack."""
    img = _require_three_planes(img)
    return img @ RGB_TO_YCBCR[0]


# ---------------------------------------------------------------------------
# resampling


def _cubic(x, a=-0.5):
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    return np.where(
        x <= 1,
        (a + 2) * x3 - (a + 3) * x2 + 1,
        np.where(x < 2, a * x3 - 5 * a * x2 + 8 * a * x - 4 * a, 0.0),
    )


def _triangle(x):
    return np.clip(1.0 - np.abs(x), 0.0, None)


def _box(x):
    return ((x >= -0.5) & (x < 0.5)).astype(np.float64)


def _lanczos3(x):
    return np.where(np.abs(x) < 3, np.sinc(x) * np.sinc(x / 3.0), 0.0)


# name -> (kernel, support radius)
_KERNELS = {
    "bicubic": (_cubic, 2.0),
    "bilinear": (_triangle, 1.0),
    "area": (_box, 0.5),
    "lanczos": (_lanczos3, 3.0),
}
RESIZE_KERNELS = tuple(_KERNELS) + ("nearest",)


def _reflect_index(idx, n):
    # half-sample symmetric: -1 -> 0, n -> n-1
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


def _resample_matrix(in_size: int, out_size: int, kernel: str):
    scale = out_size / in_size
    centers = (np.arange(out_size) + 0.5) / scale - 0.5
    if kernel == "nearest":
        cols = np.clip(np.floor((np.arange(out_size) + 0.5) / scale), 0, in_size - 1).astype(int)
        data = np.ones(out_size)
        return sparse.csr_matrix((data, (np.arange(out_size), cols)), shape=(out_size, in_size))
    fn, support = _KERNELS[kernel]
    stretch = max(1.0, 1.0 / scale)
    radius = support * stretch
    taps = int(math.ceil(2 * radius)) + 2
    left = np.floor(centers - radius).astype(int)
    idx = left[:, None] + np.arange(taps)[None, :]
    w = fn((idx - centers[:, None]) / stretch)
    w_sum = w.sum(axis=1, keepdims=True)
    w = w / w_sum
    rows = np.repeat(np.arange(out_size), taps)
    cols = _reflect_index(idx, in_size).ravel()
    mat = sparse.coo_matrix((w.ravel(), (rows, cols)), shape=(out_size, in_size))
    return mat.tocsr()  # duplicates from reflection are summed


def resize_to(img, size: tuple[int, int], kernel: str = "bicubic"):
    """Resample ``img`` to exactly ``size = (height, width)``.

    Separable filtering with reflect boundaries. Weights are renormalized per
    output sample, so constant images are preserved exactly. Downscaling is
    antialiased (the kernel is stretched by the inverse scale).
    """
    img = check_image(img)
    if kernel not in RESIZE_KERNELS:
        raise ValueError(f"unknown resize kernel {kernel!r}; choose from {RESIZE_KERNELS}")
    out_h, out_w = int(size[0]), int(size[1])
    if out_h < 1 or out_w < 1:
        raise ValueError(f"degenerate output size {(out_h, out_w)}")
    h, w = img.shape[:2]
    squeeze = img.ndim == 2
    x = img[:, :, None] if squeeze else img
    c = x.shape[2]
    if (out_h, out_w) == (h, w) and kernel != "nearest":
        out = x.copy()
    else:
        rows = _resample_matrix(h, out_h, kernel)
        cols = _resample_matrix(w, out_w, kernel)
        y = rows @ x.reshape(h, w * c)  # (out_h, w*c)
        y = y.reshape(out_h, w, c).transpose(1, 0, 2).reshape(w, out_h * c)
        y = cols @ y  # (out_w, out_h*c)
        out = y.reshape(out_w, out_h, c).transpose(1, 0, 2)
    out = np.clip(out, 0.0, 1.0)
    return out[:, :, 0] if squeeze else out


def resize(img, scale: float, kernel: str = "bicubic"):
    """Resample by a uniform ``scale``; output dims are ``round(H*scale)``."""
    img = check_image(img)
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    h, w = img.shape[:2]
    return resize_to(img, (round(h * scale), round(w * scale)), kernel)


def unsharp_mask(img, sigma: float = 8.0, weight: float = 0.5, threshold: float = 10 / 255):
    """Sharpen by adding ``weight * (img - blur(img))`` where the residual exceeds ``threshold``."""
    img = check_image(img)
    if sigma <= 0 or weight < 0 or threshold < 0:
        raise ValueError("require sigma > 0, weight >= 0, threshold >= 0")
    sig = (sigma, sigma) + (0,) * (img.ndim - 2)
    blurred = ndimage.gaussian_filter(img, sig, mode="reflect", truncate=4.0)
    mask = img - blurred
    sharpened = np.where(np.abs(mask) > threshold, img + weight * mask, img)
    return np.clip(sharpened, 0.0, 1.0)


def psnr(a, b, peak: float = 1.0, channel: str = "rgb") -> float:
    """Peak signal-to-noise ratio in dB.

    ``channel="y"`` scores only the luma plane of RGB inputs. Identical images
    return :data:`PSNR_CAP` (``inf``) instead of raising.
    """
    a, b = check_same_shape(a, b)
    if peak <= 0:
        raise ValueError("peak must be positive")
    if channel == "y":
        a, b = rgb_to_y(a), rgb_to_y(b)
    elif channel != "rgb":
        raise ValueError(f"channel must be 'rgb' or 'y', got {channel!r}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return 10.0 * math.log10(peak * peak / mse)


# ---------------------------------------------------------------------------
# 8-bit PNG I/O


def to_uint8(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_png(path) -> np.ndarray:
    """Read an image as an RGB float64 stack in [0, 1]."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        return np.asarray(im, dtype=np.float64) / 255.0


def write_png(path, img) -> None:
    img = check_image(img)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path, format="PNG")
