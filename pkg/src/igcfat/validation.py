"""Input validation helpers shared by the numpy and torch code paths."""
from __future__ import annotations

import numpy as np

__all__ = [
    "ConfigError",
    "check_image",
    "check_same_shape",
    "check_image_list",
    "check_probabilities",
]


class ConfigError(ValueError):
    """A configuration value violates a documented constraint."""


def check_image(img, *, name: str = "image") -> np.ndarray:
    """Return ``img`` as a finite float64 array of shape (H, W) or (H, W, C)."""
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        arr = arr / 255.0
    arr = arr.astype(np.float64, copy=False)
    if arr.ndim not in (2, 3):
        raise ValueError(f"{name} must be (H, W) or (H, W, C), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} has empty spatial dims {arr.shape[:2]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    return arr


def check_same_shape(a, b):
    a = check_image(a, name="first image")
    b = check_image(b, name="second image")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def check_image_list(images) -> list[np.ndarray]:
    """Accept a single image, a 4-D batch or a sequence of RGB images."""
    if isinstance(images, np.ndarray) and images.ndim == 3:
        images = [images]
    out = [check_image(im, name=f"image[{i}]") for i, im in enumerate(images)]
    for i, im in enumerate(out):
        if im.ndim != 3 or im.shape[2] != 3:
            raise ValueError(f"image[{i}] must be RGB (H, W, 3), got {im.shape}")
    return out


def check_probabilities(probs, n: int | None = None, *, key: str = "probs", tol: float = 1e-9):
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or (n is not None and p.size != n):
        raise ConfigError(f"{key}: expected {n} probabilities, got {p.tolist()}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ConfigError(f"{key}: probabilities must be nonnegative, got {p.tolist()}")
    if abs(p.sum() - 1.0) > tol:
        raise ConfigError(f"{key}: probabilities must sum to 1 (simplex constraint), got sum {p.sum():.6g}")
    return p
