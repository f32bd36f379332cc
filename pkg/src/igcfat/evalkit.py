"""Validation-set scoring (PSNR, perceptual distance) and side-by-side comparison grids."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from PIL import Image, ImageDraw

from .data import DatasetManifest, make_eval_pair
from .imageops import psnr, resize_to, to_uint8
from .nets import ToyFeatureExtractor
from .validation import ConfigError, check_image

__all__ = [
    "METRICS",
    "MetricReport",
    "ToyPerceptualDistance",
    "register_perceptual_backend",
    "get_perceptual_backend",
    "upsample_baseline",
    "as_upscaler",
    "evaluate",
    "compare_grid",
]

METRICS = ("psnr", "perceptual")


@dataclass
class MetricReport:
    per_image: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def clean(v):
            return None if isinstance(v, float) and not np.isfinite(v) else v

        body = asdict(self)
        body["per_image"] = [{k: clean(v) for k, v in row.items()} for row in body["per_image"]]
        body["aggregate"] = {k: clean(v) for k, v in body["aggregate"].items()}
        return json.dumps(body, indent=2)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())


# ---------------------------------------------------------------------------
# perceptual distance backends


class ToyPerceptualDistance:
    """LPIPS-style distance on the frozen toy extractor.

    Per stage, features are unit-normalized along channels; the squared
    difference is summed over channels, averaged over pixels and summed
    over stages. Zero for identical inputs.
    """

    name = "toy"

    def __init__(self, seed: int = 0):
        self.net = ToyFeatureExtractor(seed).double()

    @torch.no_grad()
    def __call__(self, a, b) -> float:
        ta = torch.from_numpy(np.ascontiguousarray(check_image(a).transpose(2, 0, 1)))[None]
        tb = torch.from_numpy(np.ascontiguousarray(check_image(b).transpose(2, 0, 1)))[None]
        total = 0.0
        for fa, fb in zip(self.net(ta), self.net(tb)):
            fa = fa / (fa.norm(dim=1, keepdim=True) + 1e-10)
            fb = fb / (fb.norm(dim=1, keepdim=True) + 1e-10)
            total += float(((fa - fb) ** 2).sum(dim=1).mean())
        return total


def _lpips_backend():
    try:
        import lpips
    except ImportError as exc:
        raise ConfigError("perceptual backend 'lpips' needs the optional 'lpips' package") from exc
    net = lpips.LPIPS(net="alex", verbose=False)

    @torch.no_grad()
    def distance(a, b):
        ta = torch.from_numpy(check_image(a).transpose(2, 0, 1)).float()[None] * 2 - 1
        tb = torch.from_numpy(check_image(b).transpose(2, 0, 1)).float()[None] * 2 - 1
        return float(net(ta, tb))

    return distance


_BACKENDS: dict[str, Callable] = {"toy": ToyPerceptualDistance, "lpips": _lpips_backend}


def register_perceptual_backend(name: str, factory: Callable) -> None:
    """``factory()`` returns a callable ``(a, b) -> float`` on (H, W, 3) arrays."""
    _BACKENDS[name] = factory


def get_perceptual_backend(name: str = "toy"):
    if name not in _BACKENDS:
        raise ConfigError(f"unknown perceptual backend {name!r}; registered: {sorted(_BACKENDS)}")
    return _BACKENDS[name]()


# ---------------------------------------------------------------------------
# models


def upsample_baseline(kernel: str = "bicubic"):
    """Non-learned x4 upscaler."""

    def upscale(lr):
        h, w = lr.shape[:2]
        return resize_to(lr, (4 * h, 4 * w), kernel)

    upscale.__name__ = f"{kernel}_x4"
    return upscale


def as_upscaler(model) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap a checkpoint path, generator module, baseline name or callable as ``lr -> sr``."""
    if isinstance(model, (str, Path)) and str(model) in ("bicubic", "bilinear", "nearest", "lanczos", "area"):
        return upsample_baseline(str(model))
    if isinstance(model, (str, Path)):
        from .trainer import load_generator

        model = load_generator(model)
    if isinstance(model, torch.nn.Module):
        net = model.eval()
        dtype = next(net.parameters()).dtype

        @torch.no_grad()
        def upscale(lr):
            x = torch.from_numpy(np.ascontiguousarray(lr.transpose(2, 0, 1)))[None].to(dtype)
            return net(x)[0].clamp(0, 1).permute(1, 2, 0).double().numpy()

        return upscale
    if callable(model):
        return model
    raise TypeError(f"cannot use {type(model).__name__} as an upscaler")


def _iter_pairs(pairs):
    if isinstance(pairs, DatasetManifest):
        yield from pairs.load_pairs()
        return
    for item in pairs:
        if len(item) == 2:
            name, gt = item
            lr, gt = make_eval_pair(gt)
            yield name, lr, gt
        else:
            yield item


def evaluate(model, pairs, metrics=("psnr", "perceptual"), perceptual_backend: str = "toy",
             psnr_channel: str = "rgb") -> MetricReport:
    """Super-resolve every validation LR and score it against its GT.

    ``pairs`` is a manifest (its val split), ``(name, lr, gt)`` triples or
    ``(name, gt)`` pairs (LR made by bicubic x1/4 after cropping GT to a
    multiple of 4). PSNR delegates to :func:`igcfat.imageops.psnr`.
    """
    metrics = tuple(metrics)
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ConfigError(f"unknown metrics {sorted(unknown)}; choose from {METRICS}")
    backend = get_perceptual_backend(perceptual_backend) if "perceptual" in metrics else None
    upscale = as_upscaler(model)
    rows = []
    for name, lr, gt in _iter_pairs(pairs):
        sr = check_image(upscale(lr))
        if sr.shape != gt.shape:
            raise ValueError(f"{name}: model output {sr.shape} does not match GT {gt.shape}")
        row = {"name": name}
        if "psnr" in metrics:
            row["psnr_db"] = psnr(sr, gt, channel=psnr_channel)
        if backend is not None:
            row["perceptual_distance"] = float(backend(sr, gt))
        rows.append(row)
    if not rows:
        raise ValueError("validation set is empty")
    aggregate = {}
    if "psnr" in metrics:
        aggregate["mean_psnr_db"] = float(np.mean([r["psnr_db"] for r in rows]))
    if backend is not None:
        aggregate["mean_perceptual_distance"] = float(np.mean([r["perceptual_distance"] for r in rows]))
    config = {"metrics": list(metrics), "perceptual_backend": perceptual_backend if backend else None,
              "psnr_channel": psnr_channel, "psnr_peak": 1.0}
    return MetricReport(rows, aggregate, config)


# ---------------------------------------------------------------------------
# comparison grid


def compare_grid(images, out_path=None, crop=None, separator: int = 4, labels: bool = True) -> np.ndarray:
    """Lay ``(name, image)`` panels side by side with white separators.

    ``crop = (top, left, height, width)`` is applied to every panel first.
    Labels are drawn inside the panels, so the grid height equals the panel
    height. Returns the grid and writes it as PNG when ``out_path`` is set.
    """
    images = list(images)
    if len(images) < 2:
        raise ValueError("compare_grid needs at least two images")
    panels = []
    for name, img in images:
        img = check_image(img)
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        if crop is not None:
            top, left, ch, cw = crop
            if top < 0 or left < 0 or top + ch > img.shape[0] or left + cw > img.shape[1]:
                raise ValueError(f"crop {crop} outside {name} of shape {img.shape[:2]}")
            img = img[top:top + ch, left:left + cw]
        panels.append((name, img))
    shape = panels[0][1].shape
    for name, img in panels:
        if img.shape != shape:
            raise ValueError(f"{name} has shape {img.shape}, expected {shape}")
    h, w = shape[:2]
    grid = np.ones((h, len(panels) * w + (len(panels) - 1) * separator, 3))
    for k, (_, img) in enumerate(panels):
        x0 = k * (w + separator)
        grid[:, x0:x0 + w] = img[..., :3]
    pil = Image.fromarray(to_uint8(grid))
    if labels:
        draw = ImageDraw.Draw(pil)
        for k, (name, _) in enumerate(panels):
            x0 = k * (w + separator)
            draw.text((x0 + 2, 1), str(name), fill=(255, 255, 0))
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        pil.save(out_path, format="PNG")
    return np.asarray(pil, dtype=np.float64) / 255.0
