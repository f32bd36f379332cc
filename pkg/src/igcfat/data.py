"""Dataset preparation: ground-truth construction, evaluation pairs, training patches."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .degradation import SCALE, DegradationLevelSpec, degrade
from .imageops import read_png, resize_to, unsharp_mask, write_png
from .validation import check_image

__all__ = [
    "DATA_ROOT_ENV",
    "ManifestEntry",
    "DatasetManifest",
    "prepare_gt",
    "filter_by_height",
    "crop_to_multiple",
    "make_eval_pair",
    "prepare_dataset",
    "sample_training_batch",
    "iterations_per_epoch",
    "micro_dataset",
    "write_micro_dataset",
]

log = logging.getLogger(__name__)

#: Environment variable naming the default dataset root for the CLI.
DATA_ROOT_ENV = "IGCFAT_DATA_ROOT"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def prepare_gt(src, long_side: int = 2000, short_side: int = 1000, kernel: str = "lanczos"):
    """Resize to ``long_side x short_side`` (landscape) or the transpose (portrait).

    The source is scaled to cover the target and center-cropped, so the
    output is always exactly the target size. Square sources count as landscape.
    """
    src = check_image(src)
    h, w = src.shape[:2]
    th, tw = (short_side, long_side) if w >= h else (long_side, short_side)
    s = max(th / h, tw / w)
    rh, rw = max(th, round(h * s)), max(tw, round(w * s))
    img = resize_to(src, (rh, rw), kernel) if (rh, rw) != (h, w) else src.copy()
    top, left = (rh - th) // 2, (rw - tw) // 2
    return img[top:top + th, left:left + tw]


def filter_by_height(images, threshold: int = 1000):
    """Keep images whose smaller side is at least ``threshold``.

    ``images`` is a sequence of ``(name, array)`` pairs or a mapping. Returns
    ``(kept, excluded)`` where ``excluded`` lists ``{name, height, width}``.
    """
    items = images.items() if isinstance(images, dict) else images
    kept, excluded = [], []
    for name, img in items:
        h, w = np.shape(img)[:2]
        if min(h, w) < threshold:
            excluded.append({"name": name, "height": int(h), "width": int(w), "threshold": threshold})
        else:
            kept.append((name, img))
    return kept, excluded


def crop_to_multiple(img, multiple: int = SCALE):
    h, w = img.shape[:2]
    return img[: h - h % multiple, : w - w % multiple]


def make_eval_pair(gt, kernel: str = "bicubic"):
    """``(lr, gt)`` with ``gt`` cropped to a multiple of 4 and ``lr`` its x1/4 resample."""
    gt = crop_to_multiple(check_image(gt))
    h, w = gt.shape[:2]
    return resize_to(gt, (h // SCALE, w // SCALE), kernel), gt


# ---------------------------------------------------------------------------
# manifest


@dataclass
class ManifestEntry:
    source_path: str
    split: str
    prepared_gt_path: str
    prepared_lr_path: str | None = None


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    prep_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = [e if isinstance(e, ManifestEntry) else ManifestEntry(**e) for e in self.entries]
        for e in self.entries:
            if e.split not in ("train", "val"):
                raise ValueError(f"unknown split {e.split!r} for {e.source_path}")
            if e.split == "val" and not e.prepared_lr_path:
                raise ValueError(f"val entry {e.source_path} lacks an LR path")

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def check_disjoint(self) -> None:
        train = {e.source_path for e in self.split("train")} | {e.prepared_gt_path for e in self.split("train")}
        val = {e.source_path for e in self.split("val")} | {e.prepared_gt_path for e in self.split("val")}
        overlap = train & val
        if overlap:
            raise ValueError(f"train/val overlap: {sorted(overlap)[:5]}")

    def load_images(self, split: str = "train") -> list[np.ndarray]:
        return [read_png(e.prepared_gt_path) for e in self.split(split)]

    def load_pairs(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """``(name, lr, gt)`` for every validation entry."""
        return [(Path(e.prepared_gt_path).stem, read_png(e.prepared_lr_path), read_png(e.prepared_gt_path))
                for e in self.split("val")]

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        body = {"entries": [asdict(e) for e in self.entries], "prep_params": self.prep_params}
        path.write_text(json.dumps(body, indent=2))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        body = json.loads(Path(path).read_text())
        return cls(entries=body["entries"], prep_params=body.get("prep_params", {}))


def _list_images(directory):
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def prepare_dataset(train_dir, out_dir, val_dir=None, *, long_side=2000, short_side=1000,
                    threshold=1000, gt_kernel="lanczos", lr_kernel="bicubic") -> DatasetManifest:
    """Build prepared GT (and validation LR) trees plus a manifest under ``out_dir``."""
    out_dir = Path(out_dir)
    params = dict(long_side=long_side, short_side=short_side, threshold=threshold,
                  gt_kernel=gt_kernel, lr_kernel=lr_kernel, scale=SCALE)
    entries, excluded = [], []
    for split, directory in (("train", train_dir), ("val", val_dir)):
        if directory is None:
            continue
        images = [(p, read_png(p)) for p in _list_images(directory)]
        kept, dropped = filter_by_height([(str(p), im) for p, im in images], threshold)
        excluded += dropped
        for name, img in kept:
            stem = Path(name).stem
            gt = prepare_gt(img, long_side, short_side, gt_kernel)
            gt_path = out_dir / split / "gt" / f"{stem}.png"
            write_png(gt_path, gt)
            lr_path = None
            if split == "val":
                lr, _ = make_eval_pair(gt, lr_kernel)
                lr_path = out_dir / split / "lr" / f"{stem}.png"
                write_png(lr_path, lr)
            entries.append(ManifestEntry(name, split, str(gt_path), lr_path and str(lr_path)))
    for row in excluded:
        log.info("excluded %s (%dx%d) below threshold %d", row["name"], row["width"], row["height"], threshold)
    params["excluded"] = excluded
    manifest = DatasetManifest(entries, params)
    manifest.check_disjoint()
    manifest.save(out_dir / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# training batches


def sample_training_batch(source, patch_size: int, batch: int, degradation, rng,
                          usm: dict | None = None, max_attempts: int = 100):
    """Random GT crops degraded independently; returns ``(lr, gt, draws)``.

    ``source`` is a manifest (train split) or a sequence of RGB arrays.
    ``degradation`` is a :class:`DegradationConfig` (level sampled per
    patch) or a single :class:`DegradationLevelSpec`. ``usm`` holds
    :func:`unsharp_mask` keyword arguments applied to the GT target only; the
    LR is degraded from the unsharpened crop. Arrays are ``(B, H, W, 3)``.
    """
    if patch_size % SCALE:
        raise ValueError(f"patch_size must be divisible by {SCALE}, got {patch_size}")
    images = source.load_images("train") if isinstance(source, DatasetManifest) else list(source)
    if not images:
        raise ValueError("no training images")
    if not any(min(im.shape[:2]) >= patch_size for im in images):
        raise ValueError(f"no training image is at least {patch_size}px on its short side")
    lrs, gts, draws = [], [], []
    attempts = 0
    while len(gts) < batch:
        img = images[int(rng.integers(len(images)))]
        h, w = img.shape[:2]
        if h < patch_size or w < patch_size:
            attempts += 1
            log.warning("skipping %dx%d image smaller than patch %d", w, h, patch_size)
            if attempts > max_attempts:
                raise ValueError("too many undersized images while sampling a batch")
            continue
        top = int(rng.integers(h - patch_size + 1))
        left = int(rng.integers(w - patch_size + 1))
        crop = np.asarray(img[top:top + patch_size, left:left + patch_size], dtype=np.float64)
        seed = int(rng.integers(2**63))
        if isinstance(degradation, DegradationLevelSpec):
            lr, draw = degrade(crop, degradation, seed)
        else:
            lr, draw = degradation.degrade(crop, seed)
        gts.append(unsharp_mask(crop, **usm) if usm else crop)
        lrs.append(lr)
        draws.append(draw)
    return np.stack(lrs), np.stack(gts), draws


def iterations_per_epoch(num_images: int, batch: int) -> float:
    return num_images / batch


# ---------------------------------------------------------------------------
# bundled micro-dataset


_MICRO_SOURCES = ("astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry", "hubble_deep_field",
                  "retina", "colorwheel")


def micro_dataset(size: tuple[int, int] = (96, 128), count: int = 20) -> dict[str, np.ndarray]:
    """Deterministic small RGB crops from the sample images shipped with scikit-image."""
    from skimage import data as skdata

    sources = [(name, getattr(skdata, name)()[..., :3] / 255.0) for name in _MICRO_SOURCES]
    h, w = size
    out = {}
    k = 0
    while len(out) < count:
        name, img = sources[k % len(sources)]
        rep = k // len(sources)
        ih, iw = img.shape[:2]
        scale = min(1.0, 2.5 * max(h / ih, w / iw) * (1 + rep))
        small = resize_to(img, (max(h, round(ih * scale)), max(w, round(iw * scale))), "area")
        sh, sw = small.shape[:2]
        top = (sh - h) * (rep + 1) // (rep + 2)
        left = (sw - w) // (rep + 2)
        out[f"{name}_{rep}"] = np.ascontiguousarray(small[top:top + h, left:left + w])
        k += 1
    return out


def write_micro_dataset(out_dir, size=(96, 128), count=20) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for name, img in micro_dataset(size, count).items():
        path = out_dir / f"{name}.png"
        write_png(path, img)
        paths.append(path)
    return paths


def data_root() -> Path | None:
    root = os.environ.get(DATA_ROOT_ENV)
    return Path(root) if root else None
