"""Adaptive multi-level degradation synthesis.

A degradation *level* is a chain of one or more *rounds*; each round applies
blur -> resize -> noise -> JPEG. Weak (D1) and standard (D2) levels run a
single round with small and large parameter ranges, the severe level (D3)
runs two. After the last round the image is resized to exactly 1/4 of the HR
size. One level is chosen per sample according to ``probs``.

Sampling and application are split: :func:`sample_draw` turns a level spec
and an RNG into a :class:`PipelineDraw` holding every realized parameter, and
:func:`apply_draw` is a deterministic function of ``(hr, draw)``.
"""
from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from PIL import Image
from scipy import ndimage, special

from .imageops import resize_to, rgb_to_y, to_uint8
from .validation import ConfigError, check_image, check_probabilities

__all__ = [
    "LEVELS",
    "SCALE",
    "BLUR_KINDS",
    "RoundSpec",
    "DegradationLevelSpec",
    "DegradationConfig",
    "RoundDraw",
    "PipelineDraw",
    "sample_level",
    "make_blur_kernel",
    "add_noise",
    "jpeg_round_trip",
    "sample_draw",
    "apply_draw",
    "degrade",
    "derive_seed",
    "draw_in_range",
]

LEVELS = ("D1", "D2", "D3")
SCALE = 4
BLUR_KINDS = ("iso-gaussian", "aniso-gaussian", "sinc")
DEGRADE_RESIZE_KERNELS = ("bicubic", "bilinear", "area")
POISSON_LEVELS = 256
SINC_OMEGA_RANGE = (math.pi / 3, math.pi)


def derive_seed(base_seed: int, *stream: int) -> int:
    """Independent seed for (worker_id, sample_index, ...) under ``base_seed``."""
    ss = np.random.SeedSequence([int(base_seed), *map(int, stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# specs


def _range(value, key, *, integer=False, lo_bound=None, hi_bound=None):
    try:
        lo, hi = value
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a [lo, hi] pair, got {value!r}") from None
    cast = int if integer else float
    lo, hi = cast(lo), cast(hi)
    if lo > hi:
        raise ConfigError(f"{key}: range must satisfy lo <= hi, got [{lo}, {hi}]")
    if lo_bound is not None and lo < lo_bound:
        raise ConfigError(f"{key}: lower bound {lo} below allowed minimum {lo_bound}")
    if hi_bound is not None and hi > hi_bound:
        raise ConfigError(f"{key}: upper bound {hi} above allowed maximum {hi_bound}")
    return (lo, hi)


def _weights(value, allowed, key):
    if not isinstance(value, dict) or not value:
        raise ConfigError(f"{key}: expected a mapping of weights over {allowed}")
    unknown = set(value) - set(allowed)
    if unknown:
        raise ConfigError(f"{key}: unknown tags {sorted(unknown)}; allowed {allowed}")
    probs = check_probabilities(list(value.values()), key=key)
    return dict(zip(value.keys(), map(float, probs)))


def _prob(value, key):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{key}: probability must lie in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class RoundSpec:
    """Parameter ranges for one blur -> resize -> noise -> JPEG round.

    ``resize_scale_range`` multiplies the round's nominal output size: the
    round input size for intermediate rounds, the LR target size for the last.
    Noise sigmas are in [0, 1] pixel units.
    """

    blur_prob: float = 1.0
    blur_kernel_weights: dict = field(default_factory=lambda: {"iso-gaussian": 0.7, "aniso-gaussian": 0.3})
    blur_kernel_size_range: tuple = (7, 21)
    blur_sigma_range: tuple = (0.2, 1.5)
    resize_scale_range: tuple = (0.5, 1.2)
    resize_kernel_weights: dict = field(default_factory=lambda: {"bicubic": 1 / 3, "bilinear": 1 / 3, "area": 1 / 3})
    gaussian_noise_prob: float = 0.5
    gaussian_noise_sigma_range: tuple = (1 / 255, 20 / 255)
    poisson_noise_scale_range: tuple = (0.05, 1.5)
    gray_noise_prob: float = 0.4
    jpeg_quality_range: tuple = (50, 95)

    def __post_init__(self):
        # normalizes and validates; frozen, so assign through object.__setattr__
        set_ = object.__setattr__
        set_(self, "blur_prob", _prob(self.blur_prob, "blur_prob"))
        set_(self, "blur_kernel_weights", _weights(self.blur_kernel_weights, BLUR_KINDS, "blur_kernel_weights"))
        ks = _range(self.blur_kernel_size_range, "blur_kernel_size_range", integer=True, lo_bound=3)
        if ks[0] % 2 == 0 or ks[1] % 2 == 0:
            raise ConfigError(f"blur_kernel_size_range: sizes must be odd, got {list(ks)}")
        set_(self, "blur_kernel_size_range", ks)
        set_(self, "blur_sigma_range", _range(self.blur_sigma_range, "blur_sigma_range", lo_bound=1e-3))
        set_(self, "resize_scale_range", _range(self.resize_scale_range, "resize_scale_range", lo_bound=1e-3))
        set_(self, "resize_kernel_weights",
             _weights(self.resize_kernel_weights, DEGRADE_RESIZE_KERNELS, "resize_kernel_weights"))
        set_(self, "gaussian_noise_prob", _prob(self.gaussian_noise_prob, "gaussian_noise_prob"))
        set_(self, "gaussian_noise_sigma_range",
             _range(self.gaussian_noise_sigma_range, "gaussian_noise_sigma_range", lo_bound=0.0))
        set_(self, "poisson_noise_scale_range",
             _range(self.poisson_noise_scale_range, "poisson_noise_scale_range", lo_bound=0.0))
        set_(self, "gray_noise_prob", _prob(self.gray_noise_prob, "gray_noise_prob"))
        set_(self, "jpeg_quality_range",
             _range(self.jpeg_quality_range, "jpeg_quality_range", integer=True, lo_bound=1, hi_bound=100))

    @classmethod
    def from_dict(cls, d, key="round"):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"{key}: unknown keys {sorted(unknown)}")
        try:
            return cls(**d)
        except ConfigError as e:
            raise ConfigError(f"{key}.{e}") from None

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def contains(self, other: "RoundSpec") -> bool:
        """True when every range of ``other`` lies inside this spec's range."""
        for name in ("blur_sigma_range", "resize_scale_range", "gaussian_noise_sigma_range",
                     "poisson_noise_scale_range", "jpeg_quality_range", "blur_kernel_size_range"):
            lo, hi = getattr(self, name)
            olo, ohi = getattr(other, name)
            if olo < lo or ohi > hi:
                return False
        return True


@dataclass(frozen=True)
class DegradationLevelSpec:
    level: str
    rounds: tuple

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ConfigError(f"level: expected one of {LEVELS}, got {self.level!r}")
        rounds = tuple(r if isinstance(r, RoundSpec) else RoundSpec.from_dict(r) for r in self.rounds)
        if len(rounds) not in (1, 2):
            raise ConfigError(f"{self.level}.rounds: order must be 1 or 2, got {len(rounds)}")
        object.__setattr__(self, "rounds", rounds)

    @property
    def order(self) -> int:
        return len(self.rounds)

    @classmethod
    def from_dict(cls, level, d):
        rounds = d.get("rounds")
        if not rounds:
            raise ConfigError(f"degradation.levels.{level}.rounds: at least one round required")
        parsed = [RoundSpec.from_dict(r, key=f"degradation.levels.{level}.rounds[{i}]") for i, r in enumerate(rounds)]
        return cls(level=level, rounds=tuple(parsed))

    def to_dict(self):
        return {"rounds": [r.to_dict() for r in self.rounds]}


@dataclass(frozen=True)
class DegradationConfig:
    """Three level specs plus the level-selection probabilities."""

    levels: tuple
    probs: tuple = (0.3, 0.3, 0.4)

    def __post_init__(self):
        probs = tuple(map(float, check_probabilities(self.probs, 3, key="degradation.probs")))
        object.__setattr__(self, "probs", probs)
        if tuple(s.level for s in self.levels) != LEVELS:
            raise ConfigError(f"degradation.levels: expected levels {LEVELS} in order")
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.levels[0].order != 1 or self.levels[1].order != 1 or self.levels[2].order != 2:
            raise ConfigError("degradation.levels: D1 and D2 must be first-order and D3 second-order")

    def __getitem__(self, level: str) -> DegradationLevelSpec:
        return self.levels[LEVELS.index(level)]

    @classmethod
    def from_dict(cls, d):
        levels = d.get("levels", {})
        missing = [lv for lv in LEVELS if lv not in levels]
        if missing:
            raise ConfigError(f"degradation.levels: missing {missing}")
        specs = tuple(DegradationLevelSpec.from_dict(lv, levels[lv]) for lv in LEVELS)
        return cls(levels=specs, probs=tuple(d.get("probs", (0.3, 0.3, 0.4))))

    def to_dict(self):
        return {"probs": list(self.probs), "levels": {s.level: s.to_dict() for s in self.levels}}

    def sample_level(self, rng) -> str:
        return sample_level(rng, self.probs)

    def degrade(self, hr, seed):
        """Choose a level with ``probs`` and degrade; replayable from ``draw.seed``."""
        seed = _as_seed(seed)
        rng = np.random.default_rng(seed)
        level = sample_level(rng, self.probs)
        draw = sample_draw(self[level], rng, seed=seed, hr_size=np.shape(hr)[:2])
        return apply_draw(hr, draw), draw


# ---------------------------------------------------------------------------
# draws


@dataclass(frozen=True)
class RoundDraw:
    blur_kind: str  # "delta" when the round skipped blurring
    kernel_size: int
    sigma_x: float
    sigma_y: float
    theta: float
    omega: float
    resize_kernel: str
    resize_scale: float
    out_size: tuple
    noise_kind: str
    noise_strength: float
    gray_noise: bool
    noise_seed: int
    jpeg_quality: int


@dataclass(frozen=True)
class PipelineDraw:
    level: str
    seed: int
    hr_size: tuple
    rounds: tuple
    final_resize_kernel: str

    @property
    def order(self) -> int:
        return len(self.rounds)

    def to_dict(self):
        d = asdict(self)
        d["rounds"] = [asdict(r) for r in self.rounds]
        return d


def sample_level(rng, probs=(0.3, 0.3, 0.4)) -> str:
    """Draw a level tag from the categorical distribution ``probs``."""
    p = check_probabilities(probs, 3)
    u = rng.random()
    return LEVELS[min(int(np.searchsorted(np.cumsum(p), u, side="right")), 2)]


def _choose(rng, weights: dict) -> str:
    tags = list(weights)
    p = np.fromiter(weights.values(), float)
    idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return tags[min(idx, len(tags) - 1)]


def _as_seed(seed) -> int:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(2**63))
    return int(seed)


def sample_draw(spec: DegradationLevelSpec, rng, *, seed: int, hr_size) -> PipelineDraw:
    """Realize every random parameter of ``spec`` for an HR image of ``hr_size``."""
    hr_h, hr_w = map(int, hr_size)
    if hr_h % SCALE or hr_w % SCALE:
        raise ValueError(f"HR dims {(hr_h, hr_w)} must be divisible by {SCALE}")
    lr_h, lr_w = hr_h // SCALE, hr_w // SCALE
    cur = (hr_h, hr_w)
    rounds = []
    for i, rs in enumerate(spec.rounds):
        last = i == len(spec.rounds) - 1
        if rng.random() < rs.blur_prob:
            kind = _choose(rng, rs.blur_kernel_weights)
            lo, hi = rs.blur_kernel_size_range
            size = 2 * int(rng.integers(lo // 2, hi // 2 + 1)) + 1
            sx = float(rng.uniform(*rs.blur_sigma_range))
            sy = float(rng.uniform(*rs.blur_sigma_range)) if kind == "aniso-gaussian" else sx
            theta = float(rng.uniform(-math.pi, math.pi)) if kind == "aniso-gaussian" else 0.0
            omega = float(rng.uniform(*SINC_OMEGA_RANGE)) if kind == "sinc" else 0.0
        else:
            kind, size, sx, sy, theta, omega = "delta", 1, 0.0, 0.0, 0.0, 0.0
        rkernel = _choose(rng, rs.resize_kernel_weights)
        scale = float(rng.uniform(*rs.resize_scale_range))
        ref = (lr_h, lr_w) if last else cur
        out = (max(1, round(ref[0] * scale)), max(1, round(ref[1] * scale)))
        if rng.random() < rs.gaussian_noise_prob:
            nkind, strength = "gaussian", float(rng.uniform(*rs.gaussian_noise_sigma_range))
        else:
            nkind, strength = "poisson", float(rng.uniform(*rs.poisson_noise_scale_range))
        gray = bool(rng.random() < rs.gray_noise_prob)
        noise_seed = int(rng.integers(2**63))
        lo, hi = rs.jpeg_quality_range
        quality = int(rng.integers(lo, hi + 1))
        rounds.append(RoundDraw(kind, size, sx, sy, theta, omega, rkernel, scale, out,
                                nkind, strength, gray, noise_seed, quality))
        cur = out
    final_kernel = _choose(rng, spec.rounds[-1].resize_kernel_weights)
    return PipelineDraw(spec.level, int(seed), (hr_h, hr_w), tuple(rounds), final_kernel)


def draw_in_range(draw: PipelineDraw, spec: DegradationLevelSpec) -> bool:
    """Check every realized value of ``draw`` against the ranges of ``spec``."""
    if draw.level != spec.level or draw.order != spec.order:
        return False
    ok = True
    for rd, rs in zip(draw.rounds, spec.rounds):
        inside = lambda v, r: r[0] <= v <= r[1]  # noqa: E731
        if rd.blur_kind != "delta":
            ok &= rd.blur_kind in rs.blur_kernel_weights and rs.blur_kernel_weights[rd.blur_kind] > 0
            ok &= inside(rd.kernel_size, rs.blur_kernel_size_range) and rd.kernel_size % 2 == 1
            if rd.blur_kind == "sinc":
                ok &= inside(rd.omega, SINC_OMEGA_RANGE)
            else:
                ok &= inside(rd.sigma_x, rs.blur_sigma_range) and inside(rd.sigma_y, rs.blur_sigma_range)
        else:
            ok &= rs.blur_prob < 1.0
        ok &= rs.resize_kernel_weights.get(rd.resize_kernel, 0) > 0
        ok &= inside(rd.resize_scale, rs.resize_scale_range)
        if rd.noise_kind == "gaussian":
            ok &= inside(rd.noise_strength, rs.gaussian_noise_sigma_range)
        else:
            ok &= inside(rd.noise_strength, rs.poisson_noise_scale_range)
        ok &= inside(rd.jpeg_quality, rs.jpeg_quality_range)
    ok &= spec.rounds[-1].resize_kernel_weights.get(draw.final_resize_kernel, 0) > 0
    return bool(ok)


# ---------------------------------------------------------------------------
# stages


def make_blur_kernel(kind: str, sigma_x: float = 1.0, sigma_y: float | None = None,
                     theta: float = 0.0, size: int = 21, omega: float | None = None) -> np.ndarray:
    """Normalized ``size x size`` blur kernel.

    ``iso-gaussian`` uses ``sigma_x`` only; ``aniso-gaussian`` rotates the
    axis-aligned covariance ``diag(sigma_x^2, sigma_y^2)`` by ``theta``;
    ``sinc`` is a circular lowpass with cutoff ``omega`` (rad/pixel) under a
    radial Hann window.
    """
    size = int(size)
    if size < 3 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 3, got {size}")
    r = size // 2
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    if kind in ("iso-gaussian", "aniso-gaussian"):
        sigma_y = sigma_x if (kind == "iso-gaussian" or sigma_y is None) else sigma_y
        if sigma_x <= 0 or sigma_y <= 0:
            raise ValueError("sigmas must be positive")
        if kind == "iso-gaussian":
            theta = 0.0
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        cov = rot @ np.diag([sigma_x**2, sigma_y**2]) @ rot.T
        inv = np.linalg.inv(cov)
        pts = np.stack([xx, yy], axis=-1)
        k = np.exp(-0.5 * np.einsum("...i,ij,...j->...", pts, inv, pts))
    elif kind == "sinc":
        omega = math.pi / 2 if omega is None else float(omega)
        if not 0 < omega <= math.pi:
            raise ValueError(f"sinc cutoff must lie in (0, pi], got {omega}")
        rad = np.hypot(xx, yy)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = omega * special.j1(omega * rad) / (2 * math.pi * rad)
        k[r, r] = omega**2 / (4 * math.pi)
        window = np.where(rad <= r + 1, 0.5 * (1 + np.cos(math.pi * rad / (r + 1))), 0.0)
        k = k * window
    else:
        raise ValueError(f"unknown blur kernel kind {kind!r}; choose from {BLUR_KINDS}")
    return k / k.sum()


def _filter(img, kernel):
    if img.ndim == 2:
        return ndimage.correlate(img, kernel, mode="reflect")
    return np.stack([ndimage.correlate(img[..., c], kernel, mode="reflect") for c in range(img.shape[2])], axis=-1)


def add_noise(img, kind: str, strength: float, gray: bool, rng):
    """Gaussian (``strength`` = sigma) or Poisson (``strength`` = scale) noise, clamped."""
    img = check_image(img)
    if strength < 0:
        raise ValueError("noise strength must be nonnegative")
    if strength == 0:
        return img.copy()
    color = img.ndim == 3
    if kind == "gaussian":
        shape = img.shape[:2] + ((1,) if gray or not color else (img.shape[2],))
        noise = rng.normal(0.0, strength, size=shape)
        if not color:
            noise = noise[..., 0]
    elif kind == "poisson":
        base = rgb_to_y(img)[..., None] if (gray and color) else img
        # photon count per unit intensity fixed at the 8-bit level count, so the
        # noise does not depend on how many distinct values the image holds
        noise = rng.poisson(np.clip(base, 0, 1) * POISSON_LEVELS) / POISSON_LEVELS - base
        noise = noise * strength
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return np.clip(img + noise, 0.0, 1.0)


def jpeg_round_trip(img, quality: int):
    """Encode/decode through a baseline JPEG codec at ``quality``."""
    img = check_image(img)
    quality = int(quality)
    if not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must lie in 1..100, got {quality}")
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img)).save(buf, format="JPEG", quality=quality)
    buf.seek(0)
    with Image.open(buf) as im:
        out = np.asarray(im, dtype=np.float64) / 255.0
    return out


def apply_draw(hr, draw: PipelineDraw):
    """Deterministically synthesize the LR image described by ``draw``."""
    img = check_image(hr)
    if img.shape[:2] != tuple(draw.hr_size):
        raise ValueError(f"HR shape {img.shape[:2]} does not match draw {draw.hr_size}")
    for rd in draw.rounds:
        if rd.blur_kind != "delta":
            kernel = make_blur_kernel(rd.blur_kind, rd.sigma_x, rd.sigma_y, rd.theta, rd.kernel_size, rd.omega or None)
            img = np.clip(_filter(img, kernel), 0.0, 1.0)
        img = resize_to(img, rd.out_size, rd.resize_kernel)
        img = add_noise(img, rd.noise_kind, rd.noise_strength, rd.gray_noise, np.random.default_rng(rd.noise_seed))
        img = jpeg_round_trip(img, rd.jpeg_quality)
    lr_size = (draw.hr_size[0] // SCALE, draw.hr_size[1] // SCALE)
    return resize_to(img, lr_size, draw.final_resize_kernel)


def degrade(hr, spec: DegradationLevelSpec, seed):
    """Degrade ``hr`` through one level; returns ``(lr, draw)``.

    ``seed`` may be an int or a ``numpy.random.Generator`` (a seed is then
    drawn from it). Calling again with ``draw.seed`` reproduces ``lr`` exactly.
    """
    hr = check_image(hr)
    seed = _as_seed(seed)
    draw = sample_draw(spec, np.random.default_rng(seed), seed=seed, hr_size=hr.shape[:2])
    return apply_draw(hr, draw), draw
