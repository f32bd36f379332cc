"""Miniature triangular/rectangular window transformer generator and the
semantic-conditioned U-Net discriminator.

Feature maps inside the transformer are channels-last ``(B, H, W, C)``;
module inputs and outputs are ``(B, C, H, W)`` as usual in torch.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils import parametrize

from .validation import ConfigError

__all__ = [
    "GeneratorConfig",
    "DiscriminatorConfig",
    "SemanticFeatureMap",
    "PartitionInfo",
    "rect_partition",
    "rect_merge",
    "triangle_labels",
    "tri_partition",
    "tri_merge",
    "WindowAttention",
    "HybridWindowBlock",
    "OCFAB",
    "CWAB",
    "CFATGenerator",
    "SemanticUNetDiscriminator",
    "ToyFeatureExtractor",
    "register_extractor",
    "get_extractor",
    "available_extractors",
    "pvm_features",
    "spectral_norms",
    "SpectralNormalize",
]


# ---------------------------------------------------------------------------
# configs


def _from_dict(cls, d, section):
    known = {f.name for f in fields(cls)}
    unknown = set(d or {}) - known
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    return cls(**(d or {}))


@dataclass(frozen=True)
class GeneratorConfig:
    embed_dim: int = 48
    num_heads: int = 4
    num_groups: int = 1
    num_dwab: int = 2
    num_swab: int = 2
    rect_window: int = 8
    tri_window: int = 8
    overlap_ratio: float = 0.5
    cwab_squeeze: int = 4
    cwab_scale: float = 0.1
    mlp_ratio: float = 2.0
    upscale: int = 4

    def __post_init__(self):
        if self.upscale != 4:
            raise ConfigError(f"generator.upscale: must be 4, got {self.upscale}")
        if self.embed_dim < 1 or self.num_heads < 1 or self.embed_dim % self.num_heads:
            raise ConfigError("generator.embed_dim: must be a positive multiple of num_heads")
        if self.rect_window < 2:
            raise ConfigError("generator.rect_window: must be >= 2")
        if self.tri_window < 2 or self.tri_window % 2:
            raise ConfigError("generator.tri_window: must be even and >= 2 for the diagonal split")
        if not 0.0 <= self.overlap_ratio < 1.0:
            raise ConfigError("generator.overlap_ratio: must lie in [0, 1)")
        if self.cwab_squeeze < 1:
            raise ConfigError("generator.cwab_squeeze: must be >= 1")
        if min(self.num_groups, self.num_dwab + self.num_swab) < 1 or min(self.num_dwab, self.num_swab) < 0:
            raise ConfigError("generator: need at least one group with at least one attention block")

    @property
    def pad_multiple(self) -> int:
        return math.lcm(self.rect_window, self.tri_window)

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "generator")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DiscriminatorConfig:
    base_channels: int = 16
    unet_depth: int = 3
    semantic_dim: int | None = None  # None: take it from the extractor
    semantic_channels: int = 16
    extractor: str = "toy"
    use_spectral_norm: bool = True

    def __post_init__(self):
        if self.unet_depth < 1:
            raise ConfigError("discriminator.unet_depth: must be >= 1")
        if self.base_channels < 1 or self.semantic_channels < 1:
            raise ConfigError("discriminator: channel counts must be positive")

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "discriminator")

    def to_dict(self):
        return asdict(self)


@dataclass
class SemanticFeatureMap:
    features: torch.Tensor  # (N, semantic_dim, h, w)
    stride: int


# ---------------------------------------------------------------------------
# window partitions


class PartitionInfo(NamedTuple):
    batch: int
    height: int
    width: int
    padded_height: int
    padded_width: int
    window: int


def _pad_to(x, window):
    b, h, w, c = x.shape
    ph, pw = (-h) % window, (-w) % window
    if ph or pw:
        x = F.pad(x, (0, 0, 0, pw, 0, ph))
    return x, PartitionInfo(b, h, w, h + ph, w + pw, window)


def rect_partition(x: torch.Tensor, window: int):
    """Split ``(B, H, W, C)`` into ``(B * nW, window, window, C)`` tiles.

    Dims are zero-padded up to multiples of ``window``; tiles are ordered
    row-major per image.
    """
    x, info = _pad_to(x, window)
    b, hp, wp, c = x.shape
    x = x.view(b, hp // window, window, wp // window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window, window, c), info


def rect_merge(windows: torch.Tensor, info: PartitionInfo) -> torch.Tensor:
    """Inverse of :func:`rect_partition`, cropping the padding."""
    ws = info.window
    nh, nw = info.padded_height // ws, info.padded_width // ws
    c = windows.shape[-1]
    x = windows.reshape(info.batch, nh, nw, ws, ws, c).permute(0, 1, 3, 2, 4, 5)
    x = x.reshape(info.batch, info.padded_height, info.padded_width, c)
    return x[:, : info.height, : info.width]


def triangle_labels(window: int) -> np.ndarray:
    """Label each cell of a ``window``-square 0..3 (top, right, bottom, left).

    The square is cut along both diagonals; diagonal cells are shared out so
    the four triangles are 90-degree rotations of one another and each holds
    ``window**2 / 4`` cells.
    """
    if window < 2 or window % 2:
        raise ValueError(f"triangular windows need an even size >= 2, got {window}")
    i, j = np.mgrid[:window, :window]
    top = (i < window // 2) & (i <= j) & (j < window - 1 - i)
    labels = np.full((window, window), -1)
    for k in range(4):
        labels[np.rot90(top, -k)] = k
    return labels


def _triangle_perm(window):
    labels = triangle_labels(window).ravel()
    return np.concatenate([np.flatnonzero(labels == k) for k in range(4)])


def tri_partition(x: torch.Tensor, window: int):
    """Split ``(B, H, W, C)`` into triangle token groups ``(B * nW * 4, window**2 // 4, C)``.

    Groups are ordered (tile, triangle) with triangles top, right, bottom, left.
    """
    tiles, info = rect_partition(x, window)
    c = tiles.shape[-1]
    perm = torch.as_tensor(_triangle_perm(window), device=x.device)
    tokens = tiles.reshape(-1, window * window, c)[:, perm]
    return tokens.reshape(-1, window * window // 4, c), info


def tri_merge(tokens: torch.Tensor, info: PartitionInfo) -> torch.Tensor:
    ws = info.window
    c = tokens.shape[-1]
    inv = torch.as_tensor(np.argsort(_triangle_perm(ws)), device=tokens.device)
    tiles = tokens.reshape(-1, ws * ws, c)[:, inv].reshape(-1, ws, ws, c)
    return rect_merge(tiles, info)


def _sparse_gather(x, window):
    # tile (a, b) collects pixels (a + I*r, b + I*s), I = H / window
    b, h, w, c = x.shape
    ih, iw = h // window, w // window
    x = x.view(b, window, ih, window, iw, c).permute(0, 2, 4, 1, 3, 5)
    return x.reshape(b, ih * window, iw * window, c)


def _sparse_scatter(x, window):
    b, h, w, c = x.shape
    ih, iw = h // window, w // window
    x = x.view(b, ih, window, iw, window, c).permute(0, 2, 1, 4, 3, 5)
    return x.reshape(b, h, w, c)


# ---------------------------------------------------------------------------
# building blocks


class Mlp(nn.Sequential):
    def __init__(self, dim, ratio):
        hidden = int(dim * ratio)
        super().__init__(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))


class WindowAttention(nn.Module):
    """Multi-head self-attention over token groups ``(B', N, C)``.

    ``bias_shape`` adds a learned additive bias of that shape to the logits;
    rectangular windows index a relative-position table instead.
    """

    def __init__(self, dim, num_heads, window=None, bias_shape=None):
        super().__init__()
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.window = window
        if window is not None:
            self.rel_table = nn.Parameter(torch.zeros((2 * window - 1) ** 2, num_heads))
            coords = np.stack(np.mgrid[:window, :window]).reshape(2, -1)
            rel = coords[:, :, None] - coords[:, None, :] + window - 1
            self.register_buffer("rel_index", torch.as_tensor(rel[0] * (2 * window - 1) + rel[1]), persistent=False)
            nn.init.trunc_normal_(self.rel_table, std=0.02)
        self.group_bias = None
        if bias_shape is not None:
            self.group_bias = nn.Parameter(torch.zeros(*bias_shape))
            nn.init.trunc_normal_(self.group_bias, std=0.02)

    def forward(self, tokens):
        b, n, c = tokens.shape
        qkv = self.qkv(tokens).reshape(b, n, 3, self.num_heads, c // self.num_heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv.unbind(0)
        attn = (q * self.scale) @ k.transpose(-2, -1)
        if self.window is not None:
            bias = self.rel_table[self.rel_index.reshape(-1)].reshape(n, n, -1).permute(2, 0, 1)
            attn = attn + bias.unsqueeze(0)
        if self.group_bias is not None:
            g = self.group_bias.shape[0]
            attn = (attn.view(-1, g, self.num_heads, n, n) + self.group_bias.unsqueeze(0)).view(b, self.num_heads, n, n)
        out = (attn.softmax(dim=-1) @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class CWAB(nn.Module):
    """Channel-wise attention on a depthwise-pointwise bottleneck."""

    def __init__(self, dim, squeeze):
        super().__init__()
        mid = max(dim // squeeze, 1)
        self.body = nn.Sequential(
            nn.Conv2d(dim, dim, 3, padding=1, groups=dim),
            nn.Conv2d(dim, mid, 1),
            nn.GELU(),
            nn.Conv2d(mid, mid, 3, padding=1, groups=mid),
            nn.Conv2d(mid, dim, 1),
        )
        self.gate = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(dim, mid, 1),
            nn.GELU(),
            nn.Conv2d(mid, dim, 1),
            nn.Sigmoid(),
        )

    def forward(self, x):
        y = self.body(x)
        return y * self.gate(y)


class HybridWindowBlock(nn.Module):
    """Rectangular + triangular window attention with a parallel CWAB branch.

    ``sparse=True`` builds windows from pixels strided across the whole map
    (sparse block); otherwise windows are contiguous (dense block), cyclically
    shifted by half a window when ``shift`` is set.
    """

    def __init__(self, dim, num_heads, rect_window, tri_window, *, sparse=False, shift=False,
                 mlp_ratio=2.0, squeeze=4, cwab_scale=0.1):
        super().__init__()
        self.rect_window, self.tri_window = rect_window, tri_window
        self.sparse, self.shift = sparse, shift
        self.norm1 = nn.LayerNorm(dim)
        self.rect_attn = WindowAttention(dim, num_heads, window=rect_window)
        self.tri_attn = WindowAttention(dim, num_heads, bias_shape=(4, num_heads, tri_window**2 // 4, tri_window**2 // 4))
        self.cwab = CWAB(dim, squeeze)
        self.cwab_scale = cwab_scale
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio)

    def _windowed(self, h, window, attend):
        if self.sparse:
            h = _sparse_gather(h, window)
        elif self.shift:
            h = torch.roll(h, (-(window // 2), -(window // 2)), dims=(1, 2))
        out = attend(h, window)
        if self.sparse:
            out = _sparse_scatter(out, window)
        elif self.shift:
            out = torch.roll(out, (window // 2, window // 2), dims=(1, 2))
        return out

    def _rect(self, h, window):
        tiles, info = rect_partition(h, window)
        c = tiles.shape[-1]
        out = self.rect_attn(tiles.reshape(-1, window * window, c))
        return rect_merge(out.reshape(-1, window, window, c), info)

    def _tri(self, h, window):
        tokens, info = tri_partition(h, window)
        return tri_merge(self.tri_attn(tokens), info)

    def forward(self, x):
        h = self.norm1(x)
        rect = self._windowed(h, self.rect_window, self._rect)
        tri = self._windowed(h, self.tri_window, self._tri)
        conv = self.cwab(h.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)
        x = x + rect + tri + self.cwab_scale * conv
        return x + self.mlp(self.norm2(x))


class OCFAB(nn.Module):
    """Cross-attention from each window to an enlarged overlapping window around it."""

    def __init__(self, dim, num_heads, window, overlap_ratio, mlp_ratio=2.0):
        super().__init__()
        self.window = window
        self.overlap_window = window + 2 * int(round(window * overlap_ratio / 2))
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.norm1 = nn.LayerNorm(dim)
        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, 2 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio)
        pad = (self.overlap_window - window) // 2
        self.unfold = nn.Unfold(kernel_size=self.overlap_window, stride=window, padding=pad)

    def forward(self, x):
        b, h, w, c = x.shape
        ws, ows, heads = self.window, self.overlap_window, self.num_heads
        hn = self.norm1(x)
        q_tiles, info = rect_partition(self.q(hn), ws)
        q = q_tiles.reshape(-1, ws * ws, heads, c // heads).transpose(1, 2)
        kv = self.kv(hn).permute(0, 3, 1, 2)
        kv = F.pad(kv, (0, info.padded_width - w, 0, info.padded_height - h))
        kv = self.unfold(kv)  # (B, 2C * ows^2, nW)
        kv = kv.view(b, 2, heads, c // heads, ows * ows, -1).permute(1, 0, 5, 2, 4, 3)
        k, v = kv[0].reshape(-1, heads, ows * ows, c // heads), kv[1].reshape(-1, heads, ows * ows, c // heads)
        attn = ((q * self.scale) @ k.transpose(-2, -1)).softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(-1, ws, ws, c)
        x = x + self.proj(rect_merge(out, info))
        return x + self.mlp(self.norm2(x))


class AttentionGroup(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        d = cfg.embed_dim
        common = dict(mlp_ratio=cfg.mlp_ratio, squeeze=cfg.cwab_squeeze, cwab_scale=cfg.cwab_scale)
        blocks = [
            HybridWindowBlock(d, cfg.num_heads, cfg.rect_window, cfg.tri_window, shift=bool(i % 2), **common)
            for i in range(cfg.num_dwab)
        ]
        blocks += [
            HybridWindowBlock(d, cfg.num_heads, cfg.rect_window, cfg.tri_window, sparse=True, **common)
            for _ in range(cfg.num_swab)
        ]
        self.blocks = nn.ModuleList(blocks)
        self.ocfab = OCFAB(d, cfg.num_heads, cfg.rect_window, cfg.overlap_ratio, cfg.mlp_ratio)
        self.conv = nn.Conv2d(d, d, 3, padding=1)

    def forward(self, x):
        y = x.permute(0, 2, 3, 1)
        for blk in self.blocks:
            y = blk(y)
        y = self.ocfab(y).permute(0, 3, 1, 2)
        return x + self.conv(y)


class CFATGenerator(nn.Module):
    """x4 super-resolution generator: shallow conv, attention groups, pixel-shuffle tail."""

    def __init__(self, cfg: GeneratorConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or GeneratorConfig()
        d = cfg.embed_dim
        self.conv_first = nn.Conv2d(3, d, 3, padding=1)
        self.groups = nn.ModuleList(AttentionGroup(cfg) for _ in range(cfg.num_groups))
        self.norm = nn.LayerNorm(d)
        self.conv_after_body = nn.Conv2d(d, d, 3, padding=1)
        self.upsample = nn.Sequential(
            nn.Conv2d(d, 4 * d, 3, padding=1),
            nn.PixelShuffle(2),
            nn.Conv2d(d, 4 * d, 3, padding=1),
            nn.PixelShuffle(2),
            nn.LeakyReLU(0.2),
        )
        self.conv_last = nn.Conv2d(d, 3, 3, padding=1)

    def forward(self, lr):
        if not torch.isfinite(lr).all():
            raise ValueError("generator input contains non-finite values")
        h, w = lr.shape[-2:]
        m = self.cfg.pad_multiple
        ph, pw = (-h) % m, (-w) % m
        if ph or pw:
            mode = "reflect" if (ph < h and pw < w) else "replicate"
            lr = F.pad(lr, (0, pw, 0, ph), mode=mode)
        shallow = self.conv_first(lr)
        deep = shallow
        for group in self.groups:
            deep = group(deep)
        deep = self.norm(deep.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        feat = self.conv_after_body(deep) + shallow
        out = self.conv_last(self.upsample(feat))
        return out[..., : 4 * h, : 4 * w]


# ---------------------------------------------------------------------------
# pretrained-vision-model stand-ins


class ToyFeatureExtractor(nn.Module):
    """Frozen conv stack with fixed-seed weights; returns one map per stage.

    The last stage (stride 4) serves as the semantic map.
    """

    semantic_dim = 32
    stride = 4

    def __init__(self, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        specs = [(3, 16, 1), (16, 16, 2), (16, 32, 2)]
        self.convs = nn.ModuleList(nn.Conv2d(cin, cout, 3, stride=s, padding=1) for cin, cout, s in specs)
        with torch.no_grad():
            for conv in self.convs:
                fan_in = conv.in_channels * 9
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * math.sqrt(2.0 / fan_in))
                conv.bias.copy_(torch.randn(conv.bias.shape, generator=gen) * 0.01)
        self.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):
        return super().train(False)

    def forward(self, x):
        feats = []
        for conv in self.convs:
            x = F.gelu(conv(x))
            feats.append(x)
        return feats


def _torchvision_vgg19():
    try:
        from torchvision.models import VGG19_Weights, vgg19
        model = vgg19(weights=VGG19_Weights.DEFAULT).features[:18]
    except Exception as exc:  # missing package or offline weights
        raise ConfigError(f"extractor 'vgg19' unavailable: {exc}") from exc

    class _VGG(nn.Module):
        semantic_dim = 256
        stride = 4

        def __init__(self):
            super().__init__()
            self.body = model.requires_grad_(False).eval()
            self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
            self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

        def forward(self, x):
            x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
            feats = []
            for i, layer in enumerate(self.body):
                x = layer(x)
                if i in (3, 8, 17):
                    feats.append(x)
            return feats

    return _VGG()


_EXTRACTORS: dict[str, Callable[[], nn.Module]] = {
    "toy": ToyFeatureExtractor,
    "vgg19": _torchvision_vgg19,
}


def register_extractor(name: str, factory: Callable[[], nn.Module]) -> None:
    """Register a frozen extractor factory.

    The module's ``forward`` returns a list of feature maps and it exposes
    ``semantic_dim`` (channels of the last map) and ``stride``.
    """
    _EXTRACTORS[name] = factory


def available_extractors():
    return tuple(_EXTRACTORS)


def get_extractor(name: str = "toy") -> nn.Module:
    if name not in _EXTRACTORS:
        raise ConfigError(f"unknown feature extractor {name!r}; registered: {sorted(_EXTRACTORS)}")
    return _EXTRACTORS[name]()


def pvm_features(img: torch.Tensor, extractor) -> SemanticFeatureMap:
    """Semantic map from the deepest stage of a frozen extractor (name or module)."""
    if isinstance(extractor, str):
        extractor = get_extractor(extractor)
    feats = extractor(img)[-1]
    return SemanticFeatureMap(feats, int(extractor.stride))


# ---------------------------------------------------------------------------
# discriminator


class SpectralNormalize(nn.Module):
    """Weight parametrization dividing by the exact top singular value of ``W.flatten(1)``.

    The layers here are small enough that a dense SVD per forward is cheap,
    and it avoids the lag of power-iteration estimates under fast updates.
    """

    def forward(self, weight):
        return weight / torch.linalg.svdvals(weight.flatten(1))[0]


def spectral_norm(module: nn.Module) -> nn.Module:
    parametrize.register_parametrization(module, "weight", SpectralNormalize())
    return module


class SemanticUNetDiscriminator(nn.Module):
    """Pixel-wise U-Net discriminator conditioned on a semantic feature map.

    The semantic map is projected by a 1x1 conv, bilinearly resized to each
    decoder stage and concatenated before that stage's conv. Output is one
    realness logit per input pixel.
    """

    def __init__(self, cfg: DiscriminatorConfig | None = None, semantic_dim: int | None = None):
        super().__init__()
        self.cfg = cfg = cfg or DiscriminatorConfig()
        sem_dim = semantic_dim or cfg.semantic_dim
        if sem_dim is None:
            sem_dim = get_extractor(cfg.extractor).semantic_dim
        self.semantic_dim = sem_dim
        sn = spectral_norm if cfg.use_spectral_norm else (lambda m: m)
        base, depth, sc = cfg.base_channels, cfg.unet_depth, cfg.semantic_channels
        chans = [base * 2 ** min(i, 3) for i in range(depth + 1)]
        self.conv0 = sn(nn.Conv2d(3, chans[0], 3, padding=1))
        self.down = nn.ModuleList(sn(nn.Conv2d(chans[i], chans[i + 1], 4, 2, 1, bias=False)) for i in range(depth))
        self.sem_proj = sn(nn.Conv2d(sem_dim, sc, 1))
        self.up = nn.ModuleList(
            sn(nn.Conv2d(chans[i + 1] + sc, chans[i], 3, padding=1, bias=False)) for i in reversed(range(depth))
        )
        self.head = nn.Sequential(
            sn(nn.Conv2d(chans[0], chans[0], 3, padding=1, bias=False)),
            nn.LeakyReLU(0.2),
            sn(nn.Conv2d(chans[0], 1, 3, padding=1)),
        )
        self.act = nn.LeakyReLU(0.2)

    def forward(self, img, sem, stride: int | None = None):
        if isinstance(sem, SemanticFeatureMap):
            sem, stride = sem.features, sem.stride
        if stride is not None:
            for full, small in zip(img.shape[-2:], sem.shape[-2:]):
                if abs(small - full / stride) >= 1:
                    raise ValueError(
                        f"semantic map {tuple(sem.shape[-2:])} inconsistent with image {tuple(img.shape[-2:])} at stride {stride}"
                    )
        if sem.shape[0] != img.shape[0] or sem.shape[1] != self.semantic_dim:
            raise ValueError(f"semantic map shape {tuple(sem.shape)} does not fit batch/semantic_dim")
        sem = self.sem_proj(sem.to(img.dtype))
        x = self.act(self.conv0(img))
        skips = [x]
        for conv in self.down:
            x = self.act(conv(x))
            skips.append(x)
        skips.pop()
        for conv in self.up:
            skip = skips.pop()
            x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            s = F.interpolate(sem, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            x = self.act(conv(torch.cat([x, s], dim=1))) + skip
        return self.head(x)[:, 0]


def spectral_norms(module: nn.Module) -> dict[str, float]:
    """Largest singular value of every spectrally normalized weight, reshaped ``(out, -1)``."""
    out = {}
    for name, sub in module.named_modules():
        if hasattr(sub, "parametrizations") and "weight" in sub.parametrizations:
            w = sub.weight.detach().reshape(sub.weight.shape[0], -1).double()
            out[name] = float(torch.linalg.matrix_norm(w, ord=2))
    return out
