"""Two-stage training: L1 pretraining of the generator, then adversarial fine-tuning.

All mutable training state lives in :class:`TrainState`; given the same seed,
config and data, the loss log is reproduced exactly, including across a
save/load/resume.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import tempfile
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .data import sample_training_batch
from .degradation import DegradationConfig, DegradationLevelSpec
from .losses import GAN_MODES, LossWeights, gan_loss_d, total_generator_loss
from .nets import (CFATGenerator, DiscriminatorConfig, GeneratorConfig, SemanticUNetDiscriminator,
                   get_extractor, pvm_features)
from .validation import ConfigError
from .wavelet import WaveletLossConfig

__all__ = [
    "CheckpointError",
    "TrainingError",
    "UsmConfig",
    "TrainConfig",
    "TrainState",
    "init_state",
    "train",
    "pretrain",
    "finetune",
    "save_checkpoint",
    "load_checkpoint",
    "load_generator",
    "write_loss_log",
]

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "igcfat-checkpoint"
CHECKPOINT_VERSION = 1
STAGES = ("pretrain", "finetune")


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss, bad data)."""


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, corrupt or of the wrong kind."""


@dataclass(frozen=True)
class UsmConfig:
    enabled: bool = True
    sigma: float = 8.0
    weight: float = 0.5
    threshold: float = 10 / 255

    def kwargs(self):
        return dict(sigma=self.sigma, weight=self.weight, threshold=self.threshold) if self.enabled else None


@dataclass(frozen=True)
class TrainConfig:
    stage: str = "pretrain"
    iterations: int = 100
    batch: int = 4
    lr: float = 1e-4
    betas: tuple = (0.9, 0.99)
    eps: float = 1e-8
    patch_size: int = 64
    usm: UsmConfig = field(default_factory=UsmConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    gan_mode: str = "vanilla"
    perceptual_extractor: str = "toy"
    seed: int = 0
    checkpoint_every: int = 0
    rolling_window: int = 20

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigError(f"train.stage: expected one of {STAGES}, got {self.stage!r}")
        if self.iterations <= 0:
            raise ConfigError(f"train.iterations: must be > 0, got {self.iterations}")
        if self.batch < 1:
            raise ConfigError(f"train.batch: must be >= 1, got {self.batch}")
        if not self.lr >= 0:
            raise ConfigError(f"train.lr: must be >= 0, got {self.lr}")
        if self.patch_size % 4 or self.patch_size < 4:
            raise ConfigError(f"train.patch_size: must be a positive multiple of 4, got {self.patch_size}")
        if self.gan_mode not in GAN_MODES:
            raise ConfigError(f"train.gan_mode: expected one of {GAN_MODES}, got {self.gan_mode!r}")
        if isinstance(self.usm, dict):
            object.__setattr__(self, "usm", UsmConfig(**self.usm))
        if isinstance(self.loss_weights, dict):
            object.__setattr__(self, "loss_weights", LossWeights.from_dict(self.loss_weights))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    @classmethod
    def from_dict(cls, d):
        unknown = set(d or {}) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"train: unknown keys {sorted(unknown)}")
        return cls(**(d or {}))

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class TrainState:
    stage: str
    iteration: int
    generator: CFATGenerator
    g_optimizer: torch.optim.Optimizer
    rng: np.random.Generator
    discriminator: SemanticUNetDiscriminator | None = None
    d_optimizer: torch.optim.Optimizer | None = None
    loss_log: list = field(default_factory=list)
    configs: dict = field(default_factory=dict)
    recent_l1: deque = field(default_factory=lambda: deque(maxlen=20))

    @property
    def rolling_l1(self) -> float:
        return float(np.mean(self.recent_l1)) if self.recent_l1 else math.nan

    def losses(self, term: str) -> list[float]:
        return [row["value"] for row in self.loss_log if row["term"] == term]


def _adam(params, cfg: TrainConfig):
    return torch.optim.Adam(params, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)


def _build_discriminator(cfg: TrainConfig, disc_cfg: DiscriminatorConfig):
    # seeded independently of the generator so a fresh start is reproducible
    torch.manual_seed(cfg.seed + 1)
    return SemanticUNetDiscriminator(disc_cfg)


def init_state(cfg: TrainConfig, gen_cfg: GeneratorConfig | None = None,
               disc_cfg: DiscriminatorConfig | None = None,
               wavelet_cfg: WaveletLossConfig | None = None) -> TrainState:
    """Fresh state for ``cfg.stage`` with seeded initializers."""
    gen_cfg = gen_cfg or GeneratorConfig()
    torch.manual_seed(cfg.seed)
    gen = CFATGenerator(gen_cfg)
    state = TrainState(cfg.stage, 0, gen, _adam(gen.parameters(), cfg), np.random.default_rng(cfg.seed))
    state.recent_l1 = deque(maxlen=cfg.rolling_window)
    state.configs = {"train": cfg.to_dict(), "generator": gen_cfg.to_dict()}
    if cfg.stage == "finetune":
        disc_cfg = disc_cfg or DiscriminatorConfig()
        state.discriminator = _build_discriminator(cfg, disc_cfg)
        state.d_optimizer = _adam(state.discriminator.parameters(), cfg)
        state.configs["discriminator"] = disc_cfg.to_dict()
        state.configs["wavelet"] = asdict(wavelet_cfg or WaveletLossConfig())
    return state


def _to_tensor(batch):
    return torch.from_numpy(np.ascontiguousarray(batch.transpose(0, 3, 1, 2))).float()


def _log(state, terms: dict):
    for term, value in terms.items():
        if not math.isfinite(value):
            raise TrainingError(f"non-finite {term} loss at iteration {state.iteration}: {terms}")
    for term, value in terms.items():
        state.loss_log.append({"iteration": state.iteration, "term": term, "value": value})


def _pretrain_step(state, lr_t, gt_t):
    sr = state.generator(lr_t)
    loss = (sr - gt_t).abs().mean()
    state.g_optimizer.zero_grad(set_to_none=True)
    loss.backward()
    value = float(loss.detach())
    if not math.isfinite(value):
        raise TrainingError(f"non-finite l1 loss at iteration {state.iteration}")
    state.g_optimizer.step()
    return {"l1": value}


class _FinetuneContext:
    def __init__(self, cfg: TrainConfig, state: TrainState):
        self.cfg = cfg
        self.wavelet_cfg = WaveletLossConfig(**state.configs.get("wavelet", {}))
        disc = state.discriminator
        self.semantic = get_extractor(disc.cfg.extractor) if disc is not None else None
        self.perceptual = get_extractor(cfg.perceptual_extractor) if cfg.loss_weights.w_perceptual else None

    def step(self, state, lr_t, gt_t):
        cfg, disc = self.cfg, state.discriminator
        sr = state.generator(lr_t)
        terms = {}
        fake_for_g = None
        if cfg.loss_weights.w_gan:
            with torch.no_grad():
                sem = pvm_features(gt_t, self.semantic)
            d_loss = gan_loss_d(disc(gt_t, sem), disc(sr.detach(), sem), cfg.gan_mode)
            state.d_optimizer.zero_grad(set_to_none=True)
            d_loss.backward()
            state.d_optimizer.step()
            terms["d_loss"] = float(d_loss.detach())
            fake_for_g = disc(sr, sem)
        total, breakdown = total_generator_loss(
            sr, gt_t, fake_for_g, cfg.loss_weights, self.wavelet_cfg, self.perceptual, cfg.gan_mode
        )
        state.g_optimizer.zero_grad(set_to_none=True)
        total.backward()
        if not math.isfinite(breakdown["total"]):
            raise TrainingError(f"non-finite generator loss at iteration {state.iteration}: {breakdown}")
        state.g_optimizer.step()
        return {**breakdown, **terms}


def train(state: TrainState, source, degradation, cfg: TrainConfig, until: int | None = None,
          out_dir=None) -> TrainState:
    """Advance ``state`` to iteration ``until`` (default ``cfg.iterations``).

    ``source`` and ``degradation`` are passed to
    :func:`~igcfat.data.sample_training_batch`. With ``out_dir`` set, periodic
    and final checkpoints plus the loss log are written there.
    """
    until = cfg.iterations if until is None else until
    if state.stage != cfg.stage:
        raise ConfigError(f"state is at stage {state.stage!r} but config asks for {cfg.stage!r}")
    ctx = _FinetuneContext(cfg, state) if cfg.stage == "finetune" else None
    state.generator.train()
    if state.discriminator is not None:
        state.discriminator.train()
    usm = cfg.usm.kwargs()
    while state.iteration < until:
        lr_b, gt_b, _ = sample_training_batch(source, cfg.patch_size, cfg.batch, degradation, state.rng, usm=usm)
        lr_t, gt_t = _to_tensor(lr_b), _to_tensor(gt_b)
        state.iteration += 1
        terms = _pretrain_step(state, lr_t, gt_t) if ctx is None else ctx.step(state, lr_t, gt_t)
        _log(state, terms)
        state.recent_l1.append(terms["l1"])
        if out_dir and cfg.checkpoint_every and state.iteration % cfg.checkpoint_every == 0:
            save_checkpoint(state, Path(out_dir) / f"{cfg.stage}_{state.iteration:06d}.pt")
    if out_dir:
        save_checkpoint(state, Path(out_dir) / f"{cfg.stage}_final.pt")
        write_loss_log(state.loss_log, Path(out_dir) / f"{cfg.stage}_losses.tsv")
    return state


def pretrain(source, cfg: TrainConfig, degradation: DegradationConfig | DegradationLevelSpec,
             gen_cfg: GeneratorConfig | None = None, out_dir=None) -> TrainState:
    """Optimize the generator on L1 alone over adaptively degraded pairs."""
    if cfg.stage != "pretrain":
        raise ConfigError("pretrain requires train.stage = 'pretrain'")
    state = init_state(cfg, gen_cfg)
    return train(state, source, degradation, cfg, out_dir=out_dir)


def finetune(source, cfg: TrainConfig, checkpoint, degradation,
             disc_cfg: DiscriminatorConfig | None = None, wavelet_cfg: WaveletLossConfig | None = None,
             out_dir=None) -> TrainState:
    """Adversarial fine-tuning warm-started from a generator checkpoint.

    ``checkpoint`` is a path or a loaded :class:`TrainState`. A pretrain
    checkpoint contributes only generator weights; the discriminator and both
    optimizers start fresh. A finetune checkpoint resumes everything.
    """
    if cfg.stage != "finetune":
        raise ConfigError("finetune requires train.stage = 'finetune'")
    src = checkpoint if isinstance(checkpoint, TrainState) else load_checkpoint(checkpoint)
    if src.stage == "finetune":
        state = src
    else:
        gen_cfg = GeneratorConfig(**src.configs["generator"])
        state = init_state(cfg, gen_cfg, disc_cfg, wavelet_cfg)
        state.generator.load_state_dict(src.generator.state_dict())
    return train(state, source, degradation, cfg, out_dir=out_dir)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(state: TrainState, path) -> Path:
    """Write atomically (temp file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "stage": state.stage,
        "iteration": state.iteration,
        "configs": state.configs,
        "generator": state.generator.state_dict(),
        "g_optimizer": state.g_optimizer.state_dict(),
        "rng": state.rng.bit_generator.state,
        "torch_rng": torch.get_rng_state(),
        "loss_log": state.loss_log,
        "recent_l1": list(state.recent_l1),
    }
    if state.discriminator is not None:
        payload["discriminator"] = state.discriminator.state_dict()
        payload["d_optimizer"] = state.d_optimizer.state_dict()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def _read_payload(path):
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an {CHECKPOINT_FORMAT} file")
    return payload


def load_checkpoint(path) -> TrainState:
    payload = _read_payload(path)
    try:
        configs = payload["configs"]
        cfg = TrainConfig.from_dict(configs["train"])
        gen = CFATGenerator(GeneratorConfig(**configs["generator"]))
        gen.load_state_dict(payload["generator"])
        g_opt = _adam(gen.parameters(), cfg)
        g_opt.load_state_dict(payload["g_optimizer"])
        rng = np.random.default_rng()
        rng.bit_generator.state = payload["rng"]
        state = TrainState(payload["stage"], int(payload["iteration"]), gen, g_opt, rng,
                           loss_log=list(payload["loss_log"]), configs=configs)
        state.recent_l1 = deque(payload["recent_l1"], maxlen=cfg.rolling_window)
        if "discriminator" in payload:
            disc = SemanticUNetDiscriminator(DiscriminatorConfig(**configs["discriminator"]))
            disc.load_state_dict(payload["discriminator"])
            d_opt = _adam(disc.parameters(), cfg)
            d_opt.load_state_dict(payload["d_optimizer"])
            state.discriminator, state.d_optimizer = disc, d_opt
        torch.set_rng_state(payload["torch_rng"])
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    return state


def load_generator(path) -> CFATGenerator:
    """Generator in eval mode from any checkpoint."""
    payload = _read_payload(path)
    try:
        gen = CFATGenerator(GeneratorConfig(**payload["configs"]["generator"]))
        gen.load_state_dict(payload["generator"])
    except Exception as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    return gen.eval()


def write_loss_log(rows, path) -> None:
    """Tab-separated ``iteration, term, value`` rows (values in round-trippable repr)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(["iteration", "term", "value"])
        for row in rows:
            writer.writerow([row["iteration"], row["term"], repr(row["value"])])
