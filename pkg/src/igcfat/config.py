"""YAML run configuration: loading, validation, default filling and echo files."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .degradation import DegradationConfig
from .nets import DiscriminatorConfig, GeneratorConfig
from .trainer import TrainConfig
from .validation import ConfigError
from .wavelet import WaveletLossConfig

__all__ = ["RunConfig", "default_config_text", "load_config", "resolve_config", "write_config_echo", "deep_merge"]

SECTIONS = ("seed", "degradation", "generator", "discriminator", "wavelet", "pretrain", "finetune")


def default_config_text(name: str = "default.yaml") -> str:
    return resources.files("igcfat").joinpath("configs").joinpath(name).read_text()


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "levels":
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    seed: int
    degradation: DegradationConfig
    generator: GeneratorConfig
    discriminator: DiscriminatorConfig
    wavelet: WaveletLossConfig
    pretrain: TrainConfig
    finetune: TrainConfig
    source_text: str = ""

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "degradation": self.degradation.to_dict(),
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "wavelet": {"lambdas": list(self.wavelet.lambdas), "wavelet": self.wavelet.wavelet},
            "pretrain": self.pretrain.to_dict(),
            "finetune": self.finetune.to_dict(),
        }


def resolve_config(raw: dict, source_text: str = "") -> RunConfig:
    """Validate a raw mapping (already merged over the defaults)."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"config: unknown sections {sorted(unknown)}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: must be a nonnegative integer, got {seed!r}")
    wavelet = raw.get("wavelet") or {}
    unknown = set(wavelet) - {"lambdas", "wavelet"}
    if unknown:
        raise ConfigError(f"wavelet: unknown keys {sorted(unknown)}")
    stages = {}
    for stage in ("pretrain", "finetune"):
        section = dict(raw.get(stage) or {})
        if section.get("stage", stage) != stage:
            raise ConfigError(f"{stage}.stage: must be {stage!r}")
        section["stage"] = stage
        section.setdefault("seed", seed)
        try:
            stages[stage] = TrainConfig.from_dict(section)
        except (TypeError, ValueError) as exc:
            msg = str(exc)
            if msg.startswith("train."):
                msg = msg[len("train."):]
            raise ConfigError(msg if msg.startswith(stage) else f"{stage}.{msg}") from None
    return RunConfig(
        seed=seed,
        degradation=DegradationConfig.from_dict(raw.get("degradation") or {}),
        generator=GeneratorConfig.from_dict(raw.get("generator")),
        discriminator=DiscriminatorConfig.from_dict(raw.get("discriminator")),
        wavelet=WaveletLossConfig(**wavelet),
        pretrain=stages["pretrain"],
        finetune=stages["finetune"],
        source_text=source_text,
    )


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Load ``path`` (default: the shipped desk-scale config) over the defaults.

    ``overrides`` is merged last (CLI flags win over the file).
    """
    defaults = yaml.safe_load(default_config_text())
    text = default_config_text()
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        text = path.read_text()
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: cannot parse {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config: {path} must contain a mapping")
    merged = deep_merge(defaults, raw)
    merged = deep_merge(merged, overrides or {})
    return resolve_config(merged, source_text=text)


def write_config_echo(cfg: RunConfig, out_dir) -> tuple[Path, Path]:
    """Write the source text (comments intact) and the fully resolved config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    source = out_dir / "config.source.yaml"
    resolved = out_dir / "config.resolved.yaml"
    source.write_text(cfg.source_text)
    resolved.write_text(
        "# Fully resolved configuration (defaults filled, overrides applied).\n"
        + yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    )
    return source, resolved
