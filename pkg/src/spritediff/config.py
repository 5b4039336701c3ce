"""Run configuration: a flat key=value file that fully determines a run.

Schema (all keys, with defaults) is the ``Config`` dataclass below.  Files
contain one ``key = value`` pair per line; ``#`` starts a comment.  Lists are
comma-separated.  Unknown keys are rejected so typos cannot silently fall back
to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

ABLATION_FLAGS = (
    "none",
    "no_train_mask",
    "no_patch_feature",
    "no_adapter",
    "identifier_before_encoder",
    "tune_vision_backbone",
    "tune_unet",
    "no_identifier",
)


@dataclass
class Config:
    # synthetic world
    image_size: int = 32
    train_concepts: int = 512
    scenes_per_concept: int = 8
    test_concepts: int = 32
    test_scenes_per_concept: int = 5
    data_seed: int = 0
    filter_lo: float = 0.1
    filter_hi: float = 0.7

    # text pipeline
    d_text: int = 128
    text_layers: int = 2
    text_heads: int = 4
    l_max: int = 16
    identifier: str = "sks"

    # vision encoders
    d_backbone: int = 128
    vis_layers: int = 2
    vis_heads: int = 4
    patch_size: int = 4
    encoder_input: int = 32
    d_vis: int = 128
    crop_margin: float = 0.05
    aug_flip: float = 0.5
    aug_rotate: float = 20.0
    aug_scale_lo: float = 0.8
    aug_scale_hi: float = 1.2
    aug_brightness: float = 0.1

    # diffusion
    timesteps: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02
    unet_channels: tuple[int, ...] = (64, 128)
    attn_resolutions: tuple[int, ...] = (32, 16)
    unet_heads: int = 4
    time_dim: int = 128
    ffn_mult: int = 2

    # training
    pretrain_steps: int = 50_000
    adapter_steps: int = 20_000
    batch_size: int = 16
    lr_pretrain: float = 2e-4
    lr_adapter: float = 1e-4
    lr_heads: float = 1e-2
    lr_vision_ae: float = 1e-3
    cfg_dropout: float = 0.1
    beta_train: float = 1.0
    seed: int = 0
    ablation: str = "none"
    log_every: int = 200

    # inference / evaluation
    beta_infer: float = 0.3
    alpha: float = 0.4
    guidance_scale: float = 3.0
    sample_steps: int = 50
    eval_steps: int = 50
    eval_concepts: int = 16
    eval_images_per_concept: int = 5
    torch_threads: int = 1

    def __post_init__(self):
        if self.ablation not in ABLATION_FLAGS:
            raise ValidationError(
                f"ablation must be one of {ABLATION_FLAGS}, got {self.ablation!r}"
            )
        if not (0 <= self.filter_lo < self.filter_hi <= 1):
            raise ValidationError("filter bounds must satisfy 0 <= lo < hi <= 1")
        if self.encoder_input % self.patch_size != 0:
            raise ValidationError("encoder_input must be divisible by patch_size")
        if not (0 < self.beta_start < self.beta_end < 1):
            raise ValidationError("betas must satisfy 0 < beta_start < beta_end < 1")

    @property
    def tokens_per_image(self) -> int:
        """Patch tokens plus the global token (k)."""
        return (self.encoder_input // self.patch_size) ** 2 + 1

    def replace(self, **kwargs) -> "Config":
        return dataclasses.replace(self, **kwargs)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    def digest(self) -> str:
        """Stable hash of the full configuration."""
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _parse_value(name: str, raw: str, ftype) -> object:
    raw = raw.strip()
    if ftype is int:
        return int(raw)
    if ftype is float:
        return float(raw)
    if ftype is str:
        return raw
    if ftype is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValidationError(f"{name}: cannot parse {raw!r} as bool")
    # tuple[int, ...]
    if str(ftype).startswith("tuple"):
        if not raw:
            return ()
        return tuple(int(x) for x in raw.split(","))
    raise ValidationError(f"{name}: unsupported config field type {ftype}")


_FIELD_TYPES = {
    "image_size": int, "train_concepts": int, "scenes_per_concept": int,
    "test_concepts": int, "test_scenes_per_concept": int, "data_seed": int,
    "filter_lo": float, "filter_hi": float,
    "d_text": int, "text_layers": int, "text_heads": int, "l_max": int,
    "identifier": str,
    "d_backbone": int, "vis_layers": int, "vis_heads": int, "patch_size": int,
    "encoder_input": int, "d_vis": int, "crop_margin": float,
    "aug_flip": float, "aug_rotate": float, "aug_scale_lo": float,
    "aug_scale_hi": float, "aug_brightness": float,
    "timesteps": int, "beta_start": float, "beta_end": float,
    "unet_channels": tuple, "attn_resolutions": tuple, "unet_heads": int,
    "time_dim": int, "ffn_mult": int,
    "pretrain_steps": int, "adapter_steps": int, "batch_size": int,
    "lr_pretrain": float, "lr_adapter": float, "lr_heads": float,
    "lr_vision_ae": float, "cfg_dropout": float, "beta_train": float,
    "seed": int, "ablation": str, "log_every": int,
    "beta_infer": float, "alpha": float, "guidance_scale": float,
    "sample_steps": int, "eval_steps": int, "eval_concepts": int,
    "eval_images_per_concept": int, "torch_threads": int,
}


def parse_config_text(text: str, base: Config | None = None) -> Config:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, _FIELD_TYPES[key])
    if base is None:
        return Config(**values)
    return base.replace(**values)


def load_config(path: str | Path, base: Config | None = None) -> Config:
    return parse_config_text(Path(path).read_text(), base=base)


def apply_overrides(cfg: Config, overrides: list[str]) -> Config:
    """Apply ``key=value`` strings (CLI --set) on top of a config."""
    values: dict[str, object] = {}
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"override {item!r}: expected key=value")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValidationError(f"override: unknown key {key!r}")
        values[key] = _parse_value(key, raw, _FIELD_TYPES[key])
    return cfg.replace(**values)
