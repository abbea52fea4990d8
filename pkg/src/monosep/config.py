"""Model and training configuration, with the three published presets plus
a desk-scale "tiny" preset for tests."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .block import BlockAblation
from .errors import ConfigError


@dataclass
class ModelConfig:
    preset: str = "tiny"
    n_blocks: int = 1  # R
    n_feat: int = 16  # N, encoder output dimension
    enc_kernel: int = 8  # K1; stride is always K1/2
    dw_kernel: int = 7  # K2, depthwise convolution kernel
    chunk_size: int = 8  # P, local attention chunk
    attn_dim: int = 8  # D, query/key dimension
    gate_phi: str = "sigmoid"
    n_speakers: int = 2  # C
    dropout_p: float = 0.1
    sample_rate: int = 8000
    attention_mode: str = "joint"
    single_gate: bool = False
    dense_uv: bool = False
    dense_qk: bool = False

    @property
    def enc_stride(self) -> int:
        return self.enc_kernel // 2

    def ablation(self) -> BlockAblation:
        return BlockAblation(
            attention_mode=self.attention_mode,
            single_gate=self.single_gate,
            dense_uv=self.dense_uv,
            dense_qk=self.dense_qk,
        )

    def validate(self) -> "ModelConfig":
        if self.enc_kernel % 2 != 0:
            raise ConfigError(f"enc_kernel must be even, got {self.enc_kernel}")
        if self.dw_kernel % 2 == 0:
            raise ConfigError(f"dw_kernel must be odd, got {self.dw_kernel}")
        if self.attn_dim % 2 != 0:
            raise ConfigError(f"attn_dim must be even, got {self.attn_dim}")
        if self.n_speakers < 1:
            raise ConfigError(f"n_speakers must be >= 1, got {self.n_speakers}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        return self


_PRESETS = {
    "S": dict(n_blocks=22, n_feat=256, enc_kernel=8, dw_kernel=31,
              chunk_size=256, attn_dim=128),
    "M": dict(n_blocks=25, n_feat=384, enc_kernel=16, dw_kernel=17,
              chunk_size=256, attn_dim=128),
    "L": dict(n_blocks=24, n_feat=512, enc_kernel=16, dw_kernel=17,
              chunk_size=256, attn_dim=128),
    "tiny": dict(n_blocks=1, n_feat=16, enc_kernel=8, dw_kernel=7,
                 chunk_size=8, attn_dim=8),
}

# published trainable-parameter totals, for informational count checks
PRESET_PARAM_TARGETS = {"S": 10.8e6, "M": 25.3e6, "L": 42.1e6}


def preset(name: str, **overrides) -> ModelConfig:
    try:
        base = _PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; expected one of {sorted(_PRESETS)}"
        ) from None
    cfg = ModelConfig(preset=name, **base)
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg.validate()


def preset_names() -> list[str]:
    return list(_PRESETS)


@dataclass
class TrainConfig:
    lr: float = 15e-5
    max_epochs: int = 200
    hold_epochs: int = 85  # epochs before the plateau schedule may cut lr
    lr_decay: float = 0.5
    patience: int = 2
    clip_norm: float = 5.0
    batch_size: int = 1
    seed: int = 0
    max_steps: int = 0  # stop after this many optimizer steps; 0 = no cap

    def validate(self) -> "TrainConfig":
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        return self


def config_fields(cls) -> dict[str, type]:
    """Field name -> value type, for key=value config files and overrides.

    Every field carries a default, so the type is read off the default value.
    """
    return {f.name: type(f.default) for f in fields(cls)}


def coerce_value(cls, key: str, raw: str):
    kinds = config_fields(cls)
    if key not in kinds:
        raise ConfigError(
            f"unknown {cls.__name__} key {key!r}; expected one of {sorted(kinds)}"
        )
    kind = kinds[key]
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key} expects true/false, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key} expects {kind.__name__}, got {raw!r}") from exc
