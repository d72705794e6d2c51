"""Run configuration: schema, validation, file I/O, and the patch-grid arithmetic.

The config file is line-oriented UTF-8 ``key = value`` (``#`` starts a
comment). Every key is optional; missing keys take the desk-scale defaults
below. The environment variable ``SIMFLE_SEED`` overrides ``seed``.

Two built-in profiles:

* ``desk`` (default): 64 px contrastive views, 32 px reconstruction view,
  tiny backbone. Trains in minutes on a laptop CPU.
* ``paper``: 224/112 px, ResNet-50-style backbone, the full-scale recipe
  (batch 256, lr 0.05, 100 epochs, groups 32, patch 16).
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass
from pathlib import Path

FFL_CONNECTIONS = ("distill", "direct")
MASKING_STRATEGIES = ("semantic", "random")
PAIR_NORMALIZATIONS = ("raw_sum", "mean_over_pairs")
BACKBONE_PROFILES = ("tiny", "resnet50")


class ConfigError(ValueError):
    """Raised on unparseable or invariant-violating configuration."""


@dataclass(frozen=True)
class TrainConfig:
    image_size_gfl: int = 64
    image_size_ffl: int = 32
    patch_size: int = 8
    num_groups: int = 8
    mask_ratio: float = 0.75
    ema_tau: float = 0.996
    distill_temp: float = 4.0
    alpha: float = 0.3
    beta: float = 0.03
    lr: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    ffl_connection: str = "distill"
    masking_strategy: str = "semantic"
    grouping_pair_normalization: str = "raw_sum"
    backbone: str = "tiny"

    def __post_init__(self):
        validate(self)

    def replace(self, **kwargs) -> "TrainConfig":
        return dataclasses.replace(self, **kwargs)


def paper_config(**overrides) -> TrainConfig:
    """The full-scale recipe: 224/112 px, ResNet-50-style backbone."""
    base = dict(
        image_size_gfl=224,
        image_size_ffl=112,
        patch_size=16,
        num_groups=32,
        mask_ratio=0.75,
        ema_tau=0.996,
        distill_temp=4.0,
        alpha=0.3,
        beta=0.03,
        lr=0.05,
        momentum=0.9,
        weight_decay=1e-4,
        batch_size=256,
        epochs=100,
        backbone="resnet50",
    )
    base.update(overrides)
    return TrainConfig(**base)


# file-schema key -> (dataclass field, parser, human-readable legal range)
_SCHEMA: dict[str, tuple[str, type, str]] = {
    "image_size_gfl": ("image_size_gfl", int, "positive integer"),
    "image_size_ffl": ("image_size_ffl", int, "positive integer"),
    "patch_size": ("patch_size", int, "positive integer dividing image_size_ffl"),
    "num_groups": ("num_groups", int, "integer >= 1"),
    "gamma": ("mask_ratio", float, "0 < gamma < 1"),
    "tau": ("ema_tau", float, "0 <= tau <= 1"),
    "temperature": ("distill_temp", float, "temperature > 0"),
    "alpha": ("alpha", float, "alpha >= 0"),
    "beta": ("beta", float, "beta >= 0"),
    "lr": ("lr", float, "lr > 0"),
    "momentum": ("momentum", float, "0 <= momentum < 1"),
    "weight_decay": ("weight_decay", float, "weight_decay >= 0"),
    "batch_size": ("batch_size", int, "integer >= 1"),
    "epochs": ("epochs", int, "integer >= 1"),
    "seed": ("seed", int, "integer"),
    "ffl_connection": ("ffl_connection", str, "one of " + "/".join(FFL_CONNECTIONS)),
    "masking_strategy": ("masking_strategy", str, "one of " + "/".join(MASKING_STRATEGIES)),
    "grouping_pair_normalization": (
        "grouping_pair_normalization",
        str,
        "one of " + "/".join(PAIR_NORMALIZATIONS),
    ),
    "backbone": ("backbone", str, "one of " + "/".join(BACKBONE_PROFILES)),
}

_FIELD_TO_KEY = {field: key for key, (field, _, _) in _SCHEMA.items()}


def _key_of(field: str) -> str:
    return _FIELD_TO_KEY.get(field, field)


def validate(cfg: TrainConfig) -> None:
    """Check every invariant; raise ConfigError naming the offending file key."""

    def fail(field: str):
        key = _key_of(field)
        raise ConfigError(
            f"config key '{key}' = {getattr(cfg, field)!r} violates its legal "
            f"range ({_SCHEMA[key][2]})"
        )

    for field in ("image_size_gfl", "image_size_ffl", "patch_size", "num_groups",
                  "batch_size", "epochs"):
        if getattr(cfg, field) < 1:
            fail(field)
    if not (0.0 < cfg.mask_ratio < 1.0):
        fail("mask_ratio")
    if not (0.0 <= cfg.ema_tau <= 1.0):
        fail("ema_tau")
    if cfg.distill_temp <= 0.0:
        fail("distill_temp")
    if cfg.alpha < 0.0:
        fail("alpha")
    if cfg.beta < 0.0:
        fail("beta")
    if cfg.lr <= 0.0:
        fail("lr")
    if not (0.0 <= cfg.momentum < 1.0):
        fail("momentum")
    if cfg.weight_decay < 0.0:
        fail("weight_decay")
    if cfg.ffl_connection not in FFL_CONNECTIONS:
        fail("ffl_connection")
    if cfg.masking_strategy not in MASKING_STRATEGIES:
        fail("masking_strategy")
    if cfg.grouping_pair_normalization not in PAIR_NORMALIZATIONS:
        fail("grouping_pair_normalization")
    if cfg.backbone not in BACKBONE_PROFILES:
        fail("backbone")
    if cfg.image_size_ffl % cfg.patch_size != 0:
        raise ConfigError(
            f"config key 'patch_size' = {cfg.patch_size} does not divide "
            f"image_size_ffl = {cfg.image_size_ffl}"
        )
    # patch-grid arithmetic must leave at least one masked and one visible patch
    derive_patch_grid(cfg)


def derive_patch_grid(cfg: TrainConfig) -> tuple[int, int]:
    """Return (num_patches, num_masked) for the reconstruction view.

    num_masked is round-half-up of mask_ratio * num_patches so the canonical
    0.75 ratio stays meaningful on small grids.
    """
    if cfg.image_size_ffl % cfg.patch_size != 0:
        raise ConfigError(
            f"config key 'patch_size' = {cfg.patch_size} does not divide "
            f"image_size_ffl = {cfg.image_size_ffl}"
        )
    n_p = (cfg.image_size_ffl // cfg.patch_size) ** 2
    n_m = int(math.floor(cfg.mask_ratio * n_p + 0.5))
    if n_m < 1 or n_m > n_p - 1:
        raise ConfigError(
            f"config key 'gamma' = {cfg.mask_ratio} leaves {n_m} of {n_p} patches "
            "masked; need at least one masked and one visible patch"
        )
    return n_p, n_m


def _parse_value(key: str, raw: str):
    field, typ, legal = _SCHEMA[key]
    raw = raw.strip()
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"config key '{key}' = {raw!r} is not a valid {typ.__name__} ({legal})"
        ) from None


def load_config(path: str | Path) -> TrainConfig:
    """Parse a key-value config file; missing keys take defaults.

    SIMFLE_SEED in the environment overrides any seed from the file.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        field = _SCHEMA[key][0]
        values[field] = _parse_value(key, raw)
    env_seed = os.environ.get("SIMFLE_SEED")
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"SIMFLE_SEED = {env_seed!r} is not an integer") from None
    return TrainConfig(**values)


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    """Write every field as 'key = value', one per line."""
    lines = []
    for key, (field, _, _) in _SCHEMA.items():
        lines.append(f"{key} = {getattr(cfg, field)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def apply_overrides(cfg: TrainConfig, overrides: list[str]) -> TrainConfig:
    """Apply CLI 'key=value' overrides (file-schema keys), validating each."""
    values = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key '{key}' in override {item!r}")
        values[_SCHEMA[key][0]] = _parse_value(key, raw)
    return cfg.replace(**values)
