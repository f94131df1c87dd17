"""Flat ``key = value`` run configuration.

Recognized keys::

    data               dataset root (required for training)
    val_data           optional validation dataset root
    output_dir         where logs and checkpoints go (default: run)
    seed               integer (default 0)
    base_channels, level_blocks, refinement_blocks, d_embed
                       model settings; level_blocks is a comma list of 4
    stages             comma list of stage names, in order
    <stage>.crop, <stage>.batch, <stage>.lr, <stage>.loss, <stage>.iterations
                       per-stage overrides of the full-resolution defaults
    val_every, checkpoint_every
                       cadence in iterations (default 250 each)

Blank lines and ``#`` comments are ignored. Every problem in a file is
collected and reported together.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .engine import STAGE_NAMES, StageConfig, full_stages
from .errors import ConfigError
from .network import ModelConfig

_STAGE_KEYS = {"crop": int, "batch": int, "lr": float, "loss": str, "iterations": int}
_MODEL_KEYS = {"base_channels": int, "refinement_blocks": int, "d_embed": int}


@dataclass
class RunConfig:
    data: Path | None = None
    val_data: Path | None = None
    output_dir: Path = Path("run")
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    stages: list = field(default_factory=full_stages)
    val_every: int = 250
    checkpoint_every: int = 250


def _int_list(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def parse_config_text(text: str, base_dir=None) -> RunConfig:
    base = Path(base_dir) if base_dir is not None else Path(".")
    raw = {}
    errors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            errors.append(f"line {lineno}: expected 'key = value', got {s!r}")
            continue
        key, value = (part.strip() for part in s.split("=", 1))
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    cfg = RunConfig()
    model_kw = {}
    stage_names = list(STAGE_NAMES)
    if "stages" in raw:
        stage_names = [n.strip() for n in raw.pop("stages").split(",") if n.strip()]
        for n in stage_names:
            if n not in STAGE_NAMES:
                errors.append(f"stages: unknown stage {n!r} (known: {', '.join(STAGE_NAMES)})")
        if not stage_names:
            errors.append("stages: at least one stage is required")
    defaults = {s.name: s for s in full_stages()}
    stage_kw = {n: {f.name: getattr(defaults[n], f.name) for f in fields(StageConfig)}
                for n in STAGE_NAMES}

    for key, value in raw.items():
        try:
            if key in ("data", "val_data", "output_dir"):
                setattr(cfg, key, base / value)
            elif key in ("seed", "val_every", "checkpoint_every"):
                setattr(cfg, key, int(value))
            elif key in _MODEL_KEYS:
                model_kw[key] = _MODEL_KEYS[key](value)
            elif key == "level_blocks":
                model_kw[key] = _int_list(value)
            elif "." in key and key.split(".", 1)[0] in STAGE_NAMES:
                stage, attr = key.split(".", 1)
                if attr not in _STAGE_KEYS:
                    errors.append(f"{key}: unknown stage setting (known: {', '.join(_STAGE_KEYS)})")
                    continue
                stage_kw[stage][attr] = _STAGE_KEYS[attr](value)
            else:
                errors.append(f"{key}: unknown key")
        except ValueError:
            errors.append(f"{key}: cannot interpret {value!r}")

    if cfg.val_every <= 0 or cfg.checkpoint_every < 0:
        errors.append("val_every must be positive and checkpoint_every non-negative")
    try:
        cfg.model = ModelConfig(**model_kw)
    except ConfigError as exc:
        errors.append(str(exc))
    stages = []
    for n in stage_names:
        if n not in stage_kw:
            continue
        try:
            stages.append(StageConfig(**stage_kw[n]))
        except ConfigError as exc:
            errors.append(str(exc))
    cfg.stages = stages
    if errors:
        raise ConfigError("configuration problems:\n  " + "\n  ".join(errors))
    return cfg


def load_config(path, base_dir=None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base_dir)
