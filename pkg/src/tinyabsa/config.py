"""Run configuration: one INI-style file with sections, overridable by flags.

Sections and keys are fixed; unknown names are rejected rather than ignored.
Command-line overrides use ``section.key=value`` and win over file values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .heads import HEAD_KINDS
from .training import TrainConfig

_SCHEMA: dict[str, dict[str, type]] = {
    "data": {"train": str, "val": str, "test": str},
    "encoder": {
        "preset": str,
        "max_len": int,
        "embeddings_train": str,
        "embeddings_val": str,
        "embeddings_test": str,
    },
    "head": {
        "kind": str,
        "window": int,
        "fcn_hidden": int,
        "cnn_channels": int,
        "cnn_kernel": int,
    },
    "train": {
        "lr": float,
        "batch_size": int,
        "epochs": int,
        "dropout": float,
        "patience": int,
        "seed": int,
        "metric": str,
        "clip_norm": float,
        "restore_best": bool,
        "adam_beta1": float,
        "adam_beta2": float,
        "adam_eps": float,
    },
    "experiment": {
        "heads": str,
        "encoders": str,
        "seeds": str,
        "save_checkpoints": bool,
    },
    "paths": {"vocab": str, "out_dir": str},
}


@dataclass
class RunConfig:
    data_train: str | None = None
    data_val: str | None = None
    data_test: str | None = None
    encoder_preset: str = "tiny"
    max_len: int | None = None
    embeddings_train: str | None = None
    embeddings_val: str | None = None
    embeddings_test: str | None = None
    head_kind: str = "fcn"
    head_overrides: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    grid_heads: list[str] = field(default_factory=lambda: ["fcn", "cnn", "gcn"])
    grid_encoders: list[str] = field(default_factory=lambda: ["tiny"])
    grid_seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    save_checkpoints: bool = False
    vocab_path: str | None = None
    out_dir: str = "runs"


def _parse_bool(raw: str, where: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{where}: expected a boolean, got {raw!r}")


def _typed(section: str, key: str, raw: str):
    if section not in _SCHEMA:
        raise ConfigurationError(f"unknown config section [{section}]")
    if key not in _SCHEMA[section]:
        known = ", ".join(sorted(_SCHEMA[section]))
        raise ConfigurationError(f"unknown key {key!r} in [{section}]; known keys: {known}")
    kind = _SCHEMA[section][key]
    where = f"[{section}] {key}"
    try:
        if kind is bool:
            return _parse_bool(raw, where)
        return kind(raw.strip())
    except ValueError:
        raise ConfigurationError(f"{where}: cannot parse {raw!r} as {kind.__name__}") from None


def _csv(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def load_run_config(path: str | None, overrides: list[str] | None = None) -> RunConfig:
    values: dict[tuple[str, str], object] = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        read = parser.read(path, encoding="utf-8")
        if not read:
            raise ConfigurationError(f"config file not found: {path}")
        for section in parser.sections():
            for key, raw in parser.items(section):
                values[(section, key)] = _typed(section, key, raw)
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        target, raw = item.split("=", 1)
        section, key = target.split(".", 1)
        values[(section.strip(), key.strip())] = _typed(section.strip(), key.strip(), raw)

    cfg = RunConfig()
    cfg.data_train = values.get(("data", "train"), cfg.data_train)
    cfg.data_val = values.get(("data", "val"), cfg.data_val)
    cfg.data_test = values.get(("data", "test"), cfg.data_test)
    cfg.encoder_preset = values.get(("encoder", "preset"), cfg.encoder_preset)
    cfg.max_len = values.get(("encoder", "max_len"), cfg.max_len)
    cfg.embeddings_train = values.get(("encoder", "embeddings_train"), None)
    cfg.embeddings_val = values.get(("encoder", "embeddings_val"), None)
    cfg.embeddings_test = values.get(("encoder", "embeddings_test"), None)
    cfg.head_kind = values.get(("head", "kind"), cfg.head_kind)
    if cfg.head_kind not in HEAD_KINDS:
        raise ConfigurationError(f"[head] kind must be one of {HEAD_KINDS}, got {cfg.head_kind!r}")
    for key in ("window", "fcn_hidden", "cnn_channels", "cnn_kernel"):
        if ("head", key) in values:
            cfg.head_overrides[key] = values[("head", key)]

    train_kwargs = {}
    for key in _SCHEMA["train"]:
        if ("train", key) in values:
            train_kwargs[key] = values[("train", key)]
    cfg.train = TrainConfig(encoder_preset=cfg.encoder_preset, head_kind=cfg.head_kind,
                            max_len=cfg.max_len, **train_kwargs).validate()

    if ("experiment", "heads") in values:
        cfg.grid_heads = _csv(values[("experiment", "heads")])
        for head in cfg.grid_heads:
            if head not in HEAD_KINDS:
                raise ConfigurationError(f"[experiment] heads: unknown head {head!r}")
    if ("experiment", "encoders") in values:
        cfg.grid_encoders = _csv(values[("experiment", "encoders")])
    if ("experiment", "seeds") in values:
        try:
            cfg.grid_seeds = [int(s) for s in _csv(values[("experiment", "seeds")])]
        except ValueError:
            raise ConfigurationError("[experiment] seeds must be comma-separated integers") from None
        if not cfg.grid_seeds:
            raise ConfigurationError("[experiment] seeds must name at least one seed")
    cfg.save_checkpoints = values.get(("experiment", "save_checkpoints"), False)
    cfg.vocab_path = values.get(("paths", "vocab"), None)
    cfg.out_dir = values.get(("paths", "out_dir"), cfg.out_dir)
    return cfg
