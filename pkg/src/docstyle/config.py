"""TOML experiment configs: flag defaults per command plus a [common] block.

A config file may only contain known keys; anything unrecognized is an
error, and any key naming an input file must point at something that exists
when the config loads. Command-line flags override config values.
"""
from __future__ import annotations

from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:                   # Python 3.10
    import tomli as tomllib

# flag vocabulary per command section; [common] applies everywhere
COMMON_KEYS = {"seed", "threads", "out"}
COMMAND_KEYS = {
    "synth": {"classes", "per_class", "size", "noise"},
    "split": {"manifest", "train", "val", "test", "stratified"},
    "train-cnn": {"manifest", "features", "val_features", "arch", "region", "lr",
                  "momentum", "weight_decay", "batch_size", "epochs", "patience",
                  "init", "scale"},
    "extract-features": {"model", "manifest", "split", "region", "tap", "batch_size"},
    "fit-pca": {"features", "dim"},
    "compress": {"features", "pca"},
    "bow-vocab": {"manifest", "split", "k", "patch", "stride", "max_descriptors", "size"},
    "encode": {"manifest", "split", "kind", "vocab", "scheme", "patch", "stride", "size"},
    "build-index": {"features"},
    "retrieve": {"index", "queries", "k"},
    "eval-classify": {"model", "manifest", "split", "region", "train_features",
                      "test_features", "trees", "max_depth"},
    "eval-retrieve": {"index", "queries", "k", "mode", "manifest"},
    "pca-sweep": {"features", "queries", "dims", "k", "mode"},
    "report": {"run"},
}
PATH_KEYS = {"manifest", "features", "val_features", "train_features", "test_features",
             "model", "vocab", "index", "queries", "pca"}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    """Parse and validate a TOML config; returns {section: {key: value}}."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path.name}: {exc}") from None
    for section, body in data.items():
        if section == "common":
            allowed = COMMON_KEYS
        elif section in COMMAND_KEYS:
            allowed = COMMAND_KEYS[section] | COMMON_KEYS
        else:
            raise ConfigError(f"{path.name}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"{path.name}: [{section}] must be a table")
        for key, value in body.items():
            if key not in allowed:
                raise ConfigError(f"{path.name}: unknown key {key!r} in [{section}]")
            if key in PATH_KEYS:
                for part in str(value).split(","):
                    ref = (path.parent / part).resolve() if not Path(part).is_absolute() \
                        else Path(part)
                    if not ref.exists():
                        raise ConfigError(f"{path.name}: [{section}] {key} -> {part} does not exist")
    return data


def config_defaults(config: dict | None, command: str) -> dict:
    """Merged [common] + [command] key/value defaults for argparse."""
    if not config:
        return {}
    merged = dict(config.get("common", {}))
    merged.update(config.get(command, {}))
    return {k.replace("-", "_"): v for k, v in merged.items()}
