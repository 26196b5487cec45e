"""Flat key-value run configs and run manifests.

Config files hold one `key = value` pair per line with `#` comments.  Keys
are validated exhaustively: unknown or missing required keys are reported
together in a ConfigurationError.
"""

from __future__ import annotations

import json
import os
import tempfile

from .augment import AugmentConfig
from .errors import ConfigurationError
from .model import ModelConfig
from .training import StageConfig, TrainConfig

TOOL_VERSION = "0.1.0"

_MODEL_KEYS = {
    "n_tx": int, "n_subband": int, "n_e": int, "n_b": int, "n_head": int,
    "k_h": int, "bits_total": int, "bits_per_symbol": int,
}
_TRAIN_KEYS = {
    "epochs": int, "seed": int, "batch_size": int, "lr_max": float,
    "lr_min": float, "warmup_epochs": int, "decay_epochs": int,
    "loss_kind": str, "quant_comp_weight": float, "train_fraction": float,
    "stages_bits": str, "stages_epochs": str,
}
_AUGMENT_KEYS = {
    "noise_alpha": float, "noise_sigma": float, "p_flip": float,
    "p_cyclic": float, "p_shuffle": float, "p_rotate": float,
    "rotate_per_subband": bool, "noise_target_clean": bool,
}
_REQUIRED = ("n_tx", "n_subband", "n_e", "n_b", "n_head", "k_h",
             "bits_total", "epochs", "seed")
KNOWN_KEYS = {**_MODEL_KEYS, **_TRAIN_KEYS, **_AUGMENT_KEYS}


def parse_kv_file(path: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            key, sep, value = text.partition("=")
            if not sep:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            pairs[key.strip()] = value.strip()
    return pairs


def _convert(key: str, raw: str, kind) -> object:
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigurationError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}") from exc


def _parse_int_list(key: str, raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(part.strip()) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigurationError(f"config key {key!r}: expected comma-separated integers") from exc


def load_run_config(path: str) -> tuple[ModelConfig, TrainConfig]:
    """Parse and validate a run config into model and training configs."""
    pairs = parse_kv_file(path)
    unknown = sorted(set(pairs) - set(KNOWN_KEYS))
    missing = sorted(k for k in _REQUIRED if k not in pairs)
    if unknown or missing:
        parts = []
        if unknown:
            parts.append("unknown keys: " + ", ".join(unknown))
        if missing:
            parts.append("missing keys: " + ", ".join(missing))
        raise ConfigurationError(f"{path}: " + "; ".join(parts))

    values = {k: _convert(k, raw, KNOWN_KEYS[k]) for k, raw in pairs.items()}

    model_cfg = ModelConfig(**{k: values[k] for k in _MODEL_KEYS if k in values})

    stages: tuple[StageConfig, ...] = ()
    if ("stages_bits" in values) != ("stages_epochs" in values):
        raise ConfigurationError("stages_bits and stages_epochs must be given together")
    if "stages_bits" in values:
        bits = _parse_int_list("stages_bits", pairs["stages_bits"])
        epochs = _parse_int_list("stages_epochs", pairs["stages_epochs"])
        if len(bits) != len(epochs):
            raise ConfigurationError("stages_bits and stages_epochs differ in length")
        stages = tuple(StageConfig(bits_total=b, epochs=e) for b, e in zip(bits, epochs))

    augment = AugmentConfig(**{k: values[k] for k in _AUGMENT_KEYS if k in values})
    train_fields = {k: values[k] for k in _TRAIN_KEYS
                    if k in values and k not in ("stages_bits", "stages_epochs")}
    train_cfg = TrainConfig(augment=augment, stages=stages, **train_fields)
    return model_cfg, train_cfg


def write_manifest(artifact_path: str, command: str, seeds: dict[str, int],
                   config_path: str | None = None,
                   extra_artifacts: dict[str, str] | None = None) -> str:
    """Atomically write a JSON run manifest next to an artifact."""
    # the manifest sits next to the artifact, so the basename is the only
    # portable identifier; absolute paths would differ across checkouts
    manifest = {
        "command": command,
        "config": config_path,
        "seeds": seeds,
        "artifacts": {"primary": os.path.basename(artifact_path),
                      **(extra_artifacts or {})},
        "tool_version": TOOL_VERSION,
    }
    target = artifact_path + ".manifest.json"
    directory = os.path.dirname(os.path.abspath(target)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target
