"""Flat ``key = value`` configuration files with typed parsing.

Blank lines and ``#`` comments are ignored.  Values may be quoted strings,
``true``/``false``, integers, or floats.  Each command validates the parsed
keys against its own schema and rejects unknown ones.
"""

from __future__ import annotations

from dataclasses import fields

from .errors import ConfigError
from .model import FetaConfig, TrainSettings

_MODEL_FIELDS = {f.name: f.default for f in fields(FetaConfig) if f.name not in ("in_dim", "n_classes")}
_TRAIN_FIELDS = {f.name: f.default for f in fields(TrainSettings)}

SCHEMAS = {
    "train": {
        "dataset": "",
        "preset": "",
        "dataset_seed": 0,
        "seed": 0,
        "out": "",
        **_MODEL_FIELDS,
        **_TRAIN_FIELDS,
    },
    "verify-theorems": {
        "instances": 100,
        "seed": 0,
        "constraint": "nonnegative",
        "restarts": 20,
        "probe_restarts": 5,
        "lemma_instances": 50,
        "perturbations": 500,
        "out": "",
    },
    "generate-data": {"preset": "Synthetic_1", "seed": 0, "out": ""},
    "eval": {"checkpoint": "", "dataset": "", "preset": "", "dataset_seed": 0, "split": "test", "out": ""},
    "analyze-filters": {"checkpoint": "", "dataset": "", "preset": "", "dataset_seed": 0, "split": "test", "out": ""},
}


def _scalar(text: str):
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str) -> dict:
    out = {}
    for num, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {num}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {num}: empty key")
        if key in out:
            raise ConfigError(f"line {num}: duplicate key {key!r}")
        out[key] = _scalar(value)
    return out


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    return str(value)


def validate(command: str, raw: dict) -> dict:
    """Fill defaults, check types, and reject keys the command does not know."""
    schema = SCHEMAS[command]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {unknown}")
    out = dict(schema)
    for k, v in raw.items():
        out[k] = _coerce(k, v, schema[k])
    return out


def load_config(path, command: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate(command, parse_config_text(text))


def dump_config(cfg: dict) -> str:
    lines = []
    for k in sorted(cfg):
        v = cfg[k]
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, (int, float)):
            s = repr(v)
        else:
            s = f'"{v}"'
        lines.append(f"{k} = {s}")
    return "\n".join(lines) + "\n"


def split_train_config(cfg: dict):
    """Model and optimizer sections of a validated train config."""
    model = {k: cfg[k] for k in _MODEL_FIELDS}
    opt = TrainSettings(**{k: cfg[k] for k in _TRAIN_FIELDS})
    return model, opt
