"""Flat ``key = value`` run configuration with a typed, range-checked registry.

Values come from the registry defaults, then an optional config file, then
command-line flags; later sources win. Unknown keys are rejected.
"""
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

from .errors import ContractError


def _int_tuple(text):
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    text = str(text).strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Key:
    parse: Callable[[Any], Any]
    default: Any
    check: Optional[Callable[[Any], bool]] = None
    rule: str = ""


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


REGISTRY: Dict[str, Key] = {
    "lr": Key(float, 1e-3, _nonneg, ">= 0"),
    "batch_size": Key(int, 100, lambda v: v >= 2, ">= 2"),
    "epochs": Key(int, 100, _pos, "> 0"),
    "patience": Key(int, 50, _pos, "> 0"),
    "patience_after": Key(int, 10, _pos, "> 0"),
    "lr_divisor": Key(float, 10.0, _pos, "> 0"),
    "reductions": Key(int, 3, _nonneg, ">= 0"),
    "margin": Key(float, 0.5, _pos, "> 0"),
    "symmetric": Key(_bool, False),
    "reg": Key(float, 1e-3, _nonneg, ">= 0"),
    "weight_decay": Key(float, 1e-4, _nonneg, ">= 0"),
    "k": Key(int, 16, _pos, "> 0"),
    "hidden": Key(_int_tuple, (64,), lambda v: all(w > 0 for w in v), "positive widths"),
    "seed": Key(int, 0, _nonneg, ">= 0"),
    "seeds": Key(int, 3, _pos, "> 0"),
    "train_fraction": Key(float, 1.0, lambda v: 0 < v <= 1, "in (0, 1]"),
    "val_fraction": Key(float, 0.1, lambda v: 0 < v < 1, "in (0, 1)"),
    "test_fraction": Key(float, 0.1, lambda v: 0 < v < 1, "in (0, 1)"),
}


def parse_config_text(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = value
    return out


def load_config_file(path):
    with open(path) as fh:
        return parse_config_text(fh.read(), str(path))


def resolve(file_values=None, overrides=None, keys=None):
    """Merge sources into a dict of typed values for ``keys`` (all registry keys by default)."""
    keys = list(REGISTRY) if keys is None else list(keys)
    merged = {k: REGISTRY[k].default for k in keys}
    for source in (file_values or {}, overrides or {}):
        for key, raw in source.items():
            if raw is None:
                continue
            if key not in keys:
                raise ContractError(f"unknown configuration key {key!r}")
            entry = REGISTRY[key]
            try:
                value = entry.parse(raw)
            except (TypeError, ValueError) as exc:
                raise ContractError(f"bad value for {key}: {raw!r} ({exc})") from None
            if entry.check is not None and not entry.check(value):
                raise ContractError(f"{key} must be {entry.rule}, got {value!r}")
            merged[key] = value
    return merged
