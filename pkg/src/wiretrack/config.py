"""Flat ``key = value`` configuration with dotted keys and typed defaults.

Precedence is defaults < config file < command-line ``--set`` pairs. Every
key must already exist in the defaults; values are coerced to the type of
the default they replace.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

from .errors import ConfigError


def parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"empty key in {text!r}")
    return key, value.strip()


def parse_flat(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            key, value = parse_assignment(line)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
        out[key] = value
    return out


def load_flat(path) -> dict[str, str]:
    p = Path(path)
    return parse_flat(p.read_text(), str(p))


def dataclass_defaults(obj, prefix: str = "") -> dict[str, Any]:
    """Flatten a (nested) dataclass instance into dotted keys."""
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            out.update(dataclass_defaults(value, key + "."))
        else:
            out[key] = value
    return out


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def coerce(value, default):
    """Convert ``value`` (usually a string) to the type of ``default``."""
    if not isinstance(value, str):
        # values read back from a JSON manifest are already typed
        if isinstance(default, tuple) and isinstance(value, list):
            return tuple(float(v) for v in value)
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value
    if isinstance(default, bool):
        return _parse_bool(value)
    if isinstance(default, int):
        return int(value, 0)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        parts = [p.strip() for p in value.strip("()[] ").split(",") if p.strip()]
        if len(parts) != len(default):
            raise ValueError(f"expected {len(default)} comma-separated values")
        return tuple(float(p) for p in parts)
    if default is None:
        return None if value.lower() in ("none", "") else float(value)
    return value


def resolve(defaults: dict[str, Any], *layers: dict[str, Any]) -> dict[str, Any]:
    """Apply override layers in order, rejecting unknown keys and bad values."""
    out = dict(defaults)
    for layer in layers:
        for key, value in layer.items():
            if key not in defaults:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                out[key] = coerce(value, defaults[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
    return out


def section(values: dict[str, Any], prefix: str) -> dict[str, Any]:
    """Keys under ``prefix.`` with the prefix stripped (one level only)."""
    p = prefix + "."
    return {k[len(p) :]: v for k, v in values.items() if k.startswith(p) and "." not in k[len(p) :]}


def build(cls, values: dict[str, Any], prefix: str):
    """Instantiate dataclass ``cls`` from the ``prefix.`` section of ``values``."""
    try:
        return cls(**section(values, prefix))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {prefix} settings: {exc}") from None


def jsonable(values: dict[str, Any]) -> dict[str, Any]:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(values.items())}
