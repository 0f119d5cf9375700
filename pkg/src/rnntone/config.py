"""Flat ``key = value`` config files (``#`` starts a comment)."""
from __future__ import annotations

import math


class ConfigError(ValueError):
    pass


def parse_kv(text: str, source: str = "<string>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read(), str(path))


def format_kv(items: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())


def to_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def to_optional_float(value):
    if value is None:
        return None
    v = str(value).strip().lower()
    if v in ("none", "", "inf", "infinity"):
        return None if v in ("none", "") else math.inf
    return float(v)


def check_known(items: dict, known, what: str) -> None:
    unknown = sorted(set(items) - set(known))
    if unknown:
        raise ConfigError(f"unknown {what} key(s): {', '.join(unknown)}")
