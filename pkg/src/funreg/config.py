"""Strict configuration loading and canonical hashing."""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .exceptions import ConfigError

REQUIRED = object()


def load_file(path) -> dict:
    """Read a TOML or JSON document (chosen by extension, TOML otherwise)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    return data


def apply_schema(data: dict, schema: dict, path: str = "") -> dict:
    """Fill defaults from ``schema`` and reject unknown or missing keys.

    Schema values are defaults; ``REQUIRED`` marks mandatory keys and a
    nested dict describes a sub-table.  A schema key ending in ``*`` (only
    ``"*"`` itself) lets a table accept arbitrary keys.
    """
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a table")
    if "*" in schema:
        return copy.deepcopy(data)
    unknown = sorted(set(data) - set(schema))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown config key {where}{unknown[0]}")
    out = {}
    for key, default in schema.items():
        key_path = f"{path}.{key}" if path else key
        if key in data:
            value = data[key]
            if isinstance(default, dict) and value is not None:
                value = apply_schema(value, default, key_path)
            out[key] = copy.deepcopy(value)
        elif default is REQUIRED:
            raise ConfigError(f"missing required config key {key_path}")
        elif isinstance(default, dict):
            out[key] = apply_schema({}, default, key_path)
        else:
            out[key] = copy.deepcopy(default)
    return out


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(data) -> str:
    """SHA-256 of the canonical (key-sorted) JSON form."""
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()
