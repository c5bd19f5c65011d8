"""Dataclass <-> dict conversion with fail-fast validation of unknown keys."""

import dataclasses
import json
import typing
from pathlib import Path

from .exceptions import InvalidConfig


def _resolve_hints(cls):
    return typing.get_type_hints(cls)


def from_dict(cls, data, path=""):
    """Build dataclass ``cls`` from ``data``; unknown keys raise InvalidConfig."""
    if data is None:
        return cls()
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path or cls.__name__}: expected an object, got {type(data).__name__}")
    hints = _resolve_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InvalidConfig(f"{path or cls.__name__}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        hint = hints.get(key)
        sub = f"{path}.{key}" if path else key
        if dataclasses.is_dataclass(hint):
            kwargs[key] = from_dict(hint, value, sub)
        elif hint is tuple or typing.get_origin(hint) is tuple:
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value) \
                if isinstance(value, list) else value
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"{path or cls.__name__}: {exc}") from exc


def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    return obj


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    except OSError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc


def merge(base, override):
    """Recursive dict merge; ``override`` wins."""
    out = dict(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out
