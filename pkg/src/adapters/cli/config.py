import json
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from src.errors import ConfigError
from src.schemas.run_config import RunConfig


def deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _read_file(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"config {path} is not valid JSON: {e.msg} (line {e.lineno})"
        ) from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def load_config(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> RunConfig:
    """Documented defaults < config file < command-line overrides.

    Unknown keys at any level are an error listing every offending path.
    """
    data = _read_file(path) if path else {}
    data = deep_merge(data, overrides or {})
    try:
        return RunConfig(**data)
    except ValidationError as e:
        unknown = [
            ".".join(str(p) for p in err["loc"])
            for err in e.errors()
            if err["type"] == "extra_forbidden"
        ]
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}") from e
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid config: {problems}") from e
