"""Flat key=value run configuration.

Config files are INI-style lines `key = value` (no sections, # comments).
Values from the file are overlaid by command-line overrides; unknown keys
are rejected before any work starts. Schedules are written as
`count:lr,count:lr,...`.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

REQUIRED = object()


def parse_schedule(text: str):
    """'50:1e-4,10:1e-5' -> ((50, 1e-4), (10, 1e-5))."""
    out = []
    for seg in text.split(","):
        seg = seg.strip()
        if not seg:
            continue
        parts = seg.split(":")
        if len(parts) != 2:
            raise ConfigError(f"bad schedule segment {seg!r}; want count:lr")
        try:
            count, lr = int(parts[0]), float(parts[1])
        except ValueError:
            raise ConfigError(f"bad schedule segment {seg!r}")
        if count <= 0 or lr <= 0:
            raise ConfigError(f"schedule needs positive count and lr, got {seg!r}")
        out.append((count, lr))
    if not out:
        raise ConfigError("empty schedule")
    return tuple(out)


def format_schedule(schedule) -> str:
    return ",".join(f"{int(n)}:{lr:g}" for n, lr in schedule)


def _coerce(key, kind, raw):
    if raw is None:
        return None
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if str(raw).lower() in ("1", "true", "yes", "on"):
                return True
            if str(raw).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "schedule":
            return parse_schedule(raw) if isinstance(raw, str) else tuple(raw)
        if kind in ("str", "path"):
            return str(raw)
    except ConfigError:
        raise
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {kind})")
    raise ConfigError(f"unknown config kind {kind!r} for {key}")


def parse_kv_file(path) -> dict:
    cfg = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def parse_overrides(pairs) -> dict:
    cfg = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set needs key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def resolve(schema: dict, file_path, overrides: dict) -> dict:
    """Merge defaults <- config file <- overrides, coercing and rejecting
    unknown keys. schema: {key: (kind, default)} with REQUIRED for
    mandatory keys."""
    merged = {k: default for k, (_, default) in schema.items()}
    sources = []
    if file_path:
        sources.append(parse_kv_file(file_path))
    sources.append(overrides)
    for src in sources:
        for key, raw in src.items():
            if key not in schema:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, schema[key][0], raw)
    for key, value in merged.items():
        if value is REQUIRED:
            raise ConfigError(f"missing required config key {key!r}")
    return merged


def echo(schema: dict, cfg: dict) -> str:
    """Deterministic text form of a resolved config (for the output dir)."""
    lines = []
    for key in schema:
        value = cfg[key]
        if value is None:
            continue
        if schema[key][0] == "schedule":
            value = format_schedule(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def require_file(cfg: dict, key: str) -> Path:
    path = Path(cfg[key])
    if not path.is_file():
        raise ConfigError(f"{key}: no such file: {path}")
    return path
