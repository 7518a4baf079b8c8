"""Run configuration: flat key=value files plus command-line overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields

__all__ = ["ConfigError", "RunConfig", "parse_config", "serialize_config", "load_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    case: str = "free_stream"
    cfl: float = 0.5
    gravity: float | None = None       # None: case default
    t_end: float | None = None
    dx: float | None = None
    motion: str | None = None          # static | prescribed | adaptive
    amplitude: float | None = None
    n_motion: int = 4
    n_smooth: int = 6
    adaptive_limiter: str = "fractional"
    limiter_fraction: float = 0.05
    output_dir: str = "out"
    snapshot_dt: float = 0.0           # 0: final snapshot only
    formats: str = "csv"               # comma-separated: csv, vtk
    max_steps: int = 0                 # 0: unlimited
    history_every: int = 1
    deterministic: bool = True
    positivity: str = "abort"

    def validate(self) -> "RunConfig":
        if not (0.0 < self.cfl <= 1.0):
            raise ConfigError(f"cfl must be in (0, 1], got {self.cfl}")
        if self.t_end is not None and self.t_end <= 0.0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.dx is not None and self.dx <= 0.0:
            raise ConfigError(f"dx must be positive, got {self.dx}")
        if self.motion not in (None, "static", "prescribed", "adaptive"):
            raise ConfigError(f"unknown motion mode {self.motion!r}")
        if self.adaptive_limiter not in ("fractional", "literal"):
            raise ConfigError(f"unknown limiter {self.adaptive_limiter!r}")
        if self.positivity not in ("abort", "clamp"):
            raise ConfigError(f"unknown positivity policy {self.positivity!r}")
        for fmt in self.format_list():
            if fmt not in ("csv", "vtk"):
                raise ConfigError(f"unknown output format {fmt!r}")
        return self

    def format_list(self) -> list[str]:
        return [f.strip() for f in self.formats.split(",") if f.strip()]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    ftype = _FIELD_TYPES.get(name)
    if ftype is None:
        raise ConfigError(f"unknown config key {name!r}")
    if raw.lower() in ("none", ""):
        return None
    if ftype == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"bad boolean for {name}: {raw!r}")
    if ftype == "int":
        return int(raw)
    if ftype in ("float", "float | None"):
        return float(raw)
    return raw


def parse_config(text: str, overrides: dict[str, str] | None = None) -> RunConfig:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        values[key.strip()] = _coerce(key.strip(), raw)
    for key, raw in (overrides or {}).items():
        values[key] = _coerce(key, raw)
    return RunConfig(**values).validate()


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        val = getattr(cfg, f.name)
        lines.append(f"{f.name} = {val if val is not None else 'none'}")
    return "\n".join(lines) + "\n"


def load_config(path, overrides: dict[str, str] | None = None) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read(), overrides)
