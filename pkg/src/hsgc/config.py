"""Flat ``key = value`` pipeline configuration."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError

_AUTO_WORDS = {"median", "auto", "none"}


@dataclass(frozen=True)
class PipelineConfig:
    variance_target: float = 0.98
    max_bands: int | None = None
    cov_window: int = 5
    cov_epsilon_scale: float = 1e-3
    superpixels: int = 0              # 0 picks round(W*H / 20)
    compactness: float = 10.0
    max_iters: int = 10
    seg_tol: float = 1e-3
    density_lambda: float = 4.0
    density_gmin: float = 0.5
    density_smoothing: int = 5
    h: float | None = None            # None: median heuristic
    beta: float = 0.9
    sigma_s: float | None = None
    sigma_l: float | None = None
    knn: int = 20
    alpha: float = 0.99
    lgc_tol: float = 1e-8
    lgc_max_iters: int = 5000
    labels_per_class: int = 10
    trials: int = 10
    rng_seed: int = 0
    include_seeds: bool = False

    def __post_init__(self) -> None:
        for key, ok, domain in _CHECKS:
            value = getattr(self, key)
            if value is not None and not ok(value):
                raise ConfigError(f"{key} = {value!r} is outside its domain {domain}")

    def replace(self, **changes: Any) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'median' if v is None and f.name in _OPTIONAL_AUTO else v}")
        return "\n".join(lines) + "\n"

    def superpixel_count(self, width: int, height: int) -> int:
        return self.superpixels if self.superpixels > 0 else max(1, round(width * height / 20))


_CHECKS = (
    ("variance_target", lambda v: 0 < v <= 1, "(0, 1]"),
    ("max_bands", lambda v: v >= 1, ">= 1"),
    ("cov_window", lambda v: v >= 3 and v % 2 == 1, "odd >= 3"),
    ("cov_epsilon_scale", lambda v: v > 0, "> 0"),
    ("superpixels", lambda v: v >= 0, ">= 0"),
    ("compactness", lambda v: v > 0, "> 0"),
    ("max_iters", lambda v: v >= 1, ">= 1"),
    ("seg_tol", lambda v: v >= 0, ">= 0"),
    ("density_lambda", lambda v: v >= 0, ">= 0"),
    ("density_gmin", lambda v: 0 < v <= 1, "(0, 1]"),
    ("density_smoothing", lambda v: v >= 1 and v % 2 == 1, "odd >= 1"),
    ("h", lambda v: v > 0, "> 0"),
    ("beta", lambda v: 0 <= v <= 1, "[0, 1]"),
    ("sigma_s", lambda v: v > 0, "> 0"),
    ("sigma_l", lambda v: v > 0, "> 0"),
    ("knn", lambda v: v >= 1, ">= 1"),
    ("alpha", lambda v: 0 < v < 1, "(0, 1)"),
    ("lgc_tol", lambda v: v > 0, "> 0"),
    ("lgc_max_iters", lambda v: v >= 1, ">= 1"),
    ("labels_per_class", lambda v: v >= 0, ">= 0"),
    ("trials", lambda v: v >= 1, ">= 1"),
)

_OPTIONAL_AUTO = {"h", "sigma_s", "sigma_l", "max_bands"}
_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def parse_value(key: str, raw: str) -> Any:
    """Convert a textual value for ``key`` to its field type."""
    if key not in _TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    text = raw.strip()
    kind = _TYPES[key]
    try:
        if key in _OPTIONAL_AUTO and text.lower() in _AUTO_WORDS:
            return None
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if "int" in kind:
            return int(text)
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} ({exc})") from None


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, raw = body.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        values[key] = parse_value(key, raw)
    return (base or PipelineConfig()).replace(**values)


def parse_config(path: str | Path) -> PipelineConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))
