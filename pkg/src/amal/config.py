"""Run configuration: ``key = value`` files, command-line flags and defaults.

A flag given on the command line beats the same key in a config file, which
beats the built-in default.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Mapping

from .alignment import AlignmentConfig
from .weights import ScoreWeights


class ConfigError(ValueError):
    pass


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_key_values(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_key_values(path) -> Dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return read_key_values(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


WARP_CHOICES = ("none", "poi", "dtw")


@dataclass(frozen=True)
class RunConfig:
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    warp: str = "poi"
    seed: int = 0
    segmentation: bool = True
    joint_grouping: bool = True
    strict_warp: bool = False

    @staticmethod
    def keys() -> Dict[str, type]:
        """Every settable key and its type."""
        out = {f.name: f.type for f in fields(AlignmentConfig)}
        out.update({f.name: f.type for f in fields(ScoreWeights)})
        out.update(warp="str", seed="int", segmentation="bool", joint_grouping="bool",
                   strict_warp="bool")
        return {k: t if isinstance(t, type) else _TYPES[t] for k, t in out.items()}

    def updated(self, values: Mapping[str, Any]) -> "RunConfig":
        """A copy with ``values`` applied; string values are converted to the key's type."""
        types = self.keys()
        align, weights, top = {}, {}, {}
        align_names = {f.name for f in fields(AlignmentConfig)}
        weight_names = {f.name for f in fields(ScoreWeights)}
        for key, value in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            value = _convert(key, value, types[key])
            if key in align_names:
                align[key] = value
            elif key in weight_names:
                weights[key] = value
            else:
                top[key] = value
        if "warp" in top and top["warp"] not in WARP_CHOICES:
            raise ConfigError(f"warp must be one of {', '.join(WARP_CHOICES)}")
        try:
            return replace(self, alignment=replace(self.alignment, **align),
                           weights=replace(self.weights, **weights), **top)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def as_dict(self) -> Dict[str, Any]:
        out = {f.name: getattr(self.alignment, f.name) for f in fields(AlignmentConfig)}
        out.update({f.name: getattr(self.weights, f.name) for f in fields(ScoreWeights)})
        out.update(warp=self.warp, seed=self.seed, segmentation=self.segmentation,
                   joint_grouping=self.joint_grouping, strict_warp=self.strict_warp)
        return out


_TYPES = {"float": float, "int": int, "str": str, "bool": bool}


def _convert(key: str, value, typ: type):
    if not isinstance(value, str):
        return typ(value)
    try:
        if typ is bool:
            return parse_bool(value)
        return typ(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def resolve(file_values: Mapping[str, str] = None, flag_values: Mapping[str, Any] = None) -> RunConfig:
    """Defaults, then the config file, then flags (``None`` flags are ignored)."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (flag_values or {}).items() if v is not None})
    return RunConfig().updated(merged)
