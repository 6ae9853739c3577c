"""Flat ``key = value`` configuration files shared by the cost model and runtime.

One numeric entry per line, ``#`` starts a comment, keys must match a
CostModel field name or one of the runtime feature flags; anything else is
rejected.
"""

from dataclasses import dataclass

from .costmodel import COST_FIELD_NAMES, CostModel
from .errors import ConfigError

FLAG_NAMES = ("use_wand_barrier", "use_ipi_get")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RuntimeFlags:
    """Runtime feature switches mirroring the compile-time options."""

    use_wand_barrier: bool = False
    use_ipi_get: bool = False


def parse_kv_text(text: str) -> dict:
    """Parse key = value lines into a raw {key: str} dict, validating keys."""
    known = set(COST_FIELD_NAMES) | set(FLAG_NAMES)
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _parse_bool(key, value):
    v = value.lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ConfigError(f"flag {key!r} expects a boolean, got {value!r}")


def config_from_text(text: str) -> tuple[CostModel, RuntimeFlags]:
    raw = parse_kv_text(text)
    cost_kw = {}
    flag_kw = {}
    for key, value in raw.items():
        if key in FLAG_NAMES:
            flag_kw[key] = _parse_bool(key, value)
        else:
            try:
                cost_kw[key] = float(value)
            except ValueError:
                raise ConfigError(f"key {key!r} expects a number, got {value!r}") from None
    return CostModel(**cost_kw), RuntimeFlags(**flag_kw)


def load_config(path) -> tuple[CostModel, RuntimeFlags]:
    """Read a calibration/flags file. Returns (CostModel, RuntimeFlags)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return config_from_text(text)
