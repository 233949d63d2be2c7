"""TOML run configuration with a fixed schema and line-aware errors."""

from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .coeffs import FAMILY_KINDS, CoefficientField, make_family
from .errors import ConfigError

NUM = (int, float)

# section -> key -> (accepted types, default)
SCHEMA: dict[str, dict[str, tuple[tuple[type, ...], object]]] = {
    "run": {
        "seed": ((int,), 0),
        "dt": (NUM, 0.01),
    },
    "simulate": {
        "window": ((list,), [-100, 100]),
        "t1": (NUM, 10.0),
        "initial": ((str,), "step"),
        "boundary": ((str,), "front"),
        "stride": ((int,), 10),
    },
    "entire": {
        "tol": (NUM, 1e-6),
        "n_max": ((int,), 200),
        "horizon": ((list,), [0.0, 50.0]),
    },
    "floquet": {
        "mus": ((list,), [0.25, 0.5, 1.0, 2.0]),
    },
    "speed": {
        "bracket": ((list,), [0.05, 3.0]),
        "n_grid": ((int,), 10000),
        "tol": (NUM, 1e-8),
    },
    "wave_periodic": {
        "c_offset": (NUM, 0.5),
        "x_lo": (NUM, -40.0),
        "x_hi": (NUM, 80.0),
        "pad": ((int,), 40),
        "n_max": ((int,), 80),
        "tol": (NUM, 1e-6),
        "periods": ((int,), 5),
    },
    "wave_timehet": {
        "gamma_offset": (NUM, 0.5),
        "stats_horizon": (NUM, 200.0),
        "n_max": ((int,), 80),
        "tol": (NUM, 1e-6),
        "t_out": (NUM, 50.0),
        "out_every": (NUM, 0.5),
    },
    "partmetric": {
        "pairs": ((int,), 100),
        "sites": ((int,), 201),
        "t1": (NUM, 5.0),
        "low": (NUM, 0.1),
        "high": (NUM, 2.0),
        "sigma": (NUM, 0.5),
        "tau": (NUM, 1.0),
    },
    "stability": {
        "t1": (NUM, 40.0),
        "burn_in": (NUM, 5.0),
        "low": (NUM, 0.8),
        "high": (NUM, 1.25),
        "target": (NUM, 0.01),
        "slack": (NUM, 1e-6),
    },
}

TOLERANCE_KEYS = {("entire", "tol"), ("speed", "tol"), ("wave_periodic", "tol"), ("wave_timehet", "tol")}


@dataclass
class Config:
    path: Path
    field_kind: str
    field_params: dict
    sections: dict[str, dict]

    def field(self) -> CoefficientField:
        return make_family(self.field_kind, self.field_params)

    def section(self, name: str) -> dict:
        return self.sections[name]

    @property
    def seed(self) -> int:
        return int(self.sections["run"]["seed"])

    @property
    def dt(self) -> float:
        return float(self.sections["run"]["dt"])

    def snapshot(self) -> dict:
        return {"field": {"kind": self.field_kind, **self.field_params}, **copy.deepcopy(self.sections)}

    def scaled(self, factor: float) -> "Config":
        """Copy with every tolerance multiplied by ``factor``."""
        if factor <= 0:
            raise ConfigError("tolerance scale must be positive")
        sections = copy.deepcopy(self.sections)
        for sec, key in TOLERANCE_KEYS:
            sections[sec][key] = sections[sec][key] * factor
        return Config(self.path, self.field_kind, dict(self.field_params), sections)


def _line_of(text: str, section: str | None, key: str | None) -> int | None:
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[\s*([^\]]+?)\s*\]$", line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return n
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*=", line):
            return n
    return None


def _where(text: str, section: str | None, key: str | None = None) -> str:
    n = _line_of(text, section, key)
    name = f"{section}.{key}" if key else f"[{section}]"
    return f"{name} (line {n})" if n else name


def parse_config(text: str, path: Path | str = "<string>") -> Config:
    path = Path(path)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML syntax error: {exc}") from exc
    if "field" not in data or not isinstance(data["field"], dict):
        raise ConfigError(f"{path}: missing [field] section")
    fld = dict(data.pop("field"))
    kind = fld.pop("kind", None)
    if kind not in FAMILY_KINDS:
        raise ConfigError(f"{path}: {_where(text, 'field', 'kind')}: expected one of {FAMILY_KINDS}, got {kind!r}")
    sections: dict[str, dict] = {}
    for name, spec in SCHEMA.items():
        given = data.pop(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{path}: {_where(text, None, name)}: expected a table")
        out = {}
        for key, value in given.items():
            if key not in spec:
                raise ConfigError(f"{path}: {_where(text, name, key)}: unknown key")
            types, _ = spec[key]
            if isinstance(value, bool) or not isinstance(value, types):
                expected = "/".join(t.__name__ for t in types)
                raise ConfigError(f"{path}: {_where(text, name, key)}: expected {expected}, "
                                  f"got {type(value).__name__}")
            out[key] = value
        for key, (_, default) in spec.items():
            out.setdefault(key, copy.deepcopy(default))
        sections[name] = out
    if data:
        extra = sorted(data)[0]
        raise ConfigError(f"{path}: {_where(text, extra)}: unknown section")
    try:
        make_family(kind, fld)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: [field]: {exc}") from exc
    return Config(path, kind, fld, sections)


def load_config(path: Path | str) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text, path)
