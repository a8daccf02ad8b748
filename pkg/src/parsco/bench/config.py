"""Flat key-value experiment configs.

Grammar (one statement per line, ``#`` starts a comment):

    problem = max-of-linear
    d = 5, 10, 20
    eps = 0.2, 0.1, 0.05, 0.025
    seeds = 50              # count, or "0..4" range, or "1, 3, 9" list
    xstar_norm = 0.5        # optional

    [method baseline]
    T = auto                # (L R / eps)^2, or an integer

    [method full]
    outer = accel           # prox | accel; omit to follow the CLI flag

    [method exactball]

Keys before the first section are global; each ``[method NAME]``
section configures one run method.  Unknown keys, unknown methods,
duplicates, and malformed values are rejected with the offending line
number so configs stay diff-reviewable experiment provenance.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .problems import PROBLEM_KINDS

__all__ = ["ConfigError", "MethodSpec", "BenchConfig", "parse_config",
           "load_config"]

_KNOWN_METHODS = ("baseline", "exactball", "full")
_GLOBAL_KEYS = ("problem", "d", "eps", "seeds", "xstar_norm")
_METHOD_KEYS = {"baseline": ("T",), "exactball": (), "full": ("outer",)}

_SECTION_RE = re.compile(r"^\[method\s+([A-Za-z][\w-]*)\]$")
_PAIR_RE = re.compile(r"^([A-Za-z][\w-]*)\s*=\s*(\S.*?)\s*$")


class ConfigError(ValueError):
    """Malformed config; ``line`` is 1-based."""

    def __init__(self, source: str, line: int, message: str):
        self.source = source
        self.line = line
        super().__init__(f"{source}:{line}: {message}")


@dataclass(frozen=True)
class MethodSpec:
    name: str
    options: dict = field(default_factory=dict)
    line: int = 0


@dataclass(frozen=True)
class BenchConfig:
    problem: str
    dims: tuple[int, ...]
    eps_values: tuple[float, ...]
    seeds: tuple[int, ...]
    methods: tuple[MethodSpec, ...]
    xstar_norm: float = 0.5
    source_hash: str = ""

    def n_cells(self) -> int:
        return (len(self.methods) * len(self.dims) * len(self.eps_values)
                * len(self.seeds))


def _parse_int(raw: str, source: str, line: int, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(source, line,
                          f"{key} expects an integer, got {raw!r}") from None


def _parse_float(raw: str, source: str, line: int, key: str) -> float:
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(source, line,
                          f"{key} expects a number, got {raw!r}") from None
    if not val > 0:
        raise ConfigError(source, line, f"{key} must be positive, got {raw}")
    return val


def _parse_seeds(raw: str, source: str, line: int) -> tuple[int, ...]:
    if ".." in raw:
        lo_raw, _, hi_raw = raw.partition("..")
        lo = _parse_int(lo_raw.strip(), source, line, "seeds")
        hi = _parse_int(hi_raw.strip(), source, line, "seeds")
        if hi < lo:
            raise ConfigError(source, line,
                              f"seeds range is empty: {raw!r}")
        return tuple(range(lo, hi + 1))
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) == 1:
        count = _parse_int(parts[0], source, line, "seeds")
        if count < 1:
            raise ConfigError(source, line,
                              f"seed count must be >= 1, got {count}")
        return tuple(range(count))
    return tuple(_parse_int(p, source, line, "seeds") for p in parts)


def _global_value(key: str, value: str, source: str, lineno: int):
    """Parse and validate one global key at its own line."""
    if key == "problem":
        if value not in PROBLEM_KINDS:
            raise ConfigError(source, lineno,
                              f"unknown problem {value!r}; choose from "
                              f"{', '.join(PROBLEM_KINDS)}")
        return value
    if key == "d":
        dims = tuple(_parse_int(p.strip(), source, lineno, "d")
                     for p in value.split(","))
        if any(d < 1 for d in dims):
            raise ConfigError(source, lineno, "d values must be >= 1")
        return dims
    if key == "eps":
        return tuple(_parse_float(p.strip(), source, lineno, "eps")
                     for p in value.split(","))
    if key == "seeds":
        return _parse_seeds(value, source, lineno)
    return _parse_float(value, source, lineno, "xstar_norm")


def _method_value(method: str, key: str, value: str, source: str, lineno: int):
    if method == "baseline" and key == "T":
        return value if value == "auto" else _parse_int(value, source,
                                                        lineno, "T")
    if method == "full" and key == "outer":
        if value not in ("prox", "accel"):
            raise ConfigError(source, lineno,
                              f"outer must be prox or accel, got {value!r}")
        return value
    raise AssertionError(f"unhandled method key {method}.{key}")


def parse_config(text: str, source: str = "<config>") -> BenchConfig:
    globals_: dict = {}
    global_lines: dict = {}
    methods: list[MethodSpec] = []
    current: dict | None = None
    current_name = ""

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        sec = _SECTION_RE.match(line)
        if sec:
            name = sec.group(1)
            if name not in _KNOWN_METHODS:
                raise ConfigError(source, lineno,
                                  f"unknown method {name!r}; choose from "
                                  f"{', '.join(_KNOWN_METHODS)}")
            if any(m.name == name for m in methods):
                raise ConfigError(source, lineno,
                                  f"method {name!r} configured twice")
            current = {}
            current_name = name
            methods.append(MethodSpec(name=name, options=current, line=lineno))
            continue
        if line.startswith("["):
            raise ConfigError(source, lineno,
                              f"bad section header {line!r}; expected "
                              "[method NAME]")
        pair = _PAIR_RE.match(line)
        if not pair:
            raise ConfigError(source, lineno,
                              f"expected 'key = value', got {line!r}")
        key, value = pair.group(1), pair.group(2)
        if current is None:
            if key not in _GLOBAL_KEYS:
                raise ConfigError(source, lineno,
                                  f"unknown key {key!r}; global keys are "
                                  f"{', '.join(_GLOBAL_KEYS)}")
            if key in globals_:
                raise ConfigError(source, lineno,
                                  f"duplicate key {key!r} (first set on line "
                                  f"{global_lines[key]})")
            globals_[key] = _global_value(key, value, source, lineno)
            global_lines[key] = lineno
        else:
            allowed = _METHOD_KEYS[current_name]
            if key not in allowed:
                hint = (f"allowed keys: {', '.join(allowed)}" if allowed
                        else "this method takes no keys")
                raise ConfigError(source, lineno,
                                  f"unknown key {key!r} for method "
                                  f"{current_name!r}; {hint}")
            if key in current:
                raise ConfigError(source, lineno, f"duplicate key {key!r}")
            current[key] = _method_value(current_name, key, value, source,
                                         lineno)

    last = max(len(text.splitlines()), 1)
    for required in ("problem", "d", "eps", "seeds"):
        if required not in globals_:
            raise ConfigError(source, last,
                              f"missing required key {required!r}")
    if not methods:
        raise ConfigError(source, last, "no [method ...] sections configured")

    digest = hashlib.blake2s(text.encode()).hexdigest()[:12]
    return BenchConfig(problem=globals_["problem"], dims=globals_["d"],
                       eps_values=globals_["eps"], seeds=globals_["seeds"],
                       methods=tuple(methods),
                       xstar_norm=globals_.get("xstar_norm", 0.5),
                       source_hash=digest)


def load_config(path) -> BenchConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))
