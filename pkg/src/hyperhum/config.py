"""Run configuration files.

Flat ``key = value`` sections read with :mod:`configparser`; values are
Python literals (numbers, strings, nested lists). Bare words are taken as
strings. Example::

    [system]
    form = "u"
    k = 1
    m = 1
    speeds = [1.0, 1.0]
    B = [[1.0]]

    [grid]
    nx = 400
    cfl = 1.0

    [hum]
    eps = 1e-06

    [run]
    T = 2.4
    mode = "null"
    w0 = ["zero", "bump"]

A speed entry is a number or a list of samples on ``[0, 1]``. ``coupling``
is an ``n x n`` nested list (optionally with sample lists as entries, all of
the same length).
"""

from __future__ import annotations

import ast
import configparser
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .hum import CG_MAXIT_DEFAULT, CG_TOL_DEFAULT, EPS_DEFAULT
from .model import CouplingField, HyperbolicSystem, SpeedProfile, validate

KEYS = {
    "system": {"form", "n", "k", "m", "speeds", "B", "coupling"},
    "grid": {"nx", "cfl"},
    "hum": {"eps", "cg_tol", "cg_maxit", "eps_relative", "experimental"},
    "run": {"T", "mode", "out", "seed", "w0", "wT", "store_trajectory", "command", "system_path"},
}


class ConfigError(ValueError):
    """Parse or validation failure; ``errors`` is a list of ``(line, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors))


@dataclass
class RunConfig:
    command: str | None = None
    system_path: str | None = None
    nx: int = 400
    cfl: float = 1.0
    T: float | None = None
    eps: float = EPS_DEFAULT
    cg_tol: float = CG_TOL_DEFAULT
    cg_maxit: int = CG_MAXIT_DEFAULT
    eps_relative: bool = True
    experimental: bool = False
    mode: str = "null"
    out: str = "."
    seed: int = 0
    w0: list = field(default_factory=lambda: ["zero", "bump"])
    wT: list | None = None
    store_trajectory: bool = False


def _locate(text):
    """Map ``(section, key)`` to the 1-based line number where it is set."""
    where, section = {}, None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]$", line)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = ln
            continue
        m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*)\s*[=:]", raw)
        if m and section is not None:
            where[(section, m.group(1))] = ln
    return where


def _literal(raw):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw.strip()


def _build_system(vals, line, errors):
    k, m, n = vals.get("k"), vals.get("m"), vals.get("n")
    speeds = vals.get("speeds")
    for key in ("k", "m", "speeds", "B"):
        if key not in vals:
            errors.append((line("system", None), f"[system] missing key {key!r}"))
    if errors:
        return None
    if not (isinstance(k, int) and isinstance(m, int)):
        errors.append((line("system", "k"), "k and m must be integers"))
        return None
    if n is None:
        n = len(speeds)
    if k + m != n:
        errors.append((line("system", "k"), f"dimension mismatch: k + m != n (k={k}, m={m}, n={n})"))
        return None
    if len(speeds) != n:
        errors.append((line("system", "speeds"), f"expected {n} speed entries, got {len(speeds)}"))
        return None
    try:
        sp = SpeedProfile(tuple(float(v) if np.ndim(v) == 0 else np.asarray(v, float) for v in speeds), k)
        form = str(vals.get("form", "u"))
        if "coupling" in vals:
            cv = np.asarray(vals["coupling"], dtype=float)
            if cv.shape[:2] != (n, n):
                errors.append((line("system", "coupling"),
                               f"dimension mismatch: coupling is {cv.shape[:2]}, expected ({n}, {n})"))
                return None
            cf = CouplingField(form, cv)
        else:
            cf = CouplingField.zero(n, form)
        B = np.asarray(vals["B"], dtype=float)
        if B.ndim == 1:
            B = B.reshape(k, m) if B.size == k * m else B
        if B.shape != (k, m):
            errors.append((line("system", "B"), f"dimension mismatch: B is {B.shape}, expected ({k}, {m})"))
            return None
        system = HyperbolicSystem(sp, cf, B)
    except (ValueError, TypeError) as exc:
        errors.append((line("system", None), str(exc)))
        return None
    for msg in validate(system):
        key = "coupling" if "structural zero" in msg or "coupling" in msg else (
            "speeds" if "speed" in msg or "ordering" in msg or "Lipschitz" in msg else "B")
        errors.append((line("system", key), msg))
    return None if errors else system


_CHECKS = {
    "nx": (lambda v: isinstance(v, int) and v >= 8, "nx must be an integer >= 8"),
    "cfl": (lambda v: isinstance(v, (int, float)) and 0 < v <= 1, "cfl must lie in (0, 1]"),
    "T": (lambda v: v is None or (isinstance(v, (int, float)) and v > 0), "T must be positive"),
    "eps": (lambda v: isinstance(v, (int, float)) and v >= 0, "eps must be >= 0"),
    "cg_tol": (lambda v: isinstance(v, (int, float)) and v > 0, "cg_tol must be positive"),
    "cg_maxit": (lambda v: isinstance(v, int) and v >= 1, "cg_maxit must be an integer >= 1"),
    "mode": (lambda v: v in ("null", "exact"), "mode must be null or exact"),
    "seed": (lambda v: isinstance(v, int) and v >= 0, "seed must be a non-negative integer"),
}

_SECTION_OF = {"nx": "grid", "cfl": "grid", "eps": "hum", "cg_tol": "hum", "cg_maxit": "hum",
               "eps_relative": "hum", "experimental": "hum"}


def parse_config(text) -> tuple[RunConfig, HyperbolicSystem]:
    """Parse config text into a validated :class:`RunConfig` and system.

    Raises :class:`ConfigError` listing every problem found, each with the
    line it refers to.
    """
    where = _locate(text)

    def line(section, key):
        return where.get((section, key), where.get((section, None), 0))

    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([(getattr(exc, "lineno", 0) or 0, str(exc).splitlines()[0])]) from None

    errors = []
    data = {}
    for section in cp.sections():
        if section not in KEYS:
            errors.append((line(section, None), f"unknown section [{section}]"))
            continue
        data[section] = {}
        for key, raw in cp.items(section):
            if key not in KEYS[section]:
                errors.append((line(section, key), f"unknown key {key!r} in [{section}]"))
                continue
            data[section][key] = _literal(raw)
    if "system" not in data:
        errors.append((0, "missing [system] section"))
    if errors:
        raise ConfigError(errors)

    system = _build_system(data["system"], line, errors)
    cfg = RunConfig()
    for section in ("grid", "hum", "run"):
        for key, val in data.get(section, {}).items():
            if key in ("cfl", "eps", "cg_tol", "T") and isinstance(val, int):
                val = float(val)
            ok = _CHECKS.get(key)
            if ok and not ok[0](val):
                errors.append((line(section, key), f"{ok[1]}, got {val!r}"))
                continue
            setattr(cfg, key, val)
    if errors:
        raise ConfigError(errors)
    return cfg, system


def load_config(path) -> tuple[RunConfig, HyperbolicSystem]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([(0, f"config file not found: {path}")])
    cfg, system = parse_config(path.read_text())
    cfg.system_path = str(path)
    return cfg, system


def _lit(v):
    if isinstance(v, np.ndarray):
        return _lit(v.tolist())
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_lit(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return repr(v)


def serialize(config: RunConfig, system: HyperbolicSystem) -> str:
    """Inverse of :func:`parse_config`; floats are written with ``repr``."""
    speeds = [float(v) if np.ndim(v) == 0 else np.asarray(v, float) for v in system.speeds.values]
    lines = [
        "[system]",
        f"form = {system.form!r}",
        f"n = {system.n}",
        f"k = {system.k}",
        f"m = {system.m}",
        f"speeds = {_lit(speeds)}",
        f"B = {_lit(np.asarray(system.B, float))}",
    ]
    if not system.coupling.is_zero:
        lines.append(f"coupling = {_lit(np.asarray(system.coupling.values, float))}")
    sections = {"grid": [], "hum": [], "run": []}
    for f in fields(RunConfig):
        val = getattr(config, f.name)
        if val is None:
            continue
        sections[_SECTION_OF.get(f.name, "run")].append(f"{f.name} = {_lit(val)}")
    for name, body in sections.items():
        lines += ["", f"[{name}]"] + body
    return "\n".join(lines) + "\n"
