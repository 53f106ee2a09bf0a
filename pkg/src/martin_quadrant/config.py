"""Plain-text run configuration.

A config file holds ``key = value`` lines and a measure block of
``dx dy mass`` lines, e.g.::

    name = M1
    seed = 7
    q = 1 0
    radii = 20 30 40 60

    1 0 0.35
    0 1 0.35
    -1 0 0.15
    0 -1 0.15

``#`` starts a comment.  ``margin = 0`` selects the automatic margin and
``twist = auto`` the twist a(q).  Keys not listed in :data:`DEFAULTS` are rejected.
Without a measure block (or ``measure_file``) the M1 fixture is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import fsum
from pathlib import Path

from .lattice_measure import M1, JumpMeasure, MeasureError


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# key -> (default, kind); every parameter has a default
DEFAULTS = {
    "name": ("M1", "str"),
    "measure_file": ("", "str"),
    "seed": (12345, "int"),
    "threads": (1, "int"),
    "q": ((1.0, 1.0), "vec"),
    "radii": ((20.0, 30.0, 40.0, 60.0), "floats"),
    "margin": (0, "int"),  # 0: automatic, max(40, radius)
    "box": (50, "int"),
    "kind": ("Quadrant", "str"),
    "twist": ("auto", "str"),
    "target": ((10, 10), "ivec"),
    "z0": ((1, 1), "ivec"),
    "points": (((2, 3), (4, 1), (3, 3)), "points"),
    "w": ((1, 0), "ivec"),
    "delta": (0.3, "float"),
    "sigma": (0.05, "float"),
    "mc_samples": (100_000, "int"),
    "mc_horizon": (10_000, "int"),
    "mc_start": ((3, 3), "ivec"),
    "tol_bracket": (1e-7, "float"),
    "tol_gap": (0.05, "float"),
    "sweep": (64, "int"),
    "out": ("out", "str"),
}


@dataclass
class RunConfig:
    measure: JumpMeasure = M1
    params: dict = field(default_factory=lambda: {k: v for k, (v, _) in DEFAULTS.items()})
    source: str = ""

    def __getattr__(self, key):
        params = self.__dict__.get("params", {})
        if key in params:
            return params[key]
        raise AttributeError(key)

    def echo(self) -> dict:
        out = {k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()}
        out["points"] = [list(p) for p in self.params["points"]]
        out["measure"] = [[int(dx), int(dy), float(p)] for (dx, dy), p in self.measure.entries]
        return out


def _convert(key, raw, kind, lineno):
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        parts = raw.replace(",", " ").split()
        if kind == "vec":
            v = tuple(float(s) for s in parts)
        elif kind == "ivec":
            v = tuple(int(s) for s in parts)
        elif kind == "floats":
            v = tuple(float(s) for s in parts)
            return v if v else DEFAULTS[key][0]
        elif kind == "points":
            pts = [tuple(int(s) for s in chunk.replace(",", " ").split())
                   for chunk in raw.split(";") if chunk.strip()]
            if not pts:
                return DEFAULTS[key][0]
            if any(len(p) != 2 for p in pts):
                raise ValueError("points are 'x y' pairs separated by ';'")
            return tuple(pts)
        else:
            raise AssertionError(kind)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
    if len(v) != 2:
        raise ConfigError(f"{key!r} needs two components", lineno)
    return v


def _parse_measure_lines(lines):
    entries, first_line = {}, {}
    for lineno, text in lines:
        parts = text.split()
        if len(parts) != 3:
            raise ConfigError(f"measure line must be 'dx dy mass': {text!r}", lineno)
        try:
            dx, dy, p = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ConfigError(f"measure line must be 'dx dy mass': {text!r}", lineno) from None
        if (dx, dy) in entries:
            raise ConfigError(f"duplicate offset ({dx}, {dy}), first given on line "
                              f"{first_line[(dx, dy)]}", lineno)
        entries[(dx, dy)] = p
        first_line[(dx, dy)] = lineno
    total = fsum(entries.values())
    if abs(total - 1.0) > 1e-12:
        raise ConfigError(f"measure masses sum to {total!r}, expected 1", lines[-1][0])
    return entries


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    """Parse config text; defaults are filled in for absent keys."""
    cfg = RunConfig(source=text)
    seen = {}
    measure_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = (s.strip() for s in line.partition("="))
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key!r}", lineno)
            if key in seen:
                raise ConfigError(f"key {key!r} repeated (first on line {seen[key]})", lineno)
            seen[key] = lineno
            cfg.params[key] = _convert(key, value, DEFAULTS[key][1], lineno)
        else:
            measure_lines.append((lineno, line))
    if measure_lines and cfg.params["measure_file"]:
        raise ConfigError("give either a measure block or measure_file, not both",
                          seen["measure_file"])
    if cfg.params["measure_file"]:
        path = Path(cfg.params["measure_file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            mtext = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read measure file: {exc}", seen["measure_file"]) from None
        measure_lines = [(i, s.split("#", 1)[0].strip())
                         for i, s in enumerate(mtext.splitlines(), start=1)]
        measure_lines = [(i, s) for i, s in measure_lines if s]
    if measure_lines:
        entries = _parse_measure_lines(measure_lines)
        try:
            cfg.measure = JumpMeasure(entries, name=cfg.params["name"])
        except MeasureError as exc:
            raise ConfigError(str(exc), measure_lines[0][0]) from None
    elif "name" not in seen:
        cfg.params["name"] = M1.name
    if cfg.params["threads"] < 0:
        raise ConfigError("threads must be >= 0", seen.get("threads"))
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)
