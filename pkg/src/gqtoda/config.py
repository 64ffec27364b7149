"""Flat ``key = value`` run configuration with dotted sections.

Example::

    # two-soliton collision
    preset = fig2
    integrator.dt = 1e-3
    integrator.t_end = 5
    mode.1.eta = 0.5

Modes are ``mode.<i>.alpha``, ``mode.<i>.beta_sign`` (default -1),
``mode.<i>.eta`` (default 0) and optionally ``mode.<i>.beta``, which
overrides the dispersion relation (for deliberately broken specs).
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError
from .hirota import FIGURE_PRESETS, SolitonMode, SolitonSpec, random_spec
from .qshift import ShiftParams


@dataclass
class ModeConfig:
    alpha: float
    beta_sign: int = -1
    eta: float = 0.0
    beta: float | None = None


@dataclass
class RunConfig:
    epsilon: float | None = None
    e_epsilon: float | None = None
    preset: str | None = None
    modes: list = field(default_factory=list)
    random_modes: int = 0
    window_y_min: float = -3.0
    window_y_max: float = 3.0
    window_ny: int = 120
    window_t_min: float = -5.0
    window_t_max: float = 5.0
    window_nt: int = 101
    grid_y0: float | None = None
    grid_count: int = 200
    integrator_dt: float = 1e-3
    integrator_t_start: float = 0.0
    integrator_t_end: float = 5.0
    integrator_boundary: str = "zero_force"
    integrator_output_every: float = 0.1
    output_dir: str | None = None
    output_format: str = "csv"
    seed: int = 0
    tol: float | None = None
    hierarchy_max_power: int = 6
    hierarchy_max_band: int = 12
    hierarchy_samples: int = 100
    hierarchy_bumps: int = 3

    # -- derived objects ----------------------------------------------------
    def shift_params(self) -> ShiftParams:
        if self.epsilon is not None:
            return ShiftParams(self.epsilon)
        if self.e_epsilon is not None:
            return ShiftParams.from_e_epsilon(self.e_epsilon)
        raise ConfigError("one of epsilon / e_epsilon is required")

    def soliton_spec(self) -> SolitonSpec:
        p = self.shift_params()
        if self.random_modes:
            return random_spec(p, self.random_modes, np.random.default_rng(self.seed))
        if not self.modes:
            raise ConfigError("no soliton modes configured (set mode.1.alpha or preset)")
        modes = []
        explicit = False
        for m in self.modes:
            if m.beta is not None:
                explicit = True
                modes.append(SolitonMode(m.alpha, m.beta, m.eta))
            else:
                modes.append(SolitonMode.from_dispersion(m.alpha, p, m.beta_sign, m.eta))
        return SolitonSpec(p, tuple(modes), validate=not explicit)

    def as_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["modes"] = [asdict(m) for m in self.modes]
        return d


_SCALARS = {
    "epsilon": ("epsilon", float),
    "e_epsilon": ("e_epsilon", float),
    "preset": ("preset", str),
    "random.modes": ("random_modes", int),
    "window.y_min": ("window_y_min", float),
    "window.y_max": ("window_y_max", float),
    "window.ny": ("window_ny", int),
    "window.t_min": ("window_t_min", float),
    "window.t_max": ("window_t_max", float),
    "window.nt": ("window_nt", int),
    "grid.y0": ("grid_y0", float),
    "grid.count": ("grid_count", int),
    "integrator.dt": ("integrator_dt", float),
    "integrator.t_start": ("integrator_t_start", float),
    "integrator.t_end": ("integrator_t_end", float),
    "integrator.boundary": ("integrator_boundary", str),
    "integrator.output_every": ("integrator_output_every", float),
    "output.dir": ("output_dir", str),
    "output.format": ("output_format", str),
    "seed": ("seed", int),
    "tol": ("tol", float),
    "hierarchy.max_power": ("hierarchy_max_power", int),
    "hierarchy.max_band": ("hierarchy_max_band", int),
    "hierarchy.samples": ("hierarchy_samples", int),
    "hierarchy.bumps": ("hierarchy_bumps", int),
}
_MODE_KEY = re.compile(r"^mode\.(\d+)\.(alpha|beta_sign|eta|beta)$")
_MODE_TYPES = {"alpha": float, "beta_sign": int, "eta": float, "beta": float}


def parse_text(text: str, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """Split ``key = value`` lines; returns key -> (raw value, line number)."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {out[key][1]})")
        out[key] = (value, lineno)
    return out


def _convert(kind, raw: str, key: str, where: str):
    try:
        if kind is int:
            return int(raw, 0)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{where}: field {key!r}: cannot parse {raw!r} as {kind.__name__}") from None


def build_config(entries: dict[str, tuple[str, int]], source: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    modes: dict[int, dict[str, Any]] = {}
    for key, (raw, lineno) in entries.items():
        where = f"{source}:{lineno}"
        if key in _SCALARS:
            attr, kind = _SCALARS[key]
            setattr(cfg, attr, _convert(kind, raw, key, where))
            continue
        m = _MODE_KEY.match(key)
        if m:
            idx, name = int(m.group(1)), m.group(2)
            modes.setdefault(idx, {})[name] = _convert(_MODE_TYPES[name], raw, key, where)
            continue
        raise ConfigError(f"{where}: unknown field {key!r}")

    if cfg.epsilon is not None and cfg.e_epsilon is not None:
        raise ConfigError(f"{source}: give exactly one of epsilon / e_epsilon")
    if cfg.preset is not None:
        if cfg.preset not in FIGURE_PRESETS:
            raise ConfigError(f"{source}: unknown preset {cfg.preset!r} (choose from {sorted(FIGURE_PRESETS)})")
        q, preset_modes = FIGURE_PRESETS[cfg.preset]
        if cfg.epsilon is None and cfg.e_epsilon is None:
            cfg.e_epsilon = q
        for i, (alpha, sign) in enumerate(preset_modes, 1):
            base = {"alpha": alpha, "beta_sign": sign}
            base.update(modes.get(i, {}))
            modes[i] = base
    if modes:
        idxs = sorted(modes)
        if idxs != list(range(1, len(idxs) + 1)):
            raise ConfigError(f"{source}: modes must be numbered 1..N without gaps, got {idxs}")
        if len(idxs) > 3:
            raise ConfigError(f"{source}: at most 3 modes are supported, got {len(idxs)}")
        for i in idxs:
            if "alpha" not in modes[i]:
                raise ConfigError(f"{source}: mode.{i}.alpha is required")
            if modes[i].get("beta_sign", -1) not in (1, -1):
                raise ConfigError(f"{source}: mode.{i}.beta_sign must be +1 or -1")
            cfg.modes.append(ModeConfig(**modes[i]))
    if not 0 <= cfg.random_modes <= 3:
        raise ConfigError(f"{source}: random.modes must be between 0 and 3")
    if cfg.output_format not in ("csv", "json"):
        raise ConfigError(f"{source}: output.format must be csv or json")
    if cfg.integrator_boundary not in ("zero_force", "analytic_clamp"):
        raise ConfigError(f"{source}: integrator.boundary must be zero_force or analytic_clamp")
    if cfg.epsilon is not None and not cfg.epsilon > 0:
        raise ConfigError(f"{source}: epsilon must be positive")
    if cfg.e_epsilon is not None and not cfg.e_epsilon > 1:
        raise ConfigError(f"{source}: e_epsilon must exceed 1")
    return cfg


def load_config(path: str | None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Read ``path`` (if any) and apply ``overrides`` (flag values, same keys)."""
    entries: dict[str, tuple[str, int]] = {}
    source = "<flags>"
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
        entries = parse_text(text, path)
        source = path
    for key, value in (overrides or {}).items():
        entries[key] = (value, 0)
    return build_config(entries, source)
