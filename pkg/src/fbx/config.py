"""``key = value`` experiment configuration.

Lines are ``key = value`` with ``#`` comments. Every problem found is
reported with its line number; parsing collects all of them before raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

PRESETS = ("stokes", "strip", "custom")
BOUNDARY_PRESETS = {
    "stokes": ("crest", "bump", "flat"),
    "strip": ("bumps",),
    "custom": ("zero", "bump", "flat", "linear"),
}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "custom"
    grid_x0: float = 0.0
    grid_x1: float = 1.0
    grid_y0: float = 0.0
    grid_y1: float = 1.0
    grid_h: float = 1.0 / 64
    gamma: float = 0.5
    line_y: float = 0.0
    boundary_preset: str = "zero"
    boundary_amplitude: float = 1.0
    solver_cg_tol: float = 1e-10
    solver_max_outer: int = 10_000
    solver_patch_radius: int = 3          # 0 selects exact full re-solves
    analysis_r_min: float = 0.0           # 0 selects 4h
    analysis_r_max: float = 0.0           # 0 selects the largest ladder radius that fits
    analysis_n_circle: int = 128
    analysis_sigma_threshold: float = 0.02
    analysis_weiss_defect_tol: float = 0.02
    perturb_length: float = 32.0
    perturb_epsilon: float = 2.0
    perturb_t_lo: float = 1e-3
    perturb_t_hi: float = 1e-1
    perturb_t_steps: int = 13
    output_dir: str = ""
    seed: int = 0

    @property
    def nodes(self):
        nx = int(round((self.grid_x1 - self.grid_x0) / self.grid_h)) + 1
        ny = int(round((self.grid_y1 - self.grid_y0) / self.grid_h)) + 1
        return nx, ny


_SECTIONS = ("grid_", "boundary_", "solver_", "analysis_", "perturb_", "output_")


def _key_of(name):
    return name.replace("_", ".", 1) if name.startswith(_SECTIONS) else name


# config key -> dataclass field
KEYS = {_key_of(f.name): f.name for f in fields(ExperimentConfig)}
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def preset_defaults(preset):
    """Geometry and boundary defaults of each preset, before user overrides."""
    if preset == "stokes":
        return dict(preset="stokes", grid_x0=0.0, grid_x1=1.0, grid_y0=0.0, grid_y1=1.0, grid_h=1.0 / 256,
                    gamma=0.5, line_y=0.5, boundary_preset="crest")
    if preset == "strip":
        return dict(preset="strip", grid_x0=0.0, grid_x1=32.0, grid_y0=0.0, grid_y1=3.0, grid_h=1.0 / 16,
                    gamma=0.5, line_y=0.0, boundary_preset="bumps")
    return dict(preset="custom")


def _convert(name, raw):
    kind = _TYPES[name]
    if kind == "int":
        return int(raw)
    if kind == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    return raw


def validate(cfg: ExperimentConfig):
    problems = []
    if cfg.preset not in PRESETS:
        problems.append(f"preset must be one of {', '.join(PRESETS)}")
        return problems
    if not cfg.gamma > 0:
        problems.append("gamma must be > 0")
    if not cfg.grid_h > 0:
        problems.append("grid.h must be > 0")
    elif cfg.grid_x1 <= cfg.grid_x0 or cfg.grid_y1 <= cfg.grid_y0:
        problems.append("grid extent must satisfy x1 > x0 and y1 > y0")
    else:
        nx, ny = cfg.nodes
        need = 32 if cfg.preset != "custom" else 3
        if nx < need or ny < need:
            problems.append(f"grid has {nx}x{ny} nodes; the {cfg.preset} preset needs at least {need}x{need}")
        for span in (cfg.grid_x1 - cfg.grid_x0, cfg.grid_y1 - cfg.grid_y0):
            if abs(span / cfg.grid_h - round(span / cfg.grid_h)) > 1e-9 * span / cfg.grid_h:
                problems.append("grid.h must divide the grid extent")
                break
    if cfg.boundary_preset not in BOUNDARY_PRESETS[cfg.preset]:
        problems.append(f"boundary.preset must be one of {', '.join(BOUNDARY_PRESETS[cfg.preset])} for {cfg.preset}")
    if cfg.preset == "stokes" and not cfg.grid_y0 < cfg.line_y < cfg.grid_y1:
        problems.append("line_y must lie strictly inside the grid for the stokes preset")
    if cfg.boundary_amplitude < 0:
        problems.append("boundary.amplitude must be >= 0")
    if not cfg.solver_cg_tol > 0:
        problems.append("solver.cg_tol must be > 0")
    if cfg.solver_max_outer < 1:
        problems.append("solver.max_outer must be >= 1")
    if cfg.solver_patch_radius < 0:
        problems.append("solver.patch_radius must be >= 0")
    if cfg.analysis_n_circle < 8:
        problems.append("analysis.n_circle must be >= 8")
    if not 0 < cfg.analysis_sigma_threshold < 1:
        problems.append("analysis.sigma_threshold must be in (0, 1)")
    if cfg.analysis_weiss_defect_tol < 0:
        problems.append("analysis.weiss_defect_tol must be >= 0")
    if cfg.analysis_r_min < 0 or cfg.analysis_r_max < 0:
        problems.append("analysis radii must be >= 0")
    if not 0 < cfg.perturb_t_lo <= cfg.perturb_t_hi < 1:
        problems.append("perturb t-sweep must satisfy 0 < t_lo <= t_hi < 1")
    if cfg.perturb_t_steps < 1:
        problems.append("perturb.t_steps must be >= 1")
    if not cfg.perturb_epsilon > 0:
        problems.append("perturb.epsilon must be > 0")
    if cfg.preset == "strip" and abs(cfg.grid_x1 - cfg.grid_x0 - cfg.perturb_length) > 1e-12:
        problems.append("perturb.length must equal the strip length grid.x1 - grid.x0")
    return problems


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every violation."""
    problems = []
    values = {}
    where = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (p.strip() for p in body.split("=", 1))
        if key not in KEYS:
            problems.append(f"line {lineno}: unknown key '{key}'")
            continue
        name = KEYS[key]
        try:
            values[name] = _convert(name, raw)
        except ValueError:
            problems.append(f"line {lineno}: {key} expects {_TYPES[name]}, got '{raw}'")
            continue
        where[name] = lineno
    preset = values.get("preset", "custom")
    base = preset_defaults(preset) if preset in PRESETS else {}
    merged = {**base, **values}
    if preset == "stokes":
        merged["gamma"] = 0.5
    cfg = ExperimentConfig(**merged)
    for msg in validate(cfg):
        key = msg.split(" ", 1)[0]
        name = KEYS.get(key)
        prefix = f"line {where[name]}: " if name in where else ""
        problems.append(prefix + msg)
    if problems:
        raise ConfigError(problems)
    return cfg


def serialize(cfg: ExperimentConfig) -> str:
    """Text form that :func:`parse_config` maps back to an equal config."""
    inverse = {v: k for k, v in KEYS.items()}
    out = []
    for f in fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        out.append(f"{inverse[f.name]} = {v!r}" if isinstance(v, float) else f"{inverse[f.name]} = {v}")
    return "\n".join(out) + "\n"


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    new = replace(cfg, **changes)
    problems = validate(new)
    if problems:
        raise ConfigError(problems)
    return new
