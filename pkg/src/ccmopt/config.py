"""Run configuration: TOML ingestion, validation, and runtime assembly.

A run is described by one TOML file with optional sections; every omitted
field falls back to the reference defaults listed per section below.  All
quantities use the mm / N / MPa unit system.  The desired output path is a
separate CSV of waypoints referenced from the config; it is densified to
the descriptor sampling density when the runtime objects are built.

The square 100 x 100 mm domain, the horizontal input force at the middle of
the left edge, and the probe at the middle of the right edge are assumption
defaults, not sourced values; override them per run when they do not apply.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np
import tomlkit

from .contact import ContactParams, default_contact_params
from .design import DesignBounds, DesignVector, initial_design
from .errors import ConfigError, DescriptorError, ParameterError
from .fem import Material
from .fsd import FSDWeights, close_path, fourier_descriptors
from .hexmesh import HexMesh, generate_hex_mesh
from .optimizer import HillClimberConfig, Problem, default_step_scale

OUTPUT_DIR_ENV = "CCMOPT_OUTPUT_DIR"


@dataclass(frozen=True)
class DomainConfig:
    lx: float = 100.0
    ly: float = 100.0


@dataclass(frozen=True)
class MeshConfig:
    nx: int = 30
    ny: int = 30


@dataclass(frozen=True)
class MaskGridConfig:
    """Mask layout and radius limits; f_fixed pins the circle radius factor
    (set it to false in the file to let the factor evolve per mask)."""

    nx: int = 8
    ny: int = 8
    r_min: float = 0.10
    r_max: float = 6.0
    f_fixed: float | None = 0.60


@dataclass(frozen=True)
class MaterialConfig:
    e: float = 2.1
    nu: float = 0.33


@dataclass(frozen=True)
class AnalysisConfig:
    """Incremental solve controls.  The four contact knobs default to
    mesh-derived values when omitted (None)."""

    n_steps: int = 20
    tol_r: float = 1e-8
    newton_max_iter: int = 25
    max_halvings: int = 4
    eps_n: float | None = None
    g_tol: float | None = None
    margin: float | None = None
    band: float | None = None
    max_uzawa: int = 15


@dataclass(frozen=True)
class ObjectiveConfig:
    w_a: float = 500.0
    w_b: float = 500.0
    w_l: float = 1.0
    w_theta: float = 0.1
    n_harmonics: int = 10
    samples: int = 1024


@dataclass(frozen=True)
class ConstraintConfig:
    v_star: float = 0.30
    lambda_v: float = 20.0
    literal_volume_switch: bool = False


@dataclass(frozen=True)
class ClimberConfig:
    pr: float = 0.08
    max_iter: int = 2000
    delta_f: float = 0.01
    stagnation_window: int = 10
    f_min: float = -1000.0
    f_max: float = 1000.0
    seed: int = 0
    initial_force: float = 5.0
    checkpoint_every: int = 50


@dataclass(frozen=True)
class BoundaryConfig:
    """Load introduction and path probe.  None derives the mid-edge points
    from the domain: input at (0, ly/2), output at (lx, ly/2).  The four
    corner element patches are always fully fixed."""

    input_point: tuple[float, float] | None = None
    input_dir: tuple[float, float] = (1.0, 0.0)
    output_point: tuple[float, float] | None = None


@dataclass(frozen=True)
class PathsConfig:
    desired: str = ""
    output_dir: str = ""


@dataclass(frozen=True)
class RunConfig:
    domain: DomainConfig
    mesh: MeshConfig
    masks: MaskGridConfig
    material: MaterialConfig
    analysis: AnalysisConfig
    objective: ObjectiveConfig
    constraint: ConstraintConfig
    climber: ClimberConfig
    bc: BoundaryConfig
    paths: PathsConfig
    smoothing_steps: int = 10
    chord_tol: float = 0.05
    penalty: float = 1.0e6


_SECTIONS = {
    "domain": DomainConfig,
    "mesh": MeshConfig,
    "masks": MaskGridConfig,
    "material": MaterialConfig,
    "analysis": AnalysisConfig,
    "objective": ObjectiveConfig,
    "constraint": ConstraintConfig,
    "climber": ClimberConfig,
    "bc": BoundaryConfig,
    "paths": PathsConfig,
}
_TOP_LEVEL = ("smoothing_steps", "chord_tol", "penalty")


def _coerce(section: str, key: str, value, target_type):
    """TOML value -> dataclass field value, with a field-level error."""
    where = f"[{section}] {key}"
    if target_type == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if target_type == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return int(value)
    if target_type == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false, got {value!r}")
        return value
    if target_type == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if target_type == "opt_float":
        if value is False:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number or false, got {value!r}")
        return float(value)
    if target_type == "point":
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
        ):
            raise ConfigError(f"{where} must be a pair of numbers, got {value!r}")
        return (float(value[0]), float(value[1]))
    raise AssertionError(target_type)


_FIELD_TYPES = {
    ("domain", "lx"): "float",
    ("domain", "ly"): "float",
    ("mesh", "nx"): "int",
    ("mesh", "ny"): "int",
    ("masks", "nx"): "int",
    ("masks", "ny"): "int",
    ("masks", "r_min"): "float",
    ("masks", "r_max"): "float",
    ("masks", "f_fixed"): "opt_float",
    ("material", "e"): "float",
    ("material", "nu"): "float",
    ("analysis", "n_steps"): "int",
    ("analysis", "tol_r"): "float",
    ("analysis", "newton_max_iter"): "int",
    ("analysis", "max_halvings"): "int",
    ("analysis", "eps_n"): "opt_float",
    ("analysis", "g_tol"): "opt_float",
    ("analysis", "margin"): "opt_float",
    ("analysis", "band"): "opt_float",
    ("analysis", "max_uzawa"): "int",
    ("objective", "w_a"): "float",
    ("objective", "w_b"): "float",
    ("objective", "w_l"): "float",
    ("objective", "w_theta"): "float",
    ("objective", "n_harmonics"): "int",
    ("objective", "samples"): "int",
    ("constraint", "v_star"): "float",
    ("constraint", "lambda_v"): "float",
    ("constraint", "literal_volume_switch"): "bool",
    ("climber", "pr"): "float",
    ("climber", "max_iter"): "int",
    ("climber", "delta_f"): "float",
    ("climber", "stagnation_window"): "int",
    ("climber", "f_min"): "float",
    ("climber", "f_max"): "float",
    ("climber", "seed"): "int",
    ("climber", "initial_force"): "float",
    ("climber", "checkpoint_every"): "int",
    ("bc", "input_point"): "point",
    ("bc", "input_dir"): "point",
    ("bc", "output_point"): "point",
    ("paths", "desired"): "str",
    ("paths", "output_dir"): "str",
    ("", "smoothing_steps"): "int",
    ("", "chord_tol"): "float",
    ("", "penalty"): "float",
}


def _build_section(name: str, raw: dict):
    cls = _SECTIONS[name]
    fields = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        kwargs[key] = _coerce(name, key, value, _FIELD_TYPES[(name, key)])
    return cls(**kwargs)


def _check(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _validate(cfg: RunConfig) -> None:
    d, m, k = cfg.domain, cfg.mesh, cfg.masks
    _check(d.lx > 0 and d.ly > 0, f"[domain] sides must be positive, got {d.lx} x {d.ly}")
    _check(m.nx >= 2 and m.ny >= 2, f"[mesh] need at least 2 x 2 elements, got {m.nx} x {m.ny}")
    _check(k.nx >= 1 and k.ny >= 1, f"[masks] grid must be at least 1 x 1, got {k.nx} x {k.ny}")
    _check(0 < k.r_min < k.r_max, f"[masks] need 0 < r_min < r_max, got [{k.r_min}, {k.r_max}]")
    if k.f_fixed is not None:
        _check(0.0 < k.f_fixed < 1.0, f"[masks] f_fixed must be in (0, 1), got {k.f_fixed}")

    mat = cfg.material
    _check(mat.e > 0, f"[material] e must be positive, got {mat.e}")
    _check(
        0.0 <= mat.nu < 0.5,
        f"[material] nu must be in [0, 0.5) for a compressible plane-strain law, got {mat.nu}",
    )

    a = cfg.analysis
    _check(a.n_steps >= 2, f"[analysis] n_steps must be at least 2, got {a.n_steps}")
    _check(a.tol_r > 0, f"[analysis] tol_r must be positive, got {a.tol_r}")
    _check(a.newton_max_iter >= 1, f"[analysis] newton_max_iter must be >= 1, got {a.newton_max_iter}")
    _check(a.max_halvings >= 0, f"[analysis] max_halvings must be >= 0, got {a.max_halvings}")
    _check(a.max_uzawa >= 1, f"[analysis] max_uzawa must be >= 1, got {a.max_uzawa}")
    for knob in ("eps_n", "g_tol", "margin", "band"):
        value = getattr(a, knob)
        _check(value is None or value > 0, f"[analysis] {knob} must be positive, got {value}")

    o = cfg.objective
    for name in ("w_a", "w_b", "w_l", "w_theta"):
        _check(getattr(o, name) >= 0, f"[objective] {name} must be >= 0, got {getattr(o, name)}")
    _check(o.n_harmonics >= 1, f"[objective] n_harmonics must be >= 1, got {o.n_harmonics}")
    _check(
        o.samples >= 8 * o.n_harmonics,
        f"[objective] samples must be at least 8 * n_harmonics, got {o.samples}",
    )

    c = cfg.constraint
    _check(0.0 < c.v_star <= 1.0, f"[constraint] v_star must be in (0, 1], got {c.v_star}")
    _check(c.lambda_v >= 0, f"[constraint] lambda_v must be >= 0, got {c.lambda_v}")

    cl = cfg.climber
    _check(0.0 < cl.pr < 1.0, f"[climber] pr must be in (0, 1), got {cl.pr}")
    _check(cl.max_iter >= 1, f"[climber] max_iter must be >= 1, got {cl.max_iter}")
    _check(cl.delta_f > 0, f"[climber] delta_f must be positive, got {cl.delta_f}")
    _check(cl.stagnation_window >= 1, f"[climber] stagnation_window must be >= 1, got {cl.stagnation_window}")
    _check(cl.f_min <= cl.f_max, f"[climber] empty force interval [{cl.f_min}, {cl.f_max}]")
    _check(
        cl.f_min <= cl.initial_force <= cl.f_max,
        f"[climber] initial_force {cl.initial_force} outside [{cl.f_min}, {cl.f_max}]",
    )
    _check(cl.checkpoint_every >= 1, f"[climber] checkpoint_every must be >= 1, got {cl.checkpoint_every}")

    bc = cfg.bc
    for name in ("input_point", "output_point"):
        pt = getattr(bc, name)
        if pt is not None:
            _check(
                0.0 <= pt[0] <= d.lx and 0.0 <= pt[1] <= d.ly,
                f"[bc] {name} {pt} lies outside the {d.lx} x {d.ly} domain",
            )
    _check(bc.input_dir != (0.0, 0.0), "[bc] input_dir must be a nonzero vector")

    _check(cfg.smoothing_steps >= 0, f"smoothing_steps must be >= 0, got {cfg.smoothing_steps}")
    _check(0.0 < cfg.chord_tol < 1.0, f"chord_tol must be in (0, 1), got {cfg.chord_tol}")
    _check(cfg.penalty > 0, f"penalty must be positive, got {cfg.penalty}")
    _check(bool(cfg.paths.desired), "[paths] desired is required (CSV of target waypoints)")


def load_config(path) -> RunConfig:
    """Parse and validate one run configuration file.

    Relative file references resolve against the config file's directory;
    the output directory may be overridden by the CCMOPT_OUTPUT_DIR
    environment variable and defaults to '<config stem>_artifacts' next to
    the config.  Every failure carries the offending section and key.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    sections = {}
    top = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a section, got {value!r}")
            sections[key] = _build_section(key, value)
        elif key in _TOP_LEVEL:
            top[key] = _coerce("", key, value, _FIELD_TYPES[("", key)])
        else:
            raise ConfigError(f"unknown top-level key {key!r}")
    for name, cls in _SECTIONS.items():
        sections.setdefault(name, cls())

    cfg = RunConfig(**sections, **top)

    base = path.parent.resolve()
    desired = cfg.paths.desired
    if desired:
        desired = str((base / desired).resolve()) if not Path(desired).is_absolute() else desired
    out = os.environ.get(OUTPUT_DIR_ENV, "") or cfg.paths.output_dir
    if not out:
        out = f"{path.stem}_artifacts"
    out = str((base / out).resolve()) if not Path(out).is_absolute() else out
    cfg = dataclasses.replace(cfg, paths=PathsConfig(desired=desired, output_dir=out))

    _validate(cfg)
    if not Path(cfg.paths.desired).is_file():
        raise ConfigError(f"[paths] desired path file not found: {cfg.paths.desired}")
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    """Write a fully explicit TOML file that load_config reads back as an
    identical RunConfig (omitted-by-default knobs stay omitted)."""
    doc = tomlkit.document()
    for name in _TOP_LEVEL:
        doc[name] = getattr(cfg, name)
    for name, cls in _SECTIONS.items():
        section = tomlkit.table()
        obj = getattr(cfg, name)
        for f in dataclasses.fields(cls):
            value = getattr(obj, f.name)
            if value is None:
                if (name, f.name) == ("masks", "f_fixed"):
                    section[f.name] = False
                continue  # derived contact knobs and mid-edge points stay implicit
            if isinstance(value, tuple):
                value = list(value)
            section[f.name] = value
        doc[name] = section
    text = tomlkit.dumps(doc)
    Path(path).write_text(text, encoding="utf-8")


def _densify_polyline(points: np.ndarray, n: int) -> np.ndarray:
    """Arc-length uniform resampling of an open polyline to n points."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    total = float(seg.sum())
    if total <= 0.0:
        raise ConfigError("desired path has zero length")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, total, n)
    x = np.interp(t, s, points[:, 0])
    y = np.interp(t, s, points[:, 1])
    return np.stack([x, y], axis=1)


def load_desired_path(cfg: RunConfig) -> np.ndarray:
    """Waypoints from the referenced CSV, densified to the descriptor
    sampling density."""
    from .artifacts import read_path_csv

    points = read_path_csv(cfg.paths.desired)
    return _densify_polyline(points, cfg.objective.samples)


@dataclass(frozen=True)
class Runtime:
    """Everything a run needs, assembled once from a RunConfig."""

    mesh: HexMesh
    problem: Problem
    initial: DesignVector
    climber: HillClimberConfig
    bounds: DesignBounds
    desired_points: np.ndarray


def contact_params_from(cfg: RunConfig, mesh: HexMesh) -> ContactParams:
    base = default_contact_params(mesh.nodes, mesh.elements, cfg.material.e)
    a = cfg.analysis
    return ContactParams(
        eps_n=a.eps_n if a.eps_n is not None else base.eps_n,
        g_tol=a.g_tol if a.g_tol is not None else base.g_tol,
        max_uzawa=a.max_uzawa,
        broadphase_margin=a.margin if a.margin is not None else base.broadphase_margin,
        activation_band=a.band if a.band is not None else base.activation_band,
    )


def build_runtime(cfg: RunConfig) -> Runtime:
    """RunConfig -> mesh, problem, initial design, and climber settings."""
    d = cfg.domain
    mesh = generate_hex_mesh(cfg.mesh.nx, cfg.mesh.ny, d.lx, d.ly)

    desired_points = load_desired_path(cfg)
    try:
        desired = fourier_descriptors(
            close_path(desired_points),
            n=cfg.objective.n_harmonics,
            samples=cfg.objective.samples,
        )
    except DescriptorError as exc:
        raise ConfigError(f"[paths] desired path is degenerate: {exc}") from exc

    bounds = DesignBounds(
        x=(0.0, d.lx),
        y=(0.0, d.ly),
        r=(cfg.masks.r_min, cfg.masks.r_max),
        force=(cfg.climber.f_min, cfg.climber.f_max),
    )
    initial = initial_design(
        (cfg.masks.nx, cfg.masks.ny), (d.lx, d.ly), bounds, cfg.climber.initial_force
    )
    if cfg.masks.f_fixed is not None:
        initial = dataclasses.replace(
            initial,
            masks=tuple(
                dataclasses.replace(mk, f=cfg.masks.f_fixed) for mk in initial.masks
            ),
        )

    bc = cfg.bc
    input_point = bc.input_point if bc.input_point is not None else (0.0, 0.5 * d.ly)
    output_point = bc.output_point if bc.output_point is not None else (d.lx, 0.5 * d.ly)

    try:
        problem = Problem(
            mesh=mesh,
            material=Material(E=cfg.material.e, nu=cfg.material.nu),
            input_point=input_point,
            input_dir=bc.input_dir,
            output_point=output_point,
            desired=desired,
            weights=FSDWeights(
                cfg.objective.w_a, cfg.objective.w_b, cfg.objective.w_l, cfg.objective.w_theta
            ),
            contact=contact_params_from(cfg, mesh),
            smoothing_steps=cfg.smoothing_steps,
            chord_tol=cfg.chord_tol,
            n_steps=cfg.analysis.n_steps,
            tol_r=cfg.analysis.tol_r,
            newton_max_iter=cfg.analysis.newton_max_iter,
            max_halvings=cfg.analysis.max_halvings,
            n_harmonics=cfg.objective.n_harmonics,
            samples=cfg.objective.samples,
            v_star=cfg.constraint.v_star,
            lambda_v=cfg.constraint.lambda_v,
            literal_volume_switch=cfg.constraint.literal_volume_switch,
            penalty=cfg.penalty,
        )
        climber = HillClimberConfig(
            step_scale=default_step_scale((d.lx, d.ly)),
            max_iter=cfg.climber.max_iter,
            f_bounds=bounds.force,
            pr=cfg.climber.pr,
            delta_f=cfg.climber.delta_f,
            stagnation_window=cfg.climber.stagnation_window,
            rng_seed=cfg.climber.seed,
            f_fixed=cfg.masks.f_fixed,
        )
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc

    return Runtime(
        mesh=mesh,
        problem=problem,
        initial=initial,
        climber=climber,
        bounds=bounds,
        desired_points=desired_points,
    )
