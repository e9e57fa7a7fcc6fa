"""Run configuration: INI-style files with strict key validation.

A config either names a preset (whose fields may be selectively
overridden) or specifies everything explicitly.  Unknown sections or
keys are rejected outright, so typos fail fast instead of silently
running defaults.
"""

import configparser
from dataclasses import dataclass, field, fields

from .forms import FormParams
from .linalg import SolverOptions
from .mesh import BoundaryTag
from .mms import PRESET_NAMES, preset as load_preset


class ConfigError(Exception):
    pass


_RUN_KEYS = {"preset", "degree", "nx", "ny", "lx", "ly", "sigma_e", "dt",
             "t_final", "bc_mode", "out_dir", "output_cadence",
             "snapshot_times"}
_PHYSICS_KEYS = {"mu", "nu", "kappa1", "kappa2", "beta1", "beta2"}
_SOLVER_KEYS = {"method", "tol", "verify", "export_systems"}
_QUAD_KEYS = {"element_degree", "edge_degree"}
_BC_KEYS = {"dirichlet", "flux"}
_SECTIONS = {"run": _RUN_KEYS, "physics": _PHYSICS_KEYS,
             "solver": _SOLVER_KEYS, "quadrature": _QUAD_KEYS, "bc": _BC_KEYS}


@dataclass
class RunConfig:
    preset: str = None
    degree: int = 1
    nx: int = 16
    ny: int = 16
    lx: float = 1.0
    ly: float = 1.0
    sigma_e: float = 10.0
    dt: float = 0.01
    t_final: float = 0.1
    bc_mode: str = "homogeneous"
    out_dir: str = "out"
    output_cadence: int = 25
    snapshot_times: tuple = ()
    params: FormParams = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    quad: tuple = None
    dirichlet: dict = field(default_factory=dict)
    flux: dict = field(default_factory=dict)
    export_systems: str = None

    def validate(self):
        if self.degree not in (1, 2):
            raise ConfigError("degree must be 1 or 2")
        for name in ("nx", "ny"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        for name in ("lx", "ly", "dt", "t_final", "sigma_e"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.bc_mode not in ("homogeneous", "reservoir"):
            raise ConfigError(f"unknown bc_mode {self.bc_mode!r}")
        if self.output_cadence < 1:
            raise ConfigError("output_cadence must be at least 1")
        return self


def _parse_tag_map(text):
    out = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            tag, val = item.split(":")
            out[BoundaryTag(tag.strip())] = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad boundary entry {item!r}") from exc
    return out


def _from_preset(name):
    try:
        ps = load_preset(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        preset=name, degree=ps.degree, nx=ps.nx, ny=ps.ny, lx=ps.lx, ly=ps.ly,
        sigma_e=ps.sigma_e, dt=ps.dt, t_final=ps.t_final, bc_mode=ps.bc_mode,
        output_cadence=ps.output_cadence, params=ps.params,
        dirichlet={BoundaryTag(t): v for t, v in ps.dirichlet.items()},
        flux={BoundaryTag(t): v for t, v in ps.flux.items()})


def parse_config(path):
    """Parse an INI run configuration; raises ConfigError on any problem."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    run = cp["run"] if cp.has_section("run") else {}
    cfg = _from_preset(run["preset"]) if "preset" in run else RunConfig()

    def take(section, key, cast, current):
        if cp.has_section(section) and key in cp[section]:
            raw = cp[section][key]
            try:
                return cast(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        return current

    cfg.degree = take("run", "degree", int, cfg.degree)
    cfg.nx = take("run", "nx", int, cfg.nx)
    cfg.ny = take("run", "ny", int, cfg.ny)
    cfg.lx = take("run", "lx", float, cfg.lx)
    cfg.ly = take("run", "ly", float, cfg.ly)
    cfg.sigma_e = take("run", "sigma_e", float, cfg.sigma_e)
    cfg.dt = take("run", "dt", float, cfg.dt)
    cfg.t_final = take("run", "t_final", float, cfg.t_final)
    cfg.bc_mode = take("run", "bc_mode", str, cfg.bc_mode)
    cfg.out_dir = take("run", "out_dir", str, cfg.out_dir)
    cfg.output_cadence = take("run", "output_cadence", int, cfg.output_cadence)
    cfg.snapshot_times = take(
        "run", "snapshot_times",
        lambda s: tuple(float(v) for v in s.split(",") if v.strip()),
        cfg.snapshot_times)

    params = cfg.params or FormParams(sigma_e=cfg.sigma_e)
    kw = {f.name: getattr(params, f.name) for f in fields(FormParams)}
    for key in _PHYSICS_KEYS:
        kw[key] = take("physics", key, float, kw[key])
    kw["sigma_e"] = cfg.sigma_e
    cfg.params = FormParams(**kw)

    cfg.solver = SolverOptions(
        method=take("solver", "method", str, "direct"),
        tol=take("solver", "tol", float, 1e-10),
        verify=take("solver", "verify", lambda s: s.lower() == "true", True))
    cfg.export_systems = take("solver", "export_systems", str, None)
    if cfg.solver.method not in ("direct", "iterative"):
        raise ConfigError(f"unknown solver method {cfg.solver.method!r}")

    elem_deg = take("quadrature", "element_degree", int, None)
    edge_deg = take("quadrature", "edge_degree", int, None)
    if (elem_deg is None) != (edge_deg is None):
        raise ConfigError("override both element_degree and edge_degree")
    if elem_deg is not None:
        cfg.quad = (elem_deg, edge_deg)

    if cp.has_section("bc"):
        if "dirichlet" in cp["bc"]:
            cfg.dirichlet = _parse_tag_map(cp["bc"]["dirichlet"])
        if "flux" in cp["bc"]:
            cfg.flux = _parse_tag_map(cp["bc"]["flux"])
    return cfg.validate()
