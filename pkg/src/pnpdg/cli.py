"""Command-line surface: runs, convergence studies, presets, oracle checks.

Verbs:
  run <config>            time-march a configuration, write CSV + VTK
  convergence             spatial or temporal refinement study with slopes
  presets list            show the built-in scenario presets
  oracle-check            dense-quadrature form oracles + forcing residuals

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O
error.  PNPDG_THREADS controls intra-step concurrency.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, forms, oracle, vtkio
from .config import ConfigError, RunConfig, parse_config
from .linalg import SolverFailure
from .mesh import build_rect_mesh
from .mms import (ManufacturedForcing, ManufacturedSolution, PRESET_NAMES,
                  initial_fields, preset)
from .space import BrokenSpace, project_field
from .stepper import Discretization, SchemeConfig, Stepper, initial_state


def build_problem(cfg):
    """Discretization, scheme config, initial data and optional exact
    solution for a RunConfig."""
    mesh = build_rect_mesh(cfg.lx, cfg.ly, cfg.nx, cfg.ny)
    disc = Discretization(mesh, cfg.degree, cfg.sigma_e, quad=cfg.quad)
    exact = None
    sources = None
    stokes_load = None
    if cfg.preset in ("mms-k1", "mms-k2"):
        exact = ManufacturedSolution()
        sources = ManufacturedForcing(cfg.params, exact)
        nu = cfg.params.nu

        def stokes_load(x, y, _ex=exact, _nu=nu):
            t = np.zeros_like(x)
            return -_nu * _ex.lap_u(x, y, t) + _ex.grad_p(x, y, t)

    scheme = SchemeConfig(dt=cfg.dt, t_final=cfg.t_final, params=cfg.params,
                          sources=sources, bc_mode=cfg.bc_mode,
                          dirichlet=cfg.dirichlet, flux=cfg.flux,
                          solver=cfg.solver, quad=cfg.quad)
    if cfg.preset is not None:
        init = initial_fields(cfg.preset)
    else:
        zero_s = lambda x, y: np.zeros_like(x)
        zero_v = lambda x, y: np.zeros(np.shape(x) + (2,))
        init = {"c1": zero_s, "c2": zero_s, "u": zero_v, "p": zero_s}
    return disc, scheme, init, exact, stokes_load


def _csv_value(v):
    return f"{v:.17g}"


def run_simulation(cfg, out_dir=None, progress=None):
    """Execute the time loop of a RunConfig; returns the list of records."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    disc, scheme, init, exact, stokes_load = build_problem(cfg)
    stepper = Stepper(disc, scheme)
    state = initial_state(disc, scheme, init, stepper=stepper,
                          stokes_load=stokes_load)
    meta = {
        "config": {
            "preset": cfg.preset, "degree": cfg.degree, "nx": cfg.nx,
            "ny": cfg.ny, "lx": cfg.lx, "ly": cfg.ly, "sigma_e": cfg.sigma_e,
            "dt": cfg.dt, "t_final": cfg.t_final, "bc_mode": cfg.bc_mode,
        },
        "initial_concentrations": ("lagrange-interpolation"
                                   if scheme.sources is None else "l2-projection"),
        "initial_velocity_pressure": ("stokes-projection" if stokes_load
                                      else "l2-projection"),
        "source_evaluation_time": "end of step (implicit level)",
        "concentration_mean_constraint": scheme.constrain_concentration_mean,
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2))

    error_keys = diagnostics.ERROR_KEYS if exact is not None else ()
    header = list(diagnostics.DiagnosticsRecord.CSV_COLUMNS) + list(error_keys)
    nsteps = round(scheme.t_final / scheme.dt)
    records = []
    snapshot_steps = {0, nsteps}
    for t_snap in cfg.snapshot_times:
        snapshot_steps.add(int(round(t_snap / scheme.dt)))

    with open(out / "diagnostics.csv", "w") as fh:
        fh.write(",".join(header) + "\n")

        def emit(rec):
            records.append(rec)
            fh.write(",".join(_csv_value(v) for v in rec.row(error_keys)) + "\n")

        emit(diagnostics.make_record(state, disc, scheme.params, exact=exact))
        vtkio.write_fields(state, out / "fields", 0)
        for m in range(1, nsteps + 1):
            state = stepper.advance(state)
            emit(diagnostics.make_record(state, disc, scheme.params, exact=exact))
            if m % cfg.output_cadence == 0 or m in snapshot_steps:
                vtkio.write_fields(state, out / "fields", m)
            if progress is not None:
                progress(m, nsteps, records[-1])
    return records, state


def cmd_run(args):
    cfg = parse_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    records, _ = run_simulation(cfg)
    last = records[-1]
    print(f"completed {len(records) - 1} steps to t = {last.t:g}")
    print(f"  mass1 = {last.mass1:.12g}   mass2 = {last.mass2:.12g}")
    print(f"  c1 in [{last.min_c1:.6g}, {last.max_c1:.6g}]   "
          f"c2 in [{last.min_c2:.6g}, {last.max_c2:.6g}]")
    print(f"  E_elec = {last.e_elec:.8g}   E_total = {last.e_total:.8g}")
    for key, val in last.errors.items():
        print(f"  {key} = {val:.6e}")
    return 0


def least_squares_slope(hs, errs):
    hs, errs = np.asarray(hs, dtype=float), np.asarray(errs, dtype=float)
    mask = errs > 0
    A = np.vstack([np.log(hs[mask]), np.ones(mask.sum())]).T
    return float(np.linalg.lstsq(A, np.log(errs[mask]), rcond=None)[0][0])


def run_convergence(mode, degree, levels, out_dir=None, coupling=0.1,
                    t_final=0.1, base_level=1):
    """Refinement study; returns (xs, per-field error dict, slopes dict)."""
    if levels < 3:
        raise ConfigError("need at least 3 levels for a slope")
    if degree not in (1, 2):
        raise ConfigError("degree must be 1 or 2")
    sigma = 10.0 if degree == 1 else 40.0
    presetname = "mms-k1" if degree == 1 else "mms-k2"
    xs, rows = [], []
    for i in range(base_level, base_level + levels):
        cfg = RunConfig(preset=presetname, degree=degree, sigma_e=sigma,
                        t_final=t_final)
        cfg.params = preset(presetname).params
        if mode in ("spatial-l2", "spatial-h1"):
            n = 2 ** i
            h = 1.0 / n
            dt = coupling * h ** (degree + 1)
            xs.append(h)
        elif mode == "temporal":
            dt = 0.1 * 2.0 ** (-i)
            n = max(2, round(dt ** (-1.0 / (degree + 1))))
            xs.append(dt)
        else:
            raise ConfigError(f"unknown mode {mode!r}")
        nsteps = max(1, round(t_final / dt))
        cfg.nx = cfg.ny = n
        cfg.dt = t_final / nsteps
        cfg.t_final = t_final
        cfg.output_cadence = 10 ** 9
        disc, scheme, init, exact, stokes_load = build_problem(cfg)
        stepper = Stepper(disc, scheme)
        state = initial_state(disc, scheme, init, stepper=stepper,
                              stokes_load=stokes_load)
        for _ in range(nsteps):
            state = stepper.advance(state)
        rows.append(diagnostics.compute_errors(state, exact, sigma))

    errs = {k: [r[k] for r in rows] for k in diagnostics.ERROR_KEYS}
    slopes = {k: least_squares_slope(xs, v) for k, v in errs.items()}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        xname = "dt" if mode == "temporal" else "h"
        with open(out / f"convergence_{mode}_k{degree}.csv", "w") as fh:
            keys = list(diagnostics.ERROR_KEYS)
            fh.write(",".join([xname] + keys
                              + [f"slope_{k}" for k in keys]) + "\n")
            for idx, x in enumerate(xs):
                row = [x] + [errs[k][idx] for k in keys]
                for k in keys:
                    if idx == 0:
                        row.append(float("nan"))
                    else:
                        row.append(np.log(errs[k][idx - 1] / errs[k][idx])
                                   / np.log(xs[idx - 1] / xs[idx]))
                fh.write(",".join(_csv_value(v) for v in row) + "\n")
            fh.write(",".join(["ls_slope"]
                              + [_csv_value(slopes[k]) for k in keys]
                              + [""] * len(keys)) + "\n")
    return xs, errs, slopes


def cmd_convergence(args):
    xs, errs, slopes = run_convergence(args.mode, args.degree, args.levels,
                                       out_dir=args.out,
                                       base_level=args.base_level)
    xname = "dt" if args.mode == "temporal" else "h"
    if args.mode == "spatial-h1":
        keys = ["en_phi", "en_c1", "en_c2", "en_u", "l2_p"]
    elif args.mode == "spatial-l2":
        keys = ["l2_phi", "l2_c1", "l2_c2", "l2_u", "l2_p"]
    else:
        keys = ["l2_phi", "l2_c1", "l2_c2", "l2_u", "l2_p"]
    head = f"{xname:>12s} " + " ".join(f"{k:>12s}" for k in keys)
    print(head)
    for idx, x in enumerate(xs):
        print(f"{x:12.5g} " + " ".join(f"{errs[k][idx]:12.4e}" for k in keys))
    print("ls slopes:   " + " ".join(f"{slopes[k]:12.3f}" for k in keys))
    return 0


def cmd_presets(args):
    if args.action != "list":
        print("usage: pnpdg presets list", file=sys.stderr)
        return 2
    for name in PRESET_NAMES:
        ps = preset(name)
        print(f"{name:10s} domain [0,{ps.lx}]x[0,{ps.ly}] mesh {ps.nx}x{ps.ny} "
              f"k={ps.degree} sigma_e={ps.sigma_e:g} dt={ps.dt:g} "
              f"T={ps.t_final:g} bc={ps.bc_mode}")
    return 0


def cmd_oracle_check(args):
    mesh = build_rect_mesh(1.0, 1.0, 1, 1)
    rng = np.random.default_rng(11)
    worst = 0.0
    for k, sigma in ((1, 10.0), (2, 40.0)):
        X = BrokenSpace(mesh, k)
        V = BrokenSpace(mesh, k, ncomp=2)
        M = BrokenSpace(mesh, k - 1)
        w = project_field(V, lambda x, y: np.column_stack([y - x ** 2,
                                                           np.sin(x + y)]))
        c = project_field(X, lambda x, y: x + 0.5 * y)
        phi = project_field(X, lambda x, y: 2 * x - y)
        d = project_field(X, lambda x, y: x - y)
        pairs = [
            ("A1", forms.assemble_a1(mesh, X, sigma).mat.toarray(),
             oracle.oracle_a1(mesh, X, sigma)),
            ("A2", forms.assemble_a2(mesh, V, sigma).mat.toarray(),
             oracle.oracle_a2(mesh, V, sigma)),
            ("D", forms.assemble_d(mesh, V, M).mat.toarray(),
             oracle.oracle_d(mesh, V, M)),
            ("N1", forms.assemble_n1(mesh, w, X).mat.toarray(),
             oracle.oracle_n1(mesh, w, X)),
            ("N2", forms.assemble_n2(mesh, w, V).mat.toarray(),
             oracle.oracle_n2(mesh, w, V)),
            ("G", forms.assemble_g(mesh, c, 0.5, X).mat.toarray(),
             oracle.oracle_g(mesh, c, 0.5, X)),
            ("T", forms.assemble_t_rhs(mesh, d, phi, V),
             oracle.oracle_t_rhs(mesh, d, phi, V)),
        ]
        for name, got, want in pairs:
            scale = max(1.0, np.abs(want).max())
            err = np.abs(got - want).max() / scale
            worst = max(worst, err)
            status = "ok" if err <= 1e-12 else "FAIL"
            print(f"k={k} {name:3s} scaled entrywise error {err:.3e}  [{status}]")
    params = preset("mms-k1").params
    res = oracle.mms_residuals(ManufacturedSolution(),
                               ManufacturedForcing(params), params)
    for key, val in res.items():
        status = "ok" if val <= 1e-9 else "FAIL"
        print(f"forcing residual {key:10s} {val:.3e}  [{status}]")
        worst = max(worst, 0.0 if val <= 1e-9 else val)
    return 0 if worst <= 1e-12 else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="pnpdg",
        description="dG solver for electrokinetic flow with a "
                    "pressure-correction time scheme")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configuration file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_run)

    p_conv = sub.add_parser("convergence", help="refinement study")
    p_conv.add_argument("--mode", required=True,
                        choices=["spatial-l2", "spatial-h1", "temporal"])
    p_conv.add_argument("--degree", type=int, required=True)
    p_conv.add_argument("--levels", type=int, required=True)
    p_conv.add_argument("--base-level", type=int, default=1)
    p_conv.add_argument("--out", default=None)
    p_conv.set_defaults(func=cmd_convergence)

    p_pre = sub.add_parser("presets", help="preset inspection")
    p_pre.add_argument("action")
    p_pre.set_defaults(func=cmd_presets)

    p_or = sub.add_parser("oracle-check",
                          help="dense-quadrature and forcing oracles")
    p_or.set_defaults(func=cmd_oracle_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
