"""Decoupled linearized time stepping for the coupled system.

One step advances the state through five solves: (1) potential from the
lagged net charge; (2) the two ion concentrations, implicit in diffusion
and convection with the drift coefficient and advecting velocity lagged
and the fresh potential on the right-hand side; (3) intermediate
velocity, implicit in diffusion/convection with lagged pressure and the
electric force built from lagged charges and the fresh potential; (4) a
pressure increment from the intermediate velocity's divergence; (5) a
block-diagonal mass update projecting the velocity.

The potential and pressure-increment systems are pure-Neumann and carry a
scalar mean constraint.  In runs without manufactured sources the
concentration solves carry the same constraint, which realizes the
zero-mean trial space and keeps the ion masses exact; with sources the
manufactured mass is time dependent and the solves run unconstrained.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import forms
from .forms import FormParams
from .linalg import PrefactoredSolver, SolverOptions, solve_general
from .mesh import BoundaryTag
from .space import BrokenSpace, FieldVector, enforce_zero_mean, project_field


class SteppingError(Exception):
    pass


@dataclass
class SchemeConfig:
    dt: float
    t_final: float
    params: FormParams
    sources: object = None            # ManufacturedForcing or None
    bc_mode: str = "homogeneous"      # or "reservoir"
    dirichlet: dict = field(default_factory=dict)   # BoundaryTag -> g
    flux: dict = field(default_factory=dict)        # BoundaryTag -> sigma_s
    solver: SolverOptions = field(default_factory=SolverOptions)
    quad: tuple = None
    constrain_concentration_mean: bool = None

    def __post_init__(self):
        if self.dt <= 0.0:
            raise SteppingError("dt must be positive")
        if self.t_final < self.dt:
            raise SteppingError("t_final must be at least one step")
        if self.bc_mode not in ("homogeneous", "reservoir"):
            raise SteppingError(f"unknown bc_mode {self.bc_mode!r}")
        if self.constrain_concentration_mean is None:
            self.constrain_concentration_mean = self.sources is None


@dataclass
class SystemState:
    """All unknowns of one time level plus the concentration shift m0."""

    t: float
    phi: FieldVector
    c1t: FieldVector          # shifted concentration c1 - m0
    c2t: FieldVector
    u_hat: FieldVector
    u: FieldVector
    p: FieldVector
    m0: float

    def c1(self):
        return shift_field(self.c1t, self.m0)

    def c2(self):
        return shift_field(self.c2t, self.m0)


def shift_field(ct, m0):
    """Unshifted concentration c = c_tilde + m0 (exact constant shift)."""
    out = ct.copy()
    out.coef[:: ct.space.nloc] += m0 / float(ct.space.basis.coeffs[0, 0])
    return out


class Discretization:
    """Mesh plus the three broken spaces and the constant operators."""

    def __init__(self, mesh, degree, sigma_e, quad=None):
        if degree < 1:
            raise SteppingError("polynomial degree must be at least 1")
        self.mesh = mesh
        self.degree = degree
        self.sigma_e = sigma_e
        self.quad = quad
        self.scalar = BrokenSpace(mesh, degree, zero_mean=True)
        self.velocity = BrokenSpace(mesh, degree, ncomp=2)
        self.pressure = BrokenSpace(mesh, degree - 1, zero_mean=True,
                                    kind="pressure")
        self.a1 = forms.assemble_a1(mesh, self.scalar, sigma_e, quad=quad).mat
        self.a2 = forms.assemble_a2(mesh, self.velocity, sigma_e, quad=quad).mat
        self.d = forms.assemble_d(mesh, self.velocity, self.pressure,
                                  quad=quad).mat
        self.a1_pressure = forms.assemble_a1(mesh, self.pressure, sigma_e,
                                             quad=quad).mat
        self.mass_scalar = self.scalar.mass_diagonal()
        self.mass_velocity = self.velocity.mass_diagonal()
        self.area = float(np.sum(mesh.areas))


class Stepper:
    """Owns per-run prefactored constant systems and runs the sub-steps."""

    def __init__(self, disc, cfg):
        self.disc = disc
        self.cfg = cfg
        p = cfg.params
        if cfg.bc_mode == "reservoir":
            dir_tags = {BoundaryTag(t): g for t, g in _as_tag_dict(cfg.dirichlet).items()}
            flux_tags = {BoundaryTag(t): s for t, s in _as_tag_dict(cfg.flux).items()}
            op, load = forms.assemble_a1_mixed_bc(
                disc.mesh, disc.scalar, disc.sigma_e, dir_tags, flux_tags,
                mu=p.mu, quad=cfg.quad)
            self.pot_solver = PrefactoredSolver(p.mu * op.mat, opts=cfg.solver)
            self.pot_load = load
        else:
            self.pot_solver = PrefactoredSolver(
                p.mu * disc.a1, mass_vec=disc.scalar.integral_vector(),
                opts=cfg.solver)
            self.pot_load = None
        self.pressure_solver = PrefactoredSolver(
            disc.a1_pressure, mass_vec=disc.pressure.integral_vector(),
            opts=cfg.solver)
        self.dt_mat = disc.d.T.tocsr()
        self.threads = int(os.environ.get("PNPDG_THREADS", "1"))

    # -- sub-steps ------------------------------------------------------

    def potential_at(self, state, t_eval, log=None):
        """Potential solve from the current charges, sources at t_eval."""
        disc, cfg = self.disc, self.cfg
        charge = state.c1t.coef - state.c2t.coef
        rhs = disc.mass_scalar * charge
        if cfg.sources is not None:
            rhs += forms.assemble_load(disc.scalar,
                                       lambda x, y: cfg.sources.f_phi(x, y, t_eval))
        if self.pot_load is not None:
            rhs += self.pot_load
        if log is not None:
            log.append(("potential", "charge_c1", id(state.c1t)))
            log.append(("potential", "charge_c2", id(state.c2t)))
        sol, _ = self.pot_solver.solve(rhs)
        phi = FieldVector(disc.scalar, sol)
        if cfg.bc_mode == "homogeneous":
            phi = enforce_zero_mean(phi)
        return phi

    def step_potential(self, state, log=None):
        return self.potential_at(state, state.t + self.cfg.dt, log=log)

    def step_concentrations(self, state, phi_m, log=None):
        disc, cfg = self.disc, self.cfg
        p = cfg.params
        t_new = state.t + cfg.dt
        n1 = forms.assemble_n1(disc.mesh, state.u, disc.scalar, quad=cfg.quad).mat
        if log is not None:
            log.append(("concentration", "advector", id(state.u)))
        mass = sp.diags(disc.mass_scalar / cfg.dt)
        mvec = disc.scalar.integral_vector() if cfg.constrain_concentration_mean \
            else None

        def ion_matrix(kappa):
            return PrefactoredSolver((mass + kappa * disc.a1 + n1).tocsc(),
                                     mass_vec=mvec, opts=cfg.solver)

        def one_rhs(ct_old, beta, f_c, tag):
            g = forms.assemble_g(disc.mesh, ct_old, state.m0, disc.scalar,
                                 quad=cfg.quad).mat
            rhs = disc.mass_scalar * ct_old.coef / cfg.dt - beta * (g @ phi_m.coef)
            if cfg.sources is not None:
                rhs += forms.assemble_load(disc.scalar,
                                           lambda x, y: f_c(x, y, t_new))
            if log is not None:
                log.append(("concentration", f"drift_coeff_{tag}", id(ct_old)))
                log.append(("concentration", f"drift_potential_{tag}", id(phi_m)))
            return rhs

        f1 = cfg.sources.f_c1 if cfg.sources is not None else None
        f2 = cfg.sources.f_c2 if cfg.sources is not None else None
        jobs = [(state.c1t, p.beta1, p.kappa1, f1, "c1"),
                (state.c2t, p.beta2, p.kappa2, f2, "c2")]

        def one_ion(ct_old, beta, kappa, f_c, tag, solver=None):
            solver = solver or ion_matrix(kappa)
            sol, _ = solver.solve(one_rhs(ct_old, beta, f_c, tag))
            return FieldVector(disc.scalar, sol)

        if p.kappa1 == p.kappa2:
            solver = ion_matrix(p.kappa1)
            return (one_ion(*jobs[0], solver=solver),
                    one_ion(*jobs[1], solver=solver))
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=2) as pool:
                out = list(pool.map(lambda a: one_ion(*a), jobs))
            return out[0], out[1]
        return one_ion(*jobs[0]), one_ion(*jobs[1])

    def step_intermediate_velocity(self, state, phi_m, log=None):
        disc, cfg = self.disc, self.cfg
        p = cfg.params
        t_new = state.t + cfg.dt
        n2 = forms.assemble_n2(disc.mesh, state.u, disc.velocity, quad=cfg.quad).mat
        mat = (sp.diags(disc.mass_velocity / cfg.dt) + p.nu * disc.a2 + n2).tocsc()
        charge = state.c1t.copy()
        charge.coef = state.c1t.coef - state.c2t.coef
        rhs = disc.mass_velocity * state.u.coef / cfg.dt
        rhs += self.dt_mat @ state.p.coef
        rhs += forms.assemble_t_rhs(disc.mesh, charge, phi_m, disc.velocity,
                                    quad=cfg.quad)
        if cfg.sources is not None:
            rhs += forms.assemble_load(disc.velocity,
                                       lambda x, y: cfg.sources.f_u(x, y, t_new))
        if log is not None:
            log.append(("momentum", "advector", id(state.u)))
            log.append(("momentum", "pressure", id(state.p)))
            log.append(("momentum", "force_charge_c1", id(state.c1t)))
            log.append(("momentum", "force_charge_c2", id(state.c2t)))
            log.append(("momentum", "force_potential", id(phi_m)))
        sol, _ = solve_general(mat, rhs, opts=cfg.solver)
        return FieldVector(disc.velocity, sol)

    def step_pressure(self, u_hat, p_old, log=None):
        disc, cfg = self.disc, self.cfg
        rhs = -(disc.d @ u_hat.coef) / cfg.dt
        if log is not None:
            log.append(("pressure", "intermediate_velocity", id(u_hat)))
        dp, _ = self.pressure_solver.solve(rhs)
        p_new = FieldVector(disc.pressure, p_old.coef + dp)
        return enforce_zero_mean(p_new)

    def step_velocity_correction(self, u_hat, p_new, p_old):
        disc, cfg = self.disc, self.cfg
        dp = p_new.coef - p_old.coef
        coef = u_hat.coef + cfg.dt * (self.dt_mat @ dp) / disc.mass_velocity
        return FieldVector(disc.velocity, coef)

    def advance(self, state, log=None):
        """One full step; the input state is untouched on any failure."""
        cfg = self.cfg
        phi = self.step_potential(state, log=log)
        c1t, c2t = self.step_concentrations(state, phi, log=log)
        u_hat = self.step_intermediate_velocity(state, phi, log=log)
        p_new = self.step_pressure(u_hat, state.p, log=log)
        u_new = self.step_velocity_correction(u_hat, p_new, state.p)
        return SystemState(state.t + cfg.dt, phi, c1t, c2t, u_hat, u_new,
                           p_new, state.m0)


def _as_tag_dict(d):
    out = {}
    for key, val in d.items():
        name = key.value if isinstance(key, BoundaryTag) else str(key)
        out[name] = val
    return out


def stokes_projection(disc, nu, load_fn, opts=None):
    """Velocity/pressure pair solving the discrete steady Stokes system.

    `load_fn` is the strong residual -nu*lap(u) + grad(p) of the target
    pair; the solve yields the scheme-consistent approximation (discretely
    divergence-free velocity, compatible pressure).
    """
    from .linalg import SolverFailure

    V, M = disc.velocity, disc.pressure
    b_u = forms.assemble_load(V, load_fn)
    mvec = M.integral_vector()
    mcol = sp.csr_matrix(mvec.reshape(-1, 1))
    A = sp.bmat([[nu * disc.a2, -disc.d.T, None],
                 [-disc.d, None, mcol],
                 [None, mcol.T, None]], format="csc")
    rhs = np.concatenate([b_u, np.zeros(M.ndof), [0.0]])
    try:
        sol = sp.linalg.splu(A).solve(rhs)
    except RuntimeError as exc:
        raise SolverFailure(f"Stokes projection factorization failed: {exc}")
    return (FieldVector(V, sol[:V.ndof]),
            FieldVector(M, sol[V.ndof:V.ndof + M.ndof]))


def initial_state(disc, cfg, init, stepper=None, stokes_load=None,
                  interpolate_concentrations=None):
    """Discretize initial data and solve the t=0 potential for diagnostics.

    `init` maps keys c1, c2, u, p to pointwise callables (unshifted
    concentrations).  m0 is the mean of the discrete initial c1.

    Concentrations are interpolated at the Lagrange nodes in runs without
    manufactured sources (keeps nonnegative data nonnegative at the
    monitored sample points) and L2-projected otherwise; the shifted
    fields are then moved into the zero-mean space, which only removes a
    roundoff-level constant on the symmetric structured meshes.  When
    `stokes_load` (the strong Stokes residual of the initial pair) is
    given, velocity and pressure start from the discrete Stokes
    projection, which avoids a spurious pressure transient; otherwise
    they are elementwise L2 projections.
    """
    from .space import integrate_field, interpolate_field

    if interpolate_concentrations is None:
        interpolate_concentrations = cfg.sources is None
    discretize = interpolate_field if interpolate_concentrations else project_field
    c1 = discretize(disc.scalar, init["c1"])
    c2 = discretize(disc.scalar, init["c2"])
    m0 = integrate_field(c1) / disc.area
    c1t, c2t = shift_field(c1, -m0), shift_field(c2, -m0)
    if cfg.constrain_concentration_mean:
        c1t, c2t = enforce_zero_mean(c1t), enforce_zero_mean(c2t)
    if stokes_load is not None:
        u0, p0 = stokes_projection(disc, cfg.params.nu, stokes_load,
                                   opts=cfg.solver)
        p0 = enforce_zero_mean(p0)
    else:
        u0 = project_field(disc.velocity, init["u"])
        p0 = enforce_zero_mean(project_field(disc.pressure, init["p"]))
    state = SystemState(0.0, disc.scalar.new_field(), c1t, c2t, u0, u0, p0, m0)
    stepper = stepper or Stepper(disc, cfg)
    phi0 = stepper.potential_at(state, 0.0)
    return replace(state, phi=phi0)
