"""Per-step reporting: masses, concentration extrema, energies, errors.

Masses are exact integrals of the polynomial fields.  Extrema are sampled
at the element quadrature points plus the triangle vertices (the true
polynomial extrema are not solved for).  The entropy part of the total
free energy needs strictly positive concentrations at the sample points;
otherwise the total energy is reported as NaN for that step, which is a
value, not an error.
"""

from dataclasses import dataclass, field

import numpy as np

from .mesh import REF_VERTICES
from .space import integrate_field, map_to_physical


@dataclass
class DiagnosticsRecord:
    t: float
    mass1: float
    mass2: float
    min_c1: float
    max_c1: float
    min_c2: float
    max_c2: float
    e_elec: float
    e_total: float
    errors: dict = field(default_factory=dict)

    CSV_COLUMNS = ("t", "mass1", "mass2", "min_c1", "max_c1", "min_c2",
                   "max_c2", "E_elec", "E_total")

    def row(self, error_keys=()):
        vals = [self.t, self.mass1, self.mass2, self.min_c1, self.max_c1,
                self.min_c2, self.max_c2, self.e_elec, self.e_total]
        vals += [self.errors.get(k, np.nan) for k in error_keys]
        return vals


def compute_mass(c):
    """Exact integral of a scalar field over the domain."""
    return integrate_field(c)


def _sample_tab(space):
    """Basis values at quadrature points plus vertices (cached)."""
    if getattr(space, "_minmax_tab", None) is None:
        rule = space.element_tab(2 * space.degree + 2).rule
        pts = np.vstack([rule.points, REF_VERTICES])
        space._minmax_tab = space.basis.eval(pts)
    return space._minmax_tab


def sample_minmax(c):
    """(min, max) of a scalar field over quadrature points and vertices."""
    vals = c.values_at(_sample_tab(c.space))
    return float(vals.min()), float(vals.max())


def compute_energies(state, disc, params):
    """Kinetic-plus-field energy and the total free energy (or NaN)."""
    deg = 2 * disc.degree + 2
    ke = 0.5 * float(np.sum(disc.mass_velocity * state.u.coef**2))
    gphi = state.phi.grads_at(disc.scalar.phys_grads(deg))
    w = disc.scalar.element_tab(deg).rule.weights
    e_field = 0.5 * params.mu * float(
        np.einsum("e,q,eq->", disc.mesh.det_jac, w, np.sum(gphi**2, axis=2)))
    e_elec = ke + e_field

    tab = disc.scalar.element_tab(deg)
    entropy = 0.0
    defined = True
    for ct, kappa in ((state.c1t, params.kappa1), (state.c2t, params.kappa2)):
        cv = ct.values_at(tab.values) + state.m0
        if cv.min() <= 0.0:
            defined = False
            break
        entropy += kappa * float(np.einsum(
            "e,q,eq->", disc.mesh.det_jac, w, cv * (np.log(cv) - 1.0)))
    e_total = e_elec + entropy if defined else float("nan")
    return e_elec, e_total


def _edge_physical_points(ea, rule, boundary=False):
    if boundary:
        va, vb = ea.b_va, ea.b_vb
    else:
        va, vb = ea.va, ea.vb
    s = rule.points
    return va[:, None, :] + s[None, :, None] * (vb - va)[:, None, :]


def l2_error(fieldv, exact_fn, boost=3):
    """L2 distance to a pointwise function at boosted quadrature."""
    space = fieldv.space
    deg = 2 * max(space.degree, 1) + 2 + boost
    tab = space.element_tab(deg)
    mesh = space.mesh
    pts = map_to_physical(mesh, np.arange(mesh.n_elements), tab.rule.points)
    ex = np.asarray(exact_fn(pts[..., 0], pts[..., 1]))
    vh = fieldv.values_at(tab.values)
    diff_sq = np.sum((vh - ex) ** 2, axis=tuple(range(2, vh.ndim)))
    return float(np.sqrt(np.einsum("e,q,eq->", mesh.det_jac,
                                   tab.rule.weights, diff_sq)))


def energy_error(fieldv, exact_fn, exact_grad_fn, sigma_e, boost=3):
    """Broken energy-norm distance to a smooth function.

    Interior jumps of the smooth function cancel; they are evaluated
    anyway so the routine stays correct for any reference field.  Vector
    fields include the boundary trace mismatch (weak no-slip).
    """
    space = fieldv.space
    mesh = space.mesh
    deg = 2 * max(space.degree, 1) + 2 + boost
    tab = space.element_tab(deg)
    pts = map_to_physical(mesh, np.arange(mesh.n_elements), tab.rule.points)
    gh = fieldv.grads_at(space.phys_grads(deg))
    gx = np.asarray(exact_grad_fn(pts[..., 0], pts[..., 1]))
    diff = gh - gx
    acc = np.einsum("e,q,eq->", mesh.det_jac, tab.rule.weights,
                    np.sum(diff**2, axis=tuple(range(2, diff.ndim))))

    ea = mesh.edge_arrays()
    etab = space.edge_tab(deg)
    vl = fieldv.values_at(etab.values[ea.cls_l], elements=ea.elem_l)
    vr = fieldv.values_at(etab.values[ea.cls_r], elements=ea.elem_r)
    ep = _edge_physical_points(ea, etab.rule)
    exl = np.asarray(exact_fn(ep[..., 0], ep[..., 1]))
    jump = (vl - exl) - (vr - exl)
    acc += sigma_e * np.einsum("q,eq->", etab.rule.weights,
                               np.sum(jump**2, axis=tuple(range(2, jump.ndim))))
    if space.ncomp == 2:
        vb = fieldv.values_at(etab.values[ea.b_cls], elements=ea.b_elem)
        bp = _edge_physical_points(ea, etab.rule, boundary=True)
        exb = np.asarray(exact_fn(bp[..., 0], bp[..., 1]))
        acc += sigma_e * np.einsum("q,eq->", etab.rule.weights,
                                   np.sum((vb - exb)**2, axis=2))
    return float(np.sqrt(acc))


ERROR_KEYS = ("l2_phi", "l2_c1", "l2_c2", "l2_u", "l2_p",
              "en_phi", "en_c1", "en_c2", "en_u")


def compute_errors(state, exact, sigma_e, boost=3):
    """Error bundle against closed-form fields evaluated at state.t."""
    t = state.t

    def at(f):
        return lambda x, y: f(x, y, t)

    out = {
        "l2_phi": l2_error(state.phi, at(exact.phi), boost),
        "l2_c1": l2_error(state.c1(), at(exact.c1), boost),
        "l2_c2": l2_error(state.c2(), at(exact.c2), boost),
        "l2_u": l2_error(state.u, at(exact.u), boost),
        "l2_p": l2_error(state.p, at(exact.p), boost),
        "en_phi": energy_error(state.phi, at(exact.phi), at(exact.grad_phi),
                               sigma_e, boost),
        "en_c1": energy_error(state.c1(), at(exact.c1), at(exact.grad_c1),
                              sigma_e, boost),
        "en_c2": energy_error(state.c2(), at(exact.c2), at(exact.grad_c2),
                              sigma_e, boost),
        "en_u": energy_error(state.u, at(exact.u), at(exact.grad_u),
                             sigma_e, boost),
    }
    return out


def make_record(state, disc, params, exact=None, boost=3):
    c1, c2 = state.c1(), state.c2()
    mn1, mx1 = sample_minmax(c1)
    mn2, mx2 = sample_minmax(c2)
    e_elec, e_total = compute_energies(state, disc, params)
    errors = {}
    if exact is not None:
        errors = compute_errors(state, exact, params.sigma_e, boost)
    return DiagnosticsRecord(state.t, compute_mass(c1), compute_mass(c2),
                             mn1, mx1, mn2, mx2, e_elec, e_total, errors)
