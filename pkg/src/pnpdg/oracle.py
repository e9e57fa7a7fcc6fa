"""Independent dense-quadrature evaluation of every assembled form.

Each function below computes a full dense matrix (or load vector) entry by
entry, integrating term by term with a collapsed tensor rule on elements
and a long Gauss rule on edges.  Nothing here shares code with the batched
assembly in :mod:`pnpdg.forms`; agreement to 1e-12 on small meshes is the
primary correctness gate for the solver, and the same routines power the
``oracle-check`` command.

Also hosts the finite-difference residual check of the manufactured
solution: closed-form forcings must satisfy the strong equations when all
derivatives are replaced by high-order difference quotients.
"""

import numpy as np

from .mesh import REF_VERTICES
from .quadrature import duffy_rule, edge_rule
from .space import basis_eval

_TRI_RULE = duffy_rule(14)
_EDGE_RULE = edge_rule(27)


def _dof_values(space, j, elem, ref_pts):
    """Values and physical gradients of global dof j restricted to elem.

    Scalar: (nq,), (nq, 2).  Vector: (nq, 2), (nq, 2, 2).
    """
    nq = len(ref_pts)
    owner, loc = divmod(j, space.nloc)
    if owner != elem:
        if space.ncomp == 1:
            return np.zeros(nq), np.zeros((nq, 2))
        return np.zeros((nq, 2)), np.zeros((nq, 2, 2))
    vals, grads = basis_eval(space, elem, ref_pts)
    return vals[loc], grads[loc]


def _edge_ref_points(mesh, elem, edge_vertices, s):
    la, lb = mesh.local_edge_vertices(elem, edge_vertices)
    va, vb = REF_VERTICES[la], REF_VERTICES[lb]
    return va[None, :] + s[:, None] * (vb - va)[None, :]


def _elem_integral(mesh, elem, integrand):
    """integrand(ref_pts) -> (nq,); returns the element integral."""
    return mesh.det_jac[elem] * np.sum(_TRI_RULE.weights * integrand(_TRI_RULE.points))


def _edge_integral(length, integrand_vals):
    return length * np.sum(_EDGE_RULE.weights * integrand_vals)


class _EdgeTraces:
    """Two-sided traces of one global dof on one interior edge."""

    def __init__(self, space, edge, j):
        mesh = space.mesh
        s = _EDGE_RULE.points
        pl = _edge_ref_points(mesh, edge.left, edge.vertices, s)
        pr = _edge_ref_points(mesh, edge.right, edge.vertices, s)
        self.vl, self.gl = _dof_values(space, j, edge.left, pl)
        self.vr, self.gr = _dof_values(space, j, edge.right, pr)

    @property
    def jump(self):
        return self.vl - self.vr

    @property
    def avg(self):
        return 0.5 * (self.vl + self.vr)

    @property
    def avg_grad(self):
        return 0.5 * (self.gl + self.gr)


def _boundary_trace(space, edge, j):
    s = _EDGE_RULE.points
    pts = _edge_ref_points(space.mesh, edge.element, edge.vertices, s)
    return _dof_values(space, j, edge.element, pts)


def oracle_a1(mesh, space, sigma_e):
    """Dense scalar SIPG matrix, interior edges only."""
    n = space.ndof
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for e in range(mesh.n_elements):
                def term(pts):
                    _, gi = _dof_values(space, i, e, pts)
                    _, gj = _dof_values(space, j, e, pts)
                    return np.sum(gi * gj, axis=1)
                acc += _elem_integral(mesh, e, term)
            for edge in mesh.interior_edges:
                ti = _EdgeTraces(space, edge, i)
                tj = _EdgeTraces(space, edge, j)
                n_e = edge.normal
                acc -= _edge_integral(edge.length, (tj.avg_grad @ n_e) * ti.jump)
                acc -= _edge_integral(edge.length, (ti.avg_grad @ n_e) * tj.jump)
                acc += (sigma_e / edge.length) * _edge_integral(
                    edge.length, tj.jump * ti.jump)
            out[i, j] = acc
    return out


def oracle_a2(mesh, space, sigma_e):
    """Dense vector SIPG matrix over all edges."""
    n = space.ndof
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for e in range(mesh.n_elements):
                def term(pts):
                    _, gi = _dof_values(space, i, e, pts)
                    _, gj = _dof_values(space, j, e, pts)
                    return np.sum(gi * gj, axis=(1, 2))
                acc += _elem_integral(mesh, e, term)
            for edge in mesh.interior_edges:
                ti = _EdgeTraces(space, edge, i)
                tj = _EdgeTraces(space, edge, j)
                n_e = edge.normal
                acc -= _edge_integral(edge.length,
                                      np.sum((tj.avg_grad @ n_e) * ti.jump, axis=1))
                acc -= _edge_integral(edge.length,
                                      np.sum((ti.avg_grad @ n_e) * tj.jump, axis=1))
                acc += (sigma_e / edge.length) * _edge_integral(
                    edge.length, np.sum(tj.jump * ti.jump, axis=1))
            for edge in mesh.boundary_edges:
                vi, gi = _boundary_trace(space, edge, i)
                vj, gj = _boundary_trace(space, edge, j)
                n_e = edge.normal
                acc -= _edge_integral(edge.length, np.sum((gj @ n_e) * vi, axis=1))
                acc -= _edge_integral(edge.length, np.sum((gi @ n_e) * vj, axis=1))
                acc += (sigma_e / edge.length) * _edge_integral(
                    edge.length, np.sum(vj * vi, axis=1))
            out[i, j] = acc
    return out


def oracle_d(mesh, vspace, pspace):
    """Dense coupling matrix; rows pressure, columns velocity."""
    out = np.zeros((pspace.ndof, vspace.ndof))
    for i in range(pspace.ndof):
        for j in range(vspace.ndof):
            acc = 0.0
            for e in range(mesh.n_elements):
                def term(pts):
                    vi, _ = _dof_values(pspace, i, e, pts)
                    _, gj = _dof_values(vspace, j, e, pts)
                    return vi * (gj[:, 0, 0] + gj[:, 1, 1])
                acc += _elem_integral(mesh, e, term)
            for edge in mesh.interior_edges:
                ti = _EdgeTraces(pspace, edge, i)
                tj = _EdgeTraces(vspace, edge, j)
                acc -= _edge_integral(edge.length, ti.avg * (tj.jump @ edge.normal))
            for edge in mesh.boundary_edges:
                vi, _ = _boundary_trace(pspace, edge, i)
                vj, _ = _boundary_trace(vspace, edge, j)
                acc -= _edge_integral(edge.length, vi * (vj @ edge.normal))
            out[i, j] = acc
    return out


def oracle_d_form2(mesh, vspace, pspace):
    """The integrated-by-parts realization of the coupling form.

    The boundary term drops because the pressure carries no boundary data
    (zero exterior jump); agreement with :func:`oracle_d` is an identity.
    """
    out = np.zeros((pspace.ndof, vspace.ndof))
    for i in range(pspace.ndof):
        for j in range(vspace.ndof):
            acc = 0.0
            for e in range(mesh.n_elements):
                def term(pts):
                    _, gi = _dof_values(pspace, i, e, pts)
                    vj, _ = _dof_values(vspace, j, e, pts)
                    return -np.sum(vj * gi, axis=1)
                acc += _elem_integral(mesh, e, term)
            for edge in mesh.interior_edges:
                ti = _EdgeTraces(pspace, edge, i)
                tj = _EdgeTraces(vspace, edge, j)
                acc += _edge_integral(edge.length, (tj.avg @ edge.normal) * ti.jump)
            out[i, j] = acc
    return out


def _field_on_elem(field, elem, ref_pts):
    vals = np.zeros((len(ref_pts), field.space.ncomp))
    grads = np.zeros((len(ref_pts), field.space.ncomp, 2))
    base = field.space.offset(elem)
    for loc in range(field.space.nloc):
        c = field.coef[base + loc]
        if c == 0.0:
            continue
        v, g = _dof_values(field.space, base + loc, elem, ref_pts)
        if field.space.ncomp == 1:
            vals[:, 0] += c * v
            grads[:, 0] += c * g
        else:
            vals += c * v
            grads += c * g
    if field.space.ncomp == 1:
        return vals[:, 0], grads[:, 0]
    return vals, grads


def _field_edge_traces(field, edge):
    s = _EDGE_RULE.points
    pl = _edge_ref_points(field.space.mesh, edge.left, edge.vertices, s)
    pr = _edge_ref_points(field.space.mesh, edge.right, edge.vertices, s)
    vl, _ = _field_on_elem(field, edge.left, pl)
    vr, _ = _field_on_elem(field, edge.right, pr)
    return vl, vr


def _field_boundary_trace(field, edge):
    s = _EDGE_RULE.points
    pts = _edge_ref_points(field.space.mesh, edge.element, edge.vertices, s)
    v, _ = _field_on_elem(field, edge.element, pts)
    return v


def oracle_n1(mesh, w_field, space):
    """Dense skew scalar convection matrix for advecting field w."""
    n = space.ndof
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for e in range(mesh.n_elements):
                def term(pts):
                    wv, wg = _field_on_elem(w_field, e, pts)
                    vi, _ = _dof_values(space, i, e, pts)
                    vj, gj = _dof_values(space, j, e, pts)
                    divw = wg[:, 0, 0] + wg[:, 1, 1]
                    return np.sum(wv * gj, axis=1) * vi + 0.5 * divw * vj * vi
                acc += _elem_integral(mesh, e, term)
            for edge in mesh.interior_edges:
                wl, wr = _field_edge_traces(w_field, edge)
                ti = _EdgeTraces(space, edge, i)
                tj = _EdgeTraces(space, edge, j)
                n_e = edge.normal
                w_avg_n = 0.5 * (wl + wr) @ n_e
                w_jmp_n = (wl - wr) @ n_e
                acc -= _edge_integral(edge.length, w_avg_n * tj.jump * ti.avg)
                prod_avg = 0.5 * (tj.vl * ti.vl + tj.vr * ti.vr)
                acc -= 0.5 * _edge_integral(edge.length, w_jmp_n * prod_avg)
            for edge in mesh.boundary_edges:
                wb = _field_boundary_trace(w_field, edge)
                vi, _ = _boundary_trace(space, edge, i)
                vj, _ = _boundary_trace(space, edge, j)
                acc -= 0.5 * _edge_integral(edge.length, (wb @ edge.normal) * vj * vi)
            out[i, j] = acc
    return out


def oracle_n2(mesh, w_field, vspace):
    """Dense skew vector convection matrix; the boundary terms take the
    exterior trace of the advected velocity as the zero wall state."""
    n = vspace.ndof
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for e in range(mesh.n_elements):
                def term(pts):
                    wv, wg = _field_on_elem(w_field, e, pts)
                    vi, _ = _dof_values(vspace, i, e, pts)
                    vj, gj = _dof_values(vspace, j, e, pts)
                    divw = wg[:, 0, 0] + wg[:, 1, 1]
                    conv = np.einsum("qd,qcd,qc->q", wv, gj, vi)
                    return conv + 0.5 * divw * np.sum(vj * vi, axis=1)
                acc += _elem_integral(mesh, e, term)
            for edge in mesh.interior_edges:
                wl, wr = _field_edge_traces(w_field, edge)
                ti = _EdgeTraces(vspace, edge, i)
                tj = _EdgeTraces(vspace, edge, j)
                n_e = edge.normal
                w_avg_n = 0.5 * (wl + wr) @ n_e
                w_jmp_n = (wl - wr) @ n_e
                acc -= _edge_integral(edge.length,
                                      w_avg_n * np.sum(tj.jump * ti.avg, axis=1))
                prod_avg = 0.5 * (np.sum(tj.vl * ti.vl, axis=1)
                                  + np.sum(tj.vr * ti.vr, axis=1))
                acc -= 0.5 * _edge_integral(edge.length, w_jmp_n * prod_avg)
            for edge in mesh.boundary_edges:
                wb = _field_boundary_trace(w_field, edge)
                vi, _ = _boundary_trace(vspace, edge, i)
                vj, _ = _boundary_trace(vspace, edge, j)
                wn = wb @ edge.normal
                # exterior state zero: {w}.n [v].{phi} -> 1/4 (w.n) v.phi,
                # 1/2 [w].n {v.phi} -> 1/4 (w.n) v.phi
                acc -= 0.25 * _edge_integral(edge.length, wn * np.sum(vj * vi, axis=1))
                acc -= 0.25 * _edge_integral(edge.length, wn * np.sum(vj * vi, axis=1))
            out[i, j] = acc
    return out


def oracle_g(mesh, c_field, m0, space):
    """Dense drift matrix with coefficient c_field + m0."""
    n = space.ndof
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for e in range(mesh.n_elements):
                def term(pts):
                    cv, _ = _field_on_elem(c_field, e, pts)
                    vi, gi = _dof_values(space, i, e, pts)
                    _, gj = _dof_values(space, j, e, pts)
                    return (cv + m0) * np.sum(gj * gi, axis=1)
                acc += _elem_integral(mesh, e, term)
            for edge in mesh.interior_edges:
                s = _EDGE_RULE.points
                pl = _edge_ref_points(mesh, edge.left, edge.vertices, s)
                pr = _edge_ref_points(mesh, edge.right, edge.vertices, s)
                cl, _ = _field_on_elem(c_field, edge.left, pl)
                cr, _ = _field_on_elem(c_field, edge.right, pr)
                cl, cr = cl + m0, cr + m0
                ti = _EdgeTraces(space, edge, i)
                tj = _EdgeTraces(space, edge, j)
                n_e = edge.normal
                flux_j = 0.5 * (cl * (tj.gl @ n_e) + cr * (tj.gr @ n_e))
                flux_i = 0.5 * (cl * (ti.gl @ n_e) + cr * (ti.gr @ n_e))
                acc -= _edge_integral(edge.length, flux_j * ti.jump)
                acc -= _edge_integral(edge.length, flux_i * tj.jump)
            out[i, j] = acc
    return out


def oracle_t_rhs(mesh, d_field, phi_field, vspace):
    """Dense electric-force load, same sign convention as the assembler."""
    out = np.zeros(vspace.ndof)
    for i in range(vspace.ndof):
        acc = 0.0
        for e in range(mesh.n_elements):
            def term(pts):
                dv, _ = _field_on_elem(d_field, e, pts)
                _, gphi = _field_on_elem(phi_field, e, pts)
                vi, _ = _dof_values(vspace, i, e, pts)
                return dv * np.sum(gphi * vi, axis=1)
            acc += _elem_integral(mesh, e, term)
        for edge in mesh.interior_edges:
            dl, dr = _field_edge_traces(d_field, edge)
            pl, pr = _field_edge_traces(phi_field, edge)
            ti = _EdgeTraces(vspace, edge, i)
            acc -= _edge_integral(edge.length,
                                  0.5 * (dl + dr) * (pl - pr) * (ti.avg @ edge.normal))
        out[i] = -acc
    return out


# -- finite-difference residual oracle for manufactured solutions --------

# sixth-order central stencils; step balances truncation against roundoff
_FD_STEP = 5e-3
_D1_COEF = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])
_D2_COEF = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
_OFFSETS = np.arange(-3, 4)


def _stencil(f, x, y, t, axis, coefs, scale):
    args = {"x": x, "y": y, "t": t}
    acc = 0.0
    for c, o in zip(coefs, _OFFSETS):
        if c == 0.0:
            continue
        a = dict(args)
        a[axis] = a[axis] + o * _FD_STEP
        acc = acc + c * f(a["x"], a["y"], a["t"])
    return acc / scale


def _d1(f, x, y, t, axis):
    return _stencil(f, x, y, t, axis, _D1_COEF, _FD_STEP)


def _d2(f, x, y, t, axis):
    return _stencil(f, x, y, t, axis, _D2_COEF, _FD_STEP**2)


def mms_residuals(exact, forcing, params, npts=200, seed=7):
    """Max residuals of the strong equations at random space-time points.

    All derivatives of the exact fields are taken by fourth-order finite
    differences, so the closed-form forcings are checked against an
    independent differentiation path.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.05, 0.95, npts)
    y = rng.uniform(0.05, 0.95, npts)
    t = rng.uniform(0.0, 1.0, npts)

    u1 = lambda *a: exact.u(*a)[..., 0]
    u2 = lambda *a: exact.u(*a)[..., 1]

    def lap(f):
        return _d2(f, x, y, t, "x") + _d2(f, x, y, t, "y")

    c1, c2 = exact.c1(x, y, t), exact.c2(x, y, t)
    charge = c1 - c2
    r_phi = -params.mu * lap(exact.phi) - charge - forcing.f_phi(x, y, t)

    phi_x = _d1(exact.phi, x, y, t, "x")
    phi_y = _d1(exact.phi, x, y, t, "y")
    u1v, u2v = u1(x, y, t), u2(x, y, t)
    r_c = []
    for c_fun, f_c, beta, kappa in ((exact.c1, forcing.f_c1, params.beta1, params.kappa1),
                                    (exact.c2, forcing.f_c2, params.beta2, params.kappa2)):
        cv = c_fun(x, y, t)
        cx, cy = _d1(c_fun, x, y, t, "x"), _d1(c_fun, x, y, t, "y")
        ct = _d1(c_fun, x, y, t, "t")
        drift = cx * phi_x + cy * phi_y + cv * lap(exact.phi)
        r_c.append(ct - kappa * lap(c_fun) + u1v * cx + u2v * cy
                   - beta * drift - f_c(x, y, t))

    fu = forcing.f_u(x, y, t)
    r_u1 = (_d1(u1, x, y, t, "t") - params.nu * lap(u1)
            + u1v * _d1(u1, x, y, t, "x") + u2v * _d1(u1, x, y, t, "y")
            + _d1(exact.p, x, y, t, "x") + charge * phi_x - fu[..., 0])
    r_u2 = (_d1(u2, x, y, t, "t") - params.nu * lap(u2)
            + u1v * _d1(u2, x, y, t, "x") + u2v * _d1(u2, x, y, t, "y")
            + _d1(exact.p, x, y, t, "y") + charge * phi_y - fu[..., 1])
    div_u = _d1(u1, x, y, t, "x") + _d1(u2, x, y, t, "y")

    return {
        "potential": float(np.abs(r_phi).max()),
        "c1": float(np.abs(r_c[0]).max()),
        "c2": float(np.abs(r_c[1]).max()),
        "momentum": float(max(np.abs(r_u1).max(), np.abs(r_u2).max())),
        "divergence": float(np.abs(div_u).max()),
    }
