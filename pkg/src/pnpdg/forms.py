"""Assembly of the interior-penalty bilinear and trilinear forms.

Every assembler returns local blocks indexed ``[edge_or_elem, test, trial]``
scattered into CSR.  Boundary handling follows the role of each operator:

* scalar diffusion (``assemble_a1``): interior edges only, so homogeneous
  Neumann data is natural;
* vector diffusion (``assemble_a2``) and the velocity-pressure coupling
  (``assemble_d``): all edges, enforcing no-slip weakly;
* convection (``assemble_n1``/``assemble_n2``): interior jump terms in the
  centered skew form; on the boundary the exterior trace of the advected
  quantity is the (zero) wall state, which contributes
  ``-1/2 (w.n) (trial . test)`` per boundary edge.  With this closure both
  operators are exactly skew-symmetric for any discrete advecting field,
  which is what the discrete energy and mass budgets rely on;
* drift (``assemble_g``) and electric force (``assemble_t_rhs``): interior
  edges only.

Default quadrature is exact for every assembled integrand, including the
triple products of the convection and drift terms.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import BoundaryTag
from .space import map_to_physical


class FormsError(Exception):
    pass


@dataclass
class FormParams:
    """Penalty and physical coefficients of the coupled system."""

    sigma_e: float = 10.0
    mu: float = 1.0
    nu: float = 1.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    beta1: float = 1.0
    beta2: float = -1.0

    def __post_init__(self):
        if self.sigma_e <= 0.0:
            raise FormsError("penalty sigma_e must be positive")
        for name in ("mu", "nu", "kappa1", "kappa2"):
            if getattr(self, name) <= 0.0:
                raise FormsError(f"{name} must be positive")


@dataclass
class AssembledOperator:
    mat: sp.csr_matrix
    row_space: object
    col_space: object


def default_rules(degree):
    """(element, edge) quadrature exactness covering all triple products."""
    k = max(degree, 1)
    return max(2 * k + 2, 3 * k), max(2 * k + 1, 3 * k)


class _Accumulator:
    """COO triplet collector for batched block scatter."""

    def __init__(self, row_space, col_space):
        self.row_space = row_space
        self.col_space = col_space
        self.rows, self.cols, self.vals = [], [], []

    def add(self, row_elems, col_elems, blocks, row_comp=0, col_comp=0):
        """Scatter blocks (n, nr, nc) of scalar sub-dofs into the global
        matrix at the given component offsets."""
        n, nr, nc = blocks.shape
        if n == 0:
            return
        roff = (row_elems * self.row_space.nloc
                + row_comp * self.row_space.nloc_scalar)
        coff = (col_elems * self.col_space.nloc
                + col_comp * self.col_space.nloc_scalar)
        r = roff[:, None, None] + np.arange(nr)[None, :, None]
        c = coff[:, None, None] + np.arange(nc)[None, None, :]
        self.rows.append(np.broadcast_to(r, blocks.shape).ravel())
        self.cols.append(np.broadcast_to(c, blocks.shape).ravel())
        self.vals.append(blocks.ravel())

    def build(self):
        shape = (self.row_space.ndof, self.col_space.ndof)
        if not self.rows:
            return sp.csr_matrix(shape)
        mat = sp.coo_matrix(
            (np.concatenate(self.vals),
             (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=shape).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return mat


def _sipg_scalar_blocks(space, sigma_e, edge_deg, include_boundary,
                        boundary_mask=None):
    """SIPG edge blocks (consistency, adjoint, penalty) for one scalar basis.

    Returns interior blocks (ll, lr, rl, rr) and, when requested, boundary
    blocks; each block is (n_edges, nloc_s, nloc_s) with [test, trial].
    """
    mesh = space.mesh
    ea = mesh.edge_arrays()
    t = space.edge_side_tables(edge_deg)
    w = t["rule"].weights
    h = ea.lengths

    def pair(v_test, sgn_test, gn_test, v_trial, sgn_trial, gn_trial):
        pen = sigma_e * sgn_test * sgn_trial * np.einsum(
            "q,eiq,ejq->eij", w, v_test, v_trial)
        cons = -0.5 * sgn_test * np.einsum(
            "e,q,eiq,ejq->eij", h, w, v_test, gn_trial)
        adj = -0.5 * sgn_trial * np.einsum(
            "e,q,eiq,ejq->eij", h, w, gn_test, v_trial)
        return pen + cons + adj

    ll = pair(t["vl"], 1.0, t["gnl"], t["vl"], 1.0, t["gnl"])
    lr = pair(t["vl"], 1.0, t["gnl"], t["vr"], -1.0, t["gnr"])
    rl = pair(t["vr"], -1.0, t["gnr"], t["vl"], 1.0, t["gnl"])
    rr = pair(t["vr"], -1.0, t["gnr"], t["vr"], -1.0, t["gnr"])
    out = {"ll": ll, "lr": lr, "rl": rl, "rr": rr}
    if include_boundary:
        vb, gnb, hb = t["vb"], t["gnb"], ea.b_lengths
        if boundary_mask is not None:
            vb, gnb, hb = vb[boundary_mask], gnb[boundary_mask], hb[boundary_mask]
        pen = sigma_e * np.einsum("q,eiq,ejq->eij", w, vb, vb)
        cons = -np.einsum("e,q,eiq,ejq->eij", hb, w, vb, gnb)
        adj = -np.einsum("e,q,eiq,ejq->eij", hb, w, gnb, vb)
        out["bb"] = pen + cons + adj
    return out


def _stiffness_blocks(space, elem_deg):
    """Volume gradient-gradient blocks (ne, nloc_s, nloc_s)."""
    tab = space.element_tab(elem_deg)
    g = space.phys_grads(elem_deg)
    return np.einsum("e,q,eiqd,ejqd->eij", space.mesh.det_jac,
                     tab.rule.weights, g, g)


def assemble_a1(mesh, space, sigma_e, quad=None):
    """Scalar SIPG diffusion form over interior edges only."""
    elem_deg, edge_deg = quad or default_rules(space.degree)
    acc = _Accumulator(space, space)
    elems = np.arange(mesh.n_elements)
    acc.add(elems, elems, _stiffness_blocks(space, elem_deg))
    ea = mesh.edge_arrays()
    blocks = _sipg_scalar_blocks(space, sigma_e, edge_deg, include_boundary=False)
    acc.add(ea.elem_l, ea.elem_l, blocks["ll"])
    acc.add(ea.elem_l, ea.elem_r, blocks["lr"])
    acc.add(ea.elem_r, ea.elem_l, blocks["rl"])
    acc.add(ea.elem_r, ea.elem_r, blocks["rr"])
    return AssembledOperator(acc.build(), space, space)


def assemble_a2(mesh, space, sigma_e, quad=None):
    """Vector SIPG diffusion form over all edges (weak no-slip)."""
    if space.ncomp != 2:
        raise FormsError("assemble_a2 expects a vector space")
    elem_deg, edge_deg = quad or default_rules(space.degree)
    acc = _Accumulator(space, space)
    elems = np.arange(mesh.n_elements)
    stiff = _stiffness_blocks(space, elem_deg)
    ea = mesh.edge_arrays()
    blocks = _sipg_scalar_blocks(space, sigma_e, edge_deg, include_boundary=True)
    for c in range(2):
        acc.add(elems, elems, stiff, row_comp=c, col_comp=c)
        acc.add(ea.elem_l, ea.elem_l, blocks["ll"], c, c)
        acc.add(ea.elem_l, ea.elem_r, blocks["lr"], c, c)
        acc.add(ea.elem_r, ea.elem_l, blocks["rl"], c, c)
        acc.add(ea.elem_r, ea.elem_r, blocks["rr"], c, c)
        acc.add(ea.b_elem, ea.b_elem, blocks["bb"], c, c)
    return AssembledOperator(acc.build(), space, space)


def assemble_d(mesh, vspace, pspace, quad=None):
    """Velocity-pressure coupling: rows test pressure, columns trial velocity."""
    if pspace.degree != vspace.degree - 1:
        raise FormsError("pressure degree must be velocity degree minus one")
    elem_deg, edge_deg = quad or default_rules(vspace.degree)
    acc = _Accumulator(pspace, vspace)
    elems = np.arange(mesh.n_elements)
    ptab = pspace.element_tab(elem_deg)
    gv = vspace.phys_grads(elem_deg)
    ea = mesh.edge_arrays()
    tp = pspace.edge_side_tables(edge_deg)
    tv = vspace.edge_side_tables(edge_deg)
    w = tp["rule"].weights
    for c in range(2):
        vol = np.einsum("e,q,iq,ejq->eij", mesh.det_jac, ptab.rule.weights,
                        ptab.values, gv[..., c])
        acc.add(elems, elems, vol, col_comp=c)
        nc = ea.normals[:, c]
        for p_side, p_elems, vp in (("l", ea.elem_l, tp["vl"]),
                                    ("r", ea.elem_r, tp["vr"])):
            for v_side, v_elems, vv, sgn in (("l", ea.elem_l, tv["vl"], 1.0),
                                             ("r", ea.elem_r, tv["vr"], -1.0)):
                blk = -0.5 * sgn * np.einsum(
                    "e,q,eiq,ejq->eij", ea.lengths * nc, w, vp, vv)
                acc.add(p_elems, v_elems, blk, col_comp=c)
        blk = -np.einsum("e,q,eiq,ejq->eij",
                         ea.b_lengths * ea.b_normals[:, c], w, tp["vb"], tv["vb"])
        acc.add(ea.b_elem, ea.b_elem, blk, col_comp=c)
    return AssembledOperator(acc.build(), pspace, vspace)


def _convection_blocks(mesh, w_field, space, elem_deg, edge_deg):
    """Shared kernel of the two skew convection forms on one scalar basis.

    Volume: (w . grad trial) test + 1/2 (div w) trial test.  Interior
    edges: -{w}.n [trial] {test} - 1/2 [w].n {trial test}.  Boundary:
    -1/2 (w.n) trial test (zero exterior wall state).
    """
    tab = space.element_tab(elem_deg)
    wv = w_field.values_at(w_field.space.element_tab(elem_deg).values)
    gw = w_field.grads_at(w_field.space.phys_grads(elem_deg))
    divw = gw[:, :, 0, 0] + gw[:, :, 1, 1]
    g = space.phys_grads(elem_deg)
    wq = tab.rule.weights
    vol = np.einsum("e,q,iq,eqd,ejqd->eij", mesh.det_jac, wq, tab.values, wv, g)
    vol += 0.5 * np.einsum("e,q,eq,iq,jq->eij", mesh.det_jac, wq, divw,
                           tab.values, tab.values)

    ea = mesh.edge_arrays()
    t = space.edge_side_tables(edge_deg)
    tw = w_field.space.edge_side_tables(edge_deg)
    w = t["rule"].weights
    wl = w_field.values_at(tw["vl"], elements=ea.elem_l)
    wr = w_field.values_at(tw["vr"], elements=ea.elem_r)
    wn_avg = 0.5 * np.einsum("eqd,ed->eq", wl + wr, ea.normals)
    wn_jmp = np.einsum("eqd,ed->eq", wl - wr, ea.normals)

    def cross(v_test, v_trial, sgn_trial):
        return -0.5 * sgn_trial * np.einsum(
            "e,q,eq,eiq,ejq->eij", ea.lengths, w, wn_avg, v_test, v_trial)

    ll = cross(t["vl"], t["vl"], 1.0)
    lr = cross(t["vl"], t["vr"], -1.0)
    rl = cross(t["vr"], t["vl"], 1.0)
    rr = cross(t["vr"], t["vr"], -1.0)
    # same-side average of the trial*test product
    ll += -0.25 * np.einsum("e,q,eq,eiq,ejq->eij",
                            ea.lengths, w, wn_jmp, t["vl"], t["vl"])
    rr += -0.25 * np.einsum("e,q,eq,eiq,ejq->eij",
                            ea.lengths, w, wn_jmp, t["vr"], t["vr"])

    wb = w_field.values_at(tw["vb"], elements=ea.b_elem)
    wn_b = np.einsum("eqd,ed->eq", wb, ea.b_normals)
    bb = -0.5 * np.einsum("e,q,eq,eiq,ejq->eij",
                          ea.b_lengths, w, wn_b, t["vb"], t["vb"])
    return vol, {"ll": ll, "lr": lr, "rl": rl, "rr": rr, "bb": bb}


def assemble_n1(mesh, w_field, space, quad=None):
    """Skew-stabilized scalar convection by the discrete velocity w."""
    if w_field.space.ncomp != 2:
        raise FormsError("advecting field must be vector-valued")
    elem_deg, edge_deg = quad or default_rules(
        max(space.degree, w_field.space.degree))
    vol, eb = _convection_blocks(mesh, w_field, space, elem_deg, edge_deg)
    acc = _Accumulator(space, space)
    elems = np.arange(mesh.n_elements)
    ea = mesh.edge_arrays()
    acc.add(elems, elems, vol)
    acc.add(ea.elem_l, ea.elem_l, eb["ll"])
    acc.add(ea.elem_l, ea.elem_r, eb["lr"])
    acc.add(ea.elem_r, ea.elem_l, eb["rl"])
    acc.add(ea.elem_r, ea.elem_r, eb["rr"])
    acc.add(ea.b_elem, ea.b_elem, eb["bb"])
    return AssembledOperator(acc.build(), space, space)


def assemble_n2(mesh, w_field, vspace, quad=None):
    """Skew-stabilized vector convection; component-diagonal blocks."""
    if vspace.ncomp != 2:
        raise FormsError("assemble_n2 expects a vector space")
    elem_deg, edge_deg = quad or default_rules(
        max(vspace.degree, w_field.space.degree))
    vol, eb = _convection_blocks(mesh, w_field, vspace, elem_deg, edge_deg)
    acc = _Accumulator(vspace, vspace)
    elems = np.arange(mesh.n_elements)
    ea = mesh.edge_arrays()
    for c in range(2):
        acc.add(elems, elems, vol, c, c)
        acc.add(ea.elem_l, ea.elem_l, eb["ll"], c, c)
        acc.add(ea.elem_l, ea.elem_r, eb["lr"], c, c)
        acc.add(ea.elem_r, ea.elem_l, eb["rl"], c, c)
        acc.add(ea.elem_r, ea.elem_r, eb["rr"], c, c)
        acc.add(ea.b_elem, ea.b_elem, eb["bb"], c, c)
    return AssembledOperator(acc.build(), vspace, vspace)


def assemble_g(mesh, c_field, m0, space, quad=None):
    """Drift form with frozen coefficient c_field + m0, acting on the
    potential (trial) and tested against the concentration space."""
    elem_deg, edge_deg = quad or default_rules(space.degree)
    tab = space.element_tab(elem_deg)
    chi = c_field.values_at(c_field.space.element_tab(elem_deg).values) + m0
    g = space.phys_grads(elem_deg)
    vol = np.einsum("e,q,eq,eiqd,ejqd->eij", mesh.det_jac, tab.rule.weights,
                    chi, g, g)
    acc = _Accumulator(space, space)
    elems = np.arange(mesh.n_elements)
    acc.add(elems, elems, vol)

    ea = mesh.edge_arrays()
    t = space.edge_side_tables(edge_deg)
    tc = c_field.space.edge_side_tables(edge_deg)
    w = t["rule"].weights
    chi_l = c_field.values_at(tc["vl"], elements=ea.elem_l) + m0
    chi_r = c_field.values_at(tc["vr"], elements=ea.elem_r) + m0
    sides = {"l": (ea.elem_l, t["vl"], t["gnl"], chi_l, 1.0),
             "r": (ea.elem_r, t["vr"], t["gnr"], chi_r, -1.0)}
    for st, (e_t, v_t, gn_t, chi_t, sgn_t) in sides.items():
        for sj, (e_j, v_j, gn_j, chi_j, sgn_j) in sides.items():
            # -{chi grad(trial)}.n [test] - {chi grad(test)}.n [trial]
            blk = -0.5 * sgn_t * np.einsum(
                "e,q,eq,eiq,ejq->eij", ea.lengths, w, chi_j, v_t, gn_j)
            blk += -0.5 * sgn_j * np.einsum(
                "e,q,eq,eiq,ejq->eij", ea.lengths, w, chi_t, gn_t, v_j)
            acc.add(e_t, e_j, blk)
    return AssembledOperator(acc.build(), space, space)


def assemble_t_rhs(mesh, d_field, phi_field, vspace, quad=None):
    """Electric body-force load: minus the force form of (net charge d,
    potential phi) tested against the velocity space."""
    elem_deg, edge_deg = quad or default_rules(
        max(vspace.degree, d_field.space.degree))
    tab = vspace.element_tab(elem_deg)
    sspace = d_field.space
    dv = d_field.values_at(sspace.element_tab(elem_deg).values)
    gphi = phi_field.grads_at(phi_field.space.phys_grads(elem_deg))
    wq = tab.rule.weights
    out = np.zeros((mesh.n_elements, 2, vspace.nloc_scalar))
    out -= np.einsum("e,q,eq,eqc,iq->eci", mesh.det_jac, wq, dv, gphi,
                     tab.values)

    ea = mesh.edge_arrays()
    t = vspace.edge_side_tables(edge_deg)
    ts = sspace.edge_side_tables(edge_deg)
    tphi = phi_field.space.edge_side_tables(edge_deg)
    w = t["rule"].weights
    d_avg = 0.5 * (d_field.values_at(ts["vl"], elements=ea.elem_l)
                   + d_field.values_at(ts["vr"], elements=ea.elem_r))
    phi_jmp = (phi_field.values_at(tphi["vl"], elements=ea.elem_l)
               - phi_field.values_at(tphi["vr"], elements=ea.elem_r))
    for v_elems, vv in ((ea.elem_l, t["vl"]), (ea.elem_r, t["vr"])):
        contrib = 0.5 * np.einsum("e,q,eq,eq,eiq,ec->eci",
                                  ea.lengths, w, d_avg, phi_jmp, vv, ea.normals)
        np.add.at(out, v_elems, contrib)
    return out.reshape(-1)


def assemble_a1_mixed_bc(mesh, space, sigma_e, dirichlet, flux, mu=1.0,
                         quad=None):
    """Scalar SIPG operator with weak Dirichlet and flux boundary data.

    `dirichlet` maps BoundaryTag to a constant value g, `flux` maps
    BoundaryTag to a constant surface flux; untagged boundary edges are
    insulated (natural).  Returns the operator (unscaled by mu) and the
    load functional, with the Dirichlet part already scaled by mu.
    """
    overlap = set(dirichlet) & set(flux)
    if overlap:
        raise FormsError(f"tags assigned to both Dirichlet and flux: {overlap}")
    for tag in list(dirichlet) + list(flux):
        if not isinstance(tag, BoundaryTag):
            raise FormsError(f"unknown boundary tag {tag!r}")
    base = assemble_a1(mesh, space, sigma_e, quad=quad)
    _, edge_deg = quad or default_rules(space.degree)
    ea = mesh.edge_arrays()
    tags = np.array([t.value for t in ea.b_tags])
    load = np.zeros(space.ndof)
    acc = _Accumulator(space, space)
    t = space.edge_side_tables(edge_deg)
    w = t["rule"].weights
    for tag, g in dirichlet.items():
        mask = tags == tag.value
        if not np.any(mask):
            continue
        vb, gnb, hb = t["vb"][mask], t["gnb"][mask], ea.b_lengths[mask]
        pen = sigma_e * np.einsum("q,eiq,ejq->eij", w, vb, vb)
        cons = -np.einsum("e,q,eiq,ejq->eij", hb, w, vb, gnb)
        adj = -np.einsum("e,q,eiq,ejq->eij", hb, w, gnb, vb)
        acc.add(ea.b_elem[mask], ea.b_elem[mask], pen + cons + adj)
        lb = mu * g * (sigma_e * np.einsum("q,eiq->ei", w, vb)
                       - np.einsum("e,q,eiq->ei", hb, w, gnb))
        np.add.at(load.reshape(mesh.n_elements, -1), ea.b_elem[mask], lb)
    for tag, sigma_s in flux.items():
        mask = tags == tag.value
        if not np.any(mask):
            continue
        vb, hb = t["vb"][mask], ea.b_lengths[mask]
        lb = sigma_s * np.einsum("e,q,eiq->ei", hb, w, vb)
        np.add.at(load.reshape(mesh.n_elements, -1), ea.b_elem[mask], lb)
    mat = base.mat + acc.build()
    mat.sum_duplicates()
    mat.sort_indices()
    return AssembledOperator(mat, space, space), load


def mass_matrix(space):
    """Diagonal mass matrix of the orthonormal modal basis."""
    return sp.diags(space.mass_diagonal()).tocsr()


def assemble_load(space, f, quad_degree=None):
    """Load vector (f, test) by element quadrature; f as in project_field."""
    degree = quad_degree if quad_degree is not None else default_rules(
        space.degree)[0] + 2
    tab = space.element_tab(degree)
    mesh = space.mesh
    pts = map_to_physical(mesh, np.arange(mesh.n_elements), tab.rule.points)
    fv = np.asarray(f(pts[..., 0].ravel(), pts[..., 1].ravel()), dtype=float)
    ne, nq = mesh.n_elements, tab.rule.npoints
    if space.ncomp == 1:
        fv = fv.reshape(ne, nq)
        out = np.einsum("e,q,eq,iq->ei", mesh.det_jac, tab.rule.weights, fv,
                        tab.values)
    else:
        fv = fv.reshape(ne, nq, 2)
        out = np.einsum("e,q,eqc,iq->eci", mesh.det_jac, tab.rule.weights, fv,
                        tab.values)
    return out.reshape(-1)


def energy_gram(space, sigma_e, quad=None):
    """Gram matrix of the broken energy norm (used by spectral tests)."""
    elem_deg, edge_deg = quad or default_rules(space.degree)
    acc = _Accumulator(space, space)
    elems = np.arange(space.mesh.n_elements)
    stiff = _stiffness_blocks(space, elem_deg)
    ea = space.mesh.edge_arrays()
    t = space.edge_side_tables(edge_deg)
    w = t["rule"].weights

    def jump_pen(v_test, sgn_test, v_trial, sgn_trial):
        return sigma_e * sgn_test * sgn_trial * np.einsum(
            "q,eiq,ejq->eij", w, v_test, v_trial)

    blocks = {
        ("l", "l"): jump_pen(t["vl"], 1, t["vl"], 1),
        ("l", "r"): jump_pen(t["vl"], 1, t["vr"], -1),
        ("r", "l"): jump_pen(t["vr"], -1, t["vl"], 1),
        ("r", "r"): jump_pen(t["vr"], -1, t["vr"], -1),
    }
    side_elems = {"l": ea.elem_l, "r": ea.elem_r}
    for c in range(space.ncomp):
        acc.add(elems, elems, stiff, c, c)
        for (st, sj), blk in blocks.items():
            acc.add(side_elems[st], side_elems[sj], blk, c, c)
        if space.ncomp == 2:
            bb = sigma_e * np.einsum("q,eiq,ejq->eij", w, t["vb"], t["vb"])
            acc.add(ea.b_elem, ea.b_elem, bb, c, c)
    return AssembledOperator(acc.build(), space, space)
