"""Broken polynomial spaces, local bases and discrete field handling.

Each element carries the same modal basis: monomials on the reference
triangle orthonormalized with respect to the reference L2 inner product.
Under the affine map this makes every element mass matrix equal to
``det(J) * I``, so L2 projections and mass solves are diagonal.

Vector-valued spaces store the two components of an element block
consecutively: local dof ``c * nloc_scalar + i`` is basis ``i`` times the
unit vector ``e_c``.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .mesh import REF_VERTICES
from .quadrature import edge_rule, triangle_rule


class SpaceError(Exception):
    pass


def barycentric_coords(points):
    """P1 Lagrange (barycentric) basis values, shape (npts, 3)."""
    pts = np.atleast_2d(points)
    return np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])


def _monomial_exponents(degree):
    return [(a, b) for tot in range(degree + 1) for a in range(tot, -1, -1)
            for b in [tot - a]]


class ModalBasis:
    """Orthonormalized monomial basis on the reference triangle."""

    def __init__(self, degree):
        self.degree = degree
        self.exponents = _monomial_exponents(degree)
        n = len(self.exponents)
        gram = np.empty((n, n))
        for i, (a, b) in enumerate(self.exponents):
            for j, (c, d) in enumerate(self.exponents):
                gram[i, j] = (factorial(a + c) * factorial(b + d)
                              / factorial(a + c + b + d + 2))
        chol = np.linalg.cholesky(gram)
        self.coeffs = np.linalg.inv(chol)  # rows: basis functions over monomials

    @property
    def nloc(self):
        return len(self.exponents)

    def eval(self, points):
        """Values at reference points, shape (nloc, npts)."""
        pts = np.atleast_2d(points)
        mono = np.stack([pts[:, 0] ** a * pts[:, 1] ** b
                         for a, b in self.exponents])
        return self.coeffs @ mono

    def eval_grad(self, points):
        """Reference gradients at reference points, shape (nloc, npts, 2)."""
        pts = np.atleast_2d(points)
        x, y = pts[:, 0], pts[:, 1]
        dx = np.stack([a * x ** max(a - 1, 0) * y ** b if a > 0 else np.zeros_like(x)
                       for a, b in self.exponents])
        dy = np.stack([b * x ** a * y ** max(b - 1, 0) if b > 0 else np.zeros_like(x)
                       for a, b in self.exponents])
        return np.stack([self.coeffs @ dx, self.coeffs @ dy], axis=-1)


def _edge_class_points(s):
    """Reference points of every side class at edge parameters s, (6, nq, 2)."""
    out = np.empty((6, len(s), 2))
    from .mesh import EDGE_CLASS
    for (la, lb), cls in EDGE_CLASS.items():
        va, vb = REF_VERTICES[la], REF_VERTICES[lb]
        out[cls] = va[None, :] + s[:, None] * (vb - va)[None, :]
    return out


@dataclass
class ElementTab:
    rule: object
    values: np.ndarray      # (nloc_s, nq)
    ref_grads: np.ndarray   # (nloc_s, nq, 2)


@dataclass
class EdgeTab:
    rule: object
    values: np.ndarray      # (6, nloc_s, nq)
    ref_grads: np.ndarray   # (6, nloc_s, nq, 2)


class BrokenSpace:
    """Fully discontinuous P_k space (scalar or 2-vector) on a TriMesh."""

    def __init__(self, mesh, degree, ncomp=1, zero_mean=False, kind=None):
        if degree < 0:
            raise SpaceError("degree must be nonnegative")
        self.mesh = mesh
        self.degree = degree
        self.ncomp = ncomp
        self.zero_mean = zero_mean
        self.kind = kind or ("vector2" if ncomp == 2 else "scalar")
        self.basis = ModalBasis(degree)
        self.nloc_scalar = self.basis.nloc
        self.nloc = ncomp * self.nloc_scalar
        self.ndof = mesh.n_elements * self.nloc
        self._element_tabs = {}
        self._edge_tabs = {}
        self._phys_grads = {}
        self._edge_side_tabs = {}

    # -- tabulation ----------------------------------------------------

    def element_tab(self, degree):
        if degree not in self._element_tabs:
            rule = triangle_rule(degree)
            self._element_tabs[degree] = ElementTab(
                rule, self.basis.eval(rule.points), self.basis.eval_grad(rule.points))
        return self._element_tabs[degree]

    def edge_tab(self, degree):
        if degree not in self._edge_tabs:
            rule = edge_rule(degree)
            pts = _edge_class_points(rule.points)
            vals = np.stack([self.basis.eval(pts[c]) for c in range(6)])
            grads = np.stack([self.basis.eval_grad(pts[c]) for c in range(6)])
            self._edge_tabs[degree] = EdgeTab(rule, vals, grads)
        return self._edge_tabs[degree]

    def phys_grads(self, degree):
        """Physical-space basis gradients at element quad points, (ne, nloc_s, nq, 2)."""
        if degree not in self._phys_grads:
            tab = self.element_tab(degree)
            self._phys_grads[degree] = np.einsum(
                "edr,iqr->eiqd", self.mesh.inv_jac_t, tab.ref_grads)
        return self._phys_grads[degree]

    def edge_side_tables(self, degree):
        """Per-edge-side basis traces and normal derivatives (cached).

        Keys: interior sides ``vl``, ``vr`` (values, (nE, nloc_s, nq)),
        ``gl``, ``gr`` (physical gradients, (nE, nloc_s, nq, 2)), ``gnl``,
        ``gnr`` (normal derivatives); boundary analogues ``vb``, ``gb``,
        ``gnb``; plus the shared rule.
        """
        if degree not in self._edge_side_tabs:
            ea = self.mesh.edge_arrays()
            etab = self.edge_tab(degree)

            def side(elems, cls, normals):
                vals = etab.values[cls]
                grads = np.einsum("edr,eiqr->eiqd",
                                  self.mesh.inv_jac_t[elems], etab.ref_grads[cls])
                gn = np.einsum("eiqd,ed->eiq", grads, normals)
                return vals, grads, gn

            vl, gl, gnl = side(ea.elem_l, ea.cls_l, ea.normals)
            vr, gr, gnr = side(ea.elem_r, ea.cls_r, ea.normals)
            vb, gb, gnb = side(ea.b_elem, ea.b_cls, ea.b_normals)
            self._edge_side_tabs[degree] = {
                "rule": etab.rule, "vl": vl, "gl": gl, "gnl": gnl,
                "vr": vr, "gr": gr, "gnr": gnr,
                "vb": vb, "gb": gb, "gnb": gnb,
            }
        return self._edge_side_tabs[degree]

    # -- dof bookkeeping -----------------------------------------------

    def offset(self, element):
        return element * self.nloc

    def new_field(self):
        return FieldVector(self, np.zeros(self.ndof))

    def integral_vector(self):
        """Vector of basis-function integrals; dotted with coefficients
        it gives the exact integral of a scalar field."""
        if self.ncomp != 1:
            raise SpaceError("integral_vector is for scalar spaces")
        if getattr(self, "_integral_vector", None) is None:
            tab = self.element_tab(max(self.degree, 1))
            ref = tab.values @ tab.rule.weights          # (nloc_s,)
            self._integral_vector = np.einsum(
                "e,i->ei", self.mesh.det_jac, ref).reshape(-1)
        return self._integral_vector

    def mass_diagonal(self):
        """Diagonal of the mass matrix (det J per element block)."""
        return np.repeat(self.mesh.det_jac, self.nloc)

    def constant_field(self, value=1.0):
        """FieldVector representing the constant function `value` (scalar)."""
        if self.ncomp != 1:
            raise SpaceError("constant_field is for scalar spaces")
        coef = np.zeros(self.ndof)
        coef[:: self.nloc] = value / float(self.basis.coeffs[0, 0])
        return FieldVector(self, coef)


@dataclass
class FieldVector:
    """Coefficient vector of one discrete field against a BrokenSpace."""

    space: BrokenSpace
    coef: np.ndarray

    def __post_init__(self):
        if len(self.coef) != self.space.ndof:
            raise SpaceError("coefficient length does not match space")

    def copy(self):
        return FieldVector(self.space, self.coef.copy())

    def by_element(self):
        """(ne, ncomp, nloc_s) view of the coefficients."""
        ne = self.space.mesh.n_elements
        return self.coef.reshape(ne, self.space.ncomp, self.space.nloc_scalar)

    def values_at(self, tab_values, elements=None):
        """Field values from tabulated basis values (nloc_s, nq) or (n, nloc_s, nq).

        Returns (ne, nq) for scalar fields, (ne, nq, 2) for vector fields.
        """
        ce = self.by_element()
        if elements is not None:
            ce = ce[elements]
        if tab_values.ndim == 2:
            vals = np.einsum("eci,iq->ecq", ce, tab_values)
        else:
            vals = np.einsum("eci,eiq->ecq", ce, tab_values)
        if self.space.ncomp == 1:
            return vals[:, 0, :]
        return np.transpose(vals, (0, 2, 1))

    def grads_at(self, phys_grads, elements=None):
        """Broken gradients from physical gradient tables (ne, nloc_s, nq, 2).

        Returns (ne, nq, 2) for scalar fields, (ne, nq, 2, 2) with layout
        [component, direction] for vector fields.
        """
        ce = self.by_element()
        if elements is not None:
            ce = ce[elements]
            phys_grads = phys_grads[elements]
        g = np.einsum("eci,eiqd->ecqd", ce, phys_grads)
        if self.space.ncomp == 1:
            return g[:, 0]
        return np.transpose(g, (0, 2, 1, 3))


def basis_eval(space, element, points):
    """Physical values and gradients of all local dofs of one element.

    Returns ``(values, grads)`` with shapes (nloc, npts[, ncomp]) and
    (nloc, npts, 2[, ncomp is folded into the dof index]).
    """
    if not 0 <= element < space.mesh.n_elements:
        raise SpaceError(f"unknown element {element}")
    pts = np.atleast_2d(points)
    vals_s = space.basis.eval(pts)
    grads_s = np.einsum("dr,iqr->iqd", space.mesh.inv_jac_t[element],
                        space.basis.eval_grad(pts))
    if space.ncomp == 1:
        return vals_s, grads_s
    nloc_s, nq = vals_s.shape
    vals = np.zeros((2 * nloc_s, nq, 2))
    grads = np.zeros((2 * nloc_s, nq, 2, 2))
    for c in range(2):
        vals[c * nloc_s:(c + 1) * nloc_s, :, c] = vals_s
        grads[c * nloc_s:(c + 1) * nloc_s, :, c, :] = grads_s
    return vals, grads


def map_to_physical(mesh, elements, ref_points):
    """Physical coordinates of reference points on the given elements."""
    v0 = mesh.vertices[mesh.triangles[elements, 0]]
    return v0[:, None, :] + np.einsum(
        "edr,qr->eqd", mesh.jacobians[elements], np.atleast_2d(ref_points))


def project_field(space, f, quad_degree=None):
    """Element-wise L2 projection of a pointwise function onto the space.

    `f(x, y)` maps coordinate arrays of shape (n,) to values (n,) for
    scalar spaces or (n, 2) for vector spaces.
    """
    degree = quad_degree if quad_degree is not None else 2 * space.degree + 2
    tab = space.element_tab(degree)
    mesh = space.mesh
    pts = map_to_physical(mesh, np.arange(mesh.n_elements), tab.rule.points)
    fv = np.asarray(f(pts[..., 0].ravel(), pts[..., 1].ravel()), dtype=float)
    ne, nq = mesh.n_elements, tab.rule.npoints
    if space.ncomp == 1:
        fv = fv.reshape(ne, nq)
        coef = np.einsum("q,eq,iq->ei", tab.rule.weights, fv, tab.values)
        return FieldVector(space, coef.reshape(-1))
    fv = fv.reshape(ne, nq, 2)
    coef = np.einsum("q,eqc,iq->eci", tab.rule.weights, fv, tab.values)
    return FieldVector(space, coef.reshape(-1))


def lattice_nodes(degree):
    """Principal-lattice interpolation nodes on the reference triangle."""
    k = degree
    if k == 0:
        return np.array([[1 / 3, 1 / 3]])
    return np.array([(i / k, j / k) for tot in range(k + 1)
                     for i in range(tot, -1, -1) for j in [tot - i]])


def interpolate_field(space, f):
    """Nodal (Lagrange) interpolation at the principal lattice points.

    Unlike the L2 projection this reproduces the sign of nonnegative data
    at the nodes, which the positivity monitoring of the physical runs
    relies on at t = 0.
    """
    nodes = lattice_nodes(space.degree)
    vand_inv = np.linalg.inv(space.basis.eval(nodes).T)
    mesh = space.mesh
    pts = map_to_physical(mesh, np.arange(mesh.n_elements), nodes)
    fv = np.asarray(f(pts[..., 0].ravel(), pts[..., 1].ravel()), dtype=float)
    ne = mesh.n_elements
    if space.ncomp == 1:
        coef = np.einsum("ij,ej->ei", vand_inv, fv.reshape(ne, -1))
        return FieldVector(space, coef.reshape(-1))
    fv = fv.reshape(ne, len(nodes), 2)
    coef = np.einsum("ij,ejc->eci", vand_inv, fv)
    return FieldVector(space, coef.reshape(-1))


def integrate_field(v):
    """Integral of a scalar FieldVector over the domain (exact)."""
    return float(v.space.integral_vector() @ v.coef)


def enforce_zero_mean(v):
    """Return v minus its mean; idempotent, scalar spaces only."""
    if v.space.ncomp != 1:
        raise SpaceError("enforce_zero_mean expects a scalar field")
    area = float(np.sum(v.space.mesh.areas))
    mean = integrate_field(v) / area
    out = v.copy()
    out.coef[:: v.space.nloc] -= mean / float(v.space.basis.coeffs[0, 0])
    return out


def field_l2_norm_sq(v):
    """Exact squared L2 norm of a FieldVector (orthonormal modal basis)."""
    return float(np.sum(v.space.mass_diagonal() * v.coef ** 2))


def energy_norm(v, sigma_e):
    """Broken energy norm: gradients plus sigma_e/h_e-weighted jumps.

    Scalar fields accumulate jumps over interior edges only; vector
    fields include the boundary traces (weak no-slip).
    """
    space = v.space
    mesh = space.mesh
    k = max(space.degree, 1)
    tab = space.element_tab(2 * k)
    g = v.grads_at(space.phys_grads(2 * k))
    acc = np.einsum("q,e,eq->", tab.rule.weights,
                    mesh.det_jac, np.sum(g ** 2, axis=tuple(range(2, g.ndim))))
    ea = mesh.edge_arrays()
    etab = space.edge_tab(2 * k)
    vl = v.values_at(etab.values[ea.cls_l], elements=ea.elem_l)
    vr = v.values_at(etab.values[ea.cls_r], elements=ea.elem_r)
    jump_sq = np.sum((vl - vr) ** 2, axis=tuple(range(2, vl.ndim)))
    # (sigma_e / h_e) * integral over e cancels the h_e edge measure
    acc += sigma_e * np.einsum("q,eq->", etab.rule.weights, jump_sq)
    if space.ncomp == 2:
        vb = v.values_at(etab.values[ea.b_cls], elements=ea.b_elem)
        acc += sigma_e * np.einsum("q,eq->", etab.rule.weights, np.sum(vb ** 2, axis=2))
    return float(np.sqrt(acc))
