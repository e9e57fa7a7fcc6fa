"""Structured triangulations of rectangles with oriented edge topology.

Every edge carries a unit normal fixed once at construction.  On an
interior edge shared by elements ``left`` and ``right`` the normal points
from left to right and jumps are evaluated as ``trace(left) -
trace(right)``; on a boundary edge the normal points out of the domain
and jump and average both reduce to the single trace.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np


class MeshError(Exception):
    """Invalid mesh construction parameters or queries."""


class BoundaryTag(Enum):
    BOTTOM = "bottom"
    TOP = "top"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class InteriorEdge:
    index: int
    vertices: tuple          # (a, b) global vertex ids
    left: int                # element E_i
    right: int               # element E_j
    normal: np.ndarray       # unit, directed left -> right
    length: float


@dataclass(frozen=True)
class BoundaryEdge:
    index: int
    vertices: tuple
    element: int
    normal: np.ndarray       # unit, outward
    length: float
    tag: BoundaryTag


# Side classes (la, lb): local vertex indices of the edge's canonical
# endpoints within the incident element.
EDGE_CLASS = {(0, 1): 0, (1, 0): 1, (1, 2): 2, (2, 1): 3, (2, 0): 4, (0, 2): 5}

# Reference coordinates of the local vertices.
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass
class EdgeArrays:
    """Flat interior/boundary edge incidence for batched assembly."""

    elem_l: np.ndarray
    cls_l: np.ndarray
    elem_r: np.ndarray
    cls_r: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray
    b_elem: np.ndarray
    b_cls: np.ndarray
    b_normals: np.ndarray
    b_lengths: np.ndarray
    b_tags: list
    va: np.ndarray = None      # interior edge endpoint coordinates
    vb: np.ndarray = None
    b_va: np.ndarray = None
    b_vb: np.ndarray = None


class TriMesh:
    """Conforming triangulation with precomputed affine-map geometry.

    Attributes
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) int array, counterclockwise
    interior_edges, boundary_edges : lists of edge records
    h_elem : (nt,) per-element diameters
    h : max diameter
    areas, jacobians, inv_jac_t, det_jac : affine map data per element
    """

    def __init__(self, vertices, triangles, boundary_tagger, rho=0.1):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=int)
        self.rho = rho
        self._build_geometry()
        self._build_edges(boundary_tagger)
        self._check_regularity()

    # -- construction -------------------------------------------------

    def _build_geometry(self):
        v0 = self.vertices[self.triangles[:, 0]]
        v1 = self.vertices[self.triangles[:, 1]]
        v2 = self.vertices[self.triangles[:, 2]]
        # x = v0 + J @ (xi, eta), columns of J are the edge vectors
        J = np.stack([v1 - v0, v2 - v0], axis=-1)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(det <= 0.0):
            raise MeshError("triangles must be counterclockwise with positive area")
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1]
        inv[:, 0, 1] = -J[:, 0, 1]
        inv[:, 1, 0] = -J[:, 1, 0]
        inv[:, 1, 1] = J[:, 0, 0]
        inv /= det[:, None, None]
        self.jacobians = J
        self.det_jac = det
        self.inv_jac_t = np.transpose(inv, (0, 2, 1)).copy()
        self.areas = 0.5 * det
        e01 = np.linalg.norm(v1 - v0, axis=1)
        e12 = np.linalg.norm(v2 - v1, axis=1)
        e20 = np.linalg.norm(v0 - v2, axis=1)
        self.h_elem = np.maximum(np.maximum(e01, e12), e20)
        self.h = float(np.max(self.h_elem))
        self.centroids = (v0 + v1 + v2) / 3.0
        self.inradius = 2.0 * self.areas / (e01 + e12 + e20)

    def _build_edges(self, boundary_tagger):
        incidence = {}
        for t, tri in enumerate(self.triangles):
            for loc in range(3):
                a, b = tri[loc], tri[(loc + 1) % 3]
                key = (min(a, b), max(a, b))
                incidence.setdefault(key, []).append(t)
        interior, boundary = [], []
        for key in sorted(incidence):
            elems = incidence[key]
            a, b = key
            tvec = self.vertices[b] - self.vertices[a]
            length = float(np.linalg.norm(tvec))
            normal = np.array([tvec[1], -tvec[0]]) / length
            if len(elems) == 2:
                left, right = elems
                direction = self.centroids[right] - self.centroids[left]
                if np.dot(normal, direction) < 0.0:
                    normal = -normal
                interior.append(
                    InteriorEdge(len(interior), key, left, right, normal, length)
                )
            elif len(elems) == 1:
                owner = elems[0]
                outward = 0.5 * (self.vertices[a] + self.vertices[b]) - self.centroids[owner]
                if np.dot(normal, outward) < 0.0:
                    normal = -normal
                mid = 0.5 * (self.vertices[a] + self.vertices[b])
                boundary.append(
                    BoundaryEdge(len(boundary), key, owner, normal, length,
                                 boundary_tagger(mid))
                )
            else:
                raise MeshError("edge shared by more than two triangles")
        self.interior_edges = interior
        self.boundary_edges = boundary
        self.n_edges = len(interior) + len(boundary)

    def _check_regularity(self):
        ratio = self.inradius / self.h_elem
        if np.any(ratio < self.rho):
            raise MeshError(
                f"shape regularity violated: min inradius/diameter "
                f"{ratio.min():.4f} < rho = {self.rho}"
            )

    # -- queries ------------------------------------------------------

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def jump_average_orientation(self, edge_id):
        """Fixed (E_i, E_j, n_e) triple of an edge.

        Interior edges index from 0; boundary edges follow, returning
        ``(owner, None, outward_normal)``.
        """
        if 0 <= edge_id < len(self.interior_edges):
            e = self.interior_edges[edge_id]
            return e.left, e.right, e.normal
        bid = edge_id - len(self.interior_edges)
        if 0 <= bid < len(self.boundary_edges):
            e = self.boundary_edges[bid]
            return e.element, None, e.normal
        raise MeshError(f"unknown edge id {edge_id}")

    def local_edge_vertices(self, element, edge_vertices):
        """Local indices (la, lb) in `element` of the global pair (a, b)."""
        tri = self.triangles[element]
        la = int(np.where(tri == edge_vertices[0])[0][0])
        lb = int(np.where(tri == edge_vertices[1])[0][0])
        return la, lb

    def edge_arrays(self):
        """Vectorized edge incidence data used by the assembly loops.

        Side classes encode which local edge of the element the global
        edge traverses and in which direction; tabulated basis traces are
        shared per class.
        """
        if getattr(self, "_edge_arrays", None) is None:
            ne = len(self.interior_edges)
            elem_l = np.empty(ne, dtype=int)
            elem_r = np.empty(ne, dtype=int)
            cls_l = np.empty(ne, dtype=int)
            cls_r = np.empty(ne, dtype=int)
            normals = np.empty((ne, 2))
            lengths = np.empty(ne)
            for i, e in enumerate(self.interior_edges):
                elem_l[i], elem_r[i] = e.left, e.right
                cls_l[i] = EDGE_CLASS[self.local_edge_vertices(e.left, e.vertices)]
                cls_r[i] = EDGE_CLASS[self.local_edge_vertices(e.right, e.vertices)]
                normals[i] = e.normal
                lengths[i] = e.length
            nb = len(self.boundary_edges)
            b_elem = np.empty(nb, dtype=int)
            b_cls = np.empty(nb, dtype=int)
            b_normals = np.empty((nb, 2))
            b_lengths = np.empty(nb)
            b_tags = []
            for i, e in enumerate(self.boundary_edges):
                b_elem[i] = e.element
                b_cls[i] = EDGE_CLASS[self.local_edge_vertices(e.element, e.vertices)]
                b_normals[i] = e.normal
                b_lengths[i] = e.length
                b_tags.append(e.tag)
            iv = np.array([e.vertices for e in self.interior_edges],
                          dtype=int).reshape(-1, 2)
            bv = np.array([e.vertices for e in self.boundary_edges],
                          dtype=int).reshape(-1, 2)
            self._edge_arrays = EdgeArrays(
                elem_l, cls_l, elem_r, cls_r, normals, lengths,
                b_elem, b_cls, b_normals, b_lengths, b_tags,
                va=self.vertices[iv[:, 0]], vb=self.vertices[iv[:, 1]],
                b_va=self.vertices[bv[:, 0]], b_vb=self.vertices[bv[:, 1]],
            )
        return self._edge_arrays


def build_rect_mesh(lx, ly, nx, ny, rho=0.1):
    """Diagonal-split structured mesh of [0, lx] x [0, ly].

    Each of the nx*ny cells is split along its lower-left to upper-right
    diagonal, giving 2*nx*ny counterclockwise triangles.
    """
    if lx <= 0.0 or ly <= 0.0:
        raise MeshError("domain dimensions must be positive")
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be at least 1")
    dx, dy = lx / nx, ly / ny
    xs = np.arange(nx + 1) * dx
    ys = np.arange(ny + 1) * dy
    verts = np.array([(x, y) for y in ys for x in xs])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            p00, p10 = vid(i, j), vid(i + 1, j)
            p01, p11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((p00, p10, p11))
            tris.append((p00, p11, p01))

    tol = 1e-12 * max(lx, ly)

    def tagger(mid):
        if abs(mid[1]) < tol:
            return BoundaryTag.BOTTOM
        if abs(mid[1] - ly) < tol:
            return BoundaryTag.TOP
        if abs(mid[0]) < tol:
            return BoundaryTag.LEFT
        if abs(mid[0] - lx) < tol:
            return BoundaryTag.RIGHT
        raise MeshError("boundary edge off the rectangle boundary")

    return TriMesh(verts, np.array(tris), tagger, rho=rho)
