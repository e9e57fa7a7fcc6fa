"""Legacy-VTK output of field snapshots.

One ASCII unstructured-grid file per field and step, named
``<field>_<step:06d>.vtk``.  Cell data carries the elementwise mean (a P0
downsample of the discontinuous field); point data carries the
high-order values sampled at the vertices, averaged over the incident
elements.
"""

import numpy as np

from .mesh import REF_VERTICES


def _vertex_samples(field):
    """Per-vertex averages of the element-limit values, shape (nv,)/(nv,2)."""
    space = field.space
    mesh = space.mesh
    vals = field.values_at(space.basis.eval(REF_VERTICES))
    nv = mesh.n_vertices
    shape = (nv,) if space.ncomp == 1 else (nv, 2)
    acc = np.zeros(shape)
    count = np.zeros(nv)
    for loc in range(3):
        vids = mesh.triangles[:, loc]
        np.add.at(acc, vids, vals[:, loc] if space.ncomp == 1 else vals[:, loc, :])
        np.add.at(count, vids, 1.0)
    return acc / (count if space.ncomp == 1 else count[:, None])


def _cell_means(field):
    c0 = field.by_element()[:, :, 0] * float(field.space.basis.coeffs[0, 0])
    return c0[:, 0] if field.space.ncomp == 1 else c0


def _write_header(fh, title, mesh):
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(f"{title}\n")
    fh.write("ASCII\n")
    fh.write("DATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {mesh.n_vertices} double\n")
    for x, y in mesh.vertices:
        fh.write(f"{x:.9g} {y:.9g} 0\n")
    nt = mesh.n_elements
    fh.write(f"CELLS {nt} {4 * nt}\n")
    for a, b, c in mesh.triangles:
        fh.write(f"3 {a} {b} {c}\n")
    fh.write(f"CELL_TYPES {nt}\n")
    fh.write("5\n" * nt)


def write_scalar_field(path, name, field):
    mesh = field.space.mesh
    with open(path, "w") as fh:
        _write_header(fh, name, mesh)
        fh.write(f"CELL_DATA {mesh.n_elements}\n")
        fh.write(f"SCALARS {name}_mean double 1\nLOOKUP_TABLE default\n")
        for v in _cell_means(field):
            fh.write(f"{v:.9g}\n")
        fh.write(f"POINT_DATA {mesh.n_vertices}\n")
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in _vertex_samples(field):
            fh.write(f"{v:.9g}\n")


def write_vector_field(path, name, field):
    mesh = field.space.mesh
    pv = _vertex_samples(field)
    with open(path, "w") as fh:
        _write_header(fh, name, mesh)
        means = _cell_means(field)
        fh.write(f"CELL_DATA {mesh.n_elements}\n")
        fh.write(f"SCALARS {name}_mag_mean double 1\nLOOKUP_TABLE default\n")
        for v in np.linalg.norm(means, axis=1):
            fh.write(f"{v:.9g}\n")
        fh.write(f"POINT_DATA {mesh.n_vertices}\n")
        fh.write(f"SCALARS {name}_mag double 1\nLOOKUP_TABLE default\n")
        for v in np.linalg.norm(pv, axis=1):
            fh.write(f"{v:.9g}\n")
        fh.write(f"VECTORS {name} double\n")
        for vx, vy in pv:
            fh.write(f"{vx:.9g} {vy:.9g} 0\n")


def write_fields(state, directory, step_index):
    """Write phi, c1, c2, p and the velocity of one state."""
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    tag = f"{step_index:06d}"
    write_scalar_field(out / f"phi_{tag}.vtk", "phi", state.phi)
    write_scalar_field(out / f"c1_{tag}.vtk", "c1", state.c1())
    write_scalar_field(out / f"c2_{tag}.vtk", "c2", state.c2())
    write_scalar_field(out / f"p_{tag}.vtk", "p", state.p)
    write_vector_field(out / f"velocity_{tag}.vtk", "velocity", state.u)
    return [str(out / f"{f}_{tag}.vtk")
            for f in ("phi", "c1", "c2", "p", "velocity")]
