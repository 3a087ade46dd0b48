"""Plain-text ``poly2d`` mesh format and legacy VTK export."""

import numpy as np

from .core import PolygonalMesh


def write_poly2d(mesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"poly2d {mesh.n_vertices} {mesh.n_elements}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for loop in mesh.elements:
            fh.write(f"{len(loop)} " + " ".join(str(v) for v in loop) + "\n")


def read_poly2d(path, domain=None):
    with open(path, encoding="utf-8") as fh:
        lines = [l.split() for l in fh if l.strip() and not l.startswith("#")]
    head = lines[0]
    if head[0] != "poly2d" or len(head) != 3:
        raise ValueError(f"{path}: missing 'poly2d <nv> <ne>' header")
    nv, ne = int(head[1]), int(head[2])
    if len(lines) < 1 + nv + ne:
        raise ValueError(f"{path}: truncated file")
    V = np.array([[float(a), float(b)] for a, b in lines[1 : 1 + nv]])
    elements = []
    for rec in lines[1 + nv : 1 + nv + ne]:
        m = int(rec[0])
        if len(rec) != m + 1:
            raise ValueError(f"{path}: element record {' '.join(rec)!r} has wrong length")
        elements.append(tuple(int(v) for v in rec[1:]))
    return PolygonalMesh(V, elements, domain=domain)


def write_vtk(mesh, path, cell_data=None, title="hho-stokes mesh"):
    """Legacy ASCII VTK POLYDATA file with optional per-cell scalar fields."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title[:255] + "\nASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        size = sum(len(l) + 1 for l in mesh.elements)
        fh.write(f"POLYGONS {mesh.n_elements} {size}\n")
        for loop in mesh.elements:
            fh.write(f"{len(loop)} " + " ".join(map(str, loop)) + "\n")
        if cell_data:
            fh.write(f"CELL_DATA {mesh.n_elements}\n")
            for name, values in cell_data.items():
                values = np.asarray(values, dtype=float)
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in values:
                    fh.write(f"{v:.17g}\n")
