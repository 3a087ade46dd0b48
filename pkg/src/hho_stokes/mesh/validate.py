"""Mesh diagnostics."""

from dataclasses import dataclass, field

import numpy as np

from .core import signed_area
from .refine import is_star_about_barycenter


@dataclass
class MeshDiagnostics:
    violations: list = field(default_factory=list)
    rho: float = float("nan")
    h_min: float = float("nan")
    h_max: float = float("nan")
    area: float = 0.0

    @property
    def ok(self):
        return not self.violations


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def _is_simple(pts):
    m = len(pts)
    for i in range(m):
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue
            if _segments_cross(pts[i], pts[(i + 1) % m], pts[j], pts[(j + 1) % m]):
                return False
    return True


def validate(mesh, domain=None, tol=1e-12):
    """Check mesh invariants and report all violations.

    Never raises; the returned :class:`MeshDiagnostics` lists each problem
    found together with the realized regularity parameter and the range of
    element diameters.
    """
    diag = MeshDiagnostics()
    domain = domain if domain is not None else mesh.domain
    V = mesh.vertices
    for t, loop in enumerate(mesh.elements):
        pts = V[list(loop)]
        if len(set(loop)) != len(loop):
            diag.violations.append(f"element {t}: repeated vertex")
            continue
        a = signed_area(pts)
        if a <= 0:
            diag.violations.append(f"element {t}: not counterclockwise (signed area {a:.3e})")
            continue
        if not _is_simple(pts):
            diag.violations.append(f"element {t}: self-intersecting polygon")
        c = mesh.barycenters[t]
        if not is_star_about_barycenter(pts, c):
            diag.violations.append(f"element {t}: not star-shaped about its barycenter")
        for lf, f in enumerate(mesh.element_faces[t]):
            face = mesh.faces[f]
            mp = 0.5 * (V[face.vertices[0]] + V[face.vertices[1]])
            if (mp - c) @ mesh.outward_normal(t, lf) <= 0:
                diag.violations.append(f"element {t}: face {f} normal not outward")

    counts = np.zeros(mesh.n_faces, dtype=int)
    for fs in mesh.element_faces:
        for f in fs:
            counts[f] += 1
    for f in np.flatnonzero((counts < 1) | (counts > 2)):
        diag.violations.append(f"face {f}: {counts[f]} incident elements")
    for f, face in enumerate(mesh.faces):
        expect = 1 if face.is_boundary else 2
        if counts[f] != expect:
            diag.violations.append(f"face {f}: incidence mismatch")

    diag.area = float(mesh.areas.sum())
    if domain is not None:
        if abs(diag.area - domain.area) > 1e-12 * abs(domain.area) * 10:
            diag.violations.append(f"area {diag.area!r} differs from domain area {domain.area!r}")
        bidx = np.array([f.vertices for f in mesh.faces if f.is_boundary]).reshape(-1, 2)
        if len(bidx):
            d = domain.distance_to_boundary(V[bidx.ravel()])
            bad = np.flatnonzero(d > tol * max(domain.diameter, 1.0))
            for i in sorted(set(bad // 2)):
                diag.violations.append(f"boundary face {tuple(bidx[i])} off the domain boundary")

    if mesh.n_elements:
        diag.rho = mesh.regularity()
        diag.h_min = float(mesh.h_T.min())
        diag.h_max = float(mesh.h_T.max())
    return diag
