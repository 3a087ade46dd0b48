"""Polygonal mesh with face connectivity and geometric metadata."""

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np


def signed_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(pts):
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


def diameter(pts):
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


@dataclass(frozen=True)
class Face:
    """A straight mesh face.

    ``vertices`` are ordered along the counterclockwise loop of ``owner``
    (the incident element with the smaller index), so ``normal`` points out
    of ``owner``.
    """

    vertices: tuple
    owner: int
    neighbor: int | None
    normal: np.ndarray = field(repr=False)
    length: float = 0.0

    @property
    def is_boundary(self):
        return self.neighbor is None


class PolygonalMesh:
    """Immutable 2D polygonal mesh.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    elements : sequence of sequences of int
        Counterclockwise vertex loops.
    generation : sequence of int, optional
        Refinement depth per element.
    domain : object, optional
        Domain descriptor (see :mod:`hho_stokes.mesh.domains`), used by
        :func:`validate` for boundary checks.
    """

    def __init__(self, vertices, elements, generation=None, domain=None):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        self.vertices.setflags(write=False)
        self.elements = tuple(tuple(int(v) for v in loop) for loop in elements)
        n = len(self.elements)
        if generation is None:
            generation = [0] * n
        self.generation = tuple(int(g) for g in generation)
        self.domain = domain
        self._build()

    def _build(self):
        V = self.vertices
        faces = []
        edge_to_face = {}
        element_faces = []
        element_signs = []
        for t, loop in enumerate(self.elements):
            fs, ss = [], []
            m = len(loop)
            for i in range(m):
                a, b = loop[i], loop[(i + 1) % m]
                key = (a, b) if a < b else (b, a)
                f = edge_to_face.get(key)
                if f is None:
                    tan = V[b] - V[a]
                    length = float(np.hypot(*tan))
                    normal = np.array([tan[1], -tan[0]]) / length
                    faces.append([(a, b), t, None, normal, length])
                    f = len(faces) - 1
                    edge_to_face[key] = f
                    ss.append(1)
                else:
                    if faces[f][2] is not None:
                        raise ValueError(f"edge {key} shared by more than two elements")
                    if faces[f][0] != (b, a):
                        raise ValueError(f"edge {key} has inconsistent orientation")
                    faces[f][2] = t
                    ss.append(-1)
                fs.append(f)
            element_faces.append(tuple(fs))
            element_signs.append(tuple(ss))
        self.faces = tuple(Face(*rec) for rec in faces)
        self.element_faces = tuple(element_faces)
        self.element_signs = tuple(element_signs)
        self._edge_to_face = edge_to_face

        self.areas = np.array([signed_area(V[list(loop)]) for loop in self.elements])
        self.barycenters = np.array(
            [polygon_centroid(V[list(loop)]) for loop in self.elements]
        ).reshape(-1, 2)
        self.h_T = np.array([diameter(V[list(loop)]) for loop in self.elements])
        self.h_F = np.array([f.length for f in self.faces])
        self.boundary_flags = np.array([f.is_boundary for f in self.faces], dtype=bool)

        v2e = defaultdict(set)
        for t, loop in enumerate(self.elements):
            for v in loop:
                v2e[v].add(t)
        self._vertex_elements = v2e

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def h(self):
        return float(self.h_T.max())

    def element_vertices(self, t):
        return self.vertices[list(self.elements[t])]

    def face_index(self, a, b):
        return self._edge_to_face[(a, b) if a < b else (b, a)]

    def face_midpoints(self):
        idx = np.array([f.vertices for f in self.faces])
        return 0.5 * (self.vertices[idx[:, 0]] + self.vertices[idx[:, 1]])

    def outward_normal(self, t, local_face):
        f = self.element_faces[t][local_face]
        return self.element_signs[t][local_face] * self.faces[f].normal

    def regularity(self):
        """Realized parameter rho with 2 rho^2 h_T <= h_F for all F in F_T."""
        ratio = min(
            self.h_F[f] / self.h_T[t]
            for t, fs in enumerate(self.element_faces)
            for f in fs
        )
        return float(np.sqrt(ratio / 2.0))

    def neighbors_sharing_node(self, t):
        """Elements sharing at least one vertex with element ``t`` (``t`` included)."""
        if not 0 <= t < self.n_elements:
            raise IndexError(f"element index {t} out of range")
        out = set()
        for v in self.elements[t]:
            out |= self._vertex_elements[v]
        return out

    def elements_at_vertex(self, v):
        return set(self._vertex_elements.get(v, ()))

    def find_vertex(self, point, tol=1e-12):
        d = np.hypot(*(self.vertices - np.asarray(point)).T)
        i = int(np.argmin(d))
        return i if d[i] <= tol else None

    def __repr__(self):
        return (
            f"PolygonalMesh(n_vertices={self.n_vertices}, "
            f"n_elements={self.n_elements}, n_faces={self.n_faces})"
        )
