"""Barycenter-to-midpoint refinement producing hanging-node polygons."""

import warnings

import numpy as np

from .core import PolygonalMesh
from .generate import canonical_loop

RULES = ("sides", "edges")


def is_star_about_barycenter(pts, c):
    nxt = np.roll(pts, -1, axis=0)
    cross = (pts[:, 0] - c[0]) * (nxt[:, 1] - c[1]) - (pts[:, 1] - c[1]) * (nxt[:, 0] - c[0])
    return bool(np.all(cross > 0))


def corner_indices(pts, tol=1e-10):
    """Positions of the loop vertices where the boundary turns; hanging
    vertices (straight angle) are skipped."""
    u = pts - np.roll(pts, 1, axis=0)
    w = np.roll(pts, -1, axis=0) - pts
    cross = u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]
    scale = np.hypot(*u.T) * np.hypot(*w.T)
    return [i for i in range(len(pts)) if abs(cross[i]) > tol * scale[i]]


class _EdgeSplits:
    """New vertices inserted into existing edges, shared by both incident elements."""

    def __init__(self, vertices):
        self.X = vertices
        self.V = [tuple(p) for p in vertices]
        self.inserted = {}

    def add_vertex(self, p):
        self.V.append(tuple(p))
        return len(self.V) - 1

    def insert(self, a, b, p):
        key = (a, b) if a < b else (b, a)
        pa, pb = self.X[key[0]], self.X[key[1]]
        d = pb - pa
        s = float(np.dot(p - pa, d) / np.dot(d, d))
        splits = self.inserted.setdefault(key, {})
        for vid, s0 in splits.items():
            if abs(s0 - s) < 1e-12:
                return vid
        vid = self.add_vertex(p)
        splits[vid] = s
        return vid

    def expand(self, loop):
        out = []
        m = len(loop)
        for i in range(m):
            a, b = loop[i], loop[(i + 1) % m]
            out.append(a)
            key = (a, b) if a < b else (b, a)
            splits = self.inserted.get(key)
            if splits:
                ids = [v for v, _ in sorted(splits.items(), key=lambda kv: kv[1])]
                out.extend(ids if key[0] == a else ids[::-1])
        return out


def _side_midpoints(loop, X, splits):
    """Midpoint vertex ids of the geometric sides of a polygon, in loop order."""
    m = len(loop)
    corners = corner_indices(X[list(loop)])
    mids = []
    for j, ci in enumerate(corners):
        cn = corners[(j + 1) % len(corners)]
        chain = [loop[(ci + s) % m] for s in range((cn - ci) % m + 1)]
        a, b = X[chain[0]], X[chain[-1]]
        M = 0.5 * (a + b)
        d = b - a
        length2 = float(d @ d)
        proj = [float((X[v] - a) @ d) / length2 for v in chain]
        hit = [v for v, s in zip(chain, proj) if abs(s - 0.5) < 1e-12]
        if hit:
            mids.append(hit[0])
            continue
        for (va, sa), (vb, sb) in zip(zip(chain, proj), zip(chain[1:], proj[1:])):
            if sa < 0.5 < sb:
                mids.append(splits.insert(va, vb, M))
                break
    return mids


def refine(mesh, marks, rule="sides"):
    """Refine the marked elements by joining each barycenter to edge midpoints.

    With ``rule="sides"`` (default) the midpoints are taken on the geometric
    sides of each polygon, so a vertex left hanging by an earlier refinement
    counts as a point on its side rather than a corner; a marked polygon with
    m corners yields m children. With ``rule="edges"`` every mesh edge of the
    element is bisected and an m-gon (hanging vertices included) yields m
    quadrilaterals. Unmarked neighbors absorb new points as extra vertices.
    Children take the position of their parent in the element list.
    """
    if rule not in RULES:
        raise ValueError(f"unknown refinement rule {rule!r}")
    marks = sorted(set(int(t) for t in marks))
    if not marks:
        warnings.warn("refine called with an empty mark set", stacklevel=2)
        return mesh
    if marks[0] < 0 or marks[-1] >= mesh.n_elements:
        raise IndexError("mark index out of range")

    X = mesh.vertices
    splits = _EdgeSplits(X)
    mids = {}
    for t in marks:
        loop = mesh.elements[t]
        if not is_star_about_barycenter(X[list(loop)], mesh.barycenters[t]):
            raise ValueError(f"element {t} is not star-shaped about its barycenter")
        if rule == "sides":
            mids[t] = _side_midpoints(loop, X, splits)
        else:
            m = len(loop)
            mids[t] = [
                splits.insert(loop[i], loop[(i + 1) % m], 0.5 * (X[loop[i]] + X[loop[(i + 1) % m]]))
                for i in range(m)
            ]

    elements, generation = [], []
    for t, loop in enumerate(mesh.elements):
        ex = splits.expand(loop)
        if t not in mids:
            elements.append(tuple(loop) if len(ex) == len(loop) else ex)
            generation.append(mesh.generation[t])
            continue
        ci = splits.add_vertex(mesh.barycenters[t])
        pos = [ex.index(v) for v in mids[t]]
        n = len(ex)
        for j in range(len(pos)):
            p0, p1 = pos[j - 1], pos[j]
            elements.append([ex[(p0 + s) % n] for s in range((p1 - p0) % n + 1)] + [ci])
            generation.append(mesh.generation[t] + 1)

    V = np.array(splits.V)
    elements = [e if isinstance(e, tuple) else canonical_loop(tuple(e), V) for e in elements]
    return PolygonalMesh(V, elements, generation=generation, domain=mesh.domain)


def refine_uniform(mesh, times=1, rule="sides"):
    for _ in range(times):
        mesh = refine(mesh, range(mesh.n_elements), rule=rule)
    return mesh
