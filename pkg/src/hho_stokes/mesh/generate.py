"""Structured generators for the mesh families used in the benchmarks."""

import numpy as np

from .core import PolygonalMesh
from .domains import Channel, LShape, Rectangle, box_ray_nodes

KINDS = ("quad", "triangle", "hexagonal-dual", "mixed-poly")
ALIASES = {"tri": "triangle", "hex": "hexagonal-dual", "poly": "mixed-poly"}


class _Registry:
    """Deduplicates vertices by rounded coordinates."""

    def __init__(self):
        self.points = []
        self.index = {}

    def add(self, x, y):
        key = (round(float(x), 12) + 0.0, round(float(y), 12) + 0.0)
        i = self.index.get(key)
        if i is None:
            i = len(self.points)
            self.points.append((float(x), float(y)))
            self.index[key] = i
        return i


def canonical_loop(loop, vertices):
    """Rotate a vertex loop so it starts at its lowest (then leftmost) vertex."""
    pts = vertices[list(loop)]
    start = min(range(len(loop)), key=lambda i: (round(pts[i, 1], 12), round(pts[i, 0], 12)))
    return tuple(loop[start:]) + tuple(loop[:start])


def _finish(reg, loops, domain):
    V = np.array(reg.points)
    loops = [canonical_loop(l, V) for l in loops]
    return PolygonalMesh(V, loops, domain=domain)


def _grid_quads(reg, xs, ys, skip=None):
    loops = []
    for j in range(len(ys) - 1):
        for i in range(len(xs) - 1):
            if skip is not None and skip(i, j):
                continue
            loops.append(
                (
                    reg.add(xs[i], ys[j]),
                    reg.add(xs[i + 1], ys[j]),
                    reg.add(xs[i + 1], ys[j + 1]),
                    reg.add(xs[i], ys[j + 1]),
                )
            )
    return loops


def _quad_loops(domain, n):
    reg = _Registry()
    if isinstance(domain, Rectangle):
        xs = np.linspace(domain.x0, domain.x1, n + 1)
        ys = np.linspace(domain.y0, domain.y1, n + 1)
        loops = _grid_quads(reg, xs, ys)
    elif isinstance(domain, LShape):
        xs = np.linspace(-1.0, 1.0, 2 * n + 1)
        loops = _grid_quads(reg, xs, xs, skip=lambda i, j: i >= n and j < n)
    elif isinstance(domain, Channel):
        loops = _channel_loops(reg, domain, n)
    else:
        raise ValueError(f"unsupported domain {domain!r}")
    return reg, loops


def _channel_loops(reg, dom, n):
    m = dom.segments // 4  # box-side subdivisions
    cx, cy = dom.center
    half = 2.0 * dom.radius  # O-grid box half-width
    bx0, bx1, by0, by1 = cx - half, cx + half, cy - half, cy + half
    hc = 2.0 * half / m
    if bx0 <= 0 or by0 <= 0 or bx1 >= dom.length or by1 >= dom.height:
        raise ValueError("cylinder box does not fit in the channel")

    def spaced(a, b, h):
        return np.linspace(a, b, max(1, int(round((b - a) / h))) + 1)

    xs = np.concatenate(
        [spaced(0.0, bx0, hc)[:-1], np.linspace(bx0, bx1, m + 1)[:-1], spaced(bx1, dom.length, 2 * hc)]
    )
    ys = np.concatenate(
        [spaced(0.0, by0, hc)[:-1], np.linspace(by0, by1, m + 1)[:-1], spaced(by1, dom.height, hc)]
    )
    i0, j0 = int(np.argmin(abs(xs - bx0))), int(np.argmin(abs(ys - by0)))
    loops = _grid_quads(reg, xs, ys, skip=lambda i, j: i0 <= i < i0 + m and j0 <= j < j0 + m)

    nodes = box_ray_nodes(dom.segments)
    box = np.c_[cx + half * nodes[:, 0], cy + half * nodes[:, 1]]
    ang = np.arctan2(nodes[:, 1], nodes[:, 0])
    circ = np.c_[cx + dom.radius * np.cos(ang), cy + dom.radius * np.sin(ang)]
    layers = 3 * n
    rings = [
        [reg.add(*((1 - s) * c + s * b)) for c, b in zip(circ, box)]
        for s in np.linspace(0.0, 1.0, layers + 1)
    ]
    seg = dom.segments
    for r in range(layers):
        inner, outer = rings[r], rings[r + 1]
        for q in range(seg):
            q1 = (q + 1) % seg
            loops.append((inner[q], outer[q], outer[q1], inner[q1]))
    return loops


def _split_triangles(loops):
    out = []
    for a, b, c, d in loops:
        out.append((a, b, c))
        out.append((a, c, d))
    return out


def _hex_loops(domain, n):
    if not isinstance(domain, Rectangle):
        raise ValueError("hexagonal-dual meshes are only generated on rectangles")
    reg = _Registry()
    xs = np.linspace(domain.x0, domain.x1, n + 1)
    ys = np.linspace(domain.y0, domain.y1, n + 1)
    dy = 0.15 * (ys[1] - ys[0])

    def node(i, j):
        shift = dy * (-1) ** (i + j) if 0 < j < n else 0.0
        return reg.add(xs[i], ys[j] + shift)

    loops = []
    for j in range(n):
        cols = sorted({0, n, *range(j % 2, n, 2)})
        for a, b in zip(cols[:-1], cols[1:]):
            bottom = [node(i, j) for i in range(a, b + 1)]
            top = [node(i, j + 1) for i in range(b, a - 1, -1)]
            loops.append(tuple(bottom + top))
    return reg, loops


def generate_structured(kind, n, domain=None):
    """Generate a structured polygonal mesh.

    Parameters
    ----------
    kind : {"quad", "triangle", "hexagonal-dual", "mixed-poly"}
        Short aliases ``tri``, ``hex`` and ``poly`` are accepted.
    n : int
        Subdivision count (cells per unit direction for the square, per
        half-width for the L-shape, resolution multiplier for the channel).
    domain : Rectangle, LShape or Channel, optional
        Defaults to the unit square.
    """
    kind = ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown mesh kind {kind!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if domain is None:
        domain = Rectangle()
    elif isinstance(domain, str):
        domain = make_domain(domain, n)

    if kind == "hexagonal-dual":
        reg, loops = _hex_loops(domain, n)
        return _finish(reg, loops, domain)

    reg, loops = _quad_loops(domain, n)
    if kind == "triangle":
        return _finish(reg, _split_triangles(loops), domain)
    mesh = _finish(reg, loops, domain)
    if kind == "mixed-poly":
        from .refine import refine

        bc = mesh.barycenters
        h = np.sqrt(mesh.areas)
        ij = np.floor(bc / h[:, None] + 1e-9).astype(int)
        marks = [t for t in range(mesh.n_elements) if (ij[t, 0] + ij[t, 1]) % 2 == 0]
        mesh = refine(mesh, marks)
        mesh = PolygonalMesh(mesh.vertices, mesh.elements, domain=domain)
    return mesh


def make_domain(name, n=1):
    if name in ("square", "unit-square", "rectangle"):
        return Rectangle()
    if name in ("lshape", "l-shape"):
        return LShape()
    if name == "channel":
        return Channel(segments=32 * n)
    raise ValueError(f"unknown domain {name!r}")
