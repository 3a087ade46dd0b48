"""Computational domains described by their polygonal boundary."""

from dataclasses import dataclass

import numpy as np

from .core import signed_area


def _point_segment_distance(p, a, b):
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.hypot(*(p - (a + t[:, None] * ab)).T)


class Domain:
    """Base class: a polygonal region given by closed boundary loops."""

    name = "domain"

    def loops(self):
        raise NotImplementedError

    @property
    def area(self):
        # holes are stored clockwise, so their signed area is negative
        return sum(signed_area(np.asarray(loop)) for loop in self.loops())

    @property
    def diameter(self):
        pts = np.vstack([np.asarray(l) for l in self.loops()])
        lo, hi = pts.min(0), pts.max(0)
        return float(np.hypot(*(hi - lo)))

    @property
    def perimeter(self):
        total = 0.0
        for loop in self.loops():
            loop = np.asarray(loop)
            total += np.hypot(*(np.roll(loop, -1, 0) - loop).T).sum()
        return float(total)

    def distance_to_boundary(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        best = np.full(len(points), np.inf)
        for loop in self.loops():
            loop = np.asarray(loop)
            for a, b in zip(loop, np.roll(loop, -1, 0)):
                best = np.minimum(best, _point_segment_distance(points, a, b))
        return best


@dataclass(frozen=True)
class Rectangle(Domain):
    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0
    name = "rectangle"

    def loops(self):
        return [[(self.x0, self.y0), (self.x1, self.y0), (self.x1, self.y1), (self.x0, self.y1)]]


@dataclass(frozen=True)
class LShape(Domain):
    """(-1,1)^2 with the quadrant [0,1) x (-1,0] removed; reentrant corner at the origin."""

    name = "lshape"

    def loops(self):
        return [[(-1.0, -1.0), (0.0, -1.0), (0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (-1.0, 1.0)]]


@dataclass(frozen=True)
class Channel(Domain):
    """Channel (0,L) x (0,H) around a circular obstacle approximated by a polygon."""

    length: float = 2.2
    height: float = 0.41
    center: tuple = (0.2, 0.2)
    radius: float = 0.05
    segments: int = 32
    name = "channel"

    def cylinder_points(self):
        # angles of the points where rays through the O-grid box nodes hit the circle
        return _box_ray_angles(self.segments)

    def hole(self):
        cx, cy = self.center
        ang = self.cylinder_points()
        pts = np.c_[cx + self.radius * np.cos(ang), cy + self.radius * np.sin(ang)]
        return pts[::-1]  # clockwise

    def loops(self):
        outer = [(0.0, 0.0), (self.length, 0.0), (self.length, self.height), (0.0, self.height)]
        return [outer, [tuple(p) for p in self.hole()]]

    def distance_to_cylinder(self, points):
        points = np.atleast_2d(points)
        return np.hypot(*(points - np.asarray(self.center)).T) - self.radius


def box_ray_nodes(segments):
    """Nodes equally spaced along the boundary of [-1,1]^2, counterclockwise from
    the lower-left corner."""
    if segments % 4:
        raise ValueError("cylinder segment count must be a multiple of 4")
    m = segments // 4
    s = np.linspace(-1.0, 1.0, m + 1)[:-1]
    one = np.ones(m)
    return np.vstack([np.c_[s, -one], np.c_[one, s], np.c_[-s, one], np.c_[-one, -s]])


def _box_ray_angles(segments):
    box = box_ray_nodes(segments)
    return np.arctan2(box[:, 1], box[:, 0])
