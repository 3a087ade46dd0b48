import numpy as np
import pytest
from hypothesis import settings

from hho_stokes.mesh import PolygonalMesh, generate_structured, refine
from hho_stokes.mesh.core import polygon_centroid
from hho_stokes.mesh.refine import is_star_about_barycenter

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_polygon(rng, m=None):
    """Random polygon, star-shaped about its barycenter, with a random size and offset."""
    while True:
        n = int(m or rng.integers(3, 9))
        ang = np.sort(rng.uniform(0, 2 * np.pi, n))
        if np.min(np.diff(np.r_[ang, ang[0] + 2 * np.pi])) < 0.25:
            continue
        r = rng.uniform(0.5, 1.0, n)
        pts = np.c_[r * np.cos(ang), r * np.sin(ang)]
        pts = pts * 10 ** rng.uniform(-2, 1) + rng.uniform(-5, 5, 2)
        if is_star_about_barycenter(pts, polygon_centroid(pts)):
            return pts


def single_element_mesh(pts):
    return PolygonalMesh(pts, [tuple(range(len(pts)))])


def regular_polygon(m, radius=1.0):
    a = 2 * np.pi * np.arange(m) / m
    return radius * np.c_[np.cos(a), np.sin(a)]


def hanging_node_mesh(n=2):
    """Quad grid with the lower-left cells refined once (hanging vertices on the interface)."""
    mesh = generate_structured("quad", n)
    marks = [t for t in range(mesh.n_elements) if mesh.barycenters[t].sum() < 1.0]
    return refine(mesh, marks)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
