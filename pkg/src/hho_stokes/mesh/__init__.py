from .core import Face, PolygonalMesh
from .domains import Channel, Domain, LShape, Rectangle
from .generate import generate_structured, make_domain
from .io import read_poly2d, write_poly2d, write_vtk
from .refine import refine, refine_uniform
from .validate import MeshDiagnostics, validate

__all__ = [
    "Channel",
    "Domain",
    "Face",
    "LShape",
    "MeshDiagnostics",
    "PolygonalMesh",
    "Rectangle",
    "generate_structured",
    "make_domain",
    "read_poly2d",
    "refine",
    "refine_uniform",
    "validate",
    "write_poly2d",
    "write_vtk",
]
