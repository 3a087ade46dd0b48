"""Scaled monomial bases, polygon/segment quadrature and projectors."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.special import roots_jacobi

MAX_EXACTNESS = 60


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))

    @property
    def measure(self):
        return float(self.weights.sum())


def _n_points(degree):
    return max(1, (degree + 2) // 2)


@lru_cache(maxsize=None)
def reference_triangle_rule(degree):
    """Collapsed Gauss rule on {x, y >= 0, x + y <= 1}, exact to ``degree``.

    Gauss-Jacobi(1, 0) in the collapsed direction absorbs the Duffy
    Jacobian, so all weights are positive.
    """
    if degree > MAX_EXACTNESS:
        raise ValueError(f"quadrature exactness {degree} exceeds {MAX_EXACTNESS}")
    n = _n_points(degree)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    s, ws = 0.5 * (1.0 + xj), 0.25 * wj
    xg, wg = np.polynomial.legendre.leggauss(n)
    t, wt = 0.5 * (1.0 + xg), 0.5 * wg
    S, Tt = np.meshgrid(s, t, indexing="ij")
    pts = np.c_[S.ravel(), (Tt * (1.0 - S)).ravel()]
    w = np.outer(ws, wt).ravel()
    return pts, w


@lru_cache(maxsize=None)
def reference_segment_rule(degree):
    """Gauss-Legendre rule on [0, 1] exact to ``degree``."""
    x, w = np.polynomial.legendre.leggauss(_n_points(degree))
    return 0.5 * (1.0 + x), 0.5 * w


def polygon_quadrature(pts, center, degree):
    """Fan the polygon from ``center`` into triangles and map a triangle rule."""
    ref, w = reference_triangle_rule(degree)
    a = pts - center
    b = np.roll(pts, -1, axis=0) - center
    area2 = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]  # twice the triangle areas
    P = center + ref[None, :, 0, None] * a[:, None, :] + ref[None, :, 1, None] * b[:, None, :]
    W = area2[:, None] * w[None, :]
    return QuadratureRule(P.reshape(-1, 2), W.ravel(), degree)


def segment_quadrature(a, b, degree):
    t, w = reference_segment_rule(degree)
    a, b = np.asarray(a, float), np.asarray(b, float)
    length = float(np.hypot(*(b - a)))
    return QuadratureRule(a + t[:, None] * (b - a), w * length, degree)


def cell_quadrature(mesh, t, exactness):
    """Quadrature rule on element ``t`` exact for polynomials of degree ``exactness``."""
    return polygon_quadrature(mesh.element_vertices(t), mesh.barycenters[t], exactness)


def face_quadrature(mesh, f, exactness):
    a, b = mesh.faces[f].vertices
    return segment_quadrature(mesh.vertices[a], mesh.vertices[b], exactness)


@lru_cache(maxsize=None)
def monomial_exponents(degree):
    """2D exponents in graded order, so lower-degree sets are prefixes."""
    return np.array([(d - j, j) for d in range(degree + 1) for j in range(d + 1)], dtype=int)


def dim_cell(degree):
    return (degree + 1) * (degree + 2) // 2


def dim_face(degree):
    return degree + 1


class CellBasis:
    """Scaled monomials ``((x - x_T) / h_T)^alpha`` of total degree <= ``degree``.

    With ``orthonormalize=True`` the basis is replaced by its Gram-Schmidt
    orthonormalization for the product ``(u, v)_T / |T|`` (through the
    Cholesky factor of the monomial mass matrix). The map to monomials is
    lower triangular, so the degree-l subset is still a prefix for every
    l <= degree.
    """

    def __init__(self, center, scale, degree, orthonormalize=False, quad=None):
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.degree = int(degree)
        self.exponents = monomial_exponents(self.degree)
        self.dim = len(self.exponents)
        self.coeffs = np.eye(self.dim)
        if orthonormalize:
            if quad is None:
                raise ValueError("orthonormalization needs a cell quadrature rule")
            phi = self._monomials(quad.points)
            M = phi.T @ (quad.weights[:, None] * phi)
            L = cholesky(M, lower=True)
            # orthonormal for the mean-value product, so values stay O(1) like the monomials
            self.coeffs = np.sqrt(quad.weights.sum()) * solve_triangular(L, np.eye(self.dim), lower=True)

    def _monomials(self, x):
        z = (np.atleast_2d(x) - self.center) / self.scale
        e = self.exponents
        return z[:, 0, None] ** e[:, 0] * z[:, 1, None] ** e[:, 1]

    def _monomial_grads(self, x):
        z = (np.atleast_2d(x) - self.center) / self.scale
        e = self.exponents
        zx = z[:, 0, None] ** np.maximum(e[:, 0] - 1, 0)
        zy = z[:, 1, None] ** np.maximum(e[:, 1] - 1, 0)
        px = z[:, 0, None] ** e[:, 0]
        py = z[:, 1, None] ** e[:, 1]
        gx = e[:, 0] * zx * py / self.scale
        gy = e[:, 1] * px * zy / self.scale
        return np.stack([gx, gy], axis=-1)

    def eval(self, x):
        """Values, shape (npts, dim)."""
        return self._monomials(x) @ self.coeffs.T

    def grad(self, x):
        """Gradients, shape (npts, dim, 2)."""
        g = self._monomial_grads(x)
        return np.einsum("pjd,ij->pid", g, self.coeffs)


class FaceBasis:
    """1D scaled monomials in the arclength coordinate of a segment from ``a`` to ``b``,
    centered at the midpoint and scaled by the length."""

    def __init__(self, a, b, degree):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.degree = int(degree)
        self.dim = self.degree + 1
        self.length = float(np.hypot(*(self.b - self.a)))
        self.tangent = (self.b - self.a) / self.length

    def eval(self, x):
        s = (np.atleast_2d(x) - 0.5 * (self.a + self.b)) @ self.tangent / self.length
        return s[:, None] ** np.arange(self.dim)


def mass_matrix(values, quad):
    return values.T @ (quad.weights[:, None] * values)


def _as_components(fx, npts):
    fx = np.asarray(fx, dtype=float)
    if fx.ndim == 0:
        fx = np.full(npts, float(fx))
    return fx


def project(basis, quad, f):
    """L2-orthogonal projection of ``f`` onto the span of ``basis``.

    ``f`` maps points (n, 2) to values (n,) or (n, c); vector fields are
    projected componentwise and returned with shape (dim, c).
    """
    phi = basis.eval(quad.points)
    M = mass_matrix(phi, quad)
    fx = _as_components(f(quad.points), len(quad.weights))
    rhs = phi.T @ (quad.weights[:, None] * fx.reshape(len(quad.weights), -1))
    try:
        c = cho_solve(cho_factor(M), rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular mass matrix (degenerate element?)") from exc
    return c[:, 0] if fx.ndim == 1 else c


def cell_basis(mesh, t, degree, orthonormalize=None, exactness=None):
    if orthonormalize is None:
        orthonormalize = degree >= 4
    quad = None
    if orthonormalize:
        quad = cell_quadrature(mesh, t, exactness or 2 * degree + 2)
    return CellBasis(mesh.barycenters[t], mesh.h_T[t], degree, orthonormalize, quad)


def face_basis(mesh, f, degree):
    a, b = mesh.faces[f].vertices
    return FaceBasis(mesh.vertices[a], mesh.vertices[b], degree)


def l2_project_cell(mesh, t, l, f, exactness=None, basis=None):
    """Coefficients of the L2 projection of ``f`` onto P^l(T) in ``basis``
    (scaled monomials by default)."""
    basis = basis or CellBasis(mesh.barycenters[t], mesh.h_T[t], l)
    quad = cell_quadrature(mesh, t, exactness if exactness is not None else 2 * l + 6)
    return project(basis, quad, f)


def l2_project_face(mesh, f, l, g, exactness=None):
    basis = face_basis(mesh, f, l)
    quad = face_quadrature(mesh, f, exactness if exactness is not None else 2 * l + 6)
    return project(basis, quad, g)


def elliptic_project_cell(mesh, t, l, f, grad_f, exactness=None, basis=None):
    """Elliptic projection: gradients match in the L2 sense on P^l(T) and the
    mean of the projection equals the mean of ``f``."""
    basis = basis or CellBasis(mesh.barycenters[t], mesh.h_T[t], l)
    quad = cell_quadrature(mesh, t, exactness if exactness is not None else 2 * l + 6)
    w = quad.weights
    phi = basis.eval(quad.points)
    g = basis.grad(quad.points)
    K = np.einsum("p,pid,pjd->ij", w, g, g)
    gf = np.asarray(grad_f(quad.points), dtype=float).reshape(len(w), 2)
    rhs = np.einsum("p,pid,pd->i", w, g, gf)
    c = np.zeros(basis.dim)
    if basis.dim > 1:
        c[1:] = np.linalg.solve(K[1:, 1:], rhs[1:])
    means = w @ phi
    fx = _as_components(f(quad.points), len(w))
    c[0] = (w @ fx - means[1:] @ c[1:]) / means[0]
    return c


def evaluate(basis, coeffs, x):
    return basis.eval(x) @ coeffs
