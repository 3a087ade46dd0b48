"""Independent reference computations used across the tests."""

import copy
import itertools

import numpy as np

from hho_stokes.poly import monomial_exponents, polygon_quadrature, segment_quadrature


def physical_basis(pack, center, degree=None):
    """The pack's cell basis re-centered at the physical barycenter, optionally truncated."""
    b = copy.copy(pack.basis)
    b.center = np.asarray(center, float)
    if degree is not None and degree < b.degree:
        n = (degree + 1) * (degree + 2) // 2
        b.degree, b.dim = degree, n
        b.exponents = monomial_exponents(degree)
        b.coeffs = pack.basis.coeffs[:n, :n]
    return b


def random_vector_polynomial(rng, degree, scale=1.0, center=(0.0, 0.0)):
    """Random [P^degree]^2 field with its Jacobian, as callbacks on points (n, 2)."""
    exps = monomial_exponents(degree)
    C = rng.normal(size=(len(exps), 2))
    c0 = np.asarray(center, float)

    def u(P):
        Z = (np.atleast_2d(P) - c0) / scale
        return (Z[:, 0, None] ** exps[:, 0] * Z[:, 1, None] ** exps[:, 1]) @ C

    def grad(P):
        Z = (np.atleast_2d(P) - c0) / scale
        gx = exps[:, 0] * Z[:, 0, None] ** np.maximum(exps[:, 0] - 1, 0) * Z[:, 1, None] ** exps[:, 1] / scale
        gy = exps[:, 1] * Z[:, 0, None] ** exps[:, 0] * Z[:, 1, None] ** np.maximum(exps[:, 1] - 1, 0) / scale
        return np.stack([gx @ C, gy @ C], axis=-1)  # (n, comp, dir)

    return u, grad


def reconstruction_residual(pack, v):
    """Residual of the defining variational problem of the velocity
    reconstruction, assembled from fresh quadrature rules.

    ``v`` is a scalar local unknown [cell, faces]; returns the residual for
    every non-constant test function plus the mean condition.
    """
    verts = np.array([F.a for F in pack.faces])
    k, nc, nf = pack.k, pack.nc, pack.nf
    r = pack.R @ v
    q = polygon_quadrature(verts, np.zeros(2), 2 * k + 6)
    phi, g = pack.basis.eval(q.points), pack.basis.grad(q.points)
    grad_r = np.einsum("pid,i->pd", g, r)
    grad_vT = np.einsum("pid,i->pd", g[:, :nc], v[:nc])
    lhs = np.einsum("p,pd,pjd->j", q.weights, grad_r, g)
    rhs = np.einsum("p,pd,pjd->j", q.weights, grad_vT, g)
    for i, F in enumerate(pack.faces):
        fq = segment_quadrature(F.a, F.b, 2 * k + 6)
        s = (fq.points - 0.5 * (F.a + F.b)) @ ((F.b - F.a) / F.h) / F.h
        vF = (s[:, None] ** np.arange(nf)) @ v[nc + i * nf : nc + (i + 1) * nf]
        vT = pack.basis.eval(fq.points)[:, :nc] @ v[:nc]
        dn = pack.basis.grad(fq.points) @ F.normal
        rhs += (fq.weights * (vF - vT)) @ dn
    mean = q.weights @ (phi @ r) - q.weights @ (phi[:, :nc] @ v[:nc])
    return np.r_[(lhs - rhs)[1:], mean]


def exhaustive_dorfler(eta2, theta):
    """Walk every prefix of the (value desc, index asc) ordering and return the
    first one that reaches the bulk criterion."""
    eta2 = np.asarray(eta2, float)
    total = eta2.sum()
    if total == 0:
        return []
    order = sorted(range(len(eta2)), key=lambda i: (-eta2[i], i))
    for m in range(1, len(eta2) + 1):
        chosen = order[:m]
        if eta2[chosen].sum() >= theta * total:
            return sorted(chosen)
    return sorted(order)


def minimal_cardinality(eta2, theta):
    """Brute-force minimal size of any subset meeting the bulk criterion (n <= 12)."""
    eta2 = np.asarray(eta2, float)
    total = eta2.sum()
    for m in range(1, len(eta2) + 1):
        for sub in itertools.combinations(range(len(eta2)), m):
            if eta2[list(sub)].sum() >= theta * total:
                return m
    return len(eta2)
