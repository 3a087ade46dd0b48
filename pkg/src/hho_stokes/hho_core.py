"""Element-local HHO operators: interpolation, reconstructions, stabilization."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .poly import CellBasis, FaceBasis, dim_cell, polygon_quadrature, segment_quadrature

#: Face weight in the stabilizer: "face" -> 1/h_F, "element" -> 1/h_T.
FACE_WEIGHT = "face"

_CACHE = {}
_CACHE_LIMIT = 200_000


def clear_cache():
    _CACHE.clear()


@dataclass
class FaceData:
    a: np.ndarray  # endpoints relative to the barycenter, in loop order
    b: np.ndarray
    h: float
    normal: np.ndarray  # outward
    points: np.ndarray
    weights: np.ndarray
    psi: np.ndarray  # face basis values (nq, nf)
    phi: np.ndarray  # cell basis values (nq, nr)
    dphi_n: np.ndarray  # normal derivatives of the cell basis (nq, nr)
    mass: np.ndarray
    trace: np.ndarray  # (psi_i, phi_j)_F, shape (nf, nr)


@dataclass
class LocalOperatorPack:
    """Local operators on one element, in coordinates relative to its barycenter.

    Scalar local unknowns are ordered ``[cell (nc), face_0 (nf), ...]``;
    vector unknowns stack the two scalar blocks by component. Face unknowns
    use the element's counterclockwise orientation of each face.
    """

    k: int
    nc: int
    nr: int
    nf: int
    h_T: float
    area: float
    basis: CellBasis
    quad_points: np.ndarray
    quad_weights: np.ndarray
    phi: np.ndarray
    grad_phi: np.ndarray
    faces: list
    M: np.ndarray  # cell mass matrix, degree k+1
    K: np.ndarray  # stiffness, degree k+1
    R: np.ndarray  # reconstruction, (nr, ns)
    G: np.ndarray  # divergence right-hand side, (nc, 2 ns)
    D: np.ndarray  # divergence reconstruction, (nc, 2 ns)
    delta_T: np.ndarray  # (nc, ns)
    delta_F: list
    S: np.ndarray  # stabilizer, (ns, ns)
    A: np.ndarray  # viscous matrix, (ns, ns)
    face_weight: str = FACE_WEIGHT
    _extra: dict = field(default_factory=dict, repr=False)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def ns(self):
        return self.nc + self.n_faces * self.nf

    def face_slice(self, i):
        start = self.nc + i * self.nf
        return slice(start, start + self.nf)

    @property
    def S_vec(self):
        return np.kron(np.eye(2), self.S)

    @property
    def A_vec(self):
        return np.kron(np.eye(2), self.A)

    def reconstruct(self, v):
        """Reconstruction coefficients, shape (nr, 2), of a vector local unknown."""
        v = np.asarray(v).reshape(2, self.ns)
        return self.R @ v.T

    def error_quadrature(self, extra=0):
        """Elevated rule (exactness 2(k+2)+4+extra) with cell basis data."""
        key = ("err", extra)
        if key not in self._extra:
            verts = np.array([f.a for f in self.faces])
            q = polygon_quadrature(verts, np.zeros(2), 2 * (self.k + 2) + 4 + extra)
            self._extra[key] = (q.points, q.weights, self.basis.eval(q.points), self.basis.grad(q.points))
        return self._extra[key]

    def face_data_quadrature(self, i):
        """Elevated rule on face ``i`` for projecting non-polynomial data:
        (points, weights, face basis values, inverse face mass)."""
        key = ("face", i)
        if key not in self._extra:
            F = self.faces[i]
            q = segment_quadrature(F.a, F.b, 2 * self.k + 14)
            psi = FaceBasis(F.a, F.b, self.k).eval(q.points)
            self._extra[key] = (q.points, q.weights, psi, np.linalg.inv(F.mass))
        return self._extra[key]


def _geometry_key(verts_rel, k, face_weight, orth):
    # shape rounded relative to the element size; the size itself kept exactly
    scale = float(np.abs(verts_rel).max())
    return (k, face_weight, orth, float(f"{scale:.12e}"), tuple(np.round(verts_rel / scale, 13).ravel().tolist()))


def local_pack(mesh, t, k, face_weight=None, orthonormalize=None):
    """Operator pack for element ``t`` (cached by element shape)."""
    face_weight = face_weight or FACE_WEIGHT
    if orthonormalize is None:
        orthonormalize = True
    rel = mesh.element_vertices(t) - mesh.barycenters[t]
    key = _geometry_key(rel, k, face_weight, orthonormalize)
    pack = _CACHE.get(key)
    if pack is None:
        pack = build_pack(rel, k, face_weight, orthonormalize)
        if len(_CACHE) >= _CACHE_LIMIT:
            _CACHE.clear()
        _CACHE[key] = pack
    return pack


def build_pack(verts, k, face_weight=FACE_WEIGHT, orthonormalize=False):
    """Build all local operators for a polygon given by ccw vertices relative to
    its barycenter."""
    verts = np.asarray(verts, dtype=float)
    c0 = np.zeros(2)
    nc, nr, nf = dim_cell(k), dim_cell(k + 1), k + 1
    m = len(verts)
    ns = nc + m * nf
    x, y = verts[:, 0], verts[:, 1]
    area = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    d = verts[:, None, :] - verts[None, :, :]
    h_T = float(np.sqrt((d ** 2).sum(-1)).max())

    quad = polygon_quadrature(verts, c0, 2 * (k + 2))
    basis = CellBasis(c0, h_T, k + 1, orthonormalize, quad)
    w = quad.weights
    phi = basis.eval(quad.points)
    gphi = basis.grad(quad.points)
    M = phi.T @ (w[:, None] * phi)
    K = np.einsum("p,pid,pjd->ij", w, gphi, gphi)

    faces = []
    for i in range(m):
        a, b = verts[i], verts[(i + 1) % m]
        fq = segment_quadrature(a, b, 2 * k + 3)
        fb = FaceBasis(a, b, k)
        tan = (b - a) / fb.length
        normal = np.array([tan[1], -tan[0]])
        psi = fb.eval(fq.points)
        fphi = basis.eval(fq.points)
        dphi_n = basis.grad(fq.points) @ normal
        fw = fq.weights
        faces.append(
            FaceData(
                a=a, b=b, h=fb.length, normal=normal, points=fq.points, weights=fw,
                psi=psi, phi=fphi, dphi_n=dphi_n,
                mass=psi.T @ (fw[:, None] * psi),
                trace=psi.T @ (fw[:, None] * fphi),
            )
        )

    # velocity reconstruction: test with gradients of the non-constant basis functions
    rhs = np.zeros((nr, ns))
    rhs[:, :nc] = K[:, :nc]
    for i, F in enumerate(faces):
        sl = slice(nc + i * nf, nc + (i + 1) * nf)
        wdn = F.weights[:, None] * F.dphi_n
        rhs[:, :nc] -= wdn.T @ F.phi[:, :nc]
        rhs[:, sl] += wdn.T @ F.psi
    R = np.zeros((nr, ns))
    R[1:] = np.linalg.solve(K[1:, 1:], rhs[1:])
    means = w @ phi
    R[0] = -(means[1:] @ R[1:]) / means[0]
    R[0, :nc] += means[:nc] / means[0]

    # divergence reconstruction, integrated by parts on the cell term
    Mk = M[:nc, :nc]
    Mk_f = cho_factor(Mk)
    G = np.zeros((nc, 2 * ns))
    for comp in range(2):
        off = comp * ns
        G[:, off : off + nc] = -np.einsum("p,pi,pj->ij", w, gphi[:, :nc, comp], phi[:, :nc])
        for i, F in enumerate(faces):
            sl = slice(off + nc + i * nf, off + nc + (i + 1) * nf)
            G[:, sl] = F.normal[comp] * F.trace[:, :nc].T
    D = cho_solve(Mk_f, G)

    # stabilizer built from the difference operators
    E_T = np.zeros((nc, ns))
    E_T[:, :nc] = np.eye(nc)
    delta_T = cho_solve(Mk_f, M[:nc, :] @ R) - E_T
    S = delta_T.T @ Mk @ delta_T / h_T ** 2
    delta_F = []
    for i, F in enumerate(faces):
        E_F = np.zeros((nf, ns))
        E_F[:, nc + i * nf : nc + (i + 1) * nf] = np.eye(nf)
        dF = np.linalg.solve(F.mass, F.trace @ R) - E_F
        delta_F.append(dF)
        weight = F.h if face_weight == "face" else h_T
        S += dF.T @ F.mass @ dF / weight
    S = 0.5 * (S + S.T)
    A = R.T @ K @ R + S
    A = 0.5 * (A + A.T)

    return LocalOperatorPack(
        k=k, nc=nc, nr=nr, nf=nf, h_T=h_T, area=area, basis=basis,
        quad_points=quad.points, quad_weights=w, phi=phi, grad_phi=gphi, faces=faces,
        M=M, K=K, R=R, G=G, D=D, delta_T=delta_T, delta_F=delta_F, S=S, A=A,
        face_weight=face_weight,
    )


# ---------------------------------------------------------------------------
# element-level API


def interpolate_local(mesh, t, k, u, pack=None):
    """Local interpolant: L2 projections of ``u`` on the cell and on each face,
    computed with elevated quadrature.

    ``u`` maps physical points (n, 2) to values (n, 2). Returns the vector
    local unknown of length 2 ns (face blocks in element orientation).
    """
    pack = pack or local_pack(mesh, t, k)
    c = mesh.barycenters[t]
    nc = pack.nc
    out = np.zeros((2, pack.ns))
    P, w, phi, _ = pack.error_quadrature()
    ux = np.asarray(u(P + c), dtype=float).reshape(len(w), 2)
    rhs = phi[:, :nc].T @ (w[:, None] * ux)
    out[:, :nc] = np.linalg.solve(pack.M[:nc, :nc], rhs).T
    for i in range(pack.n_faces):
        P, w, psi, Minv = pack.face_data_quadrature(i)
        ux = np.asarray(u(P + c), dtype=float).reshape(len(w), 2)
        out[:, pack.face_slice(i)] = (Minv @ (psi.T @ (w[:, None] * ux))).T
    return out.ravel()


def velocity_reconstruction(mesh, t, k):
    return local_pack(mesh, t, k).R


def divergence_reconstruction(mesh, t, k):
    return local_pack(mesh, t, k).D


def stabilizer(mesh, t, k):
    return local_pack(mesh, t, k).S


def local_viscous(mesh, t, k):
    return local_pack(mesh, t, k)


def norm_1T_gram(pack):
    """Gram matrix of the local seminorm ||grad v_T||^2 + sum_F h_F^-1 ||v_F - v_T||^2."""
    nc, ns = pack.nc, pack.ns
    N = np.zeros((ns, ns))
    N[:nc, :nc] = pack.K[:nc, :nc]
    for i, F in enumerate(pack.faces):
        J = np.zeros((len(F.weights), ns))
        J[:, pack.face_slice(i)] = F.psi
        J[:, :nc] -= F.phi[:, :nc]
        N += J.T @ (F.weights[:, None] * J) / F.h
    return 0.5 * (N + N.T)


def local_norm_1T(mesh, t, k, v, pack=None):
    # integrated term by term: the Gram quadratic form loses half the digits near its kernel
    pack = pack or local_pack(mesh, t, k)
    v = np.asarray(v).reshape(2, pack.ns).T
    nc = pack.nc
    g = np.einsum("pid,ic->pcd", pack.grad_phi[:, :nc], v[:nc])
    total = float(pack.quad_weights @ (g ** 2).sum(axis=(1, 2)))
    for i, F in enumerate(pack.faces):
        d = F.psi @ v[pack.face_slice(i)] - F.phi[:, :nc] @ v[:nc]
        total += float(F.weights @ (d ** 2).sum(axis=1)) / F.h
    return float(np.sqrt(total))


def stab_squared(pack, v):
    """s_T(v, v) summed over components, evaluated from the difference
    operators so that near-kernel inputs give O(eps^2) rather than O(eps)."""
    v = np.asarray(v).reshape(2, pack.ns).T
    nc = pack.nc
    dT = pack.delta_T @ v
    total = float(np.sum(dT * (pack.M[:nc, :nc] @ dT))) / pack.h_T ** 2
    for F, dF in zip(pack.faces, pack.delta_F):
        d = dF @ v
        weight = F.h if pack.face_weight == "face" else pack.h_T
        total += float(np.sum(d * (F.mass @ d))) / weight
    return max(total, 0.0)


def stab_value(pack, w, v=None):
    w = np.asarray(w).reshape(2, pack.ns)
    v = w if v is None else np.asarray(v).reshape(2, pack.ns)
    return float(sum(wc @ pack.S @ vc for wc, vc in zip(w, v)))


@dataclass
class DecayProbe:
    h: np.ndarray
    values: np.ndarray
    slopes: np.ndarray  # rates between consecutive meshes


def stab_interp_decay_probe(meshes, k, u):
    """Global (Σ_T s_T(I_T u, I_T u))^{1/2} on a mesh sequence and its observed rates in h."""
    h, values = [], []
    for mesh in meshes:
        total = 0.0
        for t in range(mesh.n_elements):
            pack = local_pack(mesh, t, k)
            total += stab_squared(pack, interpolate_local(mesh, t, k, u, pack))
        h.append(mesh.h)
        values.append(np.sqrt(total))
    h, values = np.array(h), np.array(values)
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.log(values[:-1] / values[1:]) / np.log(h[:-1] / h[1:])
    return DecayProbe(h, values, slopes)
