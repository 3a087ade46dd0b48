"""Global unknowns, saddle-point assembly, Dirichlet lifting, solve and error norms."""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .hho_core import local_pack, stab_squared
from .poly import segment_quadrature

log = logging.getLogger(__name__)


class SingularSystemError(RuntimeError):
    pass


class DofMap:
    """Global numbering of hybrid velocity and broken pressure unknowns.

    Velocity cell blocks come first (element-major, then component), then
    face blocks; the face basis of face F is oriented along its owner's
    counterclockwise loop.
    """

    def __init__(self, mesh, k):
        self.mesh = mesh
        self.k = k
        self.nc = (k + 1) * (k + 2) // 2
        self.nf = k + 1
        self.n_cell_dofs = 2 * self.nc * mesh.n_elements
        self.n_face_dofs = 2 * self.nf * mesh.n_faces
        self.n_velocity = self.n_cell_dofs + self.n_face_dofs
        self.n_pressure = self.nc * mesh.n_elements
        self.boundary_faces = np.flatnonzero(mesh.boundary_flags)
        self._flip = (-1.0) ** np.arange(self.nf)

    def cell_dofs(self, t, comp):
        start = (2 * t + comp) * self.nc
        return np.arange(start, start + self.nc)

    def face_dofs(self, f, comp=None):
        start = self.n_cell_dofs + 2 * f * self.nf
        if comp is None:
            return np.arange(start, start + 2 * self.nf)
        start += comp * self.nf
        return np.arange(start, start + self.nf)

    def pressure_dofs(self, t):
        return np.arange(t * self.nc, (t + 1) * self.nc)

    def boundary_dofs(self):
        if not len(self.boundary_faces):
            return np.zeros(0, dtype=int)
        return np.concatenate([self.face_dofs(f) for f in self.boundary_faces])

    def local_indices(self, t):
        """Global indices and orientation signs of the vector local unknowns of ``t``."""
        mesh = self.mesh
        idx, sign = [], []
        for comp in range(2):
            idx.append(self.cell_dofs(t, comp))
            sign.append(np.ones(self.nc))
            for f, s in zip(mesh.element_faces[t], mesh.element_signs[t]):
                idx.append(self.face_dofs(f, comp))
                sign.append(self._flip if s < 0 else np.ones(self.nf))
        return np.concatenate(idx), np.concatenate(sign)

    @property
    def counts(self):
        return {"velocity": self.n_velocity, "pressure": self.n_pressure}


class HHOSpace:
    """Mesh, degree, global numbering and cached local operator packs."""

    def __init__(self, mesh, k):
        self.mesh = mesh
        self.k = k
        self.dofs = DofMap(mesh, k)
        self.packs = [local_pack(mesh, t, k) for t in range(mesh.n_elements)]
        self._local = [self.dofs.local_indices(t) for t in range(mesh.n_elements)]

    def local(self, t):
        return self._local[t]

    def restrict(self, u, t):
        idx, sign = self._local[t]
        return sign * u[idx]

    def cell_points(self, error=False, singular_points=()):
        """Quadrature points, weights and basis data for every element."""
        out = []
        for t, pack in enumerate(self.packs):
            c = self.mesh.barycenters[t]
            if error:
                extra = 6 if _touches(self.mesh, t, singular_points) else 0
                P, W, phi, gphi = pack.error_quadrature(extra)
            else:
                P, W, phi, gphi = pack.quad_points, pack.quad_weights, pack.phi, pack.grad_phi
            out.append((P + c, W, phi, gphi))
        return out

    def interpolate(self, u):
        """Global interpolant (cell and face L2 projections) of a vector field."""
        mesh, d = self.mesh, self.dofs
        out = np.zeros(d.n_velocity)
        for t, pack in enumerate(self.packs):
            P, w, phi, _ = pack.error_quadrature()
            ux = np.asarray(u(P + mesh.barycenters[t]), float).reshape(len(w), 2)
            coef = np.linalg.solve(pack.M[: pack.nc, : pack.nc], phi[:, : pack.nc].T @ (w[:, None] * ux))
            for comp in range(2):
                out[d.cell_dofs(t, comp)] = coef[:, comp]
        for f in range(mesh.n_faces):
            out[d.face_dofs(f)] = self.project_face(f, u)
        return out

    def project_face(self, f, g):
        """L2 projection of ``g`` on face ``f`` in the global face orientation,
        returned as [component 0 coefficients, component 1 coefficients]."""
        mesh = self.mesh
        face = mesh.faces[f]
        t = face.owner
        i = mesh.element_faces[t].index(f)
        P, w, psi, Minv = self.packs[t].face_data_quadrature(i)
        gx = np.asarray(g(P + mesh.barycenters[t]), float).reshape(len(w), 2)
        return (Minv @ (psi.T @ (w[:, None] * gx))).T.ravel()

    def interpolate_pressure(self, p):
        out = np.zeros(self.dofs.n_pressure)
        for t, pack in enumerate(self.packs):
            P, w, phi, _ = pack.error_quadrature()
            px = np.asarray(p(P + self.mesh.barycenters[t]), float).reshape(len(w))
            nc = pack.nc
            out[self.dofs.pressure_dofs(t)] = np.linalg.solve(pack.M[:nc, :nc], phi[:, :nc].T @ (w * px))
        return out


def _touches(mesh, t, points):
    if not len(points):
        return False
    verts = mesh.element_vertices(t)
    for p in points:
        if np.min(np.hypot(*(verts - np.asarray(p)).T)) < 1e-12:
            return True
    return False


@dataclass
class SaddleSystem:
    """Assembled blocks of the discrete Stokes problem.

    ``A`` holds nu * a_h, ``B`` holds b_h (rows: pressure unknowns),
    ``rhs`` the cell loads (f, v_h) and ``mean`` the pressure integrals.
    """

    space: HHOSpace
    nu: float
    A: sp.csr_matrix
    B: sp.csr_matrix
    rhs: np.ndarray
    mean: np.ndarray
    lifting: np.ndarray = None

    @property
    def dofs(self):
        return self.space.dofs


@dataclass
class ReducedSystem:
    system: SaddleSystem
    matrix: sp.csc_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    flux_defect: float = 0.0


@dataclass
class DiscreteSolution:
    space: HHOSpace
    nu: float
    u: np.ndarray
    p: np.ndarray
    residual: float
    multiplier: float = 0.0
    boundary: np.ndarray = None  # boundary face values (global orientation)

    def local_velocity(self, t):
        return self.space.restrict(self.u, t)

    def local_pressure(self, t):
        return self.p[self.space.dofs.pressure_dofs(t)]

    def reconstruction(self, t):
        """Coefficients (nr, 2) of r_T^{k+1} u_T in the pack basis of ``t``."""
        return self.space.packs[t].reconstruct(self.local_velocity(t))


def assemble(mesh, k, nu, f, space=None):
    """Assemble viscous, coupling and load blocks.

    ``f`` maps points (n, 2) to body-force values (n, 2); ``None`` means f = 0.
    """
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    space = space if space is not None else HHOSpace(mesh, k)
    if space.mesh is not mesh or space.k != k:
        raise ValueError("inconsistent dof map")
    d = space.dofs
    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []
    rhs = np.zeros(d.n_velocity)
    mean = np.zeros(d.n_pressure)

    data = space.cell_points()
    fx_all = None
    if f is not None:
        P = np.vstack([x[0] for x in data])
        fx_all = np.asarray(f(P), float).reshape(len(P), 2)
    offset = 0
    for t, pack in enumerate(space.packs):
        idx, sign = space.local(t)
        Av = nu * pack.A_vec * np.outer(sign, sign)
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(Av.ravel())
        pidx = d.pressure_dofs(t)
        Bl = -pack.G * sign[None, :]
        brows.append(np.repeat(pidx, len(idx)))
        bcols.append(np.tile(idx, len(pidx)))
        bvals.append(Bl.ravel())
        P, W, phi, _ = data[t]
        nc = pack.nc
        mean[pidx] = W @ phi[:, :nc]
        if fx_all is not None:
            fx = fx_all[offset : offset + len(W)]
            loads = phi[:, :nc].T @ (W[:, None] * fx)
            for comp in range(2):
                rhs[d.cell_dofs(t, comp)] += loads[:, comp]
        offset += len(W)

    n, npr = d.n_velocity, d.n_pressure
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    B = sp.csr_matrix((np.concatenate(bvals), (np.concatenate(brows), np.concatenate(bcols))), shape=(npr, n))
    A.sum_duplicates()
    B.sum_duplicates()
    return SaddleSystem(space=space, nu=float(nu), A=A, B=B, rhs=rhs, mean=mean)


def boundary_flux(space, g, exactness=None):
    """Integral of g . n over the domain boundary (face-wise Gauss quadrature;
    the face rule of the local operators unless ``exactness`` is given)."""
    mesh = space.mesh
    total = 0.0
    for f in space.dofs.boundary_faces:
        face = mesh.faces[f]
        t = face.owner
        i = mesh.element_faces[t].index(f)
        F = space.packs[t].faces[i]
        if exactness is None:
            P, W = F.points + mesh.barycenters[t], F.weights
        else:
            a, b = mesh.vertices[face.vertices[0]], mesh.vertices[face.vertices[1]]
            q = segment_quadrature(a, b, exactness)
            P, W = q.points, q.weights
        gx = np.asarray(g(P), float).reshape(len(W), 2)
        total += W @ (gx @ face.normal)
    return float(total)


def apply_dirichlet(system, g=None):
    """Eliminate boundary face unknowns.

    Boundary faces take the L2 projection of ``g`` (zero when ``g`` is
    None); the viscous and divergence couplings to those values move to the
    right-hand side. The pressure block is scaled by 1/nu so the reduced
    matrix does not depend on the viscosity.
    """
    space, d = system.space, system.dofs
    fixed = d.boundary_dofs()
    free = np.setdiff1d(np.arange(d.n_velocity), fixed)
    values = np.zeros(len(fixed))
    flux = 0.0
    if g is not None and len(fixed):
        values = np.concatenate([space.project_face(f, g) for f in d.boundary_faces])
        flux = _check_compatibility(space, g)
    lifting = np.zeros(d.n_velocity)
    lifting[fixed] = values
    system.lifting = lifting

    nu = system.nu
    A = (system.A / nu).tocsr()
    B = system.B
    Aff = A[free][:, free]
    Bf = B[:, free]
    m = sp.csr_matrix(system.mean.reshape(-1, 1))
    npr = d.n_pressure
    K = sp.bmat(
        [
            [Aff, Bf.T, None],
            [Bf, None, m],
            [None, m.T, None],
        ],
        format="csc",
    )
    r_u = system.rhs[free] / nu - A[free] @ lifting
    r_p = -(B @ lifting)
    rhs = np.concatenate([r_u, r_p, [0.0]])
    assert K.shape[0] == len(free) + npr + 1
    return ReducedSystem(system, K, rhs, free, fixed, values, flux)


def solve(reduced, tol=1e-10):
    """Sparse direct solve of the reduced saddle-point system."""
    system = reduced.system
    d = system.dofs
    K, b = reduced.matrix, reduced.rhs
    try:
        lu = splu(K, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystemError(
            "singular saddle-point matrix (inf-sup failure? disconnected mesh?)"
        ) from exc
    x = lu.solve(b)
    res = np.linalg.norm(K @ x - b)
    scale = np.linalg.norm(b)
    rel = res / scale if scale > 0 else res
    if not np.isfinite(rel) or rel > tol:
        # one step of iterative refinement
        x += lu.solve(b - K @ x)
        res = np.linalg.norm(K @ x - b)
        rel = res / scale if scale > 0 else res
    if not np.isfinite(rel) or rel > tol:
        raise SingularSystemError(f"solve failed: relative residual {rel:.3e}")
    nfree = len(reduced.free)
    u = system.lifting.copy()
    u[reduced.free] = x[:nfree]
    p = system.nu * x[nfree : nfree + d.n_pressure]
    return DiscreteSolution(
        space=system.space, nu=system.nu, u=u, p=p, residual=float(rel),
        multiplier=float(x[-1]), boundary=reduced.fixed_values,
    )


def solve_stokes(mesh, k, nu, f, g=None, space=None, method="condensed"):
    """Assemble, lift boundary data and solve in one call.

    ``method="condensed"`` eliminates cell unknowns element by element before
    the sparse factorization; ``"full"`` factorizes the bordered system.
    """
    system = assemble(mesh, k, nu, f, space=space)
    if method == "condensed":
        return solve_condensed(system, g)
    if method == "full":
        return solve(apply_dirichlet(system, g))
    raise ValueError(f"unknown solve method {method!r}")


def _constant_coefficient(pack):
    """Coefficient of the constant function 1 on the first (constant) basis function."""
    return 1.0 / float(pack.phi[0, 0])


def solve_condensed(system, g=None):
    """Static condensation of cell velocities and non-constant pressure modes.

    The skeleton system couples face velocities and one pressure constant per
    element. One constant is pinned after projecting the divergence
    right-hand side onto the compatible subspace; the pressure is then
    shifted to zero mean. Equivalent to the bordered solve.
    """
    space, d, nu = system.space, system.dofs, system.nu
    mesh = space.mesh
    nT = mesh.n_elements
    nS = d.n_face_dofs + nT
    rows, cols, vals = [], [], []
    rhs_S = np.zeros(nS)
    local = []
    for t, pack in enumerate(space.packs):
        idx, sign = space.local(t)
        nc, ns = pack.nc, pack.ns
        nv = 2 * ns
        A = pack.A_vec * np.outer(sign, sign)
        B = -pack.G * sign[None, :]
        L = np.zeros((nv + nc, nv + nc))
        L[:nv, :nv] = A
        L[nv:, :nv] = B
        L[:nv, nv:] = B.T
        r = np.zeros(nv + nc)
        cell_pos = np.r_[np.arange(nc), ns + np.arange(nc)]
        r[cell_pos] = system.rhs[idx[cell_pos]] / nu
        face_pos = np.setdiff1d(np.arange(nv), cell_pos)
        I = np.r_[cell_pos, nv + 1 + np.arange(nc - 1)]
        S = np.r_[face_pos, nv]
        LII = L[np.ix_(I, I)]
        X = np.linalg.solve(LII, np.c_[L[np.ix_(I, S)], r[I]])
        KS = L[np.ix_(S, S)] - L[np.ix_(S, I)] @ X[:, :-1]
        rS = r[S] - L[np.ix_(S, I)] @ X[:, -1]
        gS = np.r_[idx[face_pos] - d.n_cell_dofs, d.n_face_dofs + t]
        rows.append(np.repeat(gS, len(gS)))
        cols.append(np.tile(gS, len(gS)))
        vals.append(KS.ravel())
        np.add.at(rhs_S, gS, rS)
        local.append((idx, gS, X))
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nS, nS))

    fixed = d.boundary_dofs() - d.n_cell_dofs
    values = np.zeros(len(fixed))
    if g is not None and len(fixed):
        values = np.concatenate([space.project_face(f, g) for f in d.boundary_faces])
        _check_compatibility(space, g)
    xS = np.zeros(nS)
    xS[fixed] = values
    rhs_S -= K @ xS

    # compatibility: weighted sum of constant-pressure rows must vanish
    w = np.array([_constant_coefficient(p) for p in space.packs])
    p0 = d.n_face_dofs + np.arange(nT)
    area = mesh.areas
    defect = float(w @ rhs_S[p0])
    rhs_S[p0] -= defect * area / (area.sum() * w)

    pinned = d.n_face_dofs
    free = np.setdiff1d(np.arange(nS), np.r_[fixed, pinned])
    Kff = K[free][:, free].tocsc()
    try:
        lu = splu(Kff, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystemError("singular skeleton matrix (inf-sup failure? disconnected mesh?)") from exc
    b = rhs_S[free]
    x = lu.solve(b)
    scale = np.linalg.norm(b)
    rel = np.linalg.norm(Kff @ x - b) / scale if scale > 0 else np.linalg.norm(Kff @ x - b)
    if not np.isfinite(rel) or rel > 1e-10:
        x += lu.solve(b - Kff @ x)
        rel = np.linalg.norm(Kff @ x - b) / scale if scale > 0 else np.linalg.norm(Kff @ x - b)
    if not np.isfinite(rel) or rel > 1e-10:
        raise SingularSystemError(f"solve failed: relative residual {rel:.3e}")
    xS[free] = x

    u = np.zeros(d.n_velocity)
    p = np.zeros(d.n_pressure)
    u[d.n_cell_dofs :] = xS[: d.n_face_dofs]
    for t, (idx, gS, X) in enumerate(local):
        pack = space.packs[t]
        nc = pack.nc
        xI = X[:, -1] - X[:, :-1] @ xS[gS]
        ploc = np.zeros(nc)
        ploc[0] = xS[gS[-1]]
        ploc[1:] = xI[2 * nc :]
        cell = xI[: 2 * nc]
        u[idx[:nc]] = cell[:nc]
        u[idx[pack.ns : pack.ns + nc]] = cell[nc:]
        p[d.pressure_dofs(t)] = ploc
    # zero mean: the constant function has coefficient w_T on the first mode
    mean = float(system.mean @ p) / area.sum()
    p[d.nc * np.arange(nT)] -= mean * w
    return DiscreteSolution(
        space=space, nu=nu, u=u, p=nu * p, residual=float(rel),
        multiplier=defect / area.sum(), boundary=values,
    )


def _check_compatibility(space, g):
    flux = boundary_flux(space, g, exactness=30)
    perimeter = float(space.mesh.h_F[space.dofs.boundary_faces].sum())
    if abs(flux) > 1e-8 * perimeter:
        warnings.warn(f"boundary datum violates compatibility: flux {flux:.3e}", stacklevel=3)
    return flux


@dataclass
class ErrorReport:
    e_u: float
    e_p: float
    e_u_T: np.ndarray
    e_p_T: np.ndarray
    grad_T: np.ndarray = field(repr=False, default=None)
    stab_T: np.ndarray = field(repr=False, default=None)


def compute_errors(solution, exact_u, exact_grad_u, exact_p, singular_points=()):
    """Energy velocity error and scaled pressure error, element by element.

    ``exact_grad_u`` returns Jacobians of shape (n, 2, 2) with
    ``J[:, c, d] = d u_c / d x_d``.
    """
    if exact_grad_u is None:
        raise ValueError("the velocity error needs the exact gradient")
    space, nu = solution.space, solution.nu
    data = space.cell_points(error=True, singular_points=singular_points)
    P = np.vstack([x[0] for x in data])
    J = np.asarray(exact_grad_u(P), float).reshape(len(P), 2, 2)
    px = np.asarray(exact_p(P), float).reshape(len(P)) if exact_p is not None else None
    nT = space.mesh.n_elements
    grad_T, stab_T, ep2 = np.zeros(nT), np.zeros(nT), np.zeros(nT)
    off = 0
    for t, pack in enumerate(space.packs):
        _, W, phi, gphi = data[t]
        n = len(W)
        v = solution.local_velocity(t)
        rc = pack.reconstruct(v)  # (nr, 2)
        grad_r = np.einsum("pid,ic->pcd", gphi, rc)
        diff = J[off : off + n] - grad_r
        grad_T[t] = W @ (diff ** 2).sum(axis=(1, 2))
        stab_T[t] = stab_squared(pack, v)
        if px is not None:
            ph = phi[:, : pack.nc] @ solution.local_pressure(t)
            ep2[t] = W @ (px[off : off + n] - ph) ** 2
        off += n
    e_u_T = np.sqrt(np.maximum(nu * (grad_T + stab_T), 0.0))
    e_p_T = np.sqrt(ep2 / nu)
    return ErrorReport(
        e_u=float(np.sqrt((e_u_T ** 2).sum())),
        e_p=float(np.sqrt((e_p_T ** 2).sum())),
        e_u_T=e_u_T,
        e_p_T=e_p_T,
        grad_T=grad_T,
        stab_T=stab_T,
    )


def pressure_mean(space, p, singular_points=()):
    """Domain average of a scalar callback, using the error quadrature."""
    data = space.cell_points(error=True, singular_points=singular_points)
    P = np.vstack([x[0] for x in data])
    W = np.concatenate([x[1] for x in data])
    return float(W @ np.asarray(p(P), float).reshape(-1) / W.sum())


def write_coefficients(solution, path):
    """Plain-text block dump of the discrete solution.

    Layout: a header line ``hho-stokes-solution k nu n_elements n_faces``,
    then one block per element::

        element <t>
        u1 <cell coefficients of component 1>
        u2 <cell coefficients of component 2>
        p <pressure coefficients>

    then one block per face (coefficients in the owner's orientation)::

        face <f> <owner>
        u1 <...>
        u2 <...>

    Coefficients refer to the scaled monomial cell basis of each element
    (orthonormalized) and the scaled arclength face basis.
    """
    space = solution.space
    d, mesh = space.dofs, space.mesh

    def line(tag, values):
        return tag + " " + " ".join(f"{v:.17g}" for v in values) + "\n"

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"hho-stokes-solution {space.k} {solution.nu!r} {mesh.n_elements} {mesh.n_faces}\n")
        for t in range(mesh.n_elements):
            fh.write(f"element {t}\n")
            fh.write(line("u1", solution.u[d.cell_dofs(t, 0)]))
            fh.write(line("u2", solution.u[d.cell_dofs(t, 1)]))
            fh.write(line("p", solution.local_pressure(t)))
        for f, face in enumerate(mesh.faces):
            fh.write(f"face {f} {face.owner}\n")
            fh.write(line("u1", solution.u[d.face_dofs(f, 0)]))
            fh.write(line("u2", solution.u[d.face_dofs(f, 1)]))
