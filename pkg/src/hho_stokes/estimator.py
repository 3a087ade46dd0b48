"""Residual-type a posteriori estimator: divergence, stabilization and jump
indicators, data oscillation and the effectivity index."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .hho_core import stab_squared


class EstimatorAnomaly(ArithmeticError):
    """The estimator vanishes while the true error does not."""


def _reconstruction_at(space, solution, t, points):
    pack = space.packs[t]
    rc = solution.reconstruction(t)
    return pack.basis.eval(points - space.mesh.barycenters[t]) @ rc


def eta_divergence(solution):
    """Per-element ν^{1/2} ||div r_T u_T||_T."""
    space, nu = solution.space, solution.nu
    out = np.zeros(space.mesh.n_elements)
    for t, pack in enumerate(space.packs):
        rc = solution.reconstruction(t)
        div = pack.grad_phi[:, :, 0] @ rc[:, 0] + pack.grad_phi[:, :, 1] @ rc[:, 1]
        out[t] = pack.quad_weights @ div ** 2
    return np.sqrt(nu * out)


def eta_stabilization(solution):
    """Per-element ν^{1/2} s_T(u_T, u_T)^{1/2}."""
    space, nu = solution.space, solution.nu
    s = np.array([stab_squared(pack, solution.local_velocity(t)) for t, pack in enumerate(space.packs)])
    return np.sqrt(nu * s)


def face_jumps(solution, g=None):
    """Squared L2 norms of the reconstruction jump on every face.

    Interior faces use the difference of the two one-sided reconstructions.
    Boundary faces compare the reconstruction with the Dirichlet datum ``g``
    when it is given, else with the boundary face unknown (its projection).
    """
    space = solution.space
    mesh = space.mesh
    out = np.zeros(mesh.n_faces)
    for f, face in enumerate(mesh.faces):
        t = face.owner
        i = mesh.element_faces[t].index(f)
        F = space.packs[t].faces[i]
        P = F.points + mesh.barycenters[t]
        weights = F.weights
        if face.neighbor is None and g is not None:
            # non-polynomial datum: elevated rule
            P, weights = space.packs[t].face_data_quadrature(i)[:2]
            P = P + mesh.barycenters[t]
        own = _reconstruction_at(space, solution, t, P)
        if face.neighbor is None:
            if g is not None:
                other = np.asarray(g(P), float).reshape(len(P), 2)
            else:
                v = solution.local_velocity(t).reshape(2, -1)
                other = F.psi @ v[:, space.packs[t].face_slice(i)].T
        else:
            other = _reconstruction_at(space, solution, face.neighbor, P)
        out[f] = weights @ ((own - other) ** 2).sum(axis=1)
    return out


def eta_jump(solution, g=None, jumps=None):
    """Per-element (ν Σ_{F ⊂ ∂T} h_F^{-1} ||[r u]||_F^2)^{1/2}; interior faces
    count for both incident elements."""
    space, nu = solution.space, solution.nu
    mesh = space.mesh
    jumps = face_jumps(solution, g) if jumps is None else jumps
    per_face = jumps / mesh.h_F
    out = np.array([per_face[list(fs)].sum() for fs in mesh.element_faces])
    return np.sqrt(nu * out)


def oscillation(space, nu, f):
    """Per-element ν^{-1/2} h_T ||f - π_T^k f||_T on the elevated quadrature."""
    out = np.zeros(space.mesh.n_elements)
    if f is None:
        return out
    data = space.cell_points(error=True)
    P = np.vstack([x[0] for x in data])
    fx = np.asarray(f(P), float).reshape(len(P), 2)
    off = 0
    for t, pack in enumerate(space.packs):
        _, W, phi, _ = data[t]
        n, nc = len(W), pack.nc
        ft = fx[off : off + n]
        pk = phi[:, :nc]
        coef = np.linalg.solve(pk.T @ (W[:, None] * pk), pk.T @ (W[:, None] * ft))
        res = ft - pk @ coef
        out[t] = space.mesh.h_T[t] ** 2 * (W @ (res ** 2).sum(axis=1))
        off += n
    return np.sqrt(out / nu)


@dataclass
class EstimatorReport:
    eta_d_T: np.ndarray
    eta_s_T: np.ndarray
    eta_J_T: np.ndarray
    osc_T: np.ndarray
    h_T: np.ndarray = field(repr=False, default=None)

    @property
    def eta_T_squared(self):
        return self.eta_d_T ** 2 + self.eta_s_T ** 2 + self.eta_J_T ** 2

    @property
    def eta_T(self):
        return np.sqrt(self.eta_T_squared)

    @staticmethod
    def _glob(v):
        return float(np.sqrt(np.sum(np.asarray(v) ** 2)))

    @property
    def eta_d(self):
        return self._glob(self.eta_d_T)

    @property
    def eta_s(self):
        return self._glob(self.eta_s_T)

    @property
    def eta_J(self):
        return self._glob(self.eta_J_T)

    @property
    def eta(self):
        return float(np.sqrt(self.eta_T_squared.sum()))

    @property
    def osc(self):
        return self._glob(self.osc_T)

    def __len__(self):
        return len(self.eta_d_T)

    def to_csv(self, path, errors=None):
        """One row per element; the error column is written only when ``errors`` is given."""
        header = ["element", "h_T", "eta_d", "eta_s", "eta_J", "osc"]
        if errors is not None:
            header.append("e_u")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t in range(len(self)):
                row = [t, self.h_T[t], self.eta_d_T[t], self.eta_s_T[t], self.eta_J_T[t], self.osc_T[t]]
                if errors is not None:
                    row.append(errors.e_u_T[t])
                w.writerow([repr(float(x)) if i else x for i, x in enumerate(row)])


def estimate(solution, f=None, g=None):
    """All per-element indicators for a discrete solution.

    ``f`` feeds the oscillation term; ``g`` is the Dirichlet datum used on
    boundary faces of the jump term.
    """
    space = solution.space
    return EstimatorReport(
        eta_d_T=eta_divergence(solution),
        eta_s_T=eta_stabilization(solution),
        eta_J_T=eta_jump(solution, g),
        osc_T=oscillation(space, solution.nu, f),
        h_T=space.mesh.h_T.copy(),
    )


def effectivity_index(e_u, e_p, eta):
    """sqrt((e_u^2 + e_p^2) / eta^2)."""
    err2 = e_u ** 2 + e_p ** 2
    if eta <= 0:
        if err2 == 0:
            return 0.0
        raise EstimatorAnomaly("zero estimator with nonzero error")
    return float(np.sqrt(err2) / eta)


def effectivity(errors, report):
    return effectivity_index(errors.e_u, errors.e_p, report.eta)


@dataclass
class LowerBoundCheck:
    violations: list
    jump_constant: float
    ratios: np.ndarray = field(repr=False)


def check_local_lower_bounds(mesh, errors, report, slack=1e-9):
    """Check η_{d,T} <= e_{u,T} and η_{s,T} <= e_{u,T} elementwise and record the
    realized constant of the jump bound against the node patch."""
    violations = []
    e = errors.e_u_T
    for t in range(mesh.n_elements):
        for name, val in (("divergence", report.eta_d_T[t]), ("stabilization", report.eta_s_T[t])):
            if val > e[t] + slack:
                violations.append((t, name, float(val), float(e[t])))
    e2 = e ** 2
    ratios = np.zeros(mesh.n_elements)
    for t in range(mesh.n_elements):
        patch = e2[list(mesh.neighbors_sharing_node(t))].sum()
        j2 = report.eta_J_T[t] ** 2
        ratios[t] = j2 / patch if patch > 0 else (0.0 if j2 == 0 else np.inf)
    return LowerBoundCheck(violations, float(ratios.max()) if len(ratios) else 0.0, ratios)
