"""Convergence tables, adaptive studies and solution export."""

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .adaptivity import AdaptConfig, adapt_loop
from .estimator import effectivity, estimate
from .mesh import generate_structured, make_domain, write_vtk
from .problems import example4, get_problem
from .system import DiscreteSolution, SingularSystemError, compute_errors, pressure_mean, solve_stokes

log = logging.getLogger(__name__)

TABLE_COLUMNS = ("dof", "eta", "order_eta", "e_u", "order_e_u", "dof_p", "e_p", "order_e_p", "eff")


def rate(err_coarse, err_fine, dof_coarse, dof_fine):
    """Convergence order with respect to ♯Dof between two levels."""
    if min(err_coarse, err_fine) <= 0 or dof_fine == dof_coarse:
        return math.nan
    return math.log(err_coarse / err_fine) / math.log(dof_fine / dof_coarse)


@dataclass
class ConvergenceRow:
    level: int
    n: int
    dof: int
    eta: float
    e_u: float
    dof_p: int
    e_p: float
    eff: float
    osc: float = 0.0
    seconds: float = 0.0
    order_eta: float = math.nan
    order_e_u: float = math.nan
    order_e_p: float = math.nan


@dataclass
class ConvergenceTable:
    example: int
    mesh: str
    k: int
    nu: float
    rows: list = field(default_factory=list)
    error: str = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TABLE_COLUMNS)
            for r in self.rows:
                d = asdict(r)
                w.writerow(["" if isinstance(d[c], float) and math.isnan(d[c]) else d[c] for c in TABLE_COLUMNS])


def fill_orders(rows):
    for prev, cur in zip(rows, rows[1:]):
        cur.order_eta = rate(prev.eta, cur.eta, prev.dof, cur.dof)
        cur.order_e_u = rate(prev.e_u, cur.e_u, prev.dof, cur.dof)
        cur.order_e_p = rate(prev.e_p, cur.e_p, prev.dof_p, cur.dof_p)


def zero_mean_pressure(problem, space):
    shift = pressure_mean(space, problem.p, problem.singular_points)
    if shift == 0.0:
        return problem.p
    return lambda P: problem.p(P) - shift


def solve_and_measure(problem, mesh, k, nu=None):
    """Solve one problem on one mesh; returns (solution, errors or None, report)."""
    nu = problem.nu if nu is None else nu
    sol = solve_stokes(mesh, k, nu, problem.f, problem.g)
    report = estimate(sol, problem.f, problem.g)
    errors = None
    if problem.has_exact:
        errors = compute_errors(sol, problem.u, problem.grad_u, zero_mean_pressure(problem, sol.space),
                                problem.singular_points)
    return sol, errors, report


def run_convergence(example, mesh_kind="quad", k=1, nu=1.0, levels=4, n0=4, out=None):
    """Solve on ``levels`` nested uniform meshes (n0, 2 n0, ...) and tabulate
    estimator, errors, orders and effectivity."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    problem = get_problem(example, nu)
    if not problem.has_exact:
        raise ValueError(f"example {example} has no exact solution")
    table = ConvergenceTable(example=int(example), mesh=mesh_kind, k=k, nu=nu)
    for level in range(levels):
        n = n0 * 2 ** level
        t0 = time.perf_counter()
        mesh = generate_structured(mesh_kind, n, problem.domain)
        try:
            sol, errors, report = solve_and_measure(problem, mesh, k, nu)
        except (SingularSystemError, np.linalg.LinAlgError) as exc:
            table.error = f"level {level}: {exc}"
            log.error("convergence run aborted: %s", table.error)
            break
        d = sol.space.dofs
        table.rows.append(
            ConvergenceRow(
                level=level, n=n, dof=d.n_velocity, eta=report.eta, e_u=errors.e_u,
                dof_p=d.n_pressure, e_p=errors.e_p, eff=effectivity(errors, report),
                osc=report.osc, seconds=time.perf_counter() - t0,
            )
        )
        log.info("level %d dof %d eta %.4e e_u %.4e e_p %.4e", level, d.n_velocity, report.eta, errors.e_u, errors.e_p)
    fill_orders(table.rows)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / "convergence.csv")
    return table


@dataclass
class ViscosityRow:
    nu: float
    e_u: float
    e_p: float
    eta: float
    eff: float
    e_u_predicted: float


def viscosity_sweep(example, nus, k=3, n=4, mesh_kind="quad"):
    """Direct solves for several viscosities on one mesh, with e_u also
    predicted by superposition.

    The load is linear in ν, so u_h(ν) = a + b / ν where ``a`` solves the
    viscous part of the load with the boundary datum and ``b`` the pressure
    part with zero datum. e_u(ν)² is then ν times a quadratic in 1/ν whose
    coefficients come from the two ν-free solves.
    """
    one, two = get_problem(example, 1.0), get_problem(example, 2.0)
    mesh = generate_structured(mesh_kind, n, one.domain)
    f_visc = lambda P: two.f(P) - one.f(P)
    f_pres = lambda P: 2.0 * one.f(P) - two.f(P)
    zero = lambda P: np.zeros((len(P), 2))
    a = solve_stokes(mesh, k, 1.0, f_visc, one.g)
    b = solve_stokes(mesh, k, 1.0, f_pres, zero)
    space = a.space
    p0 = np.zeros(space.dofs.n_pressure)

    def energy(u_vec, exact_u, exact_grad):
        sol = DiscreteSolution(space, 1.0, u_vec, p0, 0.0)
        return compute_errors(sol, exact_u, exact_grad, lambda P: np.zeros(len(P))).e_u ** 2

    zgrad = lambda P: np.zeros((len(P), 2, 2))
    c0 = energy(a.u, one.u, one.grad_u)
    c2 = energy(b.u, zero, zgrad)
    c1 = energy(a.u + b.u, one.u, one.grad_u) - c0 - c2
    rows = []
    for nu in nus:
        pb = get_problem(example, nu)
        sol, errors, report = solve_and_measure(pb, mesh, k, nu)
        predicted = math.sqrt(max(nu * c0 + c1 + c2 / nu, 0.0))
        rows.append(ViscosityRow(nu=nu, e_u=errors.e_u, e_p=errors.e_p, eta=report.eta,
                                 eff=effectivity(errors, report), e_u_predicted=predicted))
    return rows


def adaptive_setup(example, n=1, nu=1.0):
    """Initial mesh and problem of an adaptive study (3: L-shape, 4: channel)."""
    example = int(example)
    if example == 3:
        problem = get_problem(3, nu)
        return generate_structured("quad", n, problem.domain), problem
    if example == 4:
        domain = make_domain("channel", n)
        return generate_structured("quad", n, domain), example4(nu, domain)
    raise ValueError("adaptive studies are defined for examples 3 and 4")


DEFAULT_TOL = {3: 0.01, 4: 0.15}


@dataclass
class AdaptiveResult:
    trace: object
    slope: float
    problem: object


def run_adaptive(example, k=1, theta=0.3, tol=None, max_iterations=40, n=1, nu=1.0, out=None,
                 write_meshes=True, callback=None):
    """Adaptive study with trace CSV and optional per-iteration mesh files.

    The slope is the least-squares fit of log η_h against log ♯Dof over the
    final half of the iterations.
    """
    tol = DEFAULT_TOL.get(int(example), 0.01) if tol is None else tol
    mesh, problem = adaptive_setup(example, n, nu)
    config = AdaptConfig(
        theta=theta, tol=tol, max_iterations=max_iterations, k=k, nu=nu,
        write_meshes=write_meshes and out is not None,
        out_dir=str(Path(out) / "meshes") if out is not None else None,
    )
    trace = adapt_loop(mesh, problem, config, callback=callback)
    result = AdaptiveResult(trace=trace, slope=trace.slope(0.5), problem=problem)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        trace.to_csv(out / "trace.csv")
        if trace.report is not None:
            trace.report.to_csv(out / "estimator_final.csv")
    return result


def locate_points(mesh, points):
    """Index of an element containing each point (-1 when outside every element)."""
    points = np.asarray(points, float)
    owner = np.full(len(points), -1)
    for t in range(mesh.n_elements):
        V = mesh.element_vertices(t)
        lo, hi = V.min(axis=0) - 1e-12, V.max(axis=0) + 1e-12
        cand = np.flatnonzero((owner < 0) & np.all((points >= lo) & (points <= hi), axis=1))
        if not len(cand):
            continue
        P = points[cand]
        inside = np.ones(len(cand), dtype=bool)
        nxt = np.roll(V, -1, axis=0)
        scale = float(np.abs(V).max()) + 1.0
        for a, b in zip(V, nxt):
            cross = (b[0] - a[0]) * (P[:, 1] - a[1]) - (b[1] - a[1]) * (P[:, 0] - a[0])
            inside &= cross >= -1e-12 * scale * np.hypot(*(b - a))
        if not inside.all():
            # not convex: fall back to the crossing-number test
            inside |= _crossing_inside(V, P)
        owner[cand[inside]] = t
    return owner


def _crossing_inside(V, P):
    x, y = P[:, 0], P[:, 1]
    inside = np.zeros(len(P), dtype=bool)
    for a, b in zip(V, np.roll(V, -1, axis=0)):
        straddle = (a[1] > y) != (b[1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
        inside ^= straddle & (x < xc)
    return inside


@dataclass
class ExportResult:
    lattice_path: Path
    vtk_path: Path
    n_points: int
    n_skipped: int


def export_solution(solution, prefix, resolution=(101, 101), report=None):
    """Sample the velocity reconstruction and the pressure on a lattice over
    the mesh bounding box (CSV: x, y, u1, u2, p) and write the mesh with the
    per-element estimator as legacy VTK. Points outside the mesh are skipped
    and counted."""
    space = solution.space
    mesh = space.mesh
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    nx, ny = resolution
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    X, Y = np.meshgrid(np.linspace(lo[0], hi[0], nx), np.linspace(lo[1], hi[1], ny), indexing="xy")
    pts = np.c_[X.ravel(), Y.ravel()]
    owner = locate_points(mesh, pts)
    rows = []
    for t in np.unique(owner[owner >= 0]):
        sel = np.flatnonzero(owner == t)
        pack = space.packs[t]
        rel = pts[sel] - mesh.barycenters[t]
        vals = pack.basis.eval(rel)
        u = vals @ solution.reconstruction(t)
        p = vals[:, : pack.nc] @ solution.local_pressure(t)
        rows.extend(zip(sel, u[:, 0], u[:, 1], p))
    rows.sort()
    lattice = prefix.with_name(prefix.name + "_lattice.csv")
    with open(lattice, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "u1", "u2", "p"])
        for i, u1, u2, p in rows:
            w.writerow([repr(float(pts[i, 0])), repr(float(pts[i, 1])), repr(float(u1)), repr(float(u2)), repr(float(p))])
    vtk = prefix.with_name(prefix.name + ".vtk")
    cell_data = {}
    if report is not None:
        cell_data["eta"] = report.eta_T
    write_vtk(mesh, vtk, cell_data=cell_data)
    skipped = int((owner < 0).sum())
    if skipped:
        log.info("export: %d lattice points outside the mesh were skipped", skipped)
    return ExportResult(lattice, vtk, len(pts), skipped)
