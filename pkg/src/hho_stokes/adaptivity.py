"""Dörfler marking and the solve-estimate-mark-refine loop."""

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estimator import effectivity, estimate
from .mesh import refine, write_poly2d, write_vtk
from .system import SingularSystemError, compute_errors, pressure_mean, solve_stokes

log = logging.getLogger(__name__)


def mark_dorfler(report, theta):
    """Smallest prefix of elements, sorted by η_T² descending (ties by index),
    whose squared indicators sum to at least θ times the total.

    ``report`` is an EstimatorReport or an array of per-element η_T².
    Returns a sorted list of element indices (empty when all indicators vanish).
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    eta2 = np.asarray(getattr(report, "eta_T_squared", report), dtype=float)
    if eta2.size == 0:
        raise ValueError("empty estimator")
    if np.any(eta2 < 0) or not np.all(np.isfinite(eta2)):
        raise ValueError("indicators must be finite and nonnegative")
    total = eta2.sum()
    if total == 0.0:
        return []
    order = np.lexsort((np.arange(eta2.size), -eta2))
    csum = np.cumsum(eta2[order])
    n = int(np.searchsorted(csum, theta * total, side="left")) + 1
    return sorted(order[: min(n, eta2.size)].tolist())


@dataclass(frozen=True)
class AdaptConfig:
    theta: float = 0.3
    tol: float = 0.01
    max_iterations: int = 30
    k: int = 1
    nu: float = 1.0
    boundary_jump: str = "datum"
    refinement_rule: str = "sides"
    write_meshes: bool = False
    out_dir: str = None

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.boundary_jump not in ("datum", "projected"):
            raise ValueError("boundary_jump must be 'datum' or 'projected'")
        if self.refinement_rule not in ("sides", "edges"):
            raise ValueError("refinement_rule must be 'sides' or 'edges'")


@dataclass
class IterationRecord:
    iteration: int
    dof_velocity: int
    dof_pressure: int
    eta_d: float
    eta_s: float
    eta_J: float
    eta: float
    e_u: float = math.nan
    e_p: float = math.nan
    eff: float = math.nan
    marked: int = 0
    seconds: float = 0.0
    n_elements: int = 0
    min_h_element: int = -1


TRACE_COLUMNS = (
    "iteration", "dof_velocity", "dof_pressure", "eta_d", "eta_s", "eta_J", "eta",
    "e_u", "e_p", "eff", "marked", "seconds",
)


@dataclass
class AdaptTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    error: str = None
    mesh: object = None
    solution: object = None
    report: object = None

    def __len__(self):
        return len(self.records)

    @property
    def eta(self):
        return np.array([r.eta for r in self.records])

    @property
    def dofs(self):
        return np.array([r.dof_velocity for r in self.records])

    def slope(self, fraction=0.5):
        """Least-squares slope of log η_h against log ♯Dof over the final part of the run."""
        n = len(self.records)
        start = min(int(n * (1 - fraction)), max(n - 2, 0))
        x, y = np.log(self.dofs[start:]), np.log(self.eta[start:])
        if len(x) < 2:
            return math.nan
        return float(np.polyfit(x, y, 1)[0])

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                d = asdict(r)
                w.writerow([d[c] for c in TRACE_COLUMNS])


def adapt_loop(mesh, problem, config, callback=None):
    """Solve, estimate, mark and refine until η_h < tol or the iteration cap.

    A solver failure stops the loop and is recorded in ``trace.error``; the
    records of completed iterations are kept.
    """
    trace = AdaptTrace()
    out = Path(config.out_dir) if config.out_dir and config.write_meshes else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    exact = problem.has_exact
    for it in range(config.max_iterations):
        t0 = time.perf_counter()
        try:
            sol = solve_stokes(mesh, config.k, config.nu, problem.f, problem.g)
        except (SingularSystemError, np.linalg.LinAlgError) as exc:
            trace.error = f"iteration {it}: {exc}"
            log.error("solve failed: %s", trace.error)
            break
        g_jump = problem.g if config.boundary_jump == "datum" else None
        report = estimate(sol, problem.f, g_jump)
        rec = IterationRecord(
            iteration=it,
            dof_velocity=sol.space.dofs.n_velocity,
            dof_pressure=sol.space.dofs.n_pressure,
            eta_d=report.eta_d, eta_s=report.eta_s, eta_J=report.eta_J, eta=report.eta,
            n_elements=mesh.n_elements,
            min_h_element=int(np.argmin(mesh.h_T)),
        )
        if exact:
            errs = compute_errors(sol, problem.u, problem.grad_u, _shifted_pressure(problem, sol),
                                  problem.singular_points)
            rec.e_u, rec.e_p, rec.eff = errs.e_u, errs.e_p, effectivity(errs, report)
        trace.mesh, trace.solution, trace.report = mesh, sol, report
        if out is not None:
            write_poly2d(mesh, out / f"mesh_{it:03d}.poly2d")
            write_vtk(mesh, out / f"mesh_{it:03d}.vtk", cell_data={"eta": report.eta_T})
        done = report.eta < config.tol
        if not done and it + 1 < config.max_iterations:
            marks = mark_dorfler(report, config.theta)
            rec.marked = len(marks)
        rec.seconds = time.perf_counter() - t0
        trace.records.append(rec)
        log.info("iter %d dof %d eta %.4e marked %d", it, rec.dof_velocity, rec.eta, rec.marked)
        if callback is not None:
            callback(rec, mesh, sol, report)
        if done:
            trace.converged = True
            break
        if rec.marked == 0:
            break
        mesh = refine(mesh, marks, rule=config.refinement_rule)
    return trace


def _shifted_pressure(problem, solution):
    """Exact pressure shifted to zero mean on the domain (quadrature mean)."""
    shift = pressure_mean(solution.space, problem.p, problem.singular_points)
    if shift == 0.0:
        return problem.p
    return lambda P: problem.p(P) - shift
