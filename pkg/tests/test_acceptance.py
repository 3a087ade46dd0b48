"""End-to-end acceptance checks, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (lines are printed even when
output is captured) or directly with ``python3 tests/test_acceptance.py``.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hho_stokes.adaptivity import mark_dorfler  # noqa: E402
from hho_stokes.bench import run_adaptive, run_convergence, viscosity_sweep  # noqa: E402
from hho_stokes.estimator import check_local_lower_bounds, effectivity_index, estimate  # noqa: E402
from hho_stokes.hho_core import interpolate_local, local_pack  # noqa: E402
from hho_stokes.mesh import PolygonalMesh, generate_structured, refine, validate  # noqa: E402
from hho_stokes.poly import elliptic_project_cell, l2_project_cell, monomial_exponents  # noqa: E402
from hho_stokes.problems import example1, polynomial_patch_problem  # noqa: E402
from hho_stokes.system import compute_errors, solve_stokes  # noqa: E402

from conftest import hanging_node_mesh, random_polygon, single_element_mesh  # noqa: E402
from oracles import exhaustive_dorfler, physical_basis, random_vector_polynomial  # noqa: E402

KS = (0, 1, 2, 3)


def patch_exactness():
    worst_u = worst_p = 0.0
    t0 = time.perf_counter()
    meshes = {
        "quad": generate_structured("quad", 3),
        "tri": generate_structured("tri", 3),
        "hanging": hanging_node_mesh(2),
    }
    for k in KS:
        pb = polynomial_patch_problem(k, seed=100 + k)
        for mesh in meshes.values():
            sol = solve_stokes(mesh, k, 1.0, pb.f, pb.g)
            err = compute_errors(sol, pb.u, pb.grad_u, pb.p)
            worst_u, worst_p = max(worst_u, err.e_u), max(worst_p, err.e_p)
    secs = time.perf_counter() - t0
    ok = worst_u < 1e-8 and worst_p < 1e-8 and secs < 30
    return ok, f"max e_u {worst_u:.2e}, max e_p {worst_p:.2e}, {secs:.1f} s"


def operator_identities(n_polygons=100):
    rng = np.random.default_rng(2024)
    worst_r = worst_d = 0.0
    for i in range(n_polygons):
        mesh = single_element_mesh(random_polygon(rng))
        c, h = mesh.barycenters[0], mesh.h_T[0]
        for k in KS:
            pack = local_pack(mesh, 0, k)
            u, grad = random_vector_polynomial(rng, k + 3, h, c)
            v = interpolate_local(mesh, 0, k, u, pack)
            rc = pack.reconstruct(v)
            basis = physical_basis(pack, c)
            for comp in range(2):
                oracle = elliptic_project_cell(mesh, 0, k + 1, lambda P: u(P)[:, comp],
                                               lambda P: grad(P)[:, comp, :], exactness=2 * k + 10, basis=basis)
                worst_r = max(worst_r, np.abs(rc[:, comp] - oracle).max())
            div = lambda P: np.trace(grad(P), axis1=1, axis2=2)
            oracle = l2_project_cell(mesh, 0, k, div, exactness=2 * k + 8, basis=physical_basis(pack, c, k))
            worst_d = max(worst_d, np.abs(pack.D @ v - oracle).max())
    ok = worst_r < 1e-9 and worst_d < 1e-9
    return ok, f"{n_polygons} polygons x k=0..3: reconstruction {worst_r:.1e}, divergence {worst_d:.1e}"


def stabilizer_properties(n_polygons=20):
    rng = np.random.default_rng(7)
    worst_kernel = worst_sym = 0.0
    min_eig = np.inf
    bad_viscous = 0
    for _ in range(n_polygons):
        mesh = single_element_mesh(random_polygon(rng))
        c, h = mesh.barycenters[0], mesh.h_T[0]
        for k in KS:
            pack = local_pack(mesh, 0, k)
            S = pack.S_vec
            scale = np.abs(S).max()
            worst_sym = max(worst_sym, np.abs(S - S.T).max() / scale)
            min_eig = min(min_eig, np.linalg.eigvalsh(S).min() / scale)
            for a, b in monomial_exponents(k + 1):
                for comp in range(2):
                    def u(P, a=a, b=b, comp=comp):
                        out = np.zeros((len(P), 2))
                        out[:, comp] = ((P[:, 0] - c[0]) / h) ** a * ((P[:, 1] - c[1]) / h) ** b
                        return out
                    w = interpolate_local(mesh, 0, k, u, pack)
                    worst_kernel = max(worst_kernel, np.abs(S @ w).max())
            ev = np.linalg.eigvalsh(pack.A_vec)
            if np.sum(ev < 1e-10 * ev.max()) != 2:
                bad_viscous += 1
    ok = worst_kernel < 1e-10 and worst_sym < 1e-13 and min_eig > -1e-12 and bad_viscous == 0
    return ok, (f"kernel residual {worst_kernel:.1e}, asymmetry {worst_sym:.1e}, min eig {min_eig:.1e}, "
                f"viscous kernels != 2: {bad_viscous}")


def example2_convergence():
    t0 = time.perf_counter()
    lines, ok = [], True
    for k in KS:
        table = run_convergence(2, "quad", k=k, levels=4)
        last = table.rows[-1]
        target = (k + 1) / 2
        orders = (last.order_e_u, last.order_e_p, last.order_eta)
        rates_ok = all(abs(o - target) <= 0.15 for o in orders)
        lo, hi = (0.7, 1.0) if k == 0 else (0.99, 1.01)
        eff_ok = lo <= last.eff <= hi
        ok &= rates_ok and eff_ok and table.error is None
        lines.append(f"k={k} orders {orders[0]:.2f}/{orders[1]:.2f}/{orders[2]:.2f} eff {last.eff:.4f}"
                     + ("" if rates_ok and eff_ok else " (out of range)"))
    secs = time.perf_counter() - t0
    ok &= secs < 300
    return ok, "; ".join(lines) + f"; {secs:.0f} s"


def viscosity_robustness():
    nus = [1e-1, 1e-3, 1e-6, 1e-10]
    rows = viscosity_sweep(2, nus, k=3, n=4)
    effs = [float(f"{r.eff:.3g}") for r in rows]
    dev = max(abs(r.e_u / r.e_u_predicted - 1) for r in rows)
    ok = len(set(effs)) == 1 and dev < 1e-8
    return ok, f"eff {', '.join(f'{r.eff:.5f}' for r in rows)}; superposition deviation {dev:.1e}"


def local_lower_bounds():
    pb = example1()
    n_viol = n_el = 0
    for kind in ("quad", "tri", "hex", "poly"):
        for k in (0, 1, 2):
            mesh = generate_structured(kind, 4)
            sol = solve_stokes(mesh, k, 1.0, pb.f, pb.g)
            check = check_local_lower_bounds(mesh, compute_errors(sol, pb.u, pb.grad_u, pb.p),
                                             estimate(sol, pb.f, pb.g), slack=1e-9)
            n_viol += len(check.violations)
            n_el += mesh.n_elements
    return n_viol == 0, f"{n_viol} violations over {n_el} elements"


def effectivity_formula():
    eff = effectivity_index(9.9698e-02, 6.5437e-03, 1.0040e-01)
    return abs(eff - 0.9952) <= 5e-4, f"eff {eff:.5f}"


def lshape_adaptive():
    t0 = time.perf_counter()
    at_origin = []

    def watch(rec, mesh, sol, report):
        h = mesh.h_T
        touching = [t for t in range(mesh.n_elements)
                    if np.any(np.hypot(*mesh.element_vertices(t).T) < 1e-12)]
        at_origin.append(h[touching].min() <= h.min() * (1 + 1e-9))

    res = run_adaptive(3, k=1, theta=0.3, tol=0.01, max_iterations=60, callback=watch)
    secs = time.perf_counter() - t0
    trace = res.trace
    origin_ok = all(at_origin[10:])
    ok = trace.converged and trace.eta[-1] <= 0.01 and abs(res.slope + 1.0) <= 0.15 and origin_ok and secs < 600
    return ok, (f"{len(trace)} iterations, final eta {trace.eta[-1]:.3e}, slope {res.slope:.3f}, "
                f"smallest element at origin from iteration 10: {origin_ok}, {secs:.0f} s")


def dorfler_oracle(n_vectors=1000):
    rng = np.random.default_rng(99)
    mismatches = 0
    for i in range(n_vectors):
        n = int(rng.integers(1, 51))
        if i % 3 == 0:
            eta2 = rng.integers(0, 4, size=n).astype(float)  # ties and zeros
        else:
            eta2 = rng.exponential(size=n) ** 2
        theta = float(rng.uniform(0.01, 0.99))
        mismatches += mark_dorfler(eta2, theta) != exhaustive_dorfler(eta2, theta)
    return mismatches == 0, f"{mismatches} mismatches in {n_vectors} vectors"


def refinement_combinatorics():
    mesh = PolygonalMesh([[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]], [(0, 1, 4, 3), (1, 2, 5, 4)])
    fine = refine(mesh, [0])
    sizes = sorted(len(e) for e in fine.elements)
    area_err = abs(fine.areas.sum() - mesh.areas.sum())
    violations = validate(fine).violations
    ok = sizes == [4, 4, 4, 4, 5] and area_err < 1e-12 and not violations
    return ok, f"element sizes {sizes}, area error {area_err:.1e}, violations {len(violations)}"


CHECKS = [
    ("patch-test exactness", patch_exactness),
    ("operator identities", operator_identities),
    ("stabilizer properties", stabilizer_properties),
    ("Example 2 convergence", example2_convergence),
    ("viscosity robustness", viscosity_robustness),
    ("local lower bounds", local_lower_bounds),
    ("effectivity formula", effectivity_formula),
    ("adaptive L-shape", lshape_adaptive),
    ("Dörfler marking oracle", dorfler_oracle),
    ("refinement combinatorics", refinement_combinatorics),
]


def _line(label, ok, detail):
    return f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"


@pytest.mark.parametrize("label,check", CHECKS, ids=[c[0].replace(" ", "-") for c in CHECKS])
def test_acceptance(label, check, capsys):
    ok, detail = check()
    with capsys.disabled():
        print("\n" + _line(label, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for label, check in CHECKS:
        ok, detail = check()
        failed += not ok
        print(_line(label, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
