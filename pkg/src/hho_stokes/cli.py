"""Command line for convergence tables, adaptive studies and single solves."""

import argparse
import logging
import os
import sys

THREADS_ENV = "HHO_STOKES_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_thread_count():
    # must run before numpy is imported to take effect
    n = os.environ.get(THREADS_ENV)
    if not n:
        return
    if not n.isdigit() or int(n) < 1:
        raise SystemExit(f"{THREADS_ENV} must be a positive integer, got {n!r}")
    for var in _BLAS_VARS:
        os.environ[var] = n


def build_parser():
    parser = argparse.ArgumentParser(prog="hho-stokes", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-level progress")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("converge", help="uniform-refinement convergence table")
    c.add_argument("--example", type=int, choices=(1, 2), required=True)
    c.add_argument("--mesh", choices=("quad", "tri", "hex", "poly"), default="quad")
    c.add_argument("--k", type=int, default=1)
    c.add_argument("--nu", type=float, default=1.0)
    c.add_argument("--levels", type=int, default=4)
    c.add_argument("--n0", type=int, default=4, help="subdivisions of the coarsest mesh")
    c.add_argument("--out", required=True)

    a = sub.add_parser("adapt", help="adaptive study (3: L-shape, 4: cylinder channel)")
    a.add_argument("--example", type=int, choices=(3, 4), required=True)
    a.add_argument("--k", type=int, default=1)
    a.add_argument("--theta", type=float, default=0.3)
    a.add_argument("--tol", type=float, default=None, help="default 0.01 (3) or 0.15 (4)")
    a.add_argument("--max-iters", type=int, default=40)
    a.add_argument("--nu", type=float, default=1.0)
    a.add_argument("--n", type=int, default=1, help="initial mesh subdivisions")
    a.add_argument("--no-meshes", action="store_true", help="skip per-iteration mesh files")
    a.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="solve one problem on a poly2d mesh file")
    s.add_argument("--mesh-file", required=True)
    s.add_argument("--example", type=int, choices=(1, 2, 3, 4), default=1, help="problem data")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--nu", type=float, default=1.0)
    s.add_argument("--lattice", type=int, nargs=2, default=(101, 101), metavar=("NX", "NY"))
    s.add_argument("--out", required=True)
    return parser


def _converge(args):
    from .bench import run_convergence

    table = run_convergence(args.example, args.mesh, args.k, args.nu, args.levels, args.n0, out=args.out)
    for r in table.rows:
        print(f"{r.dof:8d} eta {r.eta:.4e} e_u {r.e_u:.4e} ({r.order_e_u:.2f}) "
              f"e_p {r.e_p:.4e} ({r.order_e_p:.2f}) eff {r.eff:.4f}")
    if table.error:
        print(f"error: {table.error}", file=sys.stderr)
        return 1
    return 0


def _adapt(args):
    from .bench import export_solution, run_adaptive

    res = run_adaptive(args.example, k=args.k, theta=args.theta, tol=args.tol, max_iterations=args.max_iters,
                       n=args.n, nu=args.nu, out=args.out, write_meshes=not args.no_meshes)
    trace = res.trace
    last = trace.records[-1] if trace.records else None
    if last is not None:
        print(f"iterations {len(trace)} dof {last.dof_velocity} eta {last.eta:.4e} slope {res.slope:.3f}")
    if trace.solution is not None:
        export_solution(trace.solution, os.path.join(args.out, "solution"), report=trace.report)
    if trace.error:
        print(f"error: {trace.error}", file=sys.stderr)
        return 1
    if not trace.converged:
        print("error: tolerance not reached within max-iters", file=sys.stderr)
        return 1
    return 0


def _solve(args):
    import csv

    from .bench import export_solution, solve_and_measure
    from .estimator import effectivity
    from .mesh import read_poly2d, validate
    from .problems import example4, get_problem
    from .system import write_coefficients

    problem = example4(args.nu) if args.example == 4 else get_problem(args.example, args.nu)
    mesh = read_poly2d(args.mesh_file)
    diag = validate(mesh)
    if diag.violations:
        print(f"error: invalid mesh: {diag.violations[:3]}", file=sys.stderr)
        return 1
    sol, errors, report = solve_and_measure(problem, mesh, args.k, args.nu)
    os.makedirs(args.out, exist_ok=True)
    d = sol.space.dofs
    summary = {"dof": d.n_velocity, "dof_p": d.n_pressure, "eta": report.eta, "eta_d": report.eta_d,
               "eta_s": report.eta_s, "eta_J": report.eta_J, "osc": report.osc}
    if errors is not None:
        summary.update(e_u=errors.e_u, e_p=errors.e_p, eff=effectivity(errors, report))
    with open(os.path.join(args.out, "summary.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(summary)
        w.writerow(summary.values())
    report.to_csv(os.path.join(args.out, "estimator.csv"), errors)
    write_coefficients(sol, os.path.join(args.out, "coefficients.txt"))
    exp = export_solution(sol, os.path.join(args.out, "solution"), tuple(args.lattice), report)
    print(" ".join(f"{k} {v:.4e}" if isinstance(v, float) else f"{k} {v}" for k, v in summary.items()))
    if exp.n_skipped:
        print(f"lattice points outside the mesh: {exp.n_skipped}")
    return 0


def main(argv=None):
    _apply_thread_count()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"converge": _converge, "adapt": _adapt, "solve": _solve}[args.command]
    try:
        return handler(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
