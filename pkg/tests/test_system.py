import warnings

import numpy as np
import pytest

from hho_stokes.estimator import effectivity, estimate
from hho_stokes.mesh import generate_structured, make_domain
from hho_stokes.poly import cell_quadrature, l2_project_face
from hho_stokes.problems import example1, example2, example4, polynomial_patch_problem
from hho_stokes.system import (
    DiscreteSolution,
    HHOSpace,
    apply_dirichlet,
    assemble,
    compute_errors,
    solve,
    solve_stokes,
    write_coefficients,
)

from conftest import hanging_node_mesh

ZERO = lambda P: np.zeros((len(P), 2))


def linear_field(P):
    return np.c_[P[:, 0] + 2 * P[:, 1], 3 * P[:, 0] - P[:, 1]]


def test_zero_data_zero_solution():
    mesh = generate_structured("quad", 3)
    for method in ("condensed", "full"):
        sol = solve_stokes(mesh, 1, 1.0, None, None, method=method)
        assert np.abs(sol.u).max() == 0 and np.abs(sol.p).max() == 0
        assert sol.residual < 1e-12


def test_single_square_dof_counts():
    mesh = generate_structured("quad", 1)
    system = assemble(mesh, 0, 1.0, ZERO)
    assert system.A.shape == (10, 10)
    assert system.B.shape == (1, 10)
    assert system.dofs.n_pressure == 1


@pytest.mark.parametrize("k", [0, 2])
def test_viscous_block_symmetric(k):
    system = assemble(generate_structured("hex", 3), k, 0.3, ZERO)
    A = system.A.toarray()
    assert np.abs(A - A.T).max() < 1e-12 * np.abs(A).max()


def test_dirichlet_zero_is_plain_elimination():
    mesh = generate_structured("quad", 2)
    system = assemble(mesh, 1, 2.0, lambda P: np.c_[P[:, 1], -P[:, 0]])
    red = apply_dirichlet(system, None)
    A = (system.A / 2.0).toarray()
    nfree = len(red.free)
    assert np.allclose(red.matrix.toarray()[:nfree, :nfree], A[np.ix_(red.free, red.free)])
    assert np.allclose(red.rhs[:nfree], system.rhs[red.free] / 2.0)
    a = solve(red)
    b = solve_stokes(mesh, 1, 2.0, lambda P: np.c_[P[:, 1], -P[:, 0]], ZERO, method="full")
    assert np.allclose(a.u, b.u, atol=1e-13) and np.allclose(a.p, b.p, atol=1e-13)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
@pytest.mark.parametrize("kind", ["quad", "hex", "hanging"])
def test_linear_divergence_free_field_reproduced(k, kind):
    mesh = hanging_node_mesh(2) if kind == "hanging" else generate_structured(kind, 3)
    sol = solve_stokes(mesh, k, 1.0, ZERO, linear_field)
    expected = sol.space.interpolate(linear_field)
    assert np.abs(sol.u - expected).max() < 1e-10
    assert np.abs(sol.p).max() < 1e-10


def test_inflow_profile_projection():
    domain = make_domain("channel", 1)
    mesh = generate_structured("quad", 1, domain)
    pb = example4(1.0, domain)
    sol = solve_stokes(mesh, 1, 1.0, pb.f, pb.g)
    d = sol.space.dofs
    left = [f for f in d.boundary_faces if np.all(np.abs(mesh.vertices[list(mesh.faces[f].vertices), 0]) < 1e-14)]
    assert left
    for f in left:
        oracle = l2_project_face(mesh, f, 1, pb.g, exactness=20)
        assert np.allclose(sol.u[d.face_dofs(f)], oracle.T.ravel(), atol=1e-12)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_patch_test(k):
    pb = polynomial_patch_problem(k, nu=0.7, seed=3)
    mesh = generate_structured("poly", 3)
    sol = solve_stokes(mesh, k, pb.nu, pb.f, pb.g)
    err = compute_errors(sol, pb.u, pb.grad_u, pb.p)
    assert err.e_u < 1e-9 and err.e_p < 1e-9


def test_example1_rate_on_halving():
    pb = example1()
    errs = []
    for n in (16, 32):
        sol = solve_stokes(generate_structured("quad", n), 1, 1.0, pb.f, pb.g)
        errs.append(compute_errors(sol, pb.u, pb.grad_u, pb.p))
    assert all(np.isfinite(e.e_u) and np.isfinite(e.e_p) for e in errs)
    assert 3.5 < errs[0].e_u / errs[1].e_u < 4.5


def test_condensed_matches_full_solve():
    pb = example1(0.01)
    mesh = hanging_node_mesh(3)
    a = solve_stokes(mesh, 2, pb.nu, pb.f, pb.g, method="condensed")
    b = solve_stokes(mesh, 2, pb.nu, pb.f, pb.g, method="full")
    assert np.abs(a.u - b.u).max() < 1e-9 * np.abs(b.u).max()
    assert np.abs(a.p - b.p).max() < 1e-9 * np.abs(b.p).max()
    with pytest.raises(ValueError):
        solve_stokes(mesh, 2, pb.nu, pb.f, pb.g, method="cg")


def test_discrete_mass_conservation():
    pb = example2()
    mesh = generate_structured("tri", 4)
    system = assemble(mesh, 1, pb.nu, pb.f)
    from hho_stokes.system import solve_condensed

    sol = solve_condensed(system, pb.g)
    assert np.abs(system.B @ sol.u).max() < 1e-9


def test_linearity_in_data():
    pb = example1()
    mesh = generate_structured("quad", 4)
    base = solve_stokes(mesh, 1, 1.0, pb.f, pb.g)
    c = -3.5
    scaled = solve_stokes(mesh, 1, 1.0, lambda P: c * pb.f(P), lambda P: c * pb.g(P))
    assert np.allclose(scaled.u, c * base.u, rtol=1e-10, atol=1e-10 * np.abs(base.u).max())
    assert np.allclose(scaled.p, c * base.p, rtol=1e-10, atol=1e-10 * np.abs(base.p).max())


def test_viscosity_scaling():
    """f = nu f0 with fixed g gives the same velocity and nu times the pressure."""
    pb = example2()
    mesh = generate_structured("quad", 4)
    ref = solve_stokes(mesh, 2, 1.0, pb.f, pb.g)
    nu = 1e-6
    sol = solve_stokes(mesh, 2, nu, lambda P: nu * pb.f(P), pb.g)
    assert np.abs(sol.u - ref.u).max() < 1e-9 * np.abs(ref.u).max()
    assert np.abs(sol.p - nu * ref.p).max() < 1e-9 * nu * np.abs(ref.p).max()


def test_errors_of_injected_interpolant():
    pb = polynomial_patch_problem(1, seed=5)
    space = HHOSpace(generate_structured("hex", 3), 1)
    sol = DiscreteSolution(space, 1.0, space.interpolate(pb.u), space.interpolate_pressure(pb.p), 0.0)
    assert compute_errors(sol, pb.u, pb.grad_u, pb.p).e_u < 1e-9


def test_errors_of_zero_solution():
    pb = example1(0.25)
    mesh = generate_structured("quad", 2)
    space = HHOSpace(mesh, 1)
    sol = DiscreteSolution(space, 0.25, np.zeros(space.dofs.n_velocity), np.zeros(space.dofs.n_pressure), 0.0)
    err = compute_errors(sol, pb.u, pb.grad_u, pb.p)
    total = 0.0
    for t in range(mesh.n_elements):
        q = cell_quadrature(mesh, t, 30)
        total += q.integrate((pb.grad_u(q.points) ** 2).sum(axis=(1, 2)))
    assert err.e_u == pytest.approx(np.sqrt(0.25 * total), rel=1e-10)


def test_example2_k3_effectivity_near_one():
    pb = example2()
    sol = solve_stokes(generate_structured("quad", 4), 3, 1.0, pb.f, pb.g)
    err = compute_errors(sol, pb.u, pb.grad_u, pb.p)
    assert abs(effectivity(err, estimate(sol, pb.f, pb.g)) - 1.0) < 0.05


def test_incompatible_boundary_data_warns():
    mesh = generate_structured("quad", 2)
    with pytest.warns(UserWarning, match="compatibility"):
        solve_stokes(mesh, 0, 1.0, ZERO, lambda P: np.c_[P[:, 0], 0 * P[:, 0]])


def test_compatible_data_does_not_warn():
    pb = example1()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_stokes(generate_structured("quad", 2), 1, 1.0, pb.f, pb.g)


def test_nonpositive_viscosity_rejected():
    with pytest.raises(ValueError):
        assemble(generate_structured("quad", 1), 0, 0.0, ZERO)


def test_pressure_zero_mean_after_solve():
    pb = example1()
    sol = solve_stokes(generate_structured("tri", 3), 2, 1.0, pb.f, pb.g)
    system = assemble(sol.space.mesh, 2, 1.0, None, space=sol.space)
    assert abs(system.mean @ sol.p) < 1e-12


def test_write_coefficients(tmp_path):
    pb = example1()
    mesh = generate_structured("quad", 2)
    sol = solve_stokes(mesh, 1, 1.0, pb.f, pb.g)
    path = tmp_path / "sol.txt"
    write_coefficients(sol, path)
    lines = path.read_text().splitlines()
    head = lines[0].split()
    assert head[0] == "hho-stokes-solution" and int(head[1]) == 1
    assert (int(head[3]), int(head[4])) == (mesh.n_elements, mesh.n_faces)
    assert sum(l.startswith("element ") for l in lines) == mesh.n_elements
    assert sum(l.startswith("face ") for l in lines) == mesh.n_faces
    i = lines.index("element 3")
    u1 = np.array(lines[i + 1].split()[1:], float)
    assert np.array_equal(u1, sol.u[sol.space.dofs.cell_dofs(3, 0)])
