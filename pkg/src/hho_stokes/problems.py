"""Benchmark problems with closed-form data."""

from dataclasses import dataclass, field

import numpy as np
import sympy as sym

from .mesh.domains import Channel, LShape, Rectangle

X, Y = sym.symbols("x y", real=True)
NU = sym.Symbol("nu", positive=True)


@dataclass
class ProblemSpec:
    """Stokes problem data.

    All callbacks take points of shape (n, 2). ``grad_u`` returns Jacobians
    (n, 2, 2) with ``J[:, c, d] = d u_c / d x_d``.
    """

    name: str
    domain: object
    nu: float
    f: object
    g: object = None
    u: object = None
    grad_u: object = None
    p: object = None
    singular_points: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def has_exact(self):
        return self.u is not None and self.grad_u is not None and self.p is not None


def _vectorize(fn, n_out):
    def call(P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        vals = fn(P[:, 0], P[:, 1])
        return np.stack([np.broadcast_to(np.asarray(v, float), P.shape[:1]) for v in vals], axis=-1).reshape(
            (len(P),) + n_out
        )

    return call


def _scalar(fn):
    def call(P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        return np.broadcast_to(np.asarray(fn(P[:, 0], P[:, 1]), float), P.shape[:1]).copy()

    return call


def from_sympy(name, domain, u1, u2, p, nu, **kw):
    """Build a problem from symbolic velocity and pressure in (x, y);
    the body force is -nu * Laplacian(u) + grad(p)."""
    nu_val = float(nu)
    J = [[sym.diff(u1, X), sym.diff(u1, Y)], [sym.diff(u2, X), sym.diff(u2, Y)]]
    f1 = -nu_val * (sym.diff(u1, X, 2) + sym.diff(u1, Y, 2)) + sym.diff(p, X)
    f2 = -nu_val * (sym.diff(u2, X, 2) + sym.diff(u2, Y, 2)) + sym.diff(p, Y)
    mod = "numpy"
    u = _vectorize(sym.lambdify((X, Y), [u1, u2], mod), (2,))
    grad = _vectorize(sym.lambdify((X, Y), [J[0][0], J[0][1], J[1][0], J[1][1]], mod), (2, 2))
    pres = _scalar(sym.lambdify((X, Y), p, mod))
    f = _vectorize(sym.lambdify((X, Y), [f1, f2], mod), (2,))
    meta = {"u": (u1, u2), "p": p}
    return ProblemSpec(name=name, domain=domain, nu=nu_val, f=f, g=u, u=u, grad_u=grad, p=pres, meta=meta, **kw)


def example1(nu=1.0):
    """Smooth exponential/trigonometric solution on the unit square."""
    e = sym.E
    u1 = -sym.exp(X) * (Y * sym.cos(Y) + sym.sin(Y))
    u2 = sym.exp(X) * Y * sym.sin(Y)
    p = 2 * sym.exp(X) * sym.sin(Y) - 2 * (1 - e) * (sym.cos(1) - 1)
    return from_sympy("example1", Rectangle(), u1, u2, p, nu)


def example2(nu=1.0):
    """Trigonometric velocity with polynomial pressure x^6 - y^6 (zero mean on the square)."""
    u1 = -sym.Rational(1, 2) * sym.cos(X) ** 2 * sym.cos(Y) * sym.sin(Y)
    u2 = sym.Rational(1, 2) * sym.cos(Y) ** 2 * sym.cos(X) * sym.sin(X)
    p = X ** 6 - Y ** 6
    return from_sympy("example2", Rectangle(), u1, u2, p, nu)


LSHAPE_LAMBDA = 856399 / 1572564
LSHAPE_OMEGA = 3 * np.pi / 2


def example3(nu=1.0):
    """Corner singularity on the L-shape; velocity ~ r^lambda, pressure ~ r^(lambda-1).

    With nu = 1 the pair solves the homogeneous Stokes system (f = 0); for
    other viscosities the load (1 - nu) grad p keeps it an exact solution.
    """
    r, th = sym.symbols("r theta", positive=True)
    lam = sym.Rational(856399, 1572564)
    om = 3 * sym.pi / 2
    psi = (
        sym.sin((1 + lam) * th) * sym.cos(lam * om) / (1 + lam)
        - sym.cos((1 + lam) * th)
        - sym.sin((1 - lam) * th) * sym.cos(lam * om) / (1 - lam)
        + sym.cos((1 - lam) * th)
    )
    dpsi = sym.diff(psi, th)
    u1 = r ** lam * ((1 + lam) * sym.sin(th) * psi + sym.cos(th) * dpsi)
    u2 = r ** lam * (sym.sin(th) * dpsi - (1 + lam) * sym.cos(th) * psi)
    p = -(r ** (lam - 1)) * ((1 + lam) ** 2 * dpsi + sym.diff(psi, th, 3)) / (1 - lam)

    def dx(e):
        return sym.cos(th) * sym.diff(e, r) - sym.sin(th) / r * sym.diff(e, th)

    def dy(e):
        return sym.sin(th) * sym.diff(e, r) + sym.cos(th) / r * sym.diff(e, th)

    lam_u = sym.lambdify((r, th), [u1, u2], "numpy")
    lam_J = sym.lambdify((r, th), [dx(u1), dy(u1), dx(u2), dy(u2)], "numpy")
    lam_p = sym.lambdify((r, th), p, "numpy")
    lam_gp = sym.lambdify((r, th), [dx(p), dy(p)], "numpy")
    lam_psi = sym.lambdify(th, [psi, dpsi], "numpy")

    def polar(P):
        P = np.atleast_2d(np.asarray(P, float))
        rr = np.hypot(P[:, 0], P[:, 1])
        tt = np.mod(np.arctan2(P[:, 1], P[:, 0]), 2 * np.pi)
        return rr, tt

    def wrap(fn, shape):
        def call(P):
            rr, tt = polar(P)
            safe = np.where(rr > 0, rr, 1.0)
            vals = fn(safe, tt)
            out = np.stack([np.broadcast_to(np.asarray(v, float), rr.shape) for v in vals], axis=-1)
            return out.reshape((len(rr),) + shape)

        return call

    u = wrap(lam_u, (2,))
    u_call = u

    def u_safe(P):
        out = u_call(P)
        rr, _ = polar(P)
        out[rr == 0] = 0.0
        return out

    grad = wrap(lam_J, (2, 2))

    def pres(P):
        rr, tt = polar(P)
        return np.asarray(lam_p(np.where(rr > 0, rr, 1.0), tt), float) * np.ones_like(rr)

    nu = float(nu)
    if nu == 1.0:
        def f(P):
            return np.zeros((len(np.atleast_2d(P)), 2))
    else:
        gp = wrap(lam_gp, (2,))

        def f(P):
            return (1.0 - nu) * gp(P)

    return ProblemSpec(
        name="example3", domain=LShape(), nu=nu, f=f, g=u_safe, u=u_safe, grad_u=grad, p=pres,
        singular_points=((0.0, 0.0),),
        meta={"lambda": LSHAPE_LAMBDA, "omega": LSHAPE_OMEGA, "psi": lam_psi},
    )


def channel_profile(y, height=0.41):
    return 6.0 / height ** 2 * np.sin(np.pi / 8) * y * (height - y)


def example4(nu=1.0, domain=None):
    """Channel flow past a cylinder with the same parabolic profile imposed at
    inflow and outflow and no-slip elsewhere."""
    dom = domain if domain is not None else Channel()

    def g(P):
        P = np.atleast_2d(np.asarray(P, float))
        out = np.zeros((len(P), 2))
        ends = (np.abs(P[:, 0]) < 1e-12) | (np.abs(P[:, 0] - dom.length) < 1e-12)
        out[ends, 0] = channel_profile(P[ends, 1], dom.height)
        return out

    def f(P):
        return np.zeros((len(np.atleast_2d(P)), 2))

    return ProblemSpec(name="example4", domain=dom, nu=float(nu), f=f, g=g)


def polynomial_patch_problem(k, nu=1.0, seed=0, domain=None):
    """Divergence-free velocity in [P^{k+1}]^2 (curl of a random stream
    function) and a random pressure in P^k, shifted to zero mean on the domain."""
    rng = np.random.default_rng(seed)
    dom = domain if domain is not None else Rectangle()
    stream = sum(
        sym.Rational(int(rng.integers(-9, 10)), 7) * X ** a * Y ** (d - a)
        for d in range(1, k + 3)
        for a in range(d + 1)
    )
    u1 = sym.expand(sym.diff(stream, Y))
    u2 = sym.expand(-sym.diff(stream, X))
    p = sum(
        sym.Rational(int(rng.integers(-9, 10)), 5) * X ** a * Y ** (d - a)
        for d in range(1, k + 1)
        for a in range(d + 1)
    ) if k >= 1 else sym.Integer(0)
    p = p - _polygon_mean(p, dom)
    return from_sympy(f"patch-k{k}", dom, u1, u2, sym.expand(p), nu)


def _polygon_mean(expr, domain):
    """Exact mean of a polynomial over a polygonal domain (Green's theorem)."""
    total, area = sym.Integer(0), sym.Integer(0)
    F = sym.integrate(expr, X)  # d/dx F = expr, integral = contour integral of F dy
    for loop in domain.loops():
        pts = [(sym.nsimplify(a), sym.nsimplify(b)) for a, b in loop]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
            s = sym.Symbol("s")
            xs, ys = x0 + s * (x1 - x0), y0 + s * (y1 - y0)
            total += sym.integrate(F.subs({X: xs, Y: ys}) * (y1 - y0), (s, 0, 1))
            area += sym.integrate(xs * (y1 - y0), (s, 0, 1))
    return total / area


PROBLEMS = {1: example1, 2: example2, 3: example3, 4: example4}


def get_problem(example, nu=1.0):
    try:
        return PROBLEMS[int(example)](nu)
    except KeyError:
        raise ValueError(f"unknown example {example!r}") from None
