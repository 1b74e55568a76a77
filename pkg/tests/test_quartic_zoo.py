import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq, least_squares

from linegeom import quartic_zoo as qz
from linegeom import projective_core as pc
from linegeom.errors import (
    DegenerateFamily,
    EllipticPoint,
    NonDistinctAxes,
    NodeCountMismatch,
    NotANode,
    ParameterOutOfRange,
    WrongSignature,
)
from linegeom.polynomial import Poly3

X, Y, Z = Poly3.variables()


def sphere_squared():
    return qz.ImplicitSurface((X * X + Y * Y + Z * Z - 1.0) ** 2)


def hyperboloid():
    return qz.ImplicitSurface(X * X + Y * Y - Z * Z - 1.0)


def to_sympy(poly):
    x, y, z = sp.symbols("x y z")
    return sum(sp.nsimplify(v, rational=True) * x**i * y**j * z**k for (i, j, k), v in poly.terms()), (x, y, z)


@pytest.fixture(scope="module")
def kummer():
    S = qz.kummer_surface(1.5)
    return S, qz.kummer_nodes(S)


# ---------------------------------------------------------------- derivatives


@pytest.mark.parametrize(
    "S",
    [qz.fresnel_surface(4, 2, 1), qz.kummer_surface(1.5), qz.equatorial_surface(1, 0, -4, 1, 0, -1)],
    ids=["fresnel", "kummer", "equatorial"],
)
def test_gradient_and_hessian_match_finite_differences(S):
    rng = np.random.default_rng(7)
    lo, hi = S.box
    P = lo + rng.random((100, 3)) * (hi - lo)
    h = 1e-5
    E = np.eye(3) * h
    fd_g = np.stack([(S(P + E[i]) - S(P - E[i])) / (2 * h) for i in range(3)], axis=-1)
    fd_H = np.stack([(S.grad(P + E[i]) - S.grad(P - E[i])) / (2 * h) for i in range(3)], axis=-1)
    g, H = S.grad(P), S.hess(P)
    assert np.all(np.linalg.norm(fd_g - g, axis=1) <= 1e-6 * np.maximum(1.0, np.linalg.norm(g, axis=1)))
    assert np.all(np.linalg.norm(fd_H - H, axis=(1, 2)) <= 1e-6 * np.maximum(1.0, np.linalg.norm(H, axis=(1, 2))))


def test_surface_json_roundtrip():
    for S in (qz.fresnel_surface(4, 2, 1), qz.kummer_surface(1.5), qz.equatorial_surface(1, 0, -4, 1, 0, -1)):
        T = qz.surface_from_json(S.to_json())
        assert np.array_equal(T.poly.coeffs, S.poly.coeffs)
    G = qz.ImplicitSurface(X * Y - Z)
    assert np.array_equal(qz.surface_from_json(G.to_json()).poly.coeffs, G.poly.coeffs)


# ---------------------------------------------------------------- Fresnel


def test_fresnel_z_section_is_circle_times_ellipse():
    S = qz.fresnel_surface(4, 2, 1)
    f, (x, y, z) = to_sympy(S.poly)
    factors = sp.factor_list(sp.expand(f.subs(z, 0)))[1]
    degs = sorted(sp.Poly(g, x, y).total_degree() for g, _ in factors)
    assert degs == [2, 2]
    # product of the two conic factors reproduces the section
    prod = factors[0][0] * factors[1][0] * sp.factor_list(sp.expand(f.subs(z, 0)))[0]
    diff = sp.Poly(sp.expand(prod - f.subs(z, 0)), x, y)
    assert max((abs(float(c)) for c in diff.coeffs()), default=0.0) <= 1e-8
    kinds = set()
    for g, _ in factors:
        p = sp.Poly(g, x, y)
        a, c = float(p.coeff_monomial(x**2)), float(p.coeff_monomial(y**2))
        kinds.add("circle" if math.isclose(a, c) else "ellipse")
    assert kinds == {"circle", "ellipse"}


def test_fresnel_outer_sheet_on_x_axis():
    S = qz.fresnel_surface(4, 2, 1)
    ts = np.linspace(0.0123, 3, 2999)
    vals = S(np.column_stack([ts, 0 * ts, 0 * ts]))
    roots = [brentq(lambda t: S([t, 0, 0]), ts[i], ts[i + 1]) for i in np.nonzero(np.diff(np.sign(vals)))[0]]
    assert len(roots) == 2
    assert math.isclose(max(roots), math.sqrt(2.0), rel_tol=1e-12)
    assert abs(S([math.sqrt(2.0), 0, 0])) <= 1e-12


def test_fresnel_isotropic_rejected():
    with pytest.raises(NonDistinctAxes):
        qz.fresnel_surface(1, 1, 1)
    assert qz.fresnel_surface(2, 2, 1, strict=False).meta["degenerate"]


def fresnel_oracle_nodes(a2, b2, c2, seed=0):
    """Unconstrained least squares on (F, grad F) from random seeds, clustered."""
    S = qz.fresnel_surface(a2, b2, c2)
    rng = np.random.default_rng(seed)
    R = math.sqrt(a2) * 1.1
    found = []
    for p0 in rng.uniform(-R, R, (400, 3)):
        sol = least_squares(lambda p: np.append(S.grad(p), S(p)), p0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if np.linalg.norm(sol.fun) < 1e-10 and all(np.linalg.norm(sol.x - q) > 1e-5 for q in found):
            found.append(sol.x)
    return np.array(found)


def test_fresnel_nodes_match_oracle_and_closed_form():
    ours = qz.fresnel_real_nodes(4, 2, 1).points
    oracle = fresnel_oracle_nodes(4, 2, 1)
    assert len(oracle) == 4 and len(ours) == 4
    for p in oracle:
        assert np.min(np.linalg.norm(ours - p, axis=1)) <= 1e-7
    # frozen from the oracle: x0² = 2/3, z0² = 4/3
    assert np.allclose(np.sort(np.abs(ours[:, 0])), math.sqrt(2 / 3), atol=1e-12)
    assert np.allclose(np.sort(np.abs(ours[:, 2])), math.sqrt(4 / 3), atol=1e-12)
    assert np.all(np.abs(ours[:, 1]) <= 1e-9)


def test_fresnel_four_real_nodes_random_triples():
    rng = np.random.default_rng(11)
    for _ in range(3):
        a2, b2, c2 = np.sort(rng.uniform(0.5, 6.0, 3))[::-1]
        ns = qz.find_nodes(qz.fresnel_surface(a2, b2, c2))
        assert len(ns) == 4
        assert np.all(np.abs(ns.points[:, 1]) <= 1e-9)


def test_fresnel_tangent_cone_signature():
    ns = qz.fresnel_real_nodes(4, 2, 1)
    S = qz.fresnel_surface(4, 2, 1)
    for p in ns.points:
        cone = qz.tangent_cone_at_node(S, p)
        assert cone.real
        assert sorted(cone.signature) == [1, 2]


def small_sphere_cone_axis(S, node, r=1e-2, n_circles=60):
    """Fit a quadratic cone to the directions where S meets a small sphere."""
    rng = np.random.default_rng(5)
    dirs = []
    for _ in range(n_circles):
        a, b = np.linalg.qr(rng.normal(size=(3, 2)))[0].T
        th = np.linspace(0, 2 * np.pi, 721)
        f = lambda t: S(node + r * (np.multiply.outer(np.cos(t), a) + np.multiply.outer(np.sin(t), b)))
        vals = f(th)
        for i in np.nonzero(np.diff(np.sign(vals)))[0]:
            t = brentq(f, th[i], th[i + 1], xtol=1e-14)
            dirs.append(np.cos(t) * a + np.sin(t) * b)
    U = np.array(dirs)
    M = np.column_stack([U[:, 0] ** 2, U[:, 1] ** 2, U[:, 2] ** 2, U[:, 0] * U[:, 1], U[:, 0] * U[:, 2], U[:, 1] * U[:, 2]])
    q = np.linalg.svd(M)[2][-1]
    Q = np.array([[q[0], q[3] / 2, q[4] / 2], [q[3] / 2, q[1], q[5] / 2], [q[4] / 2, q[5] / 2, q[2]]])
    w, V = np.linalg.eigh(Q)
    k = 0 if np.sum(w > 0) == 2 else 2
    return V[:, k]


def test_tangent_cone_axis_matches_small_sphere_fit():
    S = qz.fresnel_surface(4, 2, 1)
    for p in qz.fresnel_real_nodes(4, 2, 1).points:
        axis = qz.tangent_cone_at_node(S, p).axis
        fit = small_sphere_cone_axis(S, p)
        ang = math.acos(min(1.0, abs(float(axis @ fit))))
        assert ang <= 1e-3


def test_doubled_sphere_has_no_node():
    with pytest.raises(NotANode):
        qz.tangent_cone_at_node(sphere_squared(), [1.0, 0.0, 0.0])


def test_find_nodes_doubled_sphere_empty_with_warning():
    with pytest.warns(qz.NonIsolatedWarning):
        ns = qz.find_nodes(sphere_squared())
    assert len(ns) == 0


# ---------------------------------------------------------------- circular sections


def section_radii(plane, a2, b2, c2, n=100):
    o, e1, e2, _ = qz.plane_frame(plane.c)
    out = []
    for t in np.linspace(0, 2 * np.pi, n, endpoint=False):
        u = np.cos(t) * e1 + np.sin(t) * e2
        r = 1.0 / math.sqrt(u[0] ** 2 / a2 + u[1] ** 2 / b2 + u[2] ** 2 / c2)
        out.append(np.linalg.norm(o + r * u))
    return np.array(out)


def test_circular_sections_have_mean_radius():
    cs = qz.ellipsoid_circular_sections(4, 2, 1)
    assert not cs.degenerate
    assert len(cs.planes) == 2
    for pl in cs.planes:
        assert np.all(np.abs(section_radii(pl, 4, 2, 1) - math.sqrt(2)) <= 1e-9)
        assert abs(pl.c[1]) <= 1e-15  # contains the mean axis


def test_circular_sections_sphere_degenerate():
    assert qz.ellipsoid_circular_sections(1, 1, 1).degenerate


def test_circular_sections_approach_coordinate_plane():
    angles = []
    for c2 in (1.0, 1.5, 1.9, 1.99, 1.9999):
        pl = qz.ellipsoid_circular_sections(4, 2, c2).planes[0].c[:3]
        angles.append(math.acos(abs(pl[0]) / np.linalg.norm(pl)))
    assert all(a > b for a, b in zip(angles, angles[1:]))
    assert angles[-1] < 1e-2


# ---------------------------------------------------------------- Kummer


def test_kummer_range():
    with pytest.raises(ParameterOutOfRange):
        qz.kummer_surface(1.0)
    with pytest.raises(ParameterOutOfRange):
        qz.kummer_surface(0.2)
    assert not qz.kummer_surface(1.0, strict=False).meta["in_range"]


def test_kummer_mu2_one_node_certificates_fail():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert len(qz.find_nodes(qz.kummer_surface(1.0, strict=False))) == 0


def test_kummer_sixteen_nodes(kummer):
    S, ns = kummer
    assert len(ns) == 16
    assert np.all(ns.f_residual <= 1e-9) and np.all(ns.grad_residual <= 1e-7)
    # frozen from a sympy/fsolve run: (±1/√2, 0, -1) is a node
    assert np.min(np.linalg.norm(ns.points - [1 / math.sqrt(2), 0, -1], axis=1)) <= 1e-10


@pytest.mark.parametrize("mu2", [1.2, 1.5, 2.4, 2.9])
def test_kummer_sixteen_real_nodes_above_one(mu2):
    assert len(qz.find_nodes(qz.kummer_surface(mu2))) == 16


@pytest.mark.parametrize("mu2", [0.4, 0.6, 0.9])
def test_kummer_four_real_nodes_below_one(mu2):
    # frozen from an exact sympy solve restricted to the plane y = 0 at mu2 = 3/5
    S = qz.kummer_surface(mu2)
    assert len(qz.find_nodes(S)) == S.meta["real_nodes"] == 4
    with pytest.raises(NodeCountMismatch):
        qz.kummer_nodes(S)


def test_kummer_node_set_symmetric(kummer):
    S, ns = kummer
    for M in S.meta["symmetries"]:
        img = ns.points @ np.asarray(M).T
        for p in img:
            assert np.min(np.linalg.norm(ns.points - p, axis=1)) <= 1e-8


def square_completion_residual(S, plane, nodes):
    """Independent check: least-squares fit of k·C(a, b)² to sampled values of F on the plane."""
    o, e1, e2, _ = qz.plane_frame(plane)
    rng = np.random.default_rng(2)
    ab = rng.uniform(-2, 2, (300, 2))
    f = S(o + ab[:, :1] * e1 + ab[:, 1:] * e2)
    sgn = np.sign(np.mean(f))

    def conic(c, a, b):
        return c[0] + c[1] * a + c[2] * b + c[3] * a * a + c[4] * a * b + c[5] * b * b

    q = np.array([[(p - o) @ e1, (p - o) @ e2] for p in nodes])
    M = np.column_stack([np.ones(6), q[:, 0], q[:, 1], q[:, 0] ** 2, q[:, 0] * q[:, 1], q[:, 1] ** 2])
    c0 = np.linalg.svd(M)[2][-1]
    k0 = np.sqrt(abs(np.mean(f)) / np.mean(conic(c0, ab[:, 0], ab[:, 1]) ** 2))
    sol = least_squares(lambda c: sgn * conic(c, ab[:, 0], ab[:, 1]) ** 2 - f, c0 * k0, xtol=1e-15, ftol=1e-15)
    return np.linalg.norm(sol.fun) / np.linalg.norm(f)


def test_kummer_tropes(kummer):
    S, ns = kummer
    tr = qz.kummer_tropes(S, ns)
    assert len(tr.planes) == 16
    assert all(len(i) == 6 for i in tr.node_indices)
    assert np.all(tr.incidence.sum(axis=0) == 6)
    assert np.all(tr.incidence.sum(axis=1) == 6)
    assert max(tr.square_residuals) <= 1e-7
    for pl, idx in zip(tr.planes, tr.node_indices):
        h = pl.c / np.linalg.norm(pl.c[:3])
        assert np.all(np.abs(ns.points[list(idx)] @ h[:3] + h[3]) <= 1e-7)
        assert square_completion_residual(S, pl.c, ns.points[list(idx)]) <= 1e-7


def test_kummer_family_planes_are_tropes(kummer):
    S, ns = kummer
    tr = qz.kummer_tropes(S, ns)
    for fp in S.meta["trope_planes"]:
        fp = np.asarray(fp) / np.linalg.norm(fp)
        assert any(abs(abs(fp @ pl.c) / np.linalg.norm(pl.c) - 1.0) < 1e-12 for pl in tr.planes)


# ---------------------------------------------------------------- equatorial


def test_equatorial_cross_section_ellipse():
    S = qz.equatorial_surface(1, 0, -4, 1, 0, -1)
    th = np.linspace(0, 2 * np.pi, 50)
    pts = np.column_stack([0 * th, 2 * np.cos(th), np.sin(th)])
    assert np.all(np.abs(S(pts)) <= 1e-12)
    f, (x, y, z) = to_sympy(S.poly)
    assert sp.expand(f.subs(x, 0) + 4 * (y**2 / 4 + z**2 - 1)) == 0


@given(st.tuples(*[st.integers(-300, 300).map(lambda v: v / 100)] * 6))
@settings(max_examples=40, deadline=None)
def test_equatorial_double_line_at_alpha_root(c):
    E, U, C, F, R, B = c
    roots = np.roots([E, 2 * U, C]) if E else (np.array([-C / (2 * U)]) if U else np.array([]))
    real = [r.real for r in np.atleast_1d(roots) if abs(complex(r).imag) < 1e-12]
    if not real or (F == 0 and R == 0 and B == 0):
        return
    S = qz.equatorial_surface(*c)
    x0 = real[0]
    beta = F * x0 * x0 - 2 * R * x0 + B
    ys = np.linspace(-2, 2, 9)
    for zz in (-1.0, 0.3, 2.0):
        vals = S(np.column_stack([np.full(9, x0), ys, np.full(9, zz)]))
        scale = 1 + abs(beta) * 4 + np.abs(S.poly.coeffs).max() * 100
        assert np.allclose(vals, beta * ys**2, atol=1e-9 * scale)


def test_equatorial_degenerate():
    with pytest.raises(DegenerateFamily):
        qz.equatorial_surface(0, 0, 0, 1, 0, 1)


def analytic_equatorial_node_count(E, U, C, F, R, B):
    a = lambda x: E * x * x + 2 * U * x + C
    b = lambda x: F * x * x - 2 * R * x + B
    n = 0
    for coeffs, other in (((E, 2 * U, C), b), ((F, -2 * R, B), a)):
        for r in np.roots(coeffs):
            if abs(r.imag) < 1e-12 and other(r.real) < -1e-9:
                n += 2
    return n


def test_equatorial_nested_four_nodes():
    ns = qz.find_nodes(qz.equatorial_surface(1, 0, -4, 1, 0, -1))
    assert len(ns) == 4
    assert np.allclose(np.sort(np.abs(ns.points[:, 1])), math.sqrt(3))


def test_equatorial_node_counts_match_closed_form():
    rng = np.random.default_rng(4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(25):
            c = rng.uniform(-2, 2, 6)
            n = len(qz.find_nodes(qz.equatorial_surface(*c)))
            assert n == analytic_equatorial_node_count(*c) and n <= 8


# ---------------------------------------------------------------- curvature and asymptotic curves


def test_curvature_signs_quadrics():
    ell = qz.ImplicitSurface(X * X / 4 + Y * Y + Z * Z / 9 - 1.0)
    assert qz.gauss_curvature_sign(ell, [2.0, 0, 0]) == "positive"
    assert qz.gauss_curvature_sign(hyperboloid(), [1.0, 0, 0]) == "negative"
    cyl = qz.ImplicitSurface(X * X + Y * Y - 1.0)
    assert qz.gauss_curvature_sign(cyl, [1.0, 0, 0.3]) == "zero"


def kummer_surface_samples(S, n, seed=0):
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < n:
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        ts = np.linspace(0, 2.4, 241)
        f = S(ts[:, None] * d)
        for i in np.nonzero(np.diff(np.sign(f)))[0]:
            t = brentq(lambda t: S(t * d), ts[i], ts[i + 1], xtol=1e-15)
            pts.append(t * d)
    return np.array(pts[:n])


def test_kummer_has_both_curvature_signs(kummer):
    S, _ = kummer
    signs = {qz.gauss_curvature_sign(S, p) for p in kummer_surface_samples(S, 150)}
    assert {"negative", "positive"} <= signs


def test_asymptotic_directions_iff_negative(kummer):
    S, _ = kummer
    for p in kummer_surface_samples(S, 200, seed=1):
        sgn = qz.gauss_curvature_sign(S, p)
        if sgn == "positive":
            with pytest.raises(EllipticPoint):
                qz.asymptotic_directions(S, p)
        else:
            ds = qz.asymptotic_directions(S, p)
            g = S.grad(p)
            H = S.hess(p)
            assert np.allclose(ds @ g, 0, atol=1e-9 * np.linalg.norm(g))
            assert np.allclose(np.einsum("ij,jk,ik->i", ds, H, ds), 0, atol=1e-8 * np.linalg.norm(H))


def test_sphere_elliptic():
    with pytest.raises(EllipticPoint):
        qz.asymptotic_directions(qz.ImplicitSurface(X * X + Y * Y + Z * Z - 1.0), [0, 0, 1.0])


@pytest.mark.parametrize("start", [[1.0, 0, 0], [0.6, 0.8, 0.0], [math.cosh(0.5), 0, math.sinh(0.5)]])
def test_hyperboloid_rulings_reproduced(start):
    S = hyperboloid()
    p = np.array(start)
    for d in qz.asymptotic_directions(S, p):
        tr = qz.trace_asymptotic_curve(S, p, d, max_steps=400)
        assert tr.cause == "box"
        dev = np.linalg.norm(np.cross(tr.points - p, d), axis=1)
        assert dev.max() <= 1e-6


def test_kummer_trace_ends_at_node(kummer):
    S, ns = kummer
    found = 0
    for p in kummer_surface_samples(S, 60, seed=3):
        if qz.gauss_curvature_sign(S, p) != "negative":
            continue
        for d in qz.asymptotic_directions(S, p):
            tr = qz.trace_asymptotic_curve(S, p, d, nodes=ns)
            assert tr.cause in ("node", "parabolic", "box")
            found += tr.cause == "node"
            assert np.all(np.abs(S(tr.points)) <= 1e-9 * S.local_scale(tr.points[-1]))
    assert found > 0


# ---------------------------------------------------------------- rulings


def test_quadric_generators():
    A = np.diag([1.0, 1.0, -1.0, -1.0])
    L1 = qz.quadric_generators(A, 1, 16)
    L2 = qz.quadric_generators(A, 2, 16)
    S = hyperboloid()
    for L in L1 + L2:
        P, Q = L.points()
        for t in np.linspace(-2, 2, 9):
            h = P + t * Q
            assert abs(h @ A @ h) <= 1e-9 * (h @ h)
    for a, b in zip(L1, L2[3:]):
        assert abs(pc.plucker_pairing(a.normalized(), b.normalized())) <= 1e-12
    for a, b in zip(L1, L1[1:]):
        assert abs(pc.plucker_pairing(a.normalized(), b.normalized())) > 1e-3
    assert S([1.0, 0, 0]) == 0


def test_quadric_generators_wrong_signature():
    with pytest.raises(WrongSignature):
        qz.quadric_generators(np.diag([1.0, 1.0, 1.0, -1.0]), 1, 4)
