"""Quadratic line complexes as symmetric forms on Pluecker 6-vectors.

A complex is stored as a symmetric matrix ``Q`` and consists of the lines with
``L @ Q @ L == 0``.  ``Q`` and ``Q + r * OMEGA_HAT`` describe the same complex;
nothing here normalizes that gauge away, and every public predicate is
invariant under it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import projective_core as pc
from .errors import (
    DegenerateLambda,
    DegenerateTetrahedron,
    EmptyCone,
    FitFailed,
    InputError,
    SingularQuadric,
)
from .ray_systems import ParamCongruence

_IU = np.triu_indices(6)
# weights turning upper-triangle coefficients into the value of p^T Q p
_W = np.where(_IU[0] == _IU[1], 1.0, 2.0)
_OMEGA_Q = pc.OMEGA_HAT[_IU]

MEMBERSHIP_TOL = 1e-8


def _sym_from_upper(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape != (21,):
        raise InputError(f"expected 21 upper-triangle entries, got {q.shape}")
    Q = np.zeros((6, 6))
    Q[_IU] = q
    return Q + np.triu(Q, 1).T


@dataclass(frozen=True, eq=False)
class QuadraticComplex:
    """Complex ``{L : L^T Q L = 0}``; ``Q`` is symmetrized on construction."""

    Q: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.shape != (6, 6) or not np.all(np.isfinite(Q)):
            raise InputError("Q must be a finite 6x6 matrix")
        Q = 0.5 * (Q + Q.T)
        Q.flags.writeable = False
        object.__setattr__(self, "Q", Q)

    @property
    def scale(self) -> float:
        return float(np.abs(self.Q).max())

    def regauged(self, r: float) -> "QuadraticComplex":
        return QuadraticComplex(self.Q + r * pc.OMEGA_HAT, dict(self.meta))

    def contains(self, L, tol: float = MEMBERSHIP_TOL) -> bool:
        return abs(complex_eval(self, L)) <= tol

    def to_json(self) -> list[float]:
        return [float(x) for x in self.Q[_IU]]

    @classmethod
    def from_json(cls, data) -> "QuadraticComplex":
        return cls(_sym_from_upper(data))


def random_complex(rng: np.random.Generator) -> QuadraticComplex:
    A = rng.standard_normal((6, 6))
    return QuadraticComplex(A + A.T)


def _line_vec(L) -> np.ndarray:
    p = L.p if isinstance(L, pc.Line6) else np.asarray(L, dtype=float)
    return pc.supnormalize(p)


def complex_eval(K: QuadraticComplex, L) -> float:
    """``L^T Q L`` with ``L`` scaled so its largest coordinate is 1."""
    p = _line_vec(L)
    return float(p @ K.Q @ p)


# ------------------------------------------------------------------ quadrics


def _second_compound(A: np.ndarray) -> np.ndarray:
    C = np.empty((6, 6))
    for a, (i, j) in enumerate(pc.PAIRS):
        for b, (k, l) in enumerate(pc.PAIRS):
            C[a, b] = A[i, k] * A[j, l] - A[i, l] * A[j, k]
    return C


def tangent_complex_of_quadric(A) -> QuadraticComplex:
    """Lines tangent to the quadric ``X^T A X = 0``.

    For ``L = X ^ Y`` the tangency discriminant ``(X^T A Y)^2 - (X^T A X)(Y^T A Y)``
    equals ``-L^T C2(A) L`` (Cauchy-Binet), ``C2`` being the second compound.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (4, 4):
        raise InputError("quadric matrix must be 4x4")
    A = 0.5 * (A + A.T)
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise SingularQuadric(f"quadric has rank < 4 (sigma ratio {s[-1] / s[0]:.2e})")
    return QuadraticComplex(-_second_compound(A), {"kind": "tangent", "quadric": A.tolist()})


# -------------------------------------------------------------- tetrahedral


def _pencil_lines(X, Y1, Y2, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)[..., None]
    Y = np.cos(phi) * Y1 + np.sin(phi) * Y2
    return np.stack([X[i] * Y[..., j] - X[j] * Y[..., i] for i, j in pc.PAIRS], axis=-1)


def _brackets(planes: np.ndarray, X, Y) -> np.ndarray:
    """Brackets ``[kl]`` of the four plane intersections on the line ``XY``."""
    a = Y @ planes.T
    b = -(X @ planes.T)
    return a[..., :, None] * b[..., None, :] - a[..., None, :] * b[..., :, None]


def _cr_residual(planes, lam, X, Y):
    br = _brackets(planes, X, Y)
    num = br[..., 0, 3] * br[..., 1, 2]
    den = br[..., 0, 2] * br[..., 1, 3]
    return num - lam * den, den


def sample_cross_ratio_lines(planes, lam: float, n: int, rng: np.random.Generator, n_scan: int = 96) -> np.ndarray:
    """Unit Pluecker vectors of ``n`` lines meeting the planes in cross ratio ``lam``.

    Each sample is a random pencil; the pencil angle is corrected by root
    finding on the cleared cross-ratio equation.
    """
    planes = np.asarray(planes, dtype=float)
    out = []
    phis = np.linspace(0.0, np.pi, n_scan + 1)
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > 50 * n:
            raise FitFailed(f"only {len(out)} of {n} cross-ratio lines found")
        X = np.append(rng.uniform(-2, 2, 3), 1.0)
        Y1 = np.append(rng.standard_normal(3), rng.uniform(-1, 1))
        Y2 = np.append(rng.standard_normal(3), rng.uniform(-1, 1))

        def f(phi):
            ph = np.asarray(phi, float)[..., None]
            Y = np.cos(ph) * Y1 + np.sin(ph) * Y2
            r, den = _cr_residual(planes, lam, X, Y)
            nrm = np.linalg.norm(np.stack([X[i] * Y[..., j] - X[j] * Y[..., i] for i, j in pc.PAIRS], -1), axis=-1)
            return r / nrm**2, den / nrm**2

        vals, _ = f(phis)
        idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
        for k in idx:
            phi = brentq(lambda t: float(f(t)[0]), phis[k], phis[k + 1], xtol=1e-15)
            _, den = f(phi)
            if abs(den) < 1e-6:
                continue
            p = _pencil_lines(X, Y1, Y2, phi)
            out.append(p / np.linalg.norm(p))
            if len(out) >= n:
                break
    return np.array(out)


def _moment_rows(P: np.ndarray) -> np.ndarray:
    return P[:, _IU[0]] * P[:, _IU[1]] * _W


def tetrahedral_complex(planes, lam: float, n_samples: int = 240, n_check: int = 100, seed: int = 0) -> QuadraticComplex:
    """Lines cutting the four planes (in the given order) in cross ratio ``lam``.

    Raises
    ------
    DegenerateLambda
        For ``lam`` in ``{0, 1}`` or non-finite.
    DegenerateTetrahedron
        If the planes are not independent.
    FitFailed
        If the sampled lines do not pin down a unique form, or fresh samples
        miss the fitted complex.
    """
    lam = float(lam)
    if not math.isfinite(lam) or lam in (0.0, 1.0):
        raise DegenerateLambda(f"cross ratio {lam} does not define a tetrahedral complex")
    Pi = np.array([pc._as_vec4(p) for p in planes], dtype=float)
    if Pi.shape != (4, 4):
        raise DegenerateTetrahedron("need exactly four planes")
    Pi = Pi / np.linalg.norm(Pi, axis=1, keepdims=True)
    s = np.linalg.svd(Pi, compute_uv=False)
    if s[-1] <= 1e-9 * s[0]:
        raise DegenerateTetrahedron("planes are not in general position")

    rng = np.random.default_rng(seed)
    lines = sample_cross_ratio_lines(Pi, lam, n_samples, rng)
    R = _moment_rows(lines)
    # orthonormal basis of the complement of the Pluecker-form direction
    w = _OMEGA_Q / np.linalg.norm(_OMEGA_Q)
    B = np.linalg.svd(np.eye(21) - np.outer(w, w))[0][:, :20]
    _, sv, Vt = np.linalg.svd(R @ B)
    ratio = sv[-1] / sv[0]
    if ratio > 1e-6:
        raise FitFailed(f"no null vector: sigma ratio {ratio:.2e}")
    if sv[-2] / sv[0] < 1e-6:
        raise FitFailed("null space is not one-dimensional")
    q = B @ Vt[-1]
    q = q / q[np.argmax(np.abs(q))]
    K = QuadraticComplex(_sym_from_upper(q), {"kind": "tetrahedral", "lambda": lam, "planes": Pi.tolist(),
                                              "harmonic": bool(np.isclose(lam, [-1.0, 2.0, 0.5]).any()),
                                              "fit_ratio": float(ratio)})
    fresh = sample_cross_ratio_lines(Pi, lam, n_check, rng)
    res = np.abs(np.einsum("ni,ij,nj->n", fresh, K.Q, fresh) / np.abs(fresh).max(axis=1) ** 2)
    if res.max() > 1e-6:
        raise FitFailed(f"fresh samples miss the fitted complex by {res.max():.2e}")
    return K


# ------------------------------------------------------------ point cones


@dataclass(frozen=True)
class PointCone:
    """Complex lines through ``P`` as a conic on the pencil basis ``P ^ e_i``.

    ``kind`` is ``"cone"`` (rank 3), ``"two_pencils"`` (rank 2),
    ``"double_pencil"`` (rank 1) or ``"all"`` (rank 0).  At rank 2 the two
    pencils share ``vertex_line``; when they are real, ``pencil_planes`` holds
    both planes and ``centers`` the second pencil centre of the complex in each
    plane.
    """

    P: np.ndarray
    M: np.ndarray
    rank: int
    kind: str
    j: int
    basis: np.ndarray
    real: bool
    pencil_planes: tuple = ()
    centers: tuple = ()
    vertex_line: pc.Line6 | None = None

    @property
    def join_lines(self) -> tuple:
        """Lines ``P Q'``, one per pencil plane; each lies in both pencils of its plane."""
        return tuple(pc.plucker_from_points(self.P, c) for c in self.centers if c is not None)

    def line(self, c) -> np.ndarray:
        return np.asarray(c, float) @ self.basis

    def conic_lines(self, s) -> np.ndarray:
        """Rational-angle parametrization of the real cone (rank 3, indefinite)."""
        if self.kind != "cone" or not self.real:
            raise EmptyCone("no real nondegenerate cone at this point")
        a, b1, b2 = _conic_frame(self.M)
        s = np.asarray(s, float)[..., None]
        c = a + np.cos(s) * b1 + np.sin(s) * b2
        return c @ self.basis


def _unit_points(j: int) -> np.ndarray:
    return np.array([np.eye(4)[i] for i in range(4) if i != j])


def _rank(M: np.ndarray, thresh: float = 1e-9) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > thresh * s[0]))


def _eig_signed(M):
    """Eigenpairs sorted by decreasing |value|, largest-magnitude entry of each vector positive."""
    ev, V = np.linalg.eigh(M)
    order = np.argsort(-np.abs(ev))
    ev, V = ev[order], V[:, order]
    k = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[k, np.arange(V.shape[1])])
    return ev, V


def _conic_frame(M):
    """``a, b1, b2`` with ``M(a,a) = -1``, ``M(b,b) = 1``, mutually M-orthogonal."""
    ev, V = _eig_signed(M)
    if np.sum(ev < 0) == 2:
        ev = -ev
    neg = int(np.argmin(ev))
    pos = [i for i in range(3) if i != neg]
    a = V[:, neg] / math.sqrt(-ev[neg])
    return a, V[:, pos[0]] / math.sqrt(ev[pos[0]]), V[:, pos[1]] / math.sqrt(ev[pos[1]])


def _second_center(K, P, A1, A2):
    """Pencil centre other than ``P`` of the complex conic in plane ``P A1 A2``.

    With ``l1 = A1^A2, l2 = A2^P, l3 = P^A1`` the line ``sum c_k l_k`` passes
    through ``x0 P + x1 A1 + x2 A2`` iff ``c . x = 0``, so the two factors of the
    degenerate conic are read off as points directly.
    """
    P, A1, A2 = (np.asarray(v, float) / np.linalg.norm(v) for v in (P, A1, A2))
    ell = np.array([pc.wedge(A1, A2), pc.wedge(A2, P), pc.wedge(P, A1)])
    N = ell @ K.Q @ ell.T
    ev, V = _eig_signed(N)
    if abs(ev[2]) > 1e-6 * abs(ev[0]) or ev[0] * ev[1] > 0:
        return None
    x = [math.sqrt(abs(ev[0])) * V[:, 0] + s * math.sqrt(abs(ev[1])) * V[:, 1] for s in (1.0, -1.0)]
    # P itself is (1, 0, 0); keep the other factor
    x.sort(key=lambda v: abs(v[0]) / np.linalg.norm(v))
    b = x[0]
    return pc.supnormalize(b[0] * P + b[1] * A1 + b[2] * A2)


def cone_at_point(K: QuadraticComplex, P) -> PointCone:
    x = pc._as_vec4(P)
    x = pc.supnormalize(x)
    j, L = pc._pencil_basis(x)
    M = L @ K.Q @ L.T
    rank = _rank(M)
    kind = {3: "cone", 2: "two_pencils", 1: "double_pencil", 0: "all"}[rank]
    ev, V = _eig_signed(M)
    real = bool(ev[0] * ev[-1] < 0) if rank == 3 else True
    planes, centers, vline = (), (), None
    if rank == 2:
        E = _unit_points(j)
        n = V[:, 2]
        vline = pc.Line6(n @ L, check=False)
        real = bool(ev[0] * ev[1] < 0)
        if real:
            planes, cs = [], []
            En = n @ E
            for sgn in (1.0, -1.0):
                ell = math.sqrt(abs(ev[0])) * V[:, 0] + sgn * math.sqrt(abs(ev[1])) * V[:, 1]
                w = np.cross(ell, n)
                Ew = w @ E
                planes.append(pc.plane_through_points(x, En, Ew))
                cs.append(_second_center(K, x, En, Ew))
            planes, centers = tuple(planes), tuple(cs)
    return PointCone(x, M, rank, kind, j, L, real, planes, centers, vline)


def singular_function(K: QuadraticComplex, P, j: int | None = None) -> float:
    """Quartic whose zero set is the singularity surface of ``K``.

    ``det(M) / P_j**2`` where ``M`` is the cone matrix on the basis
    ``P ^ e_i`` (``i != j``).  The quotient does not depend on ``j``; by default
    ``j`` is the largest coordinate of ``P``, ties resolved toward the higher index.
    ``P`` is used as given, so the result is homogeneous of degree 4 in ``P``.
    """
    x = pc._as_vec4(P)
    if j is None:
        j, L = pc._pencil_basis(x)
    else:
        if x[j] == 0:
            raise InputError(f"coordinate {j} of P vanishes")
        L = np.array([pc.wedge(x, np.eye(4)[i]) for i in range(4) if i != j])
    M = L @ K.Q @ L.T
    return float(np.linalg.det(M) / x[j] ** 2)


class SingularSurface:
    """Vectorized affine evaluation of :func:`singular_function` (``w = 1``), for meshing."""

    family = "singularity"

    def __init__(self, K: QuadraticComplex, bbox=((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))):
        self.K = K
        self.bbox = bbox
        self.params = tuple(K.to_json())

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        X = np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1)
        _, M = _cone_mats(self.K, X, _unit_points(3))
        return np.linalg.det(M)


def singular_scale(K: QuadraticComplex, P) -> float:
    """Natural magnitude of :func:`singular_function` at ``P``."""
    x = pc._as_vec4(P)
    return float(np.linalg.norm(K.Q, 2) ** 3 * np.abs(x).max() ** 4)


def find_singular_point(K: QuadraticComplex, A, B, n_scan: int = 400) -> np.ndarray | None:
    """First zero of the singular function on the projective line through ``A`` and ``B``.

    The line is swept as ``cos(t) A + sin(t) B`` for ``t`` in ``[0, pi)``; the
    sign change is refined with Brent's method.
    """
    A = np.asarray(pc._as_vec4(A), float)
    B = np.asarray(pc._as_vec4(B), float)
    A, B = A / np.linalg.norm(A), B / np.linalg.norm(B)

    def f(t):
        return singular_function(K, math.cos(t) * A + math.sin(t) * B)

    ts = np.linspace(0.0, np.pi, n_scan + 1)
    vals = np.array([f(t) for t in ts])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if len(idx) == 0:
        return None
    k = idx[0]
    t = brentq(f, ts[k], ts[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return math.cos(t) * A + math.sin(t) * B


# -------------------------------------------------- the congruence K2 n K1(g)


def _cone_mats(K: QuadraticComplex, X: np.ndarray, E: np.ndarray):
    """Line bases ``X ^ E_i`` (..., 3, 6) and cone matrices (..., 3, 3)."""
    L = np.stack(
        [np.stack([X[..., a] * E[i, b] - X[..., b] * E[i, a] for a, b in pc.PAIRS], -1) for i in range(3)], -2
    )
    M = np.einsum("...ia,ab,...kb->...ik", L, K.Q, L)
    return L, M


def _mdot(M, x, y):
    return np.einsum("...i,...ij,...j->...", x, M, y)


def congruence_from_complex_and_line(
    K: QuadraticComplex, g: pc.Line6, theta0: float | None = None, half_width: float | None = None
) -> ParamCongruence:
    """Lines of ``K`` meeting ``g``, parametrized by ``(theta, s)``.

    ``theta`` moves ``X = cos(theta) G0 + sin(theta) G1`` along ``g``; ``s`` runs
    around the conic of complex lines through ``X``.  The conic frame is fixed
    at ``theta0`` and carried along by Gram-Schmidt in the cone's own inner
    product, which keeps the parametrization smooth.  Parameters where that
    frame breaks down (cone nearly losing its real points) evaluate to NaN.

    Raises
    ------
    EmptyCone
        If no point of ``g`` carries a real cone.
    """
    G0, G1 = g.points()

    def X_at(th):
        th = np.asarray(th, float)[..., None]
        return np.cos(th) * G0 + np.sin(th) * G1

    thetas = np.linspace(0.0, np.pi, 721)[:-1]
    if theta0 is None:
        ok = []
        for th in thetas:
            cone = cone_at_point(K, X_at(th))
            ev = np.linalg.eigvalsh(cone.M)
            ok.append(cone.kind == "cone" and cone.real and min(abs(ev)) > 1e-3 * max(abs(ev)))
        ok = np.array(ok)
        if not ok.any():
            raise EmptyCone("the real cone is empty at every point of g")
        if ok.all():
            theta0 = float(np.pi / 2)
        else:
            # centre of the longest cyclic run of good angles
            start = int(np.argmin(ok))
            rolled = np.roll(ok, -start)
            best, cur, best_end = 0, 0, 0
            for i, v in enumerate(rolled):
                cur = cur + 1 if v else 0
                if cur > best:
                    best, best_end = cur, i
            mid = (start + best_end - (best - 1) / 2) % len(ok)
            theta0 = float(np.interp(mid, np.arange(len(ok) + 1), np.linspace(0, np.pi, len(ok) + 1)))
    X0 = X_at(theta0)
    cone0 = cone_at_point(K, X0)
    if not (cone0.kind == "cone" and cone0.real):
        raise EmptyCone(f"no real cone at theta={theta0}")
    j0 = cone0.j
    E = _unit_points(j0)
    sgn = 1.0
    ev0 = np.linalg.eigvalsh(cone0.M)
    if np.sum(ev0 < 0) == 2:
        sgn = -1.0
    a0, b10, b20 = _conic_frame(sgn * cone0.M)

    def frame(th):
        X = X_at(th)
        L, M = _cone_mats(K, X, E)
        M = sgn * M
        aa = _mdot(M, a0, a0)
        valid = aa < -1e-8 * np.abs(M).max(axis=(-1, -2))
        aa = np.where(valid, aa, -1.0)
        a = a0 / np.sqrt(-aa)[..., None]
        b1 = b10 + _mdot(M, b10, a)[..., None] * a
        n1 = _mdot(M, b1, b1)
        valid &= n1 > 0
        b1 = b1 / np.sqrt(np.where(n1 > 0, n1, 1.0))[..., None]
        b2 = b20 + _mdot(M, b20, a)[..., None] * a - _mdot(M, b20, b1)[..., None] * b1
        n2 = _mdot(M, b2, b2)
        valid &= n2 > 0
        b2 = b2 / np.sqrt(np.where(n2 > 0, n2, 1.0))[..., None]
        valid &= np.abs(X[..., j0]) > 1e-3
        return L, a, b1, b2, valid

    if half_width is None:
        hw = np.linspace(0.0, np.pi / 2, 361)[1:]
        good = np.concatenate([frame(theta0 + hw)[-1][None], frame(theta0 - hw)[-1][None]]).all(axis=0)
        bad = np.nonzero(~good)[0]
        limit = hw[bad[0] - 1] if len(bad) and bad[0] > 0 else (hw[-1] if not len(bad) else hw[0])
        half_width = 0.9 * float(limit)

    def plucker(th, s):
        th, s = np.broadcast_arrays(np.asarray(th, float), np.asarray(s, float))
        L, a, b1, b2, valid = frame(th)
        c = a + np.cos(s)[..., None] * b1 + np.sin(s)[..., None] * b2
        p = np.einsum("...i,...ia->...a", c, L)
        p = np.where(valid[..., None], p, np.nan)
        return p

    def dir_fn(th, s):
        p = plucker(th, s)
        return np.stack([-p[..., 2], p[..., 4], -p[..., 3]], -1)

    def base_fn(th, s):
        p = plucker(th, s)
        d = np.stack([-p[..., 2], p[..., 4], -p[..., 3]], -1)
        m = np.stack([p[..., 5], -p[..., 1], p[..., 0]], -1)
        return np.cross(d, m) / np.sum(d * d, -1)[..., None]

    dom = ((theta0 - half_width, theta0 + half_width), (0.0, 2 * np.pi))
    meta = {"kind": "complex_meets_line", "theta0": theta0, "j0": j0, "g": g.p.tolist(), "plucker": plucker}
    return ParamCongruence(base_fn, dir_fn, dom, None, None, meta)


def complex_surface_function(K: QuadraticComplex, g: pc.Line6, P) -> float:
    """Quartic in ``P`` vanishing where the two complex lines through ``P`` meeting ``g`` coincide.

    The lines through ``P`` in the plane ``(P, g)`` form a pencil; the complex
    cuts it in two lines, and the value is the discriminant of that pair.
    """
    x = pc._as_vec4(P)
    G0, G1 = g.points()
    L = np.array([pc.wedge(x, G0), pc.wedge(x, G1)])
    N = L @ K.Q @ L.T
    return float(N[0, 1] ** 2 - N[0, 0] * N[1, 1])
