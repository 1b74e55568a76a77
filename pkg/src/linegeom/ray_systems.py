"""Two-parameter ray systems: focal points and planes, normality, reflection
and refraction in implicit surfaces, Kummer-style thin pencils, and envelopes
of planar ray families.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import projective_core as pc
from . import tolerances as _tol
from .errors import (
    DegenerateDirection,
    DegenerateRadius,
    ImaginaryFoci,
    InputError,
    InvalidAngle,
    MissedSurface,
    ParallelNeighbors,
    TangentIncidence,
    TotalInternalReflection,
)
from .polynomial import monomial_exponents, design_matrix


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _det3(a, b, c) -> np.ndarray:
    return np.einsum("...i,...i->...", a, np.cross(b, c))


# ---------------------------------------------------------------- congruences


@dataclass(frozen=True, eq=False)
class ParamCongruence:
    """Ray system ``(u, v) -> (base, dir)``.

    ``base`` and ``dir`` take broadcastable arrays ``u, v`` and return
    ``(..., 3)`` arrays; ``dir`` is normalized on evaluation.  ``jet``, when
    given, returns ``(b, d, b_u, b_v, d_u, d_v)`` analytically; otherwise
    central differences with step ``h`` (default ``1e-5`` times the domain
    span) are used.
    """

    base: Callable
    dir: Callable
    domain: tuple = ((0.0, 1.0), (0.0, 1.0))
    jet_fn: Callable | None = None
    h: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def analytic(self) -> bool:
        return self.jet_fn is not None

    @property
    def steps(self) -> tuple[float, float]:
        (u0, u1), (v0, v1) = self.domain
        if self.h is not None:
            return float(self.h), float(self.h)
        return 1e-5 * (u1 - u0), 1e-5 * (v1 - v0)

    def eval(self, u, v) -> tuple[np.ndarray, np.ndarray]:
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return np.asarray(self.base(u, v), float), _unit(np.asarray(self.dir(u, v), float))

    def jet(self, u, v, h: tuple | None = None):
        if self.jet_fn is not None and h is None:
            return tuple(np.asarray(a, float) for a in self.jet_fn(np.asarray(u, float), np.asarray(v, float)))
        hu, hv = self.steps if h is None else h
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        b, d = self.eval(u, v)
        bp, dp = self.eval(u + hu, v)
        bm, dm = self.eval(u - hu, v)
        b_u, d_u = (bp - bm) / (2 * hu), (dp - dm) / (2 * hu)
        bp, dp = self.eval(u, v + hv)
        bm, dm = self.eval(u, v - hv)
        b_v, d_v = (bp - bm) / (2 * hv), (dp - dm) / (2 * hv)
        return b, d, b_u, b_v, d_u, d_v

    def derivative_consistency(self, u, v) -> float:
        """Relative change of the finite-difference derivatives when ``h`` is halved."""
        hu, hv = self.steps
        j1 = self.jet(u, v, (hu, hv))
        j2 = self.jet(u, v, (hu / 2, hv / 2))
        num = max(float(np.max(np.abs(a - b))) for a, b in zip(j1[2:], j2[2:]))
        den = max(float(np.max(np.abs(a))) for a in j1[2:])
        return num / den

    def grid(self, n, margin: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Tensor grid of ``n`` (or ``(nu, nv)``) samples, inset by ``margin`` of the span."""
        nu, nv = (n, n) if np.isscalar(n) else n
        (u0, u1), (v0, v1) = self.domain
        du, dv = margin * (u1 - u0), margin * (v1 - v0)
        return np.meshgrid(np.linspace(u0 + du, u1 - du, nu), np.linspace(v0 + dv, v1 - dv, nv), indexing="ij")

    def line(self, u, v) -> pc.Line6:
        b, d = self.eval(u, v)
        return pc.Line6.from_point_direction(b, d)


def normal_congruence(point_fn, normal_fn, domain, jet_fn=None, h=None) -> ParamCongruence:
    """Lines along ``normal_fn`` through the surface points ``point_fn``."""
    return ParamCongruence(point_fn, normal_fn, tuple(map(tuple, domain)), jet_fn, h, {"kind": "normal"})


def sphere_normals(R: float = 1.0, center=(0.0, 0.0, 0.0), domain=((0.2, 2.9), (0.1, 6.2))) -> ParamCongruence:
    """Outward normals of a sphere in polar angle ``u`` and azimuth ``v`` (analytic jet)."""
    c = np.asarray(center, float)

    def n(u, v):
        return np.stack([np.sin(u) * np.cos(v), np.sin(u) * np.sin(v), np.cos(u) + 0 * v], axis=-1)

    def n_u(u, v):
        return np.stack([np.cos(u) * np.cos(v), np.cos(u) * np.sin(v), -np.sin(u) + 0 * v], axis=-1)

    def n_v(u, v):
        return np.stack([-np.sin(u) * np.sin(v), np.sin(u) * np.cos(v), 0 * u + 0 * v], axis=-1)

    def jet(u, v):
        N = n(u, v)
        return c + R * N, N, R * n_u(u, v), R * n_v(u, v), n_u(u, v), n_v(u, v)

    return ParamCongruence(lambda u, v: c + R * n(u, v), n, domain, jet, None, {"kind": "normal"})


def ellipsoid_normals(a: float, b: float, c: float, domain=((0.3, 1.4), (0.3, 1.3))) -> ParamCongruence:
    """Outward normals of ``x²/a² + y²/b² + z²/c² = 1``; ``u`` longitude, ``v`` latitude."""

    def X(u, v):
        return np.stack([a * np.cos(u) * np.cos(v), b * np.sin(u) * np.cos(v), c * np.sin(v) + 0 * u], axis=-1)

    def N(u, v):
        p = X(u, v)
        return p / np.array([a * a, b * b, c * c])

    return normal_congruence(X, N, domain)


def graph_normals(g, g_u, g_v, domain) -> ParamCongruence:
    """Upward normals of the graph ``z = g(u, v)``."""
    return normal_congruence(
        lambda u, v: np.stack([u, v, g(u, v)], axis=-1),
        lambda u, v: np.stack([-g_u(u, v), -g_v(u, v), np.ones_like(u)], axis=-1),
        domain,
    )


def two_line_congruence(g1: pc.Line6, g2: pc.Line6, plane_z: float = 0.0, domain=((-1, 1), (-1, 1))) -> ParamCongruence:
    """Transversals of two skew lines, parametrized by their point ``(u, v, plane_z)``."""

    def line_at(u, v):
        u, v = np.broadcast_arrays(u, v)
        out_b = np.empty(u.shape + (3,))
        out_d = np.empty(u.shape + (3,))
        for idx in np.ndindex(u.shape):
            P = np.array([u[idx], v[idx], plane_z])
            L = pc.transversal_through_point(g1, g2, P)
            d = L.unit_direction()
            out_b[idx] = P
            out_d[idx] = d * (1 if d[2] >= 0 else -1)
        return out_b, out_d

    return ParamCongruence(lambda u, v: line_at(u, v)[0], lambda u, v: line_at(u, v)[1], domain)


# ---------------------------------------------------------------- foci and focal planes


@dataclass(frozen=True)
class FocalParameters:
    """Roots of the focal quadratic along one ray.

    ``kind`` is ``'real'``, ``'double'`` or ``'complex'``; for complex roots
    ``t1``/``t2`` are ``nan`` and ``re``/``im`` hold the conjugate pair.
    A root at infinity (vanishing leading coefficient) is ``inf``.
    """

    t1: float
    t2: float
    kind: str
    re: float
    im: float
    coeffs: tuple


def _focal_coeffs(jet) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    b, d, b_u, b_v, d_u, d_v = jet
    A = _det3(d, d_u, d_v)
    B = _det3(d, d_u, b_v) + _det3(d, b_u, d_v)
    C = _det3(d, b_u, b_v)
    scale = (np.linalg.norm(b_u, axis=-1) + np.linalg.norm(d_u, axis=-1)) * (
        np.linalg.norm(b_v, axis=-1) + np.linalg.norm(d_v, axis=-1)
    )
    return A, B, C, scale


def _solve_focal(A: float, B: float, C: float, scale: float, double_tol: float) -> FocalParameters:
    if max(abs(A), abs(B), abs(C)) <= 1e-12 * scale:
        raise DegenerateDirection("focal quadratic vanishes identically")
    # lengths enter quadratically in C, linearly in B; compare in consistent units
    if abs(A) <= 1e-12 * scale:
        if abs(B) <= 1e-12 * scale:
            return FocalParameters(math.inf, math.inf, "double", math.inf, 0.0, (A, B, C))
        t = -C / B
        return FocalParameters(t, math.inf, "real", math.nan, 0.0, (A, B, C))
    disc = B * B - 4 * A * C
    if abs(disc) <= double_tol * max(B * B, abs(4 * A * C)):
        t = -B / (2 * A)
        return FocalParameters(t, t, "double", t, 0.0, (A, B, C))
    if disc < 0:
        re = -B / (2 * A)
        im = math.sqrt(-disc) / (2 * abs(A))
        return FocalParameters(math.nan, math.nan, "complex", re, im, (A, B, C))
    q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
    r1, r2 = q / A, C / q
    t1, t2 = min(r1, r2), max(r1, r2)
    return FocalParameters(t1, t2, "real", 0.5 * (t1 + t2), 0.0, (A, B, C))


def focal_parameters(cong: ParamCongruence, u: float, v: float) -> FocalParameters:
    """Signed distances along ``dir`` from ``base`` to the two focal points.

    Roots of ``det[d, b_u + t d_u, b_v + t d_v] = 0``.
    """
    A, B, C, scale = (float(x) for x in _focal_coeffs(cong.jet(u, v)))
    tol = _tol.get()
    return _solve_focal(A, B, C, scale, tol.double_root if cong.analytic else tol.double_root_fd)


@dataclass(frozen=True)
class HamiltonFrame:
    line: pc.Line6
    base: np.ndarray
    direction: np.ndarray
    t_focal_1: float
    t_focal_2: float
    midpoint_t: float
    focal_plane_1: pc.HomCoord4
    focal_plane_2: pc.HomCoord4
    plane_angle: float

    @property
    def foci(self) -> tuple[np.ndarray, np.ndarray]:
        return self.base + self.t_focal_1 * self.direction, self.base + self.t_focal_2 * self.direction

    @property
    def midpoint(self) -> np.ndarray:
        return self.base + self.midpoint_t * self.direction


def _variation_at(jet, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Null variation ``(alpha, beta)`` at focal parameter ``t`` and the resulting direction change."""
    b, d, b_u, b_v, d_u, d_v = jet
    M = np.column_stack([b_u + t * d_u, b_v + t * d_v]) if np.isfinite(t) else np.column_stack([d_u, d_v])
    P = np.eye(3) - np.outer(d, d)
    _, _, Vt = np.linalg.svd(P @ M)
    ab = Vt[-1]
    dd = ab[0] * d_u + ab[1] * d_v
    if np.linalg.norm(dd) <= 1e-12 * (np.linalg.norm(d_u) + np.linalg.norm(d_v)):
        dd = P @ (ab[0] * b_u + ab[1] * b_v)
    return ab, dd


def hamilton_frame(cong: ParamCongruence, u: float, v: float) -> HamiltonFrame:
    """Foci, midpoint and focal planes of the ray at ``(u, v)``.

    The neighbours meeting the ray at one focus all lie in a common plane
    through the ray; that plane is paired with the *other* focus, so that a
    directrix through ``F_i`` lies in ``Pi_i``.
    """
    jet = cong.jet(u, v)
    A, B, C, scale = (float(x) for x in _focal_coeffs(jet))
    tol = _tol.get()
    fp = _solve_focal(A, B, C, scale, tol.double_root if cong.analytic else tol.double_root_fd)
    if fp.kind == "complex":
        raise ImaginaryFoci(f"conjugate foci {fp.re} ± {fp.im}i")
    if fp.kind == "double":
        raise DegenerateDirection("coincident foci: focal planes undefined")
    b, d = jet[0], jet[1]
    planes = []
    for t_other in (fp.t2, fp.t1):
        _, dd = _variation_at(jet, t_other)
        n = np.cross(d, dd)
        n /= np.linalg.norm(n)
        planes.append(pc.HomCoord4(np.append(n, -n @ b), "plane"))
    n1, n2 = planes[0].c[:3], planes[1].c[:3]
    angle = math.acos(min(1.0, abs(float(n1 @ n2))))
    mid = 0.5 * (fp.t1 + fp.t2) if np.isfinite(fp.t2) else math.inf
    return HamiltonFrame(
        pc.Line6.from_point_direction(b, d), b, d, fp.t1, fp.t2, mid, planes[0], planes[1], angle
    )


# ---------------------------------------------------------------- normality


@dataclass(frozen=True)
class NormalityReport:
    normal: bool
    max_residual: float
    scale: float

    def __iter__(self):
        return iter((self.normal, self.max_residual))


def is_normal_congruence(cong: ParamCongruence, grid=50, tol: float = 1e-6, margin: float = 0.02) -> NormalityReport:
    """Closedness test of the 1-form ``dir . d(base)``.

    For unit ``dir`` the residual ``d_v . b_u - d_u . b_v`` vanishes exactly
    when the rays are the normals of a surface.  The returned residual is
    relative to ``max(|b_u||d_v| + |b_v||d_u|)`` over the grid.
    """
    U, V = cong.grid(grid, margin)
    b, d, b_u, b_v, d_u, d_v = cong.jet(U, V)
    r = np.einsum("...i,...i->...", d_v, b_u) - np.einsum("...i,...i->...", d_u, b_v)
    nb = np.linalg.norm
    scale = float(np.max(nb(b_u, axis=-1) * nb(d_v, axis=-1) + nb(b_v, axis=-1) * nb(d_u, axis=-1)))
    res = float(np.max(np.abs(r))) / scale if scale > 0 else 0.0
    return NormalityReport(res <= tol, res, scale)


# ---------------------------------------------------------------- optical interaction


def first_hits(F, gradF, O: np.ndarray, D: np.ndarray, s_lo, s_hi, n_scan: int = 256):
    """First parameter ``s`` in ``[s_lo, s_hi]`` with ``F(O + s D) = 0`` for each ray.

    Bracketed by a sign-change scan, refined by Newton steps safeguarded by
    bisection.  Rays without a sign change get ``nan``.
    """
    O = np.atleast_2d(O)
    D = np.atleast_2d(D)
    n = len(O)
    s_lo = np.broadcast_to(np.asarray(s_lo, float), (n,)).copy()
    s_hi = np.broadcast_to(np.asarray(s_hi, float), (n,)).copy()
    w = np.linspace(0.0, 1.0, n_scan + 1)
    S = s_lo[:, None] + w[None, :] * (s_hi - s_lo)[:, None]
    vals = F(O[:, None, :] + S[..., None] * D[:, None, :])
    sgn = np.sign(vals)
    change = sgn[:, :-1] * sgn[:, 1:] <= 0
    has = change.any(axis=1) & (s_hi > s_lo)
    k = np.argmax(change, axis=1)
    a = S[np.arange(n), k]
    bnd = S[np.arange(n), k + 1]
    fa = vals[np.arange(n), k]
    s = 0.5 * (a + bnd)
    for _ in range(100):
        P = O + s[:, None] * D
        f = F(P)
        df = np.einsum("ij,ij->i", gradF(P), D)
        left = np.sign(f) == np.sign(fa)
        a = np.where(left, s, a)
        fa = np.where(left, f, fa)
        bnd = np.where(left, bnd, s)
        with np.errstate(all="ignore"):
            sn = s - f / df
        ok = np.isfinite(sn) & (sn > np.minimum(a, bnd)) & (sn < np.maximum(a, bnd))
        sn = np.where(ok, sn, 0.5 * (a + bnd))
        done = np.abs(sn - s) <= 4e-16 * np.maximum(1.0, np.abs(s))
        s = sn
        if np.all(done | ~has):
            break
    return np.where(has, s, np.nan)


def _box_interval(O, D, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - O) / D
        t2 = (hi - O) / D
    tmin = np.where(D == 0, np.where((O >= lo) & (O <= hi), -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(D == 0, np.where((O >= lo) & (O <= hi), np.inf, -np.inf), np.maximum(t1, t2))
    return tmin.max(axis=-1), tmax.min(axis=-1)


def _hit_surface(surface, b: np.ndarray, d: np.ndarray):
    lo, hi = surface.box
    shape = b.shape[:-1]
    B = b.reshape(-1, 3)
    D = d.reshape(-1, 3)
    t0, t1 = _box_interval(B, D, lo, hi)
    eps = 1e-9 * surface.diag
    t0 = np.maximum(t0, eps)
    s = first_hits(surface, surface.grad, B, D, t0, t1)
    missed = ~np.isfinite(s)
    s = np.where(missed, 0.0, s)
    P = B + s[:, None] * D
    n = _unit(surface.grad(P))
    return P.reshape(shape + (3,)), n.reshape(shape + (3,)), missed.reshape(shape)


def _optical(cong: ParamCongruence, surface, bend, check_grid, label) -> ParamCongruence:
    def apply(u, v):
        b, d = cong.eval(u, v)
        P, n, missed = _hit_surface(surface, b, d)
        if missed.any():
            raise MissedSurface(list(zip(np.broadcast_to(u, missed.shape)[missed].tolist(), np.broadcast_to(v, missed.shape)[missed].tolist())))
        cosi = np.einsum("...i,...i->...", d, n)
        if np.any(np.abs(cosi) < 1e-10):
            raise TangentIncidence("ray meets the surface tangentially")
        out, bad = bend(d, n, cosi)
        if bad.any():
            raise TotalInternalReflection(
                list(zip(np.broadcast_to(u, bad.shape)[bad].tolist(), np.broadcast_to(v, bad.shape)[bad].tolist()))
            )
        return P, out

    U, V = cong.grid(check_grid)
    apply(U, V)
    return ParamCongruence(
        lambda u, v: apply(u, v)[0], lambda u, v: apply(u, v)[1], cong.domain, None, cong.h, {"kind": label, "parent": cong}
    )


def reflect_direction(d: np.ndarray, n: np.ndarray) -> np.ndarray:
    return d - 2.0 * np.einsum("...i,...i->...", d, n)[..., None] * n


def refract_direction(d: np.ndarray, n: np.ndarray, n_ratio: float) -> tuple[np.ndarray, np.ndarray]:
    """Vector Snell law; returns ``(direction, tir_mask)``.  ``n_ratio = n1 / n2``."""
    cosi = np.einsum("...i,...i->...", d, n)
    n = np.where((cosi > 0)[..., None], -n, n)
    cosi = np.abs(cosi)
    sin2t = n_ratio**2 * (1.0 - cosi**2)
    tir = sin2t > 1.0
    cost = np.sqrt(np.clip(1.0 - sin2t, 0.0, None))
    t = n_ratio * d + (n_ratio * cosi - cost)[..., None] * n
    return _unit(t), tir


def reflect_congruence(cong: ParamCongruence, mirror, check_grid: int = 21) -> ParamCongruence:
    """Rays after reflection at their first hit with ``mirror`` (an implicit surface)."""
    return _optical(cong, mirror, lambda d, n, c: (reflect_direction(d, n), np.zeros(c.shape, bool)), check_grid, "reflected")


def refract_congruence(cong: ParamCongruence, surface, n_ratio: float, check_grid: int = 21) -> ParamCongruence:
    """Rays after refraction at their first hit with ``surface``; ``n_ratio = n1 / n2``."""
    if not n_ratio > 0:
        raise InputError("n_ratio must be positive")
    return _optical(cong, surface, lambda d, n, c: refract_direction(d, n, n_ratio), check_grid, "refracted")


# ---------------------------------------------------------------- focal surfaces


@dataclass
class FocalSamples:
    points: np.ndarray  # (N, 3)
    sheet: np.ndarray  # 1 or 2
    uv: np.ndarray  # (N, 2)
    skipped: int

    def to_rows(self) -> list[list]:
        return [[*uv, int(s), *p] for uv, s, p in zip(self.uv.tolist(), self.sheet.tolist(), self.points.tolist())]


def focal_surface_samples(cong: ParamCongruence, grid=20, margin: float = 0.02) -> FocalSamples:
    """Both focal points of every grid ray with real, finite foci."""
    U, V = cong.grid(grid, margin)
    jet = cong.jet(U, V)
    A, B, C, scale = _focal_coeffs(jet)
    tol = _tol.get()
    dtol = tol.double_root if cong.analytic else tol.double_root_fd
    pts, sheet, uv = [], [], []
    skipped = 0
    for idx in np.ndindex(U.shape):
        try:
            fp = _solve_focal(float(A[idx]), float(B[idx]), float(C[idx]), float(scale[idx]), dtol)
        except DegenerateDirection:
            skipped += 1
            continue
        if fp.kind == "complex":
            skipped += 1
            continue
        for k, t in ((1, fp.t1), (2, fp.t2)):
            if np.isfinite(t):
                pts.append(jet[0][idx] + t * jet[1][idx])
                sheet.append(k)
                uv.append((U[idx], V[idx]))
    return FocalSamples(np.array(pts).reshape(-1, 3), np.array(sheet, int), np.array(uv).reshape(-1, 2), skipped)


# ---------------------------------------------------------------- thin pencils


@dataclass
class StringModel:
    segments: np.ndarray  # (n, 2, 3)
    lines: list
    complexes: tuple  # the two linear complexes containing every line
    meta: dict

    def congruence(self) -> ParamCongruence:
        """The pencil as a ray system over the plane through ``M`` perpendicular to the axis."""
        R = np.asarray(self.meta["R"])
        Rot = np.asarray(self.meta["rotation"])
        M = np.asarray(self.meta["midpoint"])
        rho = self.meta["rho"]

        def jet(u, v):
            u, v = np.broadcast_arrays(u, v)
            p = np.stack([u, v, 0 * u], axis=-1)
            w = np.stack([R[0, 0] * u + R[0, 1] * v, R[1, 0] * u + R[1, 1] * v, np.ones_like(u)], axis=-1)
            nw = np.linalg.norm(w, axis=-1, keepdims=True)
            d = w / nw
            w_u = np.broadcast_to(np.array([R[0, 0], R[1, 0], 0.0]), w.shape)
            w_v = np.broadcast_to(np.array([R[0, 1], R[1, 1], 0.0]), w.shape)
            d_u = w_u / nw - d * np.einsum("...i,...i->...", d, w_u)[..., None] / nw
            d_v = w_v / nw - d * np.einsum("...i,...i->...", d, w_v)[..., None] / nw
            e1 = np.broadcast_to(np.array([1.0, 0, 0]), w.shape)
            e2 = np.broadcast_to(np.array([0.0, 1, 0]), w.shape)
            rot = lambda a: a @ Rot.T
            return M + rot(p), rot(d), rot(e1), rot(e2), rot(d_u), rot(d_v)

        return ParamCongruence(
            lambda u, v: jet(u, v)[0], lambda u, v: jet(u, v)[1], ((-rho, rho), (-rho, rho)), jet, None, {"kind": "pencil"}
        )

    def sample_points(self, per_segment: int = 40) -> np.ndarray:
        w = np.linspace(0.0, 1.0, per_segment)
        a, b = self.segments[:, 0], self.segments[:, 1]
        return (a[:, None, :] + w[None, :, None] * (b - a)[:, None, :]).reshape(-1, 3)


def _axis_rotation(direction, frame_x) -> np.ndarray:
    z = np.asarray(direction, float)
    z = z / np.linalg.norm(z)
    x = np.asarray(frame_x, float) if frame_x is not None else np.eye(3)[int(np.argmin(np.abs(z)))]
    x = x - (x @ z) * z
    if np.linalg.norm(x) < 1e-12:
        raise InputError("frame_x is parallel to the axis")
    x = x / np.linalg.norm(x)
    return np.column_stack([x, np.cross(z, x), z])


def pencil_matrix(pencil_type: int, f: float, theta: float, k=(1.0, 1.0)) -> np.ndarray:
    """``R`` such that the pencil ray through ``(x, y, 0)`` has direction ``(R (x, y), 1)``."""
    if pencil_type in (1, 2):
        if not f > 0:
            raise InputError("focal half-distance must be positive")
        cot = math.cos(theta) / math.sin(theta)
        return np.array([[1.0, -2.0 * cot], [0.0, -1.0]]) / f
    k1, k2 = (float(x) for x in k)
    if not (k1 > 0 and k2 > 0):
        raise InputError("elliptic pencil parameters must be positive")
    return np.array([[0.0, -1.0 / k1], [1.0 / k2, 0.0]])


def thin_pencil_model(
    axis: pc.Line6 | None = None,
    f: float = 0.5,
    theta: float = math.pi / 2,
    pencil_type: int = 1,
    rho: float = 0.2,
    n: int = 64,
    clip: float | None = None,
    k=(0.5, 0.5),
    midpoint=None,
    frame_x=None,
) -> StringModel:
    """String model of a thin ray pencil around ``axis``.

    Types 1 and 2 are the lines meeting the directrices through
    ``F1 = M + f a`` (along the first frame axis) and ``F2 = M - f a`` (at
    angle ``theta`` to the first), type 1 being ``theta = pi/2``.  Type 3 is
    an elliptic linear congruence with conjugate foci ``M ± i sqrt(k1 k2) a``.
    One string passes through each of ``n`` equispaced points of the circle of
    radius ``rho`` about ``M`` perpendicular to the axis; strings are clipped
    to the slab ``|z| <= clip`` measured along the axis.
    """
    if pencil_type not in (1, 2, 3):
        raise InputError("pencil_type must be 1, 2 or 3")
    if not rho > 0:
        raise DegenerateRadius("circle radius must be positive")
    if pencil_type == 1 and abs(theta - math.pi / 2) > 1e-12:
        raise InvalidAngle("type 1 requires theta = pi/2")
    if pencil_type == 2 and not (0 < theta < math.pi / 2):
        raise InvalidAngle("type 2 requires 0 < theta < pi/2")
    if pencil_type == 3:
        theta = math.nan
    R = pencil_matrix(pencil_type, f, theta, k)
    if axis is None:
        direction, M0 = np.array([0.0, 0.0, 1.0]), np.zeros(3)
    else:
        direction, M0 = axis.unit_direction(), axis.foot()
    M = M0 if midpoint is None else np.asarray(midpoint, float)
    Rot = _axis_rotation(direction, frame_x)

    # complexes d_x + R11 m_y - R12 m_x = 0 and d_y + R21 m_y - R22 m_x = 0 in the canonical frame
    canon = [
        pc.LinearComplex.from_direction_moment([1.0, 0.0, 0.0], [-R[0, 1], R[0, 0], 0.0]),
        pc.LinearComplex.from_direction_moment([0.0, 1.0, 0.0], [-R[1, 1], R[1, 0], 0.0]),
    ]
    T = np.eye(4)
    T[:3, :3] = Rot
    T[:3, 3] = M
    # a complex transforms with the inverse-transpose of the line transform
    complexes = tuple(_transform_complex(C, T) for C in canon)
    cong = pc.classify_linear_congruence(*complexes)
    zc = clip if clip is not None else (2.0 * f if pencil_type != 3 else 2.0 * max(k))
    segs, lines = [], []
    for j in range(n):
        phi = 2 * math.pi * j / n
        P = M + Rot @ np.array([rho * math.cos(phi), rho * math.sin(phi), 0.0])
        L = pc.congruence_line_through_point(cong, P)
        lines.append(L)
        d = L.unit_direction()
        dz = float(d @ Rot[:, 2])
        if abs(dz) < 1e-12:
            raise InputError("string parallel to the clip planes")
        segs.append([P - (zc / dz) * d, P + (zc / dz) * d])
    meta = {
        "type": pencil_type, "f": f, "theta": theta, "rho": rho, "n": n, "clip": zc, "k": tuple(k),
        "R": R.tolist(), "rotation": Rot.tolist(), "midpoint": M.tolist(), "congruence": cong.kind,
    }
    if pencil_type in (1, 2):
        a = Rot[:, 2]
        meta["directrices"] = [
            pc.Line6.from_point_direction(M + f * a, Rot[:, 0]),
            pc.Line6.from_point_direction(M - f * a, Rot @ np.array([math.cos(theta), math.sin(theta), 0.0])),
        ]
    return StringModel(np.array(segs), lines, complexes, meta)


def _transform_complex(C: pc.LinearComplex, T: np.ndarray) -> pc.LinearComplex:
    """Complex whose lines are the images under the point transform ``T`` of the lines of ``C``."""
    # pull back: a line L' belongs to the image iff T^-1 L' belongs to C; use 6 basis lines
    Ti = np.linalg.inv(T)
    basis = []
    for i, j in pc.PAIRS:
        E = np.eye(4)
        basis.append(pc.wedge(E[i], E[j]))
    vals = []
    for i, j in pc.PAIRS:
        E = np.eye(4)
        L = pc.wedge(Ti @ E[i], Ti @ E[j])
        vals.append(pc.pairing(C.p, L))
    # find k with pairing(k, e_ij) = vals for each basis line e_ij
    G = np.array([[pc.pairing(a, b) for b in basis] for a in basis])
    k = np.linalg.solve(G, np.array(vals))
    return pc.LinearComplex(tuple(k.tolist()))


# ---------------------------------------------------------------- implicit fits


def implicit_fit_residual(points: np.ndarray, degree: int) -> tuple[float, np.ndarray]:
    """Best algebraic fit of degree ``degree`` to a point cloud.

    Points are centred and scaled into the unit cube, rows of the monomial
    design matrix are normalized, and the fit is the last right singular
    vector.  Returns ``(sigma_min / sigma_max, coefficients)``.
    """
    P = np.asarray(points, float)
    c = 0.5 * (P.min(axis=0) + P.max(axis=0))
    s = 0.5 * float(np.max(P.max(axis=0) - P.min(axis=0)))
    Q = (P - c) / s
    exps = monomial_exponents(degree)
    M = design_matrix(Q, exps)
    M = M / np.linalg.norm(M, axis=1, keepdims=True)
    _, sv, Vt = np.linalg.svd(M, full_matrices=False)
    return float(sv[-1] / sv[0]), Vt[-1]


# ---------------------------------------------------------------- planar caustics


@dataclass(frozen=True)
class Ray2D:
    origin: np.ndarray
    dir: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dir, float)
        object.__setattr__(self, "origin", np.asarray(self.origin, float))
        object.__setattr__(self, "dir", d / np.linalg.norm(d))


@dataclass(frozen=True)
class PlaneCurve:
    """Implicit plane curve ``g(x, y) = 0`` with gradient, used as mirror or interface."""

    g: Callable
    grad: Callable
    box: tuple = ((-2.0, -2.0), (2.0, 2.0))

    @classmethod
    def ellipse(cls, a: float, b: float) -> "PlaneCurve":
        return cls(
            lambda p: p[..., 0] ** 2 / a**2 + p[..., 1] ** 2 / b**2 - 1.0,
            lambda p: np.stack([2 * p[..., 0] / a**2, 2 * p[..., 1] / b**2], axis=-1),
            ((-1.1 * a, -1.1 * b), (1.1 * a, 1.1 * b)),
        )

    @classmethod
    def circle(cls, r: float = 1.0, center=(0.0, 0.0)) -> "PlaneCurve":
        c = np.asarray(center, float)
        return cls(
            lambda p: np.sum((p - c) ** 2, axis=-1) - r * r,
            lambda p: 2 * (p - c),
            (tuple(c - 1.1 * r), tuple(c + 1.1 * r)),
        )

    @classmethod
    def line(cls, normal, offset: float) -> "PlaneCurve":
        nrm = np.asarray(normal, float)
        return cls(lambda p: p @ nrm - offset, lambda p: np.broadcast_to(nrm, p.shape), ((-1e3, -1e3), (1e3, 1e3)))


@dataclass
class Caustic2D:
    points: np.ndarray  # (N, 2) envelope points, in parameter order
    params: np.ndarray  # (N,) ray parameters kept
    cusps: np.ndarray  # indices into points
    dropped: list  # parameters dropped as ParallelNeighbors
    rays: list  # the final Ray2D family at the kept parameters


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _bend_rays_2d(O, U, curve: PlaneCurve, mode: str, n_ratio: float | None):
    lo, hi = np.asarray(curve.box[0], float), np.asarray(curve.box[1], float)
    O3 = np.column_stack([O, np.zeros(len(O))])
    U3 = np.column_stack([U, np.zeros(len(U))])
    g3 = lambda P: curve.g(P[..., :2])
    gg3 = lambda P: np.concatenate([curve.grad(P[..., :2]), np.zeros(P.shape[:-1] + (1,))], axis=-1)
    t0, t1 = _box_interval(O, U, lo, hi)
    diag = float(np.linalg.norm(hi - lo))
    s = first_hits(g3, gg3, O3, U3, np.maximum(t0, 1e-9 * diag), t1)
    if np.any(~np.isfinite(s)):
        raise MissedSurface(np.nonzero(~np.isfinite(s))[0].tolist())
    P = O + s[:, None] * U
    n = _unit(curve.grad(P))
    if np.any(np.abs(_cross2(U, n[:, ::-1] * [1, -1])) < 1e-10):
        raise TangentIncidence("ray grazes the curve")
    if mode == "catacaustic":
        V = U - 2 * np.sum(U * n, axis=1)[:, None] * n
    else:
        V3, tir = refract_direction(U3, np.column_stack([n, np.zeros(len(n))]), n_ratio)
        if tir.any():
            raise TotalInternalReflection(np.nonzero(tir)[0].tolist())
        V = V3[:, :2]
    return P, _unit(V)


def caustic_2d(
    origin_fn: Callable,
    dir_fn: Callable,
    ts,
    mode: str = "envelope",
    curve: PlaneCurve | None = None,
    n_ratio: float | None = None,
    h: float | None = None,
    parallel_tol: float = 1e-9,
) -> Caustic2D:
    """Envelope of a one-parameter family of plane rays.

    ``origin_fn(t)`` and ``dir_fn(t)`` are vectorized over ``t``.  In
    ``'catacaustic'`` and ``'diacaustic'`` mode the rays are first reflected
    or refracted at ``curve``.  The envelope point on ray ``t`` is
    ``o + s u`` with ``s = cross(u, o') / cross(u', u)``; derivatives are
    central differences of step ``h`` on the (bent) family.
    """
    if mode not in ("envelope", "catacaustic", "diacaustic"):
        raise InputError(f"unknown mode {mode!r}")
    if mode != "envelope" and curve is None:
        raise InputError("mirror/interface curve required")
    if mode == "diacaustic" and not (n_ratio and n_ratio > 0):
        raise InputError("diacaustic needs a positive n_ratio")
    ts = np.asarray(ts, float)
    span = float(ts.max() - ts.min()) if len(ts) > 1 else 1.0
    h = 1e-5 * span if h is None else h

    def family(t):
        O = np.asarray(origin_fn(t), float).reshape(-1, 2)
        U = _unit(np.asarray(dir_fn(t), float).reshape(-1, 2))
        O = np.broadcast_to(O, U.shape) if len(O) == 1 else O
        if mode == "envelope":
            return O, U
        return _bend_rays_2d(O, U, curve, mode, n_ratio)

    o, u = family(ts)
    op, up = family(ts + h)
    om, um = family(ts - h)
    do = (op - om) / (2 * h)
    du = (up - um) / (2 * h)
    den = _cross2(du, u)
    keep = np.abs(den) > parallel_tol * np.maximum(np.linalg.norm(du, axis=1), 1e-300)
    keep &= np.linalg.norm(du, axis=1) > parallel_tol
    s = np.where(keep, _cross2(u, do) / np.where(keep, den, 1.0), np.nan)
    pts = o + s[:, None] * u
    sig = np.full(len(ts), np.nan)
    idx = np.nonzero(keep)[0]
    if len(idx) >= 3:
        s_k = s[idx]
        t_k = ts[idx]
        ds = np.gradient(s_k, t_k)
        sig[idx] = np.sum(do[idx] * u[idx], axis=1) + ds
    cusps = []
    kept_sig = sig[idx]
    for a in range(len(idx) - 1):
        if np.isfinite(kept_sig[a]) and np.isfinite(kept_sig[a + 1]) and kept_sig[a] * kept_sig[a + 1] < 0:
            cusps.append(a if abs(kept_sig[a]) <= abs(kept_sig[a + 1]) else a + 1)
    dropped = ts[~keep].tolist()
    if not len(idx):
        raise ParallelNeighbors("all neighbouring rays are parallel: envelope at infinity")
    rays = [Ray2D(o[i], u[i]) for i in idx]
    return Caustic2D(pts[idx], ts[idx], np.array(cusps, int), dropped, rays)
