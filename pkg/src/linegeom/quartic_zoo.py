"""Implicit quartic surfaces: Fresnel wave surfaces, Kummer surfaces, equatorial
complex surfaces, and the generic analysis used on all of them (nodes, tangent
cones, tropes, curvature sign, asymptotic curves, quadric rulings).
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import projective_core as pc
from .errors import (
    DegenerateFamily,
    EllipticPoint,
    InputError,
    LostSurface,
    NodeCountMismatch,
    NonDistinctAxes,
    NotANode,
    ParameterOutOfRange,
    SingularPoint,
    WrongSignature,
)
from .polynomial import Poly3

SQRT2 = math.sqrt(2.0)


class NonIsolatedWarning(UserWarning):
    """Critical points on the surface form a positive-dimensional set."""


@dataclass(frozen=True, eq=False)
class ImplicitSurface:
    """Polynomial surface ``F(x, y, z) = 0`` with family metadata.

    ``bbox`` is a ``(lo, hi)`` pair of 3-tuples used as the default search and
    meshing region.
    """

    poly: Poly3
    family: str = "generic"
    params: tuple = ()
    bbox: tuple = ((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))
    meta: dict = field(default_factory=dict)

    def __call__(self, pts) -> np.ndarray:
        return self.poly(pts)

    def grad(self, pts) -> np.ndarray:
        return self.poly.grad(pts)

    def hess(self, pts) -> np.ndarray:
        return self.poly.hess(pts)

    @property
    def degree(self) -> int:
        return self.poly.degree

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.bbox[0], float), np.asarray(self.bbox[1], float)

    @property
    def diag(self) -> float:
        lo, hi = self.box
        return float(np.linalg.norm(hi - lo))

    def local_scale(self, p) -> float:
        """Magnitude a value of ``F`` near ``p`` is compared against."""
        r = float(np.linalg.norm(p))
        return self.poly.max_abs_coeff() * (1.0 + r) ** max(self.degree, 1)

    def to_json(self) -> dict:
        out = {"family": self.family, "params": [float(v) for v in self.params]}
        if self.family == "generic":
            out["terms"] = [[list(e), v] for e, v in self.poly.terms()]
        return out


def surface_from_json(d: dict) -> ImplicitSurface:
    fam = d["family"]
    p = d.get("params", [])
    if fam == "fresnel":
        return fresnel_surface(*p)
    if fam == "kummer":
        return kummer_surface(*p)
    if fam == "equatorial":
        return equatorial_surface(*p)
    if fam == "generic":
        poly = Poly3.from_terms([(tuple(e), v) for e, v in d["terms"]])
        bbox = d.get("bbox", ((-2, -2, -2), (2, 2, 2)))
        return ImplicitSurface(poly, "generic", (), tuple(map(tuple, bbox)))
    raise InputError(f"unknown surface family {fam!r}")


def quadric_surface(A) -> ImplicitSurface:
    """Surface ``X^T A X = 0`` in the affine chart ``w = 1``."""
    A = np.asarray(A, dtype=float)
    x, y, z = Poly3.variables()
    X = [x, y, z, Poly3.constant(1.0)]
    F = Poly3.constant(0.0)
    for i in range(4):
        for j in range(4):
            if A[i, j]:
                F = F + X[i] * X[j] * A[i, j]
    return ImplicitSurface(F, "generic", (), ((-2, -2, -2), (2, 2, 2)), {"quadric": A.tolist()})


# ---------------------------------------------------------------- families


def fresnel_surface(a2: float, b2: float, c2: float, strict: bool = True) -> ImplicitSurface:
    """Biaxial wave surface
    ``(x²+y²+z²)(a2 x²+b2 y²+c2 z²) - a2(b2+c2)x² - b2(c2+a2)y² - c2(a2+b2)z² + a2 b2 c2``.
    """
    a2, b2, c2 = float(a2), float(b2), float(c2)
    if min(a2, b2, c2) <= 0:
        raise InputError("Fresnel parameters must be positive")
    degenerate = a2 == b2 or b2 == c2
    if degenerate and strict:
        raise NonDistinctAxes(f"axes not distinct: {a2}, {b2}, {c2}")
    if not degenerate and not a2 > b2 > c2:
        raise InputError("expected a2 > b2 > c2")
    x, y, z = Poly3.variables()
    r2 = x * x + y * y + z * z
    F = (
        r2 * (x * x * a2 + y * y * b2 + z * z * c2)
        - x * x * (a2 * (b2 + c2))
        - y * y * (b2 * (c2 + a2))
        - z * z * (c2 * (a2 + b2))
        + a2 * b2 * c2
    )
    R = 1.15 * math.sqrt(max(a2, b2, c2))
    meta = {"degenerate": degenerate, "symmetries": [np.diag(v) for v in ((-1.0, 1, 1), (1, -1.0, 1), (1, 1, -1.0))]}
    return ImplicitSurface(F, "fresnel", (a2, b2, c2), ((-R,) * 3, (R,) * 3), meta)


def kummer_lambda(mu2: float) -> float:
    return (3.0 * mu2 - 1.0) / (3.0 - mu2)


def kummer_surface(mu2: float, strict: bool = True) -> ImplicitSurface:
    """Tetrahedral Kummer family ``(x²+y²+z²-mu2)² - lam p q r s`` (chart ``w = 1``).

    ``p, q = 1 - z ∓ √2 x`` and ``r, s = 1 + z ± √2 y``; ``lam = (3 mu2 - 1)/(3 - mu2)``.
    All 16 nodes are real only for ``1 < mu2 < 3``; on ``1/3 < mu2 < 1`` four
    of them are real (``meta['real_nodes']``).
    """
    mu2 = float(mu2)
    in_range = 1.0 / 3.0 < mu2 < 3.0 and mu2 != 1.0
    if not in_range and strict:
        raise ParameterOutOfRange(f"mu2={mu2} outside (1/3, 3) minus {{1}}")
    if mu2 == 3.0:
        raise ParameterOutOfRange("mu2 = 3 makes the family coefficient infinite")
    lam = kummer_lambda(mu2)
    x, y, z = Poly3.variables()
    p = 1.0 - z - x * SQRT2
    q = 1.0 - z + x * SQRT2
    r = 1.0 + z + y * SQRT2
    s = 1.0 + z - y * SQRT2
    F = (x * x + y * y + z * z - mu2) ** 2 - p * q * r * s * lam
    R = 2.5 * max(1.0, math.sqrt(mu2))
    sym = [
        np.diag([-1.0, 1.0, 1.0]),
        np.diag([1.0, -1.0, 1.0]),
        np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]]),
    ]
    meta = {"lambda": lam, "in_range": in_range, "symmetries": sym,
            "real_nodes": 16 if 1.0 < mu2 < 3.0 else 4,
            "trope_planes": [(-SQRT2, 0.0, -1.0, 1.0), (SQRT2, 0.0, -1.0, 1.0),
                             (0.0, SQRT2, 1.0, 1.0), (0.0, -SQRT2, 1.0, 1.0)]}
    return ImplicitSurface(F, "kummer", (mu2,), ((-R,) * 3, (R,) * 3), meta)


def equatorial_surface(E, U, C, F, R, B) -> ImplicitSurface:
    """Cleared equatorial complex surface ``y² beta(x) + z² alpha(x) + alpha(x) beta(x) = 0``
    with ``alpha = E x² + 2U x + C`` and ``beta = F x² - 2R x + B``.
    """
    E, U, C, F, R, B = (float(v) for v in (E, U, C, F, R, B))
    if E == 0 and U == 0 and C == 0:
        raise DegenerateFamily("alpha vanishes identically")
    if F == 0 and R == 0 and B == 0:
        raise DegenerateFamily("beta vanishes identically")
    x, y, z = Poly3.variables()
    alpha = x * x * E + x * (2 * U) + C
    beta = x * x * F - x * (2 * R) + B
    poly = y * y * beta + z * z * alpha + alpha * beta
    roots = [r for r in np.roots([E, 2 * U, C]).tolist() + np.roots([F, -2 * R, B]).tolist()
             if abs(complex(r).imag) < 1e-12]
    xs = [complex(r).real for r in roots] or [0.0]
    x0, x1 = min(xs) - 1.0, max(xs) + 1.0
    grid = np.linspace(x0, x1, 101)
    amp = max(np.abs(E * grid**2 + 2 * U * grid + C).max(), np.abs(F * grid**2 - 2 * R * grid + B).max())
    w = math.sqrt(amp) + 1.0
    meta = {"alpha": (E, U, C), "beta": (F, R, B),
            "symmetries": [np.diag([1.0, -1.0, 1.0]), np.diag([1.0, 1.0, -1.0])]}
    return ImplicitSurface(poly, "equatorial", (E, U, C, F, R, B), ((x0, -w, -w), (x1, w, w)), meta)


# ---------------------------------------------------------------- nodes


@dataclass
class NodeSet:
    points: np.ndarray  # (n, 3)
    signatures: list  # per node, e.g. (2, 1) = (#positive, #negative) Hessian eigenvalues
    hessian_eigs: np.ndarray  # (n, 3)
    f_residual: np.ndarray
    grad_residual: np.ndarray
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def to_rows(self) -> list[list]:
        return [[*map(float, p), "".join("+" * s[0] + "-" * s[1])] for p, s in zip(self.points, self.signatures)]


def _symmetric_seeds(lo, hi) -> np.ndarray:
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    seeds = [c]
    for frac in (0.5, 0.25):
        for axis in range(3):
            for sgn in (-1, 1):
                e = np.zeros(3)
                e[axis] = sgn * frac
                seeds.append(c + e * h)
    for signs in itertools.product((-1, 1), repeat=3):
        seeds.append(c + 0.4 * np.array(signs) * h)
    seeds.append(c + np.array([0.3, 0.2, 0.1]) * h)
    return np.array(seeds[:24])


def _newton_critical(S: ImplicitSurface, X: np.ndarray, iters: int = 100, max_step: float | None = None) -> np.ndarray:
    """Batched Gauss-Newton on the overdetermined system ``(F, grad F) = 0``.

    Converges quadratically to singular points of the surface; a tiny
    Levenberg shift keeps the normal equations solvable at rank-deficient
    Hessians.
    """
    X = np.array(X, dtype=float)
    max_step = max_step if max_step is not None else 0.25 * S.diag
    for _ in range(iters):
        f = S(X)
        g = S.grad(X)
        H = S.hess(X)
        J = np.concatenate([g[:, None, :], H], axis=1)
        r = np.concatenate([f[:, None], g], axis=1)
        JtJ = np.einsum("nki,nkj->nij", J, J)
        Jtr = np.einsum("nki,nk->ni", J, r)
        shift = 1e-14 * np.trace(JtJ, axis1=1, axis2=2)[:, None, None] * np.eye(3)
        with np.errstate(all="ignore"):
            try:
                dx = -np.linalg.solve(JtJ + shift, Jtr[..., None])[..., 0]
            except np.linalg.LinAlgError:
                dx = -np.einsum("nij,nj->ni", np.linalg.pinv(JtJ, rcond=1e-15), Jtr)
        dx[~np.all(np.isfinite(dx), axis=1)] = 0.0
        n = np.linalg.norm(dx, axis=1)
        big = n > max_step
        dx[big] *= (max_step / n[big])[:, None]
        X = X + dx
        if np.all(n < 1e-14 * (1.0 + np.linalg.norm(X, axis=1))):
            break
    return X


def _group_closure(gens, limit: int = 192) -> list[np.ndarray]:
    """All products of the generator matrices (a finite group is assumed)."""
    group = [np.eye(3)]
    frontier = [np.eye(3)]
    while frontier and len(group) < limit:
        nxt = []
        for A in frontier:
            for G in gens:
                B = np.asarray(G, float) @ A
                if not any(np.allclose(B, C, atol=1e-12) for C in group):
                    group.append(B)
                    nxt.append(B)
        frontier = nxt
    return group


def _node_certificate(S: ImplicitSurface, p) -> tuple[bool, float, float, np.ndarray, bool]:
    """Return (is_ordinary_node, |F|/scale, |grad F|/scale, hessian eigenvalues, singular)."""
    p = np.asarray(p, float)
    sc = S.local_scale(p)
    fr = abs(float(S(p))) / sc
    gr = float(np.linalg.norm(S.grad(p))) / sc
    H = S.hess(p)
    w = np.linalg.eigvalsh(H)
    sv = np.sort(np.abs(w))
    singular = fr <= 1e-9 and gr <= 1e-7
    full_rank = sv[-1] > 0 and sv[0] > 1e-6 * sv[-1]
    return singular and full_rank, fr, gr, w, singular


def _dedup(points: np.ndarray, radius: float) -> np.ndarray:
    out: list[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - q) > radius for q in out):
            out.append(p)
    if not out:
        return np.zeros((0, 3))
    arr = np.array(out)
    order = np.lexsort(np.round(arr, 9).T[::-1])
    return arr[order]


def find_nodes(
    S: ImplicitSurface,
    box=None,
    n_random: int = 200,
    seed: int = 0,
    extra_seeds=None,
) -> NodeSet:
    """Certified ordinary nodes (``F = 0``, ``grad F = 0``, Hessian rank 3) inside ``box``.

    Multistart Gauss-Newton from 24 symmetric seeds plus ``n_random``
    scrambled Halton points; family symmetries (``S.meta['symmetries']``) are applied
    to the found nodes and polished again.  Deterministic for a fixed seed.
    """
    lo, hi = (S.box if box is None else (np.asarray(box[0], float), np.asarray(box[1], float)))
    seeds = [_symmetric_seeds(lo, hi)]
    if n_random:
        # squaring the radial coordinate concentrates starts near the box centre,
        # where small node clusters have small basins
        u = 2.0 * qmc.Halton(d=3, scramble=True, seed=seed).random(n_random) - 1.0
        seeds.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * u * np.abs(u))
    if extra_seeds is not None:
        seeds.append(np.asarray(extra_seeds, float).reshape(-1, 3))
    X = _newton_critical(S, np.vstack(seeds))
    diag = float(np.linalg.norm(hi - lo))
    pad = 1e-9 * diag
    inside = np.all((X >= lo - pad) & (X <= hi + pad), axis=1) & np.all(np.isfinite(X), axis=1)
    X = X[inside]

    syms = S.meta.get("symmetries", [])
    if syms and len(X):
        cand = np.array([p for p in X if _node_certificate(S, p)[0]]).reshape(-1, 3)
        imgs = [X] + [cand @ M.T for M in _group_closure(syms)[1:]]
        X = _newton_critical(S, np.vstack(imgs))
        inside = np.all((X >= lo - pad) & (X <= hi + pad), axis=1) & np.all(np.isfinite(X), axis=1)
        X = X[inside]

    keep, nonisolated = [], 0
    for p in X:
        ok, fr, gr, w, singular = _node_certificate(S, p)
        if ok:
            keep.append(p)
        elif singular:
            nonisolated += 1
    pts = _dedup(np.array(keep).reshape(-1, 3), 1e-6 * diag)
    # re-polish after dedup so residuals reflect the reported points
    if len(pts):
        pts = _newton_critical(S, pts, iters=5)
    msgs = []
    if nonisolated and not len(pts):
        msgs.append("NonIsolated: singular points found but none is an ordinary node")
        warnings.warn(msgs[-1], NonIsolatedWarning, stacklevel=2)
    return _nodeset(S, pts, msgs)


def _nodeset(S: ImplicitSurface, pts: np.ndarray, msgs=()) -> NodeSet:
    sigs, eigs, fres, gres = [], [], [], []
    for p in pts:
        _, fr, gr, w, _ = _node_certificate(S, p)
        sigs.append((int(np.sum(w > 0)), int(np.sum(w < 0))))
        eigs.append(w)
        fres.append(fr)
        gres.append(gr)
    return NodeSet(
        np.asarray(pts, float).reshape(-1, 3), sigs, np.array(eigs).reshape(-1, 3), np.array(fres), np.array(gres), list(msgs)
    )


def fresnel_node_guess(a2: float, b2: float, c2: float) -> tuple[float, float]:
    """``(x0², z0²)`` where circle ``x²+z²=b2`` meets ellipse ``x²/c2 + z²/a2 = 1``."""
    return c2 * (a2 - b2) / (a2 - c2), a2 * (b2 - c2) / (a2 - c2)


def fresnel_real_nodes(a2: float, b2: float, c2: float) -> NodeSet:
    """The four real nodes of the wave surface, all in the plane ``y = 0``."""
    S = fresnel_surface(a2, b2, c2)
    x2, z2 = fresnel_node_guess(a2, b2, c2)
    pts = []
    for sx, sz in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        v = np.array([sx * math.sqrt(x2), sz * math.sqrt(z2)])
        for _ in range(30):
            p = np.array([v[0], 0.0, v[1]])
            g = S.grad(p)[[0, 2]]
            H = S.hess(p)[np.ix_([0, 2], [0, 2])]
            step = np.linalg.solve(H, g)
            v = v - step
            if np.linalg.norm(step) < 1e-15 * (1 + np.linalg.norm(v)):
                break
        pts.append([v[0], 0.0, v[1]])
    pts = _dedup(np.array(pts), 1e-6 * S.diag)
    ns = _nodeset(S, pts)
    for p in pts:
        if not _node_certificate(S, p)[0]:
            raise NotANode(f"Fresnel node certificate failed at {p}")
    return ns


# ---------------------------------------------------------------- sections and cones


@dataclass(frozen=True)
class CircularSections:
    planes: tuple  # two HomCoord4 planes through the origin
    radius: float
    degenerate: bool


def ellipsoid_circular_sections(a2: float, b2: float, c2: float) -> CircularSections:
    """Central planes cutting ``x²/a2 + y²/b2 + z²/c2 = 1`` in circles of radius ``sqrt(b2)``.

    Both planes contain the mean (y) axis: ``z = ±k x`` with
    ``k² = (1/b2 - 1/a2) / (1/c2 - 1/b2)``.
    """
    a2, b2, c2 = float(a2), float(b2), float(c2)
    if not a2 >= b2 >= c2 > 0:
        raise InputError("expected a2 >= b2 >= c2 > 0")
    r = math.sqrt(b2)
    if a2 == b2 and b2 == c2:
        return CircularSections((pc.HomCoord4.plane(0, 0, 1, 0),) * 2, r, True)
    if a2 == b2:
        return CircularSections((pc.HomCoord4.plane(0, 0, 1, 0),) * 2, r, True)
    if b2 == c2:
        return CircularSections((pc.HomCoord4.plane(1, 0, 0, 0),) * 2, r, True)
    num = 1.0 / b2 - 1.0 / a2
    den = 1.0 / c2 - 1.0 / b2
    # normal (sin, 0, -cos) of the plane z = tan(phi) x, tan(phi) = ±sqrt(num/den)
    phi = math.atan2(math.sqrt(num), math.sqrt(den))
    planes = tuple(pc.HomCoord4.plane(math.sin(s * phi), 0.0, -math.cos(s * phi), 0.0) for s in (1, -1))
    return CircularSections(planes, r, False)


@dataclass
class TangentCone:
    apex: np.ndarray
    hessian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    signature: tuple
    real: bool
    axis: np.ndarray | None
    half_angles: tuple | None  # opening half-angles towards the other two eigenvectors


def tangent_cone_at_node(S: ImplicitSurface, node) -> TangentCone:
    """Quadratic cone ``h^T H h = 0`` at a certified node.

    For a real cone the axis is the eigenvector of the eigenvalue whose sign
    occurs once; ``tan(half_angle_i) = sqrt(|lam_axis| / |lam_i|)``.
    """
    p = np.asarray(node, float)
    ok, fr, gr, w, singular = _node_certificate(S, p)
    if not ok:
        raise NotANode(f"not an ordinary node (|F|={fr:.2e}, |grad|={gr:.2e}, hessian eigenvalues {w})")
    H = S.hess(p)
    w, V = np.linalg.eigh(H)
    npos, nneg = int(np.sum(w > 0)), int(np.sum(w < 0))
    real = npos in (1, 2) and nneg in (1, 2)
    axis = half = None
    if real:
        k = int(np.argmax(w > 0)) if npos == 1 else int(np.argmax(w < 0))
        axis = V[:, k] * (1 if V[np.argmax(np.abs(V[:, k])), k] > 0 else -1)
        others = [i for i in range(3) if i != k]
        half = tuple(math.atan(math.sqrt(abs(w[k]) / abs(w[i]))) for i in others)
    return TangentCone(p, H, w, V, (npos, nneg), real, axis, half)


# ---------------------------------------------------------------- Kummer configuration


def kummer_nodes(S: ImplicitSurface, **kw) -> NodeSet:
    ns = find_nodes(S, **kw)
    if len(ns) != 16:
        raise NodeCountMismatch(f"found {len(ns)} nodes, expected 16")
    return ns


@dataclass
class TropeSet:
    planes: list  # HomCoord4 planes
    node_indices: list  # per trope, sorted tuple of 6 node indices
    square_residuals: list
    incidence: np.ndarray  # (n_nodes, n_tropes) 0/1

    def to_rows(self) -> list[list]:
        return [[*map(float, pl.c), *idx] for pl, idx in zip(self.planes, self.node_indices)]


def plane_frame(plane) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Origin, two orthonormal in-plane axes and unit normal of an affine plane."""
    h = np.asarray(plane, float)
    n = h[:3] / np.linalg.norm(h[:3])
    d = h[3] / np.linalg.norm(h[:3])
    origin = -d * n
    a = np.eye(3)[int(np.argmin(np.abs(n)))]
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return origin, e1, e2, n


def restrict_to_plane(S: ImplicitSurface, plane, origin=None) -> tuple[np.ndarray, tuple]:
    """Coefficients ``G[i, j]`` of ``F(o + a e1 + b e2)`` in ``a**i b**j`` and the frame."""
    o, e1, e2, n = plane_frame(plane)
    if origin is not None:
        origin = np.asarray(origin, float)
        o = origin - (origin - o) @ n * n
    A = np.column_stack([e1, e2, n])
    G = S.poly.compose_affine(A, o).coeffs[:, :, 0]
    return G, (o, e1, e2, n)


def _conic_through(pts2d: np.ndarray) -> np.ndarray:
    a, b = pts2d[:, 0], pts2d[:, 1]
    M = np.column_stack([np.ones_like(a), a, b, a * a, a * b, b * b])
    M = M / np.linalg.norm(M, axis=1, keepdims=True)
    return np.linalg.svd(M)[2][-1]


def conic_square_coeffs(c: np.ndarray) -> np.ndarray:
    """Coefficient grid (a**i b**j) of the square of conic ``c = (1, a, b, a², ab, b²)``."""
    C = np.zeros((3, 3))
    C[0, 0], C[1, 0], C[0, 1], C[2, 0], C[1, 1], C[0, 2] = c
    from scipy.signal import convolve2d

    return convolve2d(C, C)


def perfect_square_residual(G: np.ndarray, conic: np.ndarray) -> float:
    """Relative residual of the best fit ``G ≈ k * conic²`` in coefficient space."""
    Q = conic_square_coeffs(conic)
    n = max(G.shape[0], Q.shape[0]), max(G.shape[1], Q.shape[1])
    Gp = np.zeros(n)
    Gp[: G.shape[0], : G.shape[1]] = G
    Qp = np.zeros(n)
    Qp[: Q.shape[0], : Q.shape[1]] = Q
    k = float(np.sum(Gp * Qp) / np.sum(Qp * Qp))
    return float(np.linalg.norm(Gp - k * Qp) / np.linalg.norm(Gp))


def kummer_tropes(S: ImplicitSurface, nodes: NodeSet, incidence_tol: float = 1e-7) -> TropeSet:
    """Tropes: planes through exactly six nodes on which ``F`` restricts to a squared conic.

    Candidate planes come from every node triple (560 for 16 nodes), so the
    search is exhaustive; the perfect-square certificate decides.
    """
    P = nodes.points
    n = len(P)
    seen: dict[tuple, np.ndarray] = {}
    H = np.hstack([P, np.ones((n, 1))])
    for i, j, k in itertools.combinations(range(n), 3):
        nrm = np.cross(P[j] - P[i], P[k] - P[i])
        ln = np.linalg.norm(nrm)
        if ln < 1e-9:
            continue
        nrm = nrm / ln
        plane = np.append(nrm, -nrm @ P[i])
        on = tuple(int(m) for m in np.nonzero(np.abs(H @ plane) <= incidence_tol * max(1.0, np.abs(P).max()))[0])
        if len(on) == 6 and on not in seen:
            # refit the plane to all six points
            Q = P[list(on)]
            c = Q.mean(axis=0)
            nn = np.linalg.svd(Q - c)[2][-1]
            seen[on] = np.append(nn, -nn @ c)
    planes, idxs, res = [], [], []
    for on in sorted(seen):
        plane = seen[on]
        G, (o, e1, e2, nrm) = restrict_to_plane(S, plane, origin=P[list(on)].mean(axis=0))
        q2 = np.array([[(p - o) @ e1, (p - o) @ e2] for p in P[list(on)]])
        r = perfect_square_residual(G, _conic_through(q2))
        if r <= 1e-7:
            k = int(np.argmax(np.abs(plane)))
            planes.append(pc.HomCoord4(plane * np.sign(plane[k]), "plane"))
            idxs.append(on)
            res.append(r)
    inc = np.zeros((n, len(planes)), dtype=int)
    for t, on in enumerate(idxs):
        inc[list(on), t] = 1
    return TropeSet(planes, idxs, res, inc)


# ---------------------------------------------------------------- curvature and asymptotic curves


def _on_surface_check(S: ImplicitSurface, p, tol=1e-8):
    f = abs(float(S(p)))
    if f > tol * S.local_scale(p):
        raise InputError(f"point is not on the surface (|F| = {f:.3e})")


def _tangent_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.eye(3)[int(np.argmin(np.abs(n)))]
    t1 = np.cross(n, a)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def second_fundamental_form(S: ImplicitSurface, p) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """``(II, t1, t2, |grad F|)``; ``II[i, j] = t_i^T H t_j / |grad F|``."""
    g = S.grad(p)
    gn = float(np.linalg.norm(g))
    H = S.hess(p)
    if gn <= 1e-10 * S.local_scale(p) / max(1.0, S.diag):
        raise SingularPoint("gradient vanishes")
    t1, t2 = _tangent_basis(g / gn)
    T = np.column_stack([t1, t2])
    return T.T @ H @ T / gn, t1, t2, gn


def gauss_curvature(S: ImplicitSurface, p) -> float:
    """Gaussian curvature ``-det([[H, g], [g^T, 0]]) / |g|^4``."""
    p = np.asarray(p, float)
    g = S.grad(p)
    gn = float(np.linalg.norm(g))
    if gn <= 1e-10 * S.local_scale(p) / max(1.0, S.diag):
        raise SingularPoint("gradient vanishes")
    B = np.zeros((4, 4))
    B[:3, :3] = S.hess(p)
    B[:3, 3] = g
    B[3, :3] = g
    return float(-np.linalg.det(B) / gn**4)


def _curvature_band(S: ImplicitSurface, p) -> float:
    # zero band relative to the curvature scale ||H||² / |g|²
    return 1e-10 * (np.linalg.norm(S.hess(p)) / np.linalg.norm(S.grad(p))) ** 2


def gauss_curvature_sign(S: ImplicitSurface, p) -> str:
    """``'negative'``, ``'zero'`` or ``'positive'`` at a regular surface point."""
    p = np.asarray(p, float)
    _on_surface_check(S, p)
    K = gauss_curvature(S, p)
    band = _curvature_band(S, p)
    if K < -band:
        return "negative"
    if K > band:
        return "positive"
    return "zero"


def asymptotic_directions(S: ImplicitSurface, p) -> np.ndarray:
    """The two unit asymptotic directions at a hyperbolic point, shape ``(2, 3)``.

    Raises
    ------
    EllipticPoint
        If the Gaussian curvature is positive (no real directions).
    """
    p = np.asarray(p, float)
    II, t1, t2, _ = second_fundamental_form(S, p)
    k, R = np.linalg.eigh(II)
    if k[0] * k[1] > _curvature_band(S, p):
        raise EllipticPoint("positive Gaussian curvature: no real asymptotic directions")
    k0, k1 = min(k[0], 0.0), max(k[1], 0.0)
    out = []
    for s in (1.0, -1.0):
        c = R @ np.array([math.sqrt(k1), s * math.sqrt(-k0)])
        v = c[0] * t1 + c[1] * t2
        nv = np.linalg.norm(v)
        if nv == 0:
            v, nv = t1, 1.0
        out.append(v / nv)
    return np.array(out)


def _asymptotic_opening(S: ImplicitSurface, p) -> float:
    """Angle between the two asymptotic directions (0 on the parabolic curve)."""
    II, _, _, _ = second_fundamental_form(S, p)
    k = np.linalg.eigvalsh(II)
    if k[0] * k[1] >= 0:
        return 0.0
    return 2.0 * math.atan(math.sqrt(-k[0] / k[1]))


@dataclass
class AsymptoticTrace:
    points: np.ndarray
    cause: str  # node | parabolic | box | budget
    node_index: int | None = None


def _project(S: ImplicitSurface, x: np.ndarray, iters: int = 5) -> np.ndarray:
    """Newton steps along the gradient back onto ``F = 0``."""
    for _ in range(iters):
        f = float(S(x))
        g = S.grad(x)
        gg = float(g @ g)
        if gg == 0.0:
            raise LostSurface("gradient vanished during projection")
        x = x - f * g / gg
        if abs(f) <= 1e-13 * S.local_scale(x):
            break
    if abs(float(S(x))) > 1e-9 * S.local_scale(x):
        raise LostSurface("projection onto the surface did not converge")
    return x


def trace_asymptotic_curve(
    S: ImplicitSurface,
    p,
    direction,
    step: float | None = None,
    max_steps: int = 20000,
    nodes=None,
    node_radius: float | None = None,
    box=None,
    parabolic_angle: float = 0.02,
) -> AsymptoticTrace:
    """Integrate the asymptotic direction field from ``p`` starting along ``direction``.

    Classical RK4 with the direction chosen at every stage as the asymptotic
    direction closest to the previous tangent, followed by a Newton
    projection back onto ``F = 0``.  Stops near a node, where the two
    asymptotic directions merge (parabolic curve), on leaving the box, or when
    the step budget is used up.
    """
    x = np.asarray(p, float)
    _on_surface_check(S, x)
    lo, hi = (S.box if box is None else (np.asarray(box[0], float), np.asarray(box[1], float)))
    diag = float(np.linalg.norm(hi - lo))
    h = 1e-3 * diag if step is None else float(step)
    h_max, h_min = max(h, 1e-2 * diag), 1e-7 * diag
    node_pts = np.zeros((0, 3)) if nodes is None else np.asarray(getattr(nodes, "points", nodes), float).reshape(-1, 3)
    node_radius = 0.02 * diag if node_radius is None else node_radius

    dirs = asymptotic_directions(S, x)
    d0 = np.asarray(direction, float)
    prev = dirs[int(np.argmax(np.abs(dirs @ d0)))]
    prev = prev * np.sign(prev @ d0)

    def field_at(y, ref):
        ds = asymptotic_directions(S, y)
        k = int(np.argmax(np.abs(ds @ ref)))
        v = ds[k]
        return v if v @ ref >= 0 else -v

    pts = [x.copy()]
    for _ in range(max_steps):
        if len(node_pts):
            dist = np.linalg.norm(node_pts - x, axis=1)
            k = int(np.argmin(dist))
            if dist[k] < node_radius:
                return AsymptoticTrace(np.array(pts), "node", k)
        try:
            if _asymptotic_opening(S, x) < parabolic_angle:
                return AsymptoticTrace(np.array(pts), "parabolic")
        except SingularPoint:
            return AsymptoticTrace(np.array(pts), "node", None)
        while True:
            try:
                k1 = field_at(x, prev)
                k2 = field_at(_project(S, x + 0.5 * h * k1), k1)
                y2 = _project(S, x + 0.5 * h * k2)
                k3 = field_at(y2, k2)
                y3 = _project(S, x + h * k3)
                k4 = field_at(y3, k3)
                turn = math.acos(min(1.0, abs(float(k1 @ k4))))
                xn = _project(S, x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
            except (EllipticPoint, LostSurface, SingularPoint):
                # stage left the hyperbolic region or the surface: shrink
                h *= 0.5
                if h < h_min:
                    if len(pts) == 1:
                        raise LostSurface("could not take a single step from the start point")
                    return AsymptoticTrace(np.array(pts), "parabolic")
                continue
            if turn > 0.05 and h > h_min:
                h *= 0.5
                continue
            break
        prev = k4 if k4 @ k1 >= 0 else -k4
        x = xn
        pts.append(x.copy())
        if turn < 0.005:
            h = min(h * 1.5, h_max)
        if np.any(x < lo) or np.any(x > hi):
            return AsymptoticTrace(np.array(pts), "box")
    return AsymptoticTrace(np.array(pts), "budget")


# ---------------------------------------------------------------- quadric rulings


def quadric_generators(A, family: int, n: int) -> list[pc.Line6]:
    """``n`` equispaced rulings of one family on a quadric of signature (2, 2).

    In an eigenbasis scaled to ``u1² + u2² - u3² - u4² = 0`` the rulings are
    ``(u1, u2) = R (u3, u4)`` with ``R`` a rotation (family 1) or a reflection
    (family 2).
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (4, 4) or not np.allclose(A, A.T):
        raise InputError("quadric must be a symmetric 4x4 matrix")
    if family not in (1, 2):
        raise InputError("family must be 1 or 2")
    w, V = np.linalg.eigh(A)
    tol = 1e-12 * np.abs(w).max()
    if int(np.sum(w > tol)) != 2 or int(np.sum(w < -tol)) != 2:
        raise WrongSignature(f"eigenvalues {w} do not have signature (2, 2)")
    pos = [i for i in range(4) if w[i] > 0]
    neg = [i for i in range(4) if w[i] < 0]
    T = np.column_stack([V[:, i] / math.sqrt(abs(w[i])) for i in pos + neg])
    lines = []
    for k in range(n):
        phi = 2 * math.pi * k / n
        c, s = math.cos(phi), math.sin(phi)
        Rm = np.array([[c, -s], [s, c]]) if family == 1 else np.array([[c, s], [s, -c]])
        u1 = np.concatenate([Rm @ [1.0, 0.0], [1.0, 0.0]])
        u2 = np.concatenate([Rm @ [0.0, 1.0], [0.0, 1.0]])
        lines.append(pc.plucker_from_points(T @ u1, T @ u2))
    return lines
