"""Projective 3-space: homogeneous points/planes, Pluecker lines, linear complexes.

Conventions
-----------
Points are ``(x, y, z, w)`` with ``w`` the homogenizing coordinate, so points at
infinity have ``w = 0``.  A plane ``(a, b, c, d)`` is ``ax + by + cz + dw = 0``.

A line through points ``P`` and ``Q`` has Pluecker coordinates
``p_ij = P_i Q_j - P_j Q_i`` stored in the order ``(p01, p02, p03, p23, p31, p12)``.
With that order the Pluecker relation reads ``p01 p23 + p02 p31 + p03 p12 = 0``
and the polarized form pairs coordinate ``k`` with ``k + 3``.  For affine points
the direction ``Q - P`` is ``(-p03, p31, -p23)`` and the moment ``P x Q`` is
``(p12, -p02, p01)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as _tol
from .errors import (
    CoincidentPoints,
    DegenerateQuadruple,
    DependentComplexes,
    InputError,
    NotALine,
    NotCollinear,
    NotSkew,
    PointOnDirectrix,
    SingularPoint,
)

PAIRS = ((0, 1), (0, 2), (0, 3), (2, 3), (3, 1), (1, 2))
_SWAP = np.array([3, 4, 5, 0, 1, 2])

#: Matrix of the polarized Pluecker form: ``L1 @ OMEGA_HAT @ L2 == pairing(L1, L2)``.
OMEGA_HAT = np.zeros((6, 6))
OMEGA_HAT[np.arange(6), _SWAP] = 1.0


def _levi_civita4() -> np.ndarray:
    eps = np.zeros((4, 4, 4, 4))
    for perm in itertools.permutations(range(4)):
        inv = sum(1 for a, b in itertools.combinations(perm, 2) if a > b)
        eps[perm] = -1.0 if inv % 2 else 1.0
    return eps


_EPS4 = _levi_civita4()


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def supnormalize(v: np.ndarray) -> np.ndarray:
    """Divide by the largest-magnitude entry (that entry becomes +1)."""
    v = np.asarray(v, dtype=float)
    k = int(np.argmax(np.abs(v)))
    return v / v[k]


class HomCoord4:
    """Homogeneous point or plane of projective 3-space."""

    __slots__ = ("c", "kind")

    def __init__(self, coords, kind: str = "point"):
        c = np.asarray(coords, dtype=float).reshape(-1)
        if c.shape != (4,):
            raise InputError(f"expected 4 homogeneous coordinates, got {c.shape}")
        if not np.all(np.isfinite(c)) or not np.any(c):
            raise InputError(f"invalid homogeneous coordinates {c}")
        if kind not in ("point", "plane"):
            raise InputError(f"kind must be 'point' or 'plane', not {kind!r}")
        self.c = _frozen(c)
        self.kind = kind

    @classmethod
    def point(cls, x, y, z, w=1.0) -> "HomCoord4":
        return cls((x, y, z, w), "point")

    @classmethod
    def plane(cls, a, b, c, d) -> "HomCoord4":
        return cls((a, b, c, d), "plane")

    @classmethod
    def from_affine(cls, p) -> "HomCoord4":
        p = np.asarray(p, dtype=float)
        return cls(np.append(p, 1.0), "point")

    @classmethod
    def plane_from_normal(cls, normal, through) -> "HomCoord4":
        n = np.asarray(normal, dtype=float)
        return cls(np.append(n, -float(np.dot(n, through))), "plane")

    def normalized(self) -> "HomCoord4":
        return HomCoord4(supnormalize(self.c), self.kind)

    @property
    def at_infinity(self) -> bool:
        u = self.c / np.max(np.abs(self.c))
        return abs(u[3]) <= _tol.get().incidence

    def affine(self) -> np.ndarray:
        if self.kind != "point" or self.at_infinity:
            raise InputError("no affine representative")
        return self.c[:3] / self.c[3]

    def __array__(self, dtype=None, copy=None):
        return np.array(self.c, dtype=dtype)

    def __repr__(self):
        return f"HomCoord4({', '.join(f'{v:.6g}' for v in self.c)}, kind={self.kind!r})"


def _as_vec4(P) -> np.ndarray:
    if isinstance(P, HomCoord4):
        return np.array(P.c)
    v = np.asarray(P, dtype=float).reshape(-1)
    if v.shape == (3,):
        v = np.append(v, 1.0)
    return v


def same_point(P, Q, tol: float | None = None) -> bool:
    """Projective equality of two homogeneous 4-vectors."""
    tol = _tol.get().incidence if tol is None else tol
    a = _as_vec4(P)
    b = _as_vec4(Q)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return np.linalg.norm(np.outer(a, b) - np.outer(b, a)) <= tol * math.sqrt(2)


class Line6:
    """A line in Pluecker coordinates ``(p01, p02, p03, p23, p31, p12)``."""

    __slots__ = ("p",)

    def __init__(self, coords, check: bool = True):
        p = np.asarray(coords, dtype=float).reshape(-1)
        if p.shape != (6,):
            raise InputError(f"expected 6 Pluecker coordinates, got {p.shape}")
        if not np.all(np.isfinite(p)) or not np.any(p):
            raise NotALine(f"invalid Pluecker coordinates {p}")
        if check:
            u = supnormalize(p)
            if abs(relation(u)) > 10 * _tol.get().incidence:
                raise NotALine(f"Pluecker relation violated: {relation(u):.3e}")
        self.p = _frozen(p)

    @classmethod
    def from_points(cls, P, Q) -> "Line6":
        return plucker_from_points(P, Q)

    @classmethod
    def from_point_direction(cls, point, direction) -> "Line6":
        x = np.asarray(point, dtype=float)
        d = np.asarray(direction, dtype=float)
        return cls.from_direction_moment(d, np.cross(x, d))

    @classmethod
    def from_direction_moment(cls, d, m) -> "Line6":
        d = np.asarray(d, dtype=float)
        m = np.asarray(m, dtype=float)
        return cls((m[2], -m[1], -d[0], -d[2], d[1], m[0]))

    def normalized(self) -> "Line6":
        return Line6(supnormalize(self.p), check=False)

    def direction(self) -> np.ndarray:
        p = self.p
        return np.array([-p[2], p[4], -p[3]])

    def moment(self) -> np.ndarray:
        p = self.p
        return np.array([p[5], -p[1], p[0]])

    @property
    def at_infinity(self) -> bool:
        u = supnormalize(self.p)
        return np.linalg.norm(self.direction_of(u)) <= _tol.get().incidence

    @staticmethod
    def direction_of(p) -> np.ndarray:
        return np.array([-p[2], p[4], -p[3]])

    def foot(self) -> np.ndarray:
        """Point of the line closest to the origin (affine lines only)."""
        d = self.direction()
        dd = float(d @ d)
        if dd == 0.0:
            raise InputError("line at infinity has no affine points")
        return np.cross(d, self.moment()) / dd

    def unit_direction(self) -> np.ndarray:
        d = self.direction()
        return d / np.linalg.norm(d)

    def primal(self) -> np.ndarray:
        """Antisymmetric 4x4 matrix ``P Q^T - Q P^T``; ``primal() @ plane`` is the meet point."""
        M = np.zeros((4, 4))
        for k, (i, j) in enumerate(PAIRS):
            M[i, j] = self.p[k]
            M[j, i] = -self.p[k]
        return M

    def dual(self) -> np.ndarray:
        """Dual 4x4 matrix; ``dual() @ point`` is the plane joining line and point."""
        return 0.5 * np.einsum("ijkl,kl->ij", _EPS4, self.primal())

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Two homogeneous points spanning the line (orthonormal 4-vectors)."""
        U, s, _ = np.linalg.svd(self.primal())
        return U[:, 0], U[:, 1]

    def planes(self) -> tuple[np.ndarray, np.ndarray]:
        U, s, _ = np.linalg.svd(self.dual())
        return U[:, 0], U[:, 1]

    def contains_point(self, P, tol: float | None = None) -> bool:
        tol = _tol.get().incidence if tol is None else tol
        x = _as_vec4(P)
        x = x / np.max(np.abs(x))
        D = self.dual() / np.max(np.abs(self.p))
        return float(np.max(np.abs(D @ x))) <= tol

    def join_point(self, P) -> HomCoord4:
        plane = self.dual() @ _as_vec4(P)
        if np.max(np.abs(plane)) <= _tol.get().incidence * np.max(np.abs(self.p)) * np.max(np.abs(_as_vec4(P))):
            raise InputError("point lies on the line")
        return HomCoord4(plane, "plane")

    def meet_plane(self, plane) -> HomCoord4:
        pt = self.primal() @ _as_vec4(plane)
        if np.max(np.abs(pt)) <= _tol.get().incidence * np.max(np.abs(self.p)) * np.max(np.abs(_as_vec4(plane))):
            raise InputError("line lies in the plane")
        return HomCoord4(pt, "point")

    def __array__(self, dtype=None, copy=None):
        return np.array(self.p, dtype=dtype)

    def __repr__(self):
        return f"Line6({', '.join(f'{v:.6g}' for v in self.p)})"


def relation(p) -> float:
    """Pluecker quadratic form ``p01 p23 + p02 p31 + p03 p12``."""
    p = np.asarray(p, dtype=float)
    return float(p[0] * p[3] + p[1] * p[4] + p[2] * p[5])


def _vec6(L) -> np.ndarray:
    if isinstance(L, (Line6, LinearComplex)):
        return L.p
    return np.asarray(L, dtype=float)


def pairing(a, b) -> float:
    """Polarized Pluecker form of two 6-vectors; symmetric to the last bit."""
    a = _vec6(a)
    b = _vec6(b)
    return float((a[0] * b[3] + a[3] * b[0]) + (a[1] * b[4] + a[4] * b[1]) + (a[2] * b[5] + a[5] * b[2]))


def plucker_pairing(L1: Line6, L2: Line6) -> float:
    """Return the polarized form of two lines.

    Zero (after sup-normalization) exactly when the lines meet or coincide.
    ``plucker_pairing(L, L) == 2 * relation(L)``.
    """
    return pairing(L1, L2)


def lines_meet(L1: Line6, L2: Line6, tol: float | None = None) -> bool:
    tol = _tol.get().incidence if tol is None else tol
    return abs(pairing(supnormalize(_vec6(L1)), supnormalize(_vec6(L2)))) <= tol


def plucker_from_points(P, Q) -> Line6:
    """Line joining two projectively distinct points.

    Raises
    ------
    CoincidentPoints
        If ``P`` and ``Q`` represent the same projective point.
    """
    a = _as_vec4(P)
    b = _as_vec4(Q)
    if same_point(a, b):
        raise CoincidentPoints(f"{a} and {b} coincide")
    p = np.array([a[i] * b[j] - a[j] * b[i] for i, j in PAIRS])
    return Line6(p, check=False)


def wedge(P, Q) -> np.ndarray:
    """Raw Pluecker 6-vector of ``P ^ Q`` without validation (may be zero)."""
    a = _as_vec4(P)
    b = _as_vec4(Q)
    return np.array([a[i] * b[j] - a[j] * b[i] for i, j in PAIRS])


def _pencil_basis(P) -> tuple[int, np.ndarray]:
    """Index of the dropped coordinate and the 3 lines ``P ^ e_i`` (i != j) as rows.

    ``j`` is the index of the max-magnitude coordinate; ties prefer 3, 2, 1, 0.
    """
    x = _as_vec4(P)
    ax = np.abs(x)
    m = ax.max()
    j = max(i for i in range(4) if ax[i] >= m * (1 - 1e-14))
    rows = [wedge(x, np.eye(4)[i]) for i in range(4) if i != j]
    return j, np.array(rows)


def point_plane_incident(P, plane, tol: float | None = None) -> bool:
    tol = _tol.get().incidence if tol is None else tol
    x = supnormalize(_as_vec4(P))
    h = supnormalize(_as_vec4(plane))
    return abs(float(x @ h)) <= tol


def plane_through_points(A, B, C) -> HomCoord4:
    M = np.array([_as_vec4(A), _as_vec4(B), _as_vec4(C)])
    M = M / np.abs(M).max(axis=1, keepdims=True)
    _, s, Vt = np.linalg.svd(M)
    if s[2] <= _tol.get().rank * s[0]:
        raise InputError("points do not span a plane")
    return HomCoord4(Vt[-1], "plane")


def line_from_planes(pi1, pi2) -> Line6:
    M = np.array([_as_vec4(pi1), _as_vec4(pi2)])
    M = M / np.abs(M).max(axis=1, keepdims=True)
    _, s, Vt = np.linalg.svd(M)
    if s[1] <= _tol.get().rank * s[0]:
        raise InputError("planes coincide")
    return plucker_from_points(Vt[2], Vt[3])


def _line_coordinates(points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Express collinear homogeneous points as binary coordinates ``(a_k, b_k)``."""
    X = np.array([p / np.linalg.norm(p) for p in points])
    _, s, Vt = np.linalg.svd(X)
    if len(s) > 2 and s[2] > tol * s[0]:
        raise NotCollinear(f"points are not collinear (sigma3/sigma1 = {s[2] / s[0]:.3e})")
    return X @ Vt[0], X @ Vt[1]


def cross_ratio(A, B, C, D, tol: float | None = None) -> float:
    """Cross ratio of four collinear points.

    The convention is fixed by parameters ``(0, inf; 1, lam) -> lam``, i.e. in
    terms of brackets ``[XY] = a_X b_Y - a_Y b_X`` on the carrier line it is
    ``[AD][BC] / ([AC][BD])``.  Returns ``math.inf`` when the denominator vanishes.

    Raises
    ------
    NotCollinear
    DegenerateQuadruple
        If fewer than three of the points are distinct.
    """
    tol = _tol.get().incidence if tol is None else tol
    pts = np.array([_as_vec4(X) for X in (A, B, C, D)])
    a, b = _line_coordinates(pts, max(tol, 1e-12))

    def br(i, j):
        return a[i] * b[j] - a[j] * b[i]

    distinct = []
    for k in range(4):
        if all(abs(br(k, m)) > tol for m in distinct):
            distinct.append(k)
    if len(distinct) < 3:
        raise DegenerateQuadruple("fewer than three distinct points")
    num = br(0, 3) * br(1, 2)
    den = br(0, 2) * br(1, 3)
    # points are unit 4-vectors, so brackets are O(1)
    if abs(den) <= 1e-15:
        return math.inf
    return float(num / den)


def cross_ratio_of_params(t) -> float:
    """Cross ratio of four affine parameters on a line (``math.inf`` allowed)."""
    pts = []
    for v in t:
        pts.append((1.0, 0.0) if math.isinf(v) else (v, 1.0))
    a = np.array([p[0] for p in pts])
    b = np.array([p[1] for p in pts])

    def br(i, j):
        return a[i] * b[j] - a[j] * b[i]

    den = br(0, 2) * br(1, 3)
    return math.inf if den == 0 else float(br(0, 3) * br(1, 2) / den)


def transversal_through_point(g1: Line6, g2: Line6, P) -> Line6:
    """The unique line through ``P`` meeting the skew lines ``g1`` and ``g2``.

    It is the meet of the planes ``span(P, g1)`` and ``span(P, g2)``.
    """
    if lines_meet(g1, g2):
        raise NotSkew("g1 and g2 intersect")
    x = _as_vec4(P)
    if g1.contains_point(x) or g2.contains_point(x):
        raise PointOnDirectrix("P lies on a directrix")
    pi1 = g1.dual() @ x
    pi2 = g2.dual() @ x
    M = np.array([pi1 / np.abs(pi1).max(), pi2 / np.abs(pi2).max()])
    _, s, Vt = np.linalg.svd(M)
    # the kernel contains P; complete it by the kernel vector most orthogonal to P
    K = Vt[2:]
    xn = x / np.linalg.norm(x)
    other = K[0] - (K[0] @ xn) * xn
    alt = K[1] - (K[1] @ xn) * xn
    if np.linalg.norm(alt) > np.linalg.norm(other):
        other = alt
    return plucker_from_points(x, other)


@dataclass(frozen=True)
class LinearComplex:
    """Linear line complex ``{L : pairing(A, L) = 0}``.

    A complex with ``relation(A) == 0`` is special: its lines are those meeting
    the axis line ``A``.
    """

    coeffs: tuple

    def __post_init__(self):
        a = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if a.shape != (6,) or not np.any(a) or not np.all(np.isfinite(a)):
            raise InputError(f"invalid linear complex coefficients {self.coeffs}")
        object.__setattr__(self, "coeffs", tuple(float(v) for v in a))

    @property
    def p(self) -> np.ndarray:
        return np.array(self.coeffs)

    @classmethod
    def meeting(cls, g: Line6) -> "LinearComplex":
        return cls(tuple(g.p))

    @classmethod
    def from_direction_moment(cls, c, e) -> "LinearComplex":
        """Complex ``c . d + e . m = 0`` in terms of line direction ``d`` and moment ``m``."""
        c = np.asarray(c, dtype=float)
        e = np.asarray(e, dtype=float)
        # pairing(A, L) = a01 p23 + a23 p01 + a02 p31 + a31 p02 + a03 p12 + a12 p03
        return cls((-c[2], c[1], e[0], e[2], -e[1], -c[0]))

    @property
    def is_special(self) -> bool:
        return abs(relation(supnormalize(self.p))) <= _tol.get().incidence

    def contains(self, L: Line6, tol: float | None = None) -> bool:
        tol = _tol.get().incidence if tol is None else tol
        return abs(pairing(supnormalize(self.p), supnormalize(L.p))) <= tol


@dataclass(frozen=True)
class LinearCongruence:
    A: LinearComplex
    B: LinearComplex
    kind: str  # hyperbolic | parabolic | elliptic
    directrices: tuple = field(default=())
    discriminant: float = 0.0

    def contains(self, L: Line6, tol: float | None = None) -> bool:
        return self.A.contains(L, tol) and self.B.contains(L, tol)


def classify_linear_congruence(A: LinearComplex, B: LinearComplex) -> LinearCongruence:
    """Classify the congruence ``A ∩ B`` by the binary form ``(l, m) -> Ω(lA + mB)``.

    Two real isotropic directions give a hyperbolic congruence whose directrices
    are the corresponding special complexes; a double one gives a parabolic
    congruence (directrix not recovered); none gives an elliptic congruence.
    """
    a = A.p / np.linalg.norm(A.p)
    b = B.p / np.linalg.norm(B.p)
    s = np.linalg.svd(np.array([a, b]), compute_uv=False)
    if s[1] <= _tol.get().rank * s[0]:
        raise DependentComplexes("complexes are linearly dependent")
    G = np.array([[relation(a), 0.5 * pairing(a, b)], [0.5 * pairing(a, b), relation(b)]])
    det = float(np.linalg.det(G))
    # Gram-determinant normalization makes the threshold independent of how
    # close A and B are to each other.
    gram = float(s[0] * s[1]) ** 2
    tol = _tol.get().incidence * gram
    if det < -tol:
        w, V = np.linalg.eigh(G)
        lo, hi = w[0], w[1]
        dirs = []
        for sign in (1.0, -1.0):
            coef = math.sqrt(hi) * V[:, 0] + sign * math.sqrt(-lo) * V[:, 1]
            dirs.append(Line6(coef[0] * a + coef[1] * b, check=False))
        return LinearCongruence(A, B, "hyperbolic", tuple(dirs), det)
    if det > tol:
        return LinearCongruence(A, B, "elliptic", (), det)
    return LinearCongruence(A, B, "parabolic", (), det)


def congruence_line_through_point(cong: LinearCongruence, P) -> Line6:
    """The line of ``cong`` through the point ``P``.

    Lines through ``P`` form the 3-dimensional span of ``P ^ e_i``; the two
    complex equations cut out one projective solution unless ``P`` is singular
    for the congruence.
    """
    x = _as_vec4(P)
    x = x / np.max(np.abs(x))
    _, basis = _pencil_basis(x)
    a = cong.A.p / np.linalg.norm(cong.A.p)
    b = cong.B.p / np.linalg.norm(cong.B.p)
    M = np.array([[pairing(a, Li) for Li in basis], [pairing(b, Li) for Li in basis]])
    _, s, Vt = np.linalg.svd(M)
    if s[0] == 0.0 or s[1] <= 1e-9 * s[0]:
        raise SingularPoint("point lies on the singular set of the congruence")
    return Line6(Vt[2] @ basis, check=False)
