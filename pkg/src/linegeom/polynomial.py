"""Dense trivariate polynomials backed by ``numpy.polynomial`` coefficient cubes."""
from __future__ import annotations

import functools

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.signal import convolve


class Poly3:
    """Polynomial in ``(x, y, z)``; ``coeffs[i, j, k]`` multiplies ``x**i y**j z**k``."""

    __slots__ = ("coeffs", "__dict__")

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=float)
        if c.ndim != 3:
            raise ValueError("coefficient array must be 3-dimensional")
        self.coeffs = _trim(c)
        self.coeffs.flags.writeable = False

    @classmethod
    def constant(cls, v: float) -> "Poly3":
        return cls(np.full((1, 1, 1), float(v)))

    @classmethod
    def variables(cls) -> tuple["Poly3", "Poly3", "Poly3"]:
        out = []
        for axis in range(3):
            shape = [1, 1, 1]
            shape[axis] = 2
            c = np.zeros(shape)
            c[tuple(1 if a == axis else 0 for a in range(3))] = 1.0
            out.append(cls(c))
        return tuple(out)

    @classmethod
    def from_terms(cls, terms) -> "Poly3":
        """Build from ``[((i, j, k), coeff), ...]``."""
        terms = list(terms)
        n = 1 + max((max(e) for e, _ in terms), default=0)
        c = np.zeros((n, n, n))
        for (i, j, k), v in terms:
            c[i, j, k] += v
        return cls(c)

    def terms(self) -> list[tuple[tuple[int, int, int], float]]:
        idx = np.argwhere(self.coeffs != 0)
        return [((int(i), int(j), int(k)), float(self.coeffs[i, j, k])) for i, j, k in idx]

    @property
    def degree(self) -> int:
        idx = np.argwhere(self.coeffs != 0)
        return int(idx.sum(axis=1).max()) if len(idx) else 0

    def _coerce(self, other) -> "Poly3":
        return other if isinstance(other, Poly3) else Poly3.constant(other)

    def __add__(self, other):
        other = self._coerce(other)
        n = [max(a, b) for a, b in zip(self.coeffs.shape, other.coeffs.shape)]
        c = np.zeros(n)
        c[tuple(slice(0, s) for s in self.coeffs.shape)] += self.coeffs
        c[tuple(slice(0, s) for s in other.coeffs.shape)] += other.coeffs
        return Poly3(c)

    __radd__ = __add__

    def __neg__(self):
        return Poly3(-self.coeffs)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly3):
            return Poly3(self.coeffs * float(other))
        return Poly3(convolve(self.coeffs, other.coeffs, method="direct"))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Poly3(self.coeffs / float(other))

    def __pow__(self, n: int):
        out = Poly3.constant(1.0)
        for _ in range(int(n)):
            out = out * self
        return out

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return npoly.polyval3d(pts[..., 0], pts[..., 1], pts[..., 2], self.coeffs)

    @functools.cached_property
    def _grad_coeffs(self):
        return [npoly.polyder(self.coeffs, axis=a) for a in range(3)]

    @functools.cached_property
    def _hess_coeffs(self):
        g = self._grad_coeffs
        return [[npoly.polyder(g[a], axis=b) for b in range(3)] for a in range(3)]

    def deriv(self, axis: int) -> "Poly3":
        return Poly3(self._grad_coeffs[axis])

    def grad(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        return np.stack([npoly.polyval3d(x, y, z, c) for c in self._grad_coeffs], axis=-1)

    def hess(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        rows = [np.stack([npoly.polyval3d(x, y, z, c) for c in row], axis=-1) for row in self._hess_coeffs]
        return np.stack(rows, axis=-2)

    def compose_affine(self, A, b) -> "Poly3":
        """Substitute ``(x, y, z) = A @ (u, v, w) + b`` (``A`` is 3x3)."""
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        u = Poly3.variables()
        lin = [A[i, 0] * u[0] + A[i, 1] * u[1] + A[i, 2] * u[2] + b[i] for i in range(3)]
        pw = [[Poly3.constant(1.0)] for _ in range(3)]
        for i in range(3):
            for _ in range(self.coeffs.shape[i] - 1):
                pw[i].append(pw[i][-1] * lin[i])
        out = Poly3.constant(0.0)
        for (i, j, k), v in self.terms():
            out = out + (pw[0][i] * pw[1][j] * pw[2][k]) * v
        return out

    def max_abs_coeff(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


def _trim(c: np.ndarray) -> np.ndarray:
    nz = np.argwhere(np.abs(c) > 0)
    if len(nz) == 0:
        return np.zeros((1, 1, 1))
    hi = nz.max(axis=0) + 1
    return np.ascontiguousarray(c[: hi[0], : hi[1], : hi[2]])


def monomial_exponents(degree: int, nvars: int = 3) -> list[tuple[int, ...]]:
    """All exponent tuples of total degree <= ``degree`` in graded order."""
    out = []
    for d in range(degree + 1):
        for e in _compositions(d, nvars):
            out.append(e)
    return out


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def design_matrix(pts: np.ndarray, exps) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    cols = [np.prod(pts ** np.array(e), axis=-1) for e in exps]
    return np.stack(cols, axis=-1)
