"""Latitudinal classification of equatorial complex surfaces.

The surface ``y² beta(x) + z² alpha(x) + alpha(x) beta(x) = 0`` with

    alpha(x) = E x² + 2 U x + C,    beta(x) = F x² - 2 R x + B

is cut by the plane ``x = x0`` in the conic ``y²/alpha + z²/beta + 1 = 0``.
Its type changes only at real roots of ``alpha`` and ``beta``; the sequence of
types along the x-axis, decorated with which curve bounds each stretch, is the
symbol computed here.

Symbol grammar
--------------
A symbol is a space-separated list of tokens read along increasing ``x``::

    symbol   := segment (sep? segment)*
    segment  := ("E" | "H" | "I") subscript?
    sep      := "|"        double root of one curve
              | "×"        common root of both curves

The subscript is 1 when both events bounding the segment come from the same
curve and 2 otherwise.  The two unbounded stretches are one segment closed up
through infinity, so they carry the same subscript.  Of the two reading
directions the lexicographically smaller is rendered.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFamily

MERGE_TOL = 1e-9
_EPS = float(np.finfo(float).eps)
_SUB = str.maketrans("12", "₁₂")


def _check(E, U, C, F, R, B):
    vals = tuple(float(v) for v in (E, U, C, F, R, B))
    if not all(math.isfinite(v) for v in vals):
        raise DegenerateFamily("coefficients must be finite")
    if vals[0] == vals[1] == vals[2] == 0:
        raise DegenerateFamily("alpha vanishes identically")
    if vals[3] == vals[4] == vals[5] == 0:
        raise DegenerateFamily("beta vanishes identically")
    return vals


def quad_roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of ``a x² + b x + c`` (numerically stable form), with repetition for double roots."""
    if a == 0:
        return [] if b == 0 else [-c / b]
    disc = b * b - 4 * a * c
    # a double root is only determined to about sqrt(eps); below this the
    # discriminant is rounding noise
    scale = max(b * b, abs(4 * a * c), 1e-300)
    if disc < -16 * _EPS * scale:
        return []
    if disc <= 16 * _EPS * scale:
        r = -b / (2 * a)
        return [r, r]
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    r1 = q / a
    r2 = c / q if q != 0 else -b / a - r1
    return sorted([r1, r2])


def _alpha(E, U, C):
    return lambda x: E * x * x + 2 * U * x + C


def _beta(F, R, B):
    return lambda x: F * x * x - 2 * R * x + B


def _conic_type(lead: float, lin: float, n_roots: int) -> str:
    """Type of ``w² + lead x² + 2 lin x + c = 0`` in the ``(x, w)`` plane."""
    if lead > 0:
        return "ellipse" if n_roots else "imaginary"
    if lead < 0:
        return "hyperbola"
    return "parabola" if lin != 0 else "degenerate"


@dataclass(frozen=True)
class CurveInfo:
    coeffs: tuple
    kind: str
    roots: tuple  # distinct real roots
    multiplicities: tuple


@dataclass(frozen=True)
class CharacteristicCurves:
    alpha: CurveInfo
    beta: CurveInfo
    word: str  # origins of the real roots in increasing order, e.g. "abba"

    def invariant(self) -> tuple:
        return canonical_invariant(self)


def _curve(lead, lin2, const, lin_sign) -> CurveInfo:
    # value is lead x² + lin_sign*2*lin2 x + const
    roots = quad_roots(lead, lin_sign * 2 * lin2, const)
    if len(roots) == 2 and roots[0] == roots[1]:
        distinct, mult = (roots[0],), (2,)
    elif len(roots) == 2 and abs(roots[1] - roots[0]) <= MERGE_TOL * (1 + abs(roots[0])):
        m = 0.5 * (roots[0] + roots[1])
        distinct, mult = (m,), (2,)
    else:
        distinct, mult = tuple(roots), (1,) * len(roots)
    kind = _conic_type(lead, lin2, len(roots))
    return CurveInfo((lead, lin2, const), kind, distinct, mult)


def characteristic_curves(E, U, C, F, R, B) -> CharacteristicCurves:
    E, U, C, F, R, B = _check(E, U, C, F, R, B)
    a = _curve(E, U, C, 1.0)
    b = _curve(F, R, B, -1.0)
    ev = sorted([(x, "a") for x, m in zip(a.roots, a.multiplicities) for _ in range(m)]
                + [(x, "b") for x, m in zip(b.roots, b.multiplicities) for _ in range(m)])
    return CharacteristicCurves(a, b, "".join(o for _, o in ev))


def canonical_invariant(cc: CharacteristicCurves) -> tuple:
    """Reality pattern plus interleaving word, reduced modulo x-reflection and swapping the curves."""
    def n(ci):
        return sum(ci.multiplicities)

    variants = []
    for swap in (False, True):
        ca, cb = (cc.beta, cc.alpha) if swap else (cc.alpha, cc.beta)
        w = cc.word.translate(str.maketrans("ab", "ba")) if swap else cc.word
        for rev in (False, True):
            variants.append((ca.kind, n(ca), cb.kind, n(cb), w[::-1] if rev else w))
    return min(variants)


@dataclass(frozen=True)
class Event:
    x: float
    origin: str  # "alpha" | "beta" | "shared"
    multiplicity: int

    @property
    def mark(self) -> str | None:
        if self.origin == "shared":
            return "×"
        if self.multiplicity == 2:
            return "|"
        return None

    def curves(self) -> frozenset:
        return frozenset({"alpha", "beta"}) if self.origin == "shared" else frozenset({self.origin})


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    type: str  # E | H | I
    bounds: tuple  # indices of the bounding events (cyclic for the unbounded segment)
    subscript: int | None

    @property
    def token(self) -> str:
        return self.type + ("" if self.subscript is None else str(self.subscript))


def _section_type(a: float, b: float) -> str:
    if a < 0 and b < 0:
        return "E"
    if a > 0 and b > 0:
        return "I"
    return "H"


@dataclass
class LatitudinalClassification:
    params: tuple
    events: list
    intervals: list
    tokens: list  # along increasing x
    symbol: str
    compact: str
    invariant: tuple
    flags: list = field(default_factory=list)
    unmerged_symbol: str | None = None

    def skeleton(self) -> list[tuple[str, str]]:
        return parse_symbol(self.symbol)

    def to_json(self) -> dict:
        return {
            "params": list(self.params),
            "events": [{"x": e.x, "origin": e.origin, "multiplicity": e.multiplicity} for e in self.events],
            "intervals": [{"range": [i.lo, i.hi], "type": i.type, "bounds": list(i.bounds),
                           "subscript": i.subscript} for i in self.intervals],
            "symbol": self.symbol,
            "compact": self.compact,
            "invariant": list(self.invariant),
            "flags": list(self.flags),
            "unmerged_symbol": self.unmerged_symbol,
        }


def _events(cc: CharacteristicCurves, tol: float) -> tuple[list[Event], bool]:
    raw = [(x, "alpha", m) for x, m in zip(cc.alpha.roots, cc.alpha.multiplicities)]
    raw += [(x, "beta", m) for x, m in zip(cc.beta.roots, cc.beta.multiplicities)]
    raw.sort()
    out: list[Event] = []
    merged_inexact = False
    for x, o, m in raw:
        if out and abs(x - out[-1].x) <= tol * (1 + abs(x)) and out[-1].origin != o:
            merged_inexact |= x != out[-1].x
            prev = out.pop()
            out.append(Event(0.5 * (x + prev.x), "shared", max(m, prev.multiplicity)))
        else:
            out.append(Event(x, o, m))
    return out, merged_inexact


def _render(tokens: list[str]) -> str:
    fwd = " ".join(tokens)
    rev = " ".join(tokens[::-1])
    return min(fwd, rev)


def _compact(symbol: str) -> str:
    return symbol.replace(" ", "").translate(_SUB)


def classify(E, U, C, F, R, B, merge_tol: float = MERGE_TOL) -> LatitudinalClassification:
    E, U, C, F, R, B = _check(E, U, C, F, R, B)
    cc = characteristic_curves(E, U, C, F, R, B)
    al, be = _alpha(E, U, C), _beta(F, R, B)
    events, inexact = _events(cc, merge_tol)
    flags = []
    if E == 0 or F == 0:
        flags.append("parabolic-family")
    xs = [e.x for e in events]
    n = len(events)
    span = (max(xs) - min(xs)) if xs else 1.0
    pad = max(1.0, span)
    cuts = [-math.inf] + xs + [math.inf]
    intervals = []
    for k in range(n + 1):
        lo, hi = cuts[k], cuts[k + 1]
        if math.isinf(lo) and math.isinf(hi):
            mid = 0.0
        elif math.isinf(lo):
            mid = hi - pad
        elif math.isinf(hi):
            mid = lo + pad
        else:
            mid = 0.5 * (lo + hi)
        intervals.append([lo, hi, _section_type(al(mid), be(mid)), (k - 1, k)])

    # close the unbounded ends through infinity when they carry the same type
    cyclic = n > 0 and intervals[0][2] == intervals[-1][2]
    if n > 0 and not cyclic:
        flags.append("open-at-infinity")

    def subscript(bounds):
        i, j = bounds
        if i < 0 or j >= n:
            return 2
        same = events[i].curves() & events[j].curves()
        return 1 if same else 2

    out = []
    for k, (lo, hi, t, (i, j)) in enumerate(intervals):
        if n == 0:
            out.append(Interval(lo, hi, t, (), None))
            continue
        if cyclic and (k == 0 or k == n):
            bounds = (n - 1, 0)
        else:
            bounds = (i, j)
        out.append(Interval(lo, hi, t, bounds, subscript(bounds)))

    tokens = []
    for k, iv in enumerate(out):
        tokens.append(iv.token)
        if k < n and events[k].mark:
            tokens.append(events[k].mark)
    symbol = _render(tokens)
    cls = LatitudinalClassification((E, U, C, F, R, B), events, out, tokens, symbol, _compact(symbol),
                                    canonical_invariant(cc), flags)
    if inexact:
        cls.unmerged_symbol = classify(E, U, C, F, R, B, merge_tol=0.0).symbol
    return cls


_TOKEN = re.compile(r"^([EHI])([12])?$")


def parse_symbol(symbol: str) -> list[tuple[str, str]]:
    """Skeleton ``[("seg", "E1"), ("sep", "|"), ...]`` of a spaced or compact symbol."""
    s = symbol.translate(str.maketrans("₁₂", "12"))
    if " " not in s:
        s = " ".join(re.findall(r"[EHI][12]?|[|×]", s))
    out = []
    for tok in s.split():
        if tok in ("|", "×"):
            out.append(("sep", tok))
            continue
        if not _TOKEN.match(tok):
            raise ValueError(f"bad symbol token {tok!r}")
        out.append(("seg", tok))
    return out


@dataclass(frozen=True)
class LatitudinalConic:
    x0: float
    type: str  # E | H | I | degenerate
    alpha: float
    beta: float
    semi_axes: tuple | None = None  # (along y, along z) for ellipses
    asymptote_slopes: tuple | None = None  # dz/dy for hyperbolas
    event: Event | None = None

    @property
    def center(self) -> tuple:
        return (self.x0, 0.0, 0.0)


def latitudinal_conic(E, U, C, F, R, B, x0: float) -> LatitudinalConic:
    E, U, C, F, R, B = _check(E, U, C, F, R, B)
    a, b = _alpha(E, U, C)(x0), _beta(F, R, B)(x0)
    sc = max(1.0, abs(E) * x0 * x0, abs(F) * x0 * x0, abs(C), abs(B))
    if abs(a) <= 1e-12 * sc or abs(b) <= 1e-12 * sc:
        origin = "shared" if abs(a) <= 1e-12 * sc and abs(b) <= 1e-12 * sc else ("alpha" if abs(a) <= 1e-12 * sc else "beta")
        return LatitudinalConic(x0, "degenerate", a, b, event=Event(x0, origin, 1))
    t = _section_type(a, b)
    if t == "E":
        return LatitudinalConic(x0, t, a, b, semi_axes=(math.sqrt(-a), math.sqrt(-b)))
    if t == "H":
        s = math.sqrt(-b / a) if a * b < 0 else float("nan")
        return LatitudinalConic(x0, t, a, b, asymptote_slopes=(s, -s))
    return LatitudinalConic(x0, t, a, b)


@dataclass
class SpecialSections:
    circles: list
    rectangular_hyperbolas: list
    flags: list = field(default_factory=list)


def special_sections(E, U, C, F, R, B) -> SpecialSections:
    """Abscissae of circular and of rectangular-hyperbolic latitudinal sections."""
    E, U, C, F, R, B = _check(E, U, C, F, R, B)
    al, be = _alpha(E, U, C), _beta(F, R, B)
    flags = []
    d = (E - F, 2 * U + 2 * R, C - B)
    if all(v == 0 for v in d):
        flags.append("surface-of-revolution")
        circles = []
    else:
        circles = sorted({x + 0.0 for x in quad_roots(*d) if al(x) < 0})
    s = (E + F, 2 * U - 2 * R, C + B)
    rect = [] if all(v == 0 for v in s) else sorted({x + 0.0 for x in quad_roots(*s) if al(x) * be(x) < 0})
    return SpecialSections(circles, rect, flags)


@dataclass(frozen=True)
class SingularLine:
    x: float
    origin: str
    direction: str  # "z" (line {x=x0, y=0}) or "y" (line {x=x0, z=0})
    point: tuple
    vector: tuple

    @property
    def plane(self) -> tuple:
        return (1.0, 0.0, 0.0, -self.x)


def singular_line_geometry(E, U, C, F, R, B) -> list[SingularLine]:
    E, U, C, F, R, B = _check(E, U, C, F, R, B)
    cc = characteristic_curves(E, U, C, F, R, B)
    out = []
    for x in cc.alpha.roots:
        out.append(SingularLine(x, "alpha", "z", (x, 0.0, 0.0), (0.0, 0.0, 1.0)))
    for x in cc.beta.roots:
        out.append(SingularLine(x, "beta", "y", (x, 0.0, 0.0), (0.0, 1.0, 0.0)))
    return sorted(out, key=lambda s: (s.x, s.direction))
