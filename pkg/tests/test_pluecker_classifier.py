import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linegeom import pluecker_classifier as pk
from linegeom import quartic_zoo as qz
from linegeom.errors import DegenerateFamily

NESTED = (1, 0, -4, 1, 0, -1)
INTERLACED = (1, 0.5, -2, 1, 0.5, -2)

coef = st.integers(-300, 300).map(lambda k: k / 100)
params = st.tuples(coef, coef, coef, coef, coef, coef).filter(
    lambda p: any(p[:3]) and any(p[3:]) and p[0] != 0 and p[3] != 0
)


def alpha(p, x):
    E, U, C = p[:3]
    return E * x * x + 2 * U * x + C


def beta(p, x):
    F, R, B = p[3:]
    return F * x * x - 2 * R * x + B


def translate(p, t):
    E, U, C, F, R, B = p
    return (E, U - E * t, E * t * t - 2 * U * t + C, F, R + F * t, F * t * t + 2 * R * t + B)


def reflect(p):
    E, U, C, F, R, B = p
    return (E, -U, C, F, -R, B)


def swap(p):
    E, U, C, F, R, B = p
    return (F, -R, B, E, -U, C)


def test_curves_nested():
    cc = pk.characteristic_curves(*NESTED)
    assert cc.alpha.kind == "ellipse" and cc.beta.kind == "ellipse"
    assert cc.alpha.roots == pytest.approx((-2, 2))
    assert cc.beta.roots == pytest.approx((-1, 1))
    assert cc.word == "abba"


def test_curves_alternating():
    cc = pk.characteristic_curves(*INTERLACED)
    assert cc.alpha.roots == pytest.approx((-2, 1))
    assert cc.beta.roots == pytest.approx((-1, 2))
    assert cc.word == "abab"


def test_curve_without_intercepts():
    cc = pk.characteristic_curves(-1, 0, -1, 1, 0, -1)
    assert cc.alpha.roots == ()
    assert cc.alpha.kind != "ellipse"
    assert cc.beta.kind == "ellipse"


def test_degenerate_family():
    with pytest.raises(DegenerateFamily):
        pk.classify(0, 0, 0, 1, 0, -1)
    with pytest.raises(DegenerateFamily):
        pk.characteristic_curves(1, 0, -1, 0, 0, 0)


@settings(max_examples=200, deadline=None)
@given(params)
def test_roots_back_substitute(p):
    cc = pk.characteristic_curves(*p)
    for ci, f in ((cc.alpha, alpha), (cc.beta, beta)):
        for x, m in zip(ci.roots, ci.multiplicities):
            sc = max(1.0, x * x) * max(map(abs, p))
            tol = 1e-10 if m == 1 else 1e-7
            assert abs(f(p, x)) <= tol * sc


def test_nested_symbol():
    c = pk.classify(*NESTED)
    assert c.symbol == "I1 H2 E1 H2 I1"
    assert c.compact == "I₁H₂E₁H₂I₁"


def test_interlaced_symbol():
    assert pk.classify(*INTERLACED).symbol == "I2 H2 E2 H2 I2"


def test_double_root_mark():
    c = pk.classify(1, 0, -4, 1, 0, 0)
    assert [(e.origin, e.multiplicity) for e in c.events] == [("alpha", 1), ("beta", 2), ("alpha", 1)]
    assert [e.x for e in c.events] == pytest.approx([-2, 0, 2])
    assert [i.type for i in c.intervals] == ["I", "H", "H", "I"]
    assert c.tokens == ["I1", "H2", "|", "H2", "I1"]


def test_shared_root_mark():
    c = pk.classify(1, 0, -4, 1, 0, -4)
    assert [e.origin for e in c.events] == ["shared", "shared"]
    assert "×" in c.symbol


def _midpoint_types(c):
    out = []
    for iv in c.intervals:
        lo, hi = iv.lo, iv.hi
        if math.isinf(lo) and math.isinf(hi):
            x = 0.0
        elif math.isinf(lo):
            x = hi - 10.0
        elif math.isinf(hi):
            x = lo + 10.0
        else:
            x = 0.5 * (lo + hi)
        out.append((x, iv.type))
    return out


@pytest.mark.parametrize("p", [NESTED, INTERLACED, (1, 0, -4, 1, 0, 0), (-1, 0.3, 2, 2, -1, -3)])
def test_interval_sign_oracle(p):
    c = pk.classify(*p)
    for x, t in _midpoint_types(c):
        a, b = alpha(p, x), beta(p, x)
        expect = "E" if a < 0 and b < 0 else "I" if a > 0 and b > 0 else "H"
        assert t == expect
        assert pk.latitudinal_conic(*p, x).type == t


@settings(max_examples=300, deadline=None)
@given(params)
def test_classification_properties(p):
    c = pk.classify(*p)
    for x, t in _midpoint_types(c):
        assert pk.latitudinal_conic(*p, x).type == t
    for k in range(len(c.events)):
        if c.events[k].multiplicity == 1 and c.events[k].origin != "shared":
            assert c.intervals[k].type != c.intervals[k + 1].type
    assert pk.parse_symbol(c.symbol) == pk.parse_symbol(c.compact)
    assert [t for _, t in pk.parse_symbol(c.symbol)] in (c.tokens, c.tokens[::-1])


@settings(max_examples=200, deadline=None)
@given(params, st.integers(-200, 200).map(lambda k: k / 100))
def test_translation_and_reflection(p, t):
    c = pk.classify(*p)
    if c.unmerged_symbol is not None:
        return
    assert pk.classify(*reflect(p)).symbol == c.symbol
    ct = pk.classify(*translate(p, t))
    if ct.unmerged_symbol is None and len(ct.events) == len(c.events):
        assert ct.symbol == c.symbol


@settings(max_examples=200, deadline=None)
@given(params)
def test_swap_symmetry(p):
    c = pk.classify(*p)
    s = pk.classify(*swap(p))
    assert s.symbol == c.symbol
    flip = {"alpha": "beta", "beta": "alpha", "shared": "shared"}
    assert [flip[e.origin] for e in c.events] == [e.origin for e in s.events]


def test_seventeen_cases():
    rng = np.random.default_rng(0)
    seen = {}
    for _ in range(10_000):
        p = rng.uniform(-3, 3, 6)
        c = pk.classify(*p)
        if c.flags or any(e.multiplicity > 1 or e.origin == "shared" for e in c.events):
            continue
        seen[c.invariant] = seen.get(c.invariant, 0) + 1
    print(f"distinct invariants: {len(seen)}")
    assert len(seen) <= 17


def test_latitudinal_conic_examples():
    c0 = pk.latitudinal_conic(*NESTED, 0.0)
    assert c0.type == "E" and c0.semi_axes == pytest.approx((2, 1))
    assert c0.center == (0.0, 0.0, 0.0)
    c1 = pk.latitudinal_conic(*NESTED, 1.5)
    assert c1.type == "H" and (c1.alpha, c1.beta) == pytest.approx((-1.75, 1.25))
    assert pk.latitudinal_conic(*NESTED, 3.0).type == "I"
    d = pk.latitudinal_conic(*NESTED, 2.0)
    assert d.type == "degenerate" and d.event.origin == "alpha"


def test_ellipse_section_lies_on_surface():
    S = qz.equatorial_surface(*NESTED)
    c = pk.latitudinal_conic(*NESTED, 0.4)
    a, b = c.semi_axes
    t = np.linspace(0, 2 * np.pi, 20)
    pts = np.stack([np.full_like(t, 0.4), a * np.cos(t), b * np.sin(t)], -1)
    assert np.abs(S(pts)).max() < 1e-12


def test_special_sections_nested():
    s = pk.special_sections(*NESTED)
    assert s.circles == []
    assert s.rectangular_hyperbolas == pytest.approx([-math.sqrt(2.5), math.sqrt(2.5)])
    for x in s.rectangular_hyperbolas:
        c = pk.latitudinal_conic(*NESTED, x)
        assert c.type == "H" and c.asymptote_slopes[0] == pytest.approx(1.0)


def test_special_sections_interlaced():
    s = pk.special_sections(*INTERLACED)
    assert s.circles == [0.0]
    c = pk.latitudinal_conic(*INTERLACED, 0.0)
    assert c.semi_axes[0] == pytest.approx(c.semi_axes[1])


def test_surface_of_revolution_flag():
    assert "surface-of-revolution" in pk.special_sections(1, 0, -4, 1, 0, -4).flags


def test_singular_lines_nested():
    lines = pk.singular_line_geometry(*NESTED)
    got = sorted((round(s.x, 12), s.direction) for s in lines)
    assert got == [(-2.0, "z"), (-1.0, "y"), (1.0, "y"), (2.0, "z")]


@pytest.mark.parametrize("p", [NESTED, INTERLACED, (2, -1, -3, 1, 0.5, -1)])
def test_singular_line_restriction(p):
    S = qz.equatorial_surface(*p)
    rng = np.random.default_rng(0)
    for sl in pk.singular_line_geometry(*p):
        y, z = rng.uniform(-2, 2, (2, 30))
        pts = np.stack([np.full_like(y, sl.x), y, z], -1)
        if sl.direction == "z":
            # restriction to x = x0 is beta(x0) * y²
            cof = beta(p, sl.x)
            expect = cof * y**2
        else:
            cof = alpha(p, sl.x)
            expect = cof * z**2
        assert np.allclose(S(pts), expect, atol=1e-10)
        line = np.array(sl.point) + np.outer(np.linspace(-3, 3, 7), sl.vector)
        assert np.abs(S(line)).max() < 1e-10


def test_shared_roots_carry_two_lines():
    lines = pk.singular_line_geometry(1, 0, -4, 1, 0, -4)
    got = sorted((round(s.x, 12), s.direction) for s in lines)
    assert got == [(-2.0, "y"), (-2.0, "z"), (2.0, "y"), (2.0, "z")]


def test_parabolic_family_flag():
    c = pk.classify(0, 1, 0, 1, 0, -1)
    assert "parabolic-family" in c.flags


def test_near_degenerate_reports_unmerged():
    c = pk.classify(1, 0, -4, 1, 0, -4 * (1 + 1e-12))
    assert c.unmerged_symbol is not None
    assert c.symbol != c.unmerged_symbol


def test_json():
    d = pk.classify(*NESTED).to_json()
    assert d["symbol"] == "I1 H2 E1 H2 I1"
    assert len(d["events"]) == 4 and len(d["intervals"]) == 5
