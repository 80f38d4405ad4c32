from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from qmomap.algebra import (
    I,
    ONE,
    GaussianRational,
    HbarSeries,
    MultiPoly,
    ParseError,
    Universe,
    format_gr,
    standard_universe,
)
from qmomap.algebra import UniverseMismatch

from conftest import gaussian, polys

U = standard_universe(2, 2)
V3 = ["x1", "x2", "xi1", "xi2", "v1"]


def P(s, u=U):
    return u.parse(s)


# ---------------------------------------------------------------------------
# Gaussian rationals


def test_gaussian_normalizes_and_compares_exactly():
    a = GaussianRational(Fraction(2, 4), Fraction(-6, 8))
    assert a == GaussianRational(Fraction(1, 2), Fraction(-3, 4))
    assert a.real_fraction == Fraction(1, 2)
    assert a.imag_fraction == Fraction(-3, 4)
    assert I * I == -ONE
    assert (ONE / I) == -I


@given(gaussian, gaussian)
def test_gaussian_field_axioms(a, b):
    assert a * b == b * a
    assert (a + b) - b == a
    if b:
        assert (a / b) * b == a


def test_format_gr_forms():
    assert format_gr(GaussianRational(Fraction(1, 2), 0)) == "1/2"
    assert format_gr(GaussianRational(0, Fraction(-1, 2))) == "-1/2*i"
    assert format_gr(GaussianRational(1, 1)) == "(1+i)"


# ---------------------------------------------------------------------------
# polynomials (examples)


def test_poly_arith_examples():
    assert P("(x1+xi1)*(x1-xi1)") == P("x1^2 - xi1^2")
    p = P("3*x1*v2 + i*xi2")
    assert p + U.zero() == p
    assert P("1/2*x1") * P("2/3*x1") == P("1/3*x1^2")


def test_poly_diff_examples():
    assert P("x1*xi1^2").diff("xi1") == P("2*x1*xi1")
    assert P("7/3").diff("x1") == U.zero()
    assert P("v1^2*x1").diff("v1", 2) == P("2*x1")


def test_substitute_examples():
    assert P("th1^2").subs({"th1": P("-xi1")}) == P("xi1^2")
    p = P("x1*th2 + v1^3")
    assert p.subs({"x1": P("x1"), "v1": P("v1")}) == p


def test_universe_mismatch_is_reported():
    other = Universe([("x", 1)])
    with pytest.raises(UniverseMismatch):
        P("x1") + other.parse("x1")


def test_degrees_per_family():
    p = P("x1^2*xi1*v1^3 + xi2^2")
    assert p.degree("xi") == 2
    assert p.degree("v") == 3
    assert p.degree_in(("x", "v")) == 5
    assert p.truncate(("v",), 2) == P("xi2^2")


@given(polys(U, V3), polys(U, V3), polys(U, V3))
def test_ring_axioms(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a * b == b * a
    assert a - a == U.zero()


@given(polys(U, V3, max_degree=4))
def test_mixed_partials_commute(p):
    for u in ("x1", "xi2", "v1"):
        for w in ("x2", "xi1", "v1"):
            assert p.diff(u).diff(w) == p.diff(w).diff(u)


@given(polys(U, V3), polys(U, V3))
def test_truncated_product_matches_full_product(a, b):
    full = (a * b).truncate(("x", "v"), 3)
    assert a.mul(b, (("x", "v"), 3)) == full


@given(polys(U, V3), polys(U, ["x1", "v1"], max_degree=2), polys(U, ["xi1"], max_degree=2))
def test_substitution_is_a_ring_map(p, s1, s2):
    bind = {"x1": s1, "xi1": s2}
    q = P("x1*xi1 - 2*x1^2")
    assert (p * q).subs(bind) == p.subs(bind) * q.subs(bind)


# ---------------------------------------------------------------------------
# hbar series


def test_series_examples():
    a1 = HbarSeries([U.one(), P("x1")], 1)
    b1 = HbarSeries([U.one(), P("-x1")], 1)
    assert a1 * b1 == HbarSeries.one(U, 1)
    a2, b2 = a1.with_order(2), b1.with_order(2)
    assert a2 * b2 == HbarSeries([U.one(), U.zero(), P("-x1^2")], 2)
    assert HbarSeries.hbar(U, 1).scale(I) == HbarSeries([U.zero(), U.const(I)], 1)


def test_series_order_mismatch_raises():
    with pytest.raises(ValueError):
        HbarSeries.one(U, 1) + HbarSeries.one(U, 2)


def test_negative_shift_needs_divisibility():
    s = HbarSeries([U.zero(), P("x1"), P("x2")], 2)
    assert s.shift(-1) == HbarSeries([P("x1"), P("x2"), U.zero()], 2)
    with pytest.raises(ValueError):
        HbarSeries.one(U, 2).shift(-1)


W = Universe([("x", 2), ("h", 1)])


@given(polys(W, ["x1", "x2", "h1"], max_degree=4), polys(W, ["x1", "x2", "h1"], max_degree=4))
def test_series_product_matches_auxiliary_variable(p, q):
    N = 2
    h = W.var_index("h1")

    def to_series(r):
        return HbarSeries([r.diff(h, k).set_zero(("h",)).scale(Fraction(1, _fact(k))) for k in range(N + 1)], N)

    prod = to_series((p * q).truncate(("h",), N))
    assert to_series(p) * to_series(q) == prod


def _fact(k):
    out = 1
    for j in range(2, k + 1):
        out *= j
    return out


# ---------------------------------------------------------------------------
# parser


@pytest.mark.parametrize(
    "text, expected",
    [
        ("x1^2*xi1 - 3/4*v2", None),
        ("2^{-1}*x1", "1/2*x1"),
        ("-(x1 + i*xi1)^2", "-x1^2 - 2*i*x1*xi1 + xi1^2"),
        ("1/2*i^{-1}*th2", "-1/2*i*th2"),
    ],
)
def test_parse_round_trip(text, expected):
    p = P(text)
    assert P(str(p)) == p
    if expected:
        assert p == P(expected)


@pytest.mark.parametrize("text, pos", [("x1 +", 4), ("x9", 0), ("(x1", 3), ("x1 $ 2", 3)])
def test_parse_errors_report_position(text, pos):
    with pytest.raises(ParseError) as info:
        P(text)
    assert info.value.position == pos
