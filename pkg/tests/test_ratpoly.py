from fractions import Fraction
from pathlib import Path
import sys

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

sys.path.append(str(Path(__file__).resolve().parents[1]))

from app.services.errors import DivisionByZeroPolynomial, InvalidInput, UndefinedOrder
from app.services.ratpoly import (
    ONE,
    ZERO,
    BivariatePolynomial as BP,
    exact_divide,
    poly_arith,
    poly_eval,
    stacked_evaluator,
    vanishing_order,
)

X, Y = BP.x(), BP.y()

coeffs = st.fractions(min_value=-5, max_value=5, max_denominator=7)
monomials = st.tuples(st.integers(0, 3), st.integers(0, 3))
polys = st.dictionaries(monomials, coeffs, max_size=6).map(BP)
nonzero_polys = polys.filter(lambda p: not p.is_zero)


# ---------- кольцо ----------
@given(polys, polys, polys)
def test_ring_axioms(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a - a == ZERO
    assert a * ONE == a


@given(polys, polys)
def test_degree_of_product(a, b):
    if a.is_zero or b.is_zero:
        assert (a * b).is_zero
    else:
        assert (a * b).degree == a.degree + b.degree


def test_zero_polynomial_degree_is_minus_infinity():
    assert ZERO.degree == float("-inf")
    assert BP({(1, 0): 0}).is_zero


def test_power_matches_repeated_product():
    f = BP.circle(1, 0, 2)
    assert f**3 == f * f * f
    assert f**0 == ONE
    with pytest.raises(ValueError):
        f ** -1


def test_derivatives_of_circle():
    f = BP.circle(Fraction(1, 2), -1, 3)
    assert f.diff_x() == 2 * X - 1
    assert f.diff_y() == 2 * Y + 2


# ---------- деление ----------
@given(polys, nonzero_polys)
def test_exact_divide_recovers_factor(q, d):
    p = q * d
    assert exact_divide(p, d) == q


def test_exact_divide_reports_non_divisor():
    f = BP.circle(0, 0, 1)
    assert exact_divide(f * X + 1, f) is None
    assert exact_divide(X, Y) is None


def test_divide_by_zero_polynomial():
    with pytest.raises(DivisionByZeroPolynomial):
        exact_divide(X, ZERO)


@given(nonzero_polys, st.integers(0, 3))
@hsettings(max_examples=40, deadline=None)
def test_vanishing_order_of_circle_powers(q, k):
    f = BP.circle(7, 7, 1)
    # q(7, 8) != 0 гарантирует, что f не делит q
    if q.value_at(7, 8) == 0:
        q = q + 1
    assert vanishing_order(q * f**k, f) == k


def test_vanishing_order_examples():
    f = BP.circle(0, 0, 1)
    g = BP.circle(3, 0, 1)
    assert vanishing_order(f**2 * g, f) == 2
    assert vanishing_order(f**2 * g, g) == 1
    with pytest.raises(UndefinedOrder):
        vanishing_order(ZERO, f)


# ---------- вычисление ----------
def test_evaluation_matches_exact_values():
    p = BP.circle(0, 0, 1) * (2 * X - 2 * Y) - BP.squared_distance(0, 0) * 2 * Y
    for x, y in [(1, 0), (0.5, -0.25), (2, 3)]:
        exact = float(p.value_at(Fraction(x), Fraction(y)))
        assert poly_eval(p, (x, y)) == pytest.approx(exact, rel=1e-14, abs=1e-14)


def test_stacked_evaluator_shape():
    ev = stacked_evaluator([X, Y * Y, ONE])
    xs = np.array([1.0, 2.0])
    out = ev(xs, np.array([3.0, 4.0]))
    assert out.shape == (3, 2)
    assert out[1].tolist() == [9.0, 16.0]
    assert out[2].tolist() == [1.0, 1.0]


@given(polys, coeffs, coeffs)
@hsettings(max_examples=50, deadline=None)
def test_shift_is_exact(p, a, b):
    moved = p.shifted(a, b)
    for u, v in [(0, 0), (1, -2), (Fraction(1, 3), Fraction(5, 2))]:
        assert moved.value_at(u, v) == p.value_at(u + a, v + b)
    assert moved.shifted(-a, -b) == p


def test_centered_evaluation_away_from_origin():
    # (f^6) на самой окружности равно нулю; в мономах около нуля суммы гасятся
    p = BP.circle(6, 0, 1) ** 6 * BP.circle(3, 0, 1)
    t = np.linspace(0.0, 2 * np.pi, 64)
    xs, ys = 6 + np.cos(t), np.sin(t)
    near = stacked_evaluator([p], center=(6, 0))(xs, ys)[0]
    assert np.max(np.abs(near)) < 1e-9
    off = xs + 0.5
    want = [float(p.value_at(Fraction(x), Fraction(y))) for x, y in zip(off, ys)]
    assert np.allclose(stacked_evaluator([p], center=(6, 0))(off, ys)[0], want, rtol=1e-12, atol=1e-9)


def test_poly_arith_dispatch():
    assert poly_arith("mul", X, Y) == X * Y
    assert poly_arith("diff_x", X * X) == 2 * X
    with pytest.raises(ValueError):
        poly_arith("div", X, Y)


# ---------- записи ----------
def test_records_are_graded_and_exact():
    p = BP({(0, 0): Fraction(-1, 3), (2, 0): 1, (0, 2): 1, (1, 0): 2})
    assert p.records() == [[0, 0, "-1/3"], [1, 0, "2"], [0, 2, "1"], [2, 0, "1"]]
    assert BP.from_records(p.records()) == p


def test_from_records_rejects_duplicates():
    with pytest.raises(InvalidInput):
        BP.from_records([[1, 0, "1"], [1, 0, "2"]])
    with pytest.raises(InvalidInput):
        BP.from_records([[1, 0]])
