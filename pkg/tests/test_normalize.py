from fractions import Fraction
import math
from pathlib import Path
import sys

import pytest
from hypothesis import given, strategies as st

sys.path.append(str(Path(__file__).resolve().parents[1]))

from app.services.errors import InvalidInput
from app.utils.normalize import format_float, format_rational, parse_rational, rationalize


@pytest.mark.parametrize(
    "raw, want",
    [
        ("3", Fraction(3)),
        ("-1/3", Fraction(-1, 3)),
        (" 2 / 4 ", Fraction(1, 2)),
        ("0.1", Fraction(1, 10)),
        ("1e-3", Fraction(1, 1000)),
        (7, Fraction(7)),
    ],
)
def test_parse_rational(raw, want):
    assert parse_rational(raw) == want


@pytest.mark.parametrize("raw", ["1/0", "abc", "1/2/3", 0.5, True, None])
def test_parse_rational_rejects(raw):
    with pytest.raises(InvalidInput):
        parse_rational(raw)


def test_format_rational():
    assert format_rational(Fraction(6, 4)) == "3/2"
    assert format_rational(Fraction(-4, 2)) == "-2"
    assert parse_rational(format_rational(Fraction(-22, 7))) == Fraction(-22, 7)


def test_rationalize_finds_simple_fractions():
    assert rationalize(0.5) == Fraction(1, 2)
    assert rationalize(1 / 3) == Fraction(1, 3)
    assert rationalize(0.0) == 0
    with pytest.raises(ValueError):
        rationalize(math.inf)


@given(st.floats(min_value=1e-6, max_value=1e6, allow_nan=False, allow_infinity=False))
def test_rationalize_stays_within_tolerance(x):
    q = rationalize(x, 1e-12)
    assert abs(float(q) - x) <= 1e-12 * x * 1.0001


def test_format_float():
    assert format_float(0.1) == 0.1
    assert format_float(math.inf) == "inf"
    assert format_float(math.nan) == "nan"
