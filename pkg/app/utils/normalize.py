from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Union

from app.services.errors import InvalidInput

RationalLike = Union[str, int, Fraction]

_RATIONAL_RE = re.compile(r"^\s*([+-]?\d+)\s*(?:/\s*(\d+)\s*)?$")
_DECIMAL_RE = re.compile(r"^\s*[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\s*$")


def parse_rational(value: RationalLike) -> Fraction:
    """Parse "num/den", an integer string or a plain decimal string exactly."""
    if isinstance(value, bool):
        raise InvalidInput(f"not a rational: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if not isinstance(value, str):
        raise InvalidInput(f"rationals must be strings, got {type(value).__name__}: {value!r}")

    m = _RATIONAL_RE.match(value)
    if m:
        num = int(m.group(1))
        den = int(m.group(2)) if m.group(2) is not None else 1
        if den == 0:
            raise InvalidInput(f"zero denominator in {value!r}")
        return Fraction(num, den)
    if _DECIMAL_RE.match(value):
        # Fraction("0.1") is exact 1/10, not the binary float
        return Fraction(value.strip())
    raise InvalidInput(f"not a rational: {value!r}")


def format_rational(value: Fraction | int) -> str:
    q = Fraction(value)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def rationalize(value: float, rel_tol: float = 1e-12) -> Fraction:
    """Round a positive float to the simplest-ish rational within rel_tol.

    Continued-fraction rounding via Fraction.limit_denominator with a growing
    denominator bound; the exact binary value is the last resort.
    """
    if not math.isfinite(value):
        raise ValueError(f"cannot rationalize {value!r}")
    exact = Fraction(value)
    if exact == 0:
        return exact
    bound = 10**6
    while bound <= 10**18:
        approx = exact.limit_denominator(bound)
        if abs(approx - exact) <= Fraction(rel_tol) * abs(exact):
            return approx
        bound *= 10
    return exact


def format_float(value: float) -> float | str:
    """JSON-safe float (json writes the shortest round-trip repr); inf/nan become strings."""
    value = float(value)
    if math.isfinite(value):
        return value
    return repr(value)
