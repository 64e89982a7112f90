"""Exact sparse polynomials in x, y with rational coefficients.

Coefficients are ``fractions.Fraction`` everywhere; floats appear only in
:meth:`BivariatePolynomial.evaluate`. Products are formed over a common integer
denominator so that the inner loop multiplies plain ints.
"""
from __future__ import annotations

import heapq
import math
from collections import defaultdict
from fractions import Fraction
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly

from app.services.errors import DivisionByZeroPolynomial, InvalidInput, UndefinedOrder
from app.utils.normalize import format_rational, parse_rational

Monomial = Tuple[int, int]
Scalar = Union[int, Fraction]
Record = List[Union[int, str]]

NEG_INF = float("-inf")


def _grlex(m: Monomial) -> Tuple[int, int]:
    return (m[0] + m[1], m[0])


class BivariatePolynomial:
    __slots__ = ("_terms", "_dense", "_hash")

    def __init__(self, terms: Optional[Mapping[Monomial, Scalar]] = None) -> None:
        clean: Dict[Monomial, Fraction] = {}
        for (i, j), c in (terms or {}).items():
            if i < 0 or j < 0:
                raise ValueError(f"negative exponent in monomial {(i, j)}")
            q = Fraction(c)
            if q:
                clean[(int(i), int(j))] = q
        self._terms = clean
        self._dense: Optional[np.ndarray] = None
        self._hash: Optional[int] = None

    @classmethod
    def _wrap(cls, terms: Dict[Monomial, Fraction]) -> "BivariatePolynomial":
        obj = cls.__new__(cls)
        obj._terms = terms
        obj._dense = None
        obj._hash = None
        return obj

    # ---------- конструкторы ----------
    @classmethod
    def constant(cls, c: Scalar) -> "BivariatePolynomial":
        return cls({(0, 0): c})

    @classmethod
    def x(cls) -> "BivariatePolynomial":
        return cls({(1, 0): 1})

    @classmethod
    def y(cls) -> "BivariatePolynomial":
        return cls({(0, 1): 1})

    @classmethod
    def squared_distance(cls, a: Scalar, b: Scalar) -> "BivariatePolynomial":
        """(x-a)^2 + (y-b)^2"""
        a, b = Fraction(a), Fraction(b)
        return cls({(2, 0): 1, (1, 0): -2 * a, (0, 2): 1, (0, 1): -2 * b, (0, 0): a * a + b * b})

    @classmethod
    def circle(cls, a: Scalar, b: Scalar, radius: Scalar) -> "BivariatePolynomial":
        """(x-a)^2 + (y-b)^2 - radius^2"""
        return cls.squared_distance(a, b) - Fraction(radius) ** 2

    # ---------- свойства ----------
    @property
    def terms(self) -> Dict[Monomial, Fraction]:
        return dict(self._terms)

    def items(self) -> Iterator[Tuple[Monomial, Fraction]]:
        return iter(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    @property
    def degree(self) -> Union[int, float]:
        """Total degree; the zero polynomial has degree -inf."""
        if not self._terms:
            return NEG_INF
        return max(i + j for i, j in self._terms)

    def coefficient(self, i: int, j: int) -> Fraction:
        return self._terms.get((i, j), Fraction(0))

    def leading_term(self) -> Tuple[Monomial, Fraction]:
        if not self._terms:
            raise ValueError("zero polynomial has no leading term")
        m = max(self._terms, key=_grlex)
        return m, self._terms[m]

    # ---------- сравнение ----------
    def __eq__(self, other: object) -> bool:
        if isinstance(other, BivariatePolynomial):
            return self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self._terms == BivariatePolynomial.constant(other)._terms
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    # ---------- арифметика ----------
    @staticmethod
    def _coerce(other: Union["BivariatePolynomial", Scalar]) -> "BivariatePolynomial":
        if isinstance(other, BivariatePolynomial):
            return other
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return BivariatePolynomial.constant(other)
        raise TypeError(f"cannot combine polynomial with {type(other).__name__}")

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return BivariatePolynomial._wrap(out)

    __radd__ = __add__

    def __neg__(self):
        return BivariatePolynomial._wrap({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def scale(self, factor: Scalar) -> "BivariatePolynomial":
        factor = Fraction(factor)
        if not factor:
            return ZERO
        return BivariatePolynomial._wrap({m: c * factor for m, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.scale(other)
        other = self._coerce(other)
        if not self._terms or not other._terms:
            return ZERO
        if len(other._terms) == 1:
            (m2, c2), = other._terms.items()
            return BivariatePolynomial._wrap(
                {(m[0] + m2[0], m[1] + m2[1]): c * c2 for m, c in self._terms.items()}
            )
        da, ia = _integer_form(self)
        db, ib = _integer_form(other)
        acc: Dict[Monomial, int] = defaultdict(int)
        for (i1, j1), c1 in ia:
            for (i2, j2), c2 in ib:
                acc[(i1 + i2, j1 + j2)] += c1 * c2
        den = da * db
        return BivariatePolynomial._wrap({m: Fraction(c, den) for m, c in acc.items() if c})

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "BivariatePolynomial":
        if not isinstance(exponent, int) or exponent < 0:
            raise ValueError(f"exponent must be a non-negative int, got {exponent!r}")
        result = ONE
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    def diff_x(self) -> "BivariatePolynomial":
        return BivariatePolynomial._wrap({(i - 1, j): c * i for (i, j), c in self._terms.items() if i})

    def diff_y(self) -> "BivariatePolynomial":
        return BivariatePolynomial._wrap({(i, j - 1): c * j for (i, j), c in self._terms.items() if j})

    def exact_divide(self, d: "BivariatePolynomial") -> Optional["BivariatePolynomial"]:
        return exact_divide(self, d)

    def vanishing_order(self, f: "BivariatePolynomial") -> int:
        return vanishing_order(self, f)

    def shifted(self, a: Scalar, b: Scalar) -> "BivariatePolynomial":
        """p(x + a, y + b), exact; used to evaluate close to (a, b)."""
        a, b = Fraction(a), Fraction(b)
        terms = self._terms
        if a:
            terms = _shift_axis(terms, a, 0)
        if b:
            terms = _shift_axis(terms, b, 1)
        return BivariatePolynomial._wrap(dict(terms))

    # ---------- вычисление ----------
    def value_at(self, x: Scalar, y: Scalar) -> Fraction:
        """Exact value at a rational point."""
        x, y = Fraction(x), Fraction(y)
        return sum((c * x**i * y**j for (i, j), c in self._terms.items()), Fraction(0))

    def dense(self) -> np.ndarray:
        """Float coefficient matrix c[i, j] of x^i y^j (cached)."""
        if self._dense is None:
            if not self._terms:
                self._dense = np.zeros((1, 1))
            else:
                nx = max(i for i, _ in self._terms) + 1
                ny = max(j for _, j in self._terms) + 1
                c = np.zeros((nx, ny))
                for (i, j), q in self._terms.items():
                    c[i, j] = float(q)
                self._dense = c
        return self._dense

    def evaluate(self, x, y):
        """Horner evaluation at float points (scalars or arrays)."""
        return npoly.polyval2d(x, y, self.dense())

    # ---------- сериализация ----------
    def records(self) -> List[Record]:
        ordered = sorted(self._terms.items(), key=lambda item: (item[0][0] + item[0][1], item[0][0]))
        return [[i, j, format_rational(c)] for (i, j), c in ordered]

    @classmethod
    def from_records(cls, records: Iterable[Sequence]) -> "BivariatePolynomial":
        terms: Dict[Monomial, Fraction] = {}
        for rec in records:
            if len(rec) != 3:
                raise InvalidInput(f"polynomial record must be [i, j, coeff], got {rec!r}")
            i, j, c = rec
            if not isinstance(i, int) or not isinstance(j, int) or i < 0 or j < 0:
                raise InvalidInput(f"bad exponents in record {rec!r}")
            if (i, j) in terms:
                raise InvalidInput(f"duplicate monomial {(i, j)}")
            terms[(i, j)] = parse_rational(c)
        return cls(terms)

    def __repr__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for (i, j), c in sorted(self._terms.items(), key=lambda item: _grlex(item[0]), reverse=True):
            mono = "*".join(
                s for s in (
                    "" if i == 0 else ("x" if i == 1 else f"x^{i}"),
                    "" if j == 0 else ("y" if j == 1 else f"y^{j}"),
                ) if s
            )
            coef = format_rational(c)
            parts.append(coef if not mono else (mono if c == 1 else f"-{mono}" if c == -1 else f"{coef}*{mono}"))
        return " + ".join(parts).replace("+ -", "- ")


ZERO = BivariatePolynomial()
ONE = BivariatePolynomial.constant(1)


def _integer_form(p: BivariatePolynomial) -> Tuple[int, List[Tuple[Monomial, int]]]:
    den = math.lcm(*(c.denominator for c in p._terms.values()))
    return den, [(m, c.numerator * (den // c.denominator)) for m, c in p._terms.items()]


def _shift_axis(terms: Mapping[Monomial, Fraction], a: Fraction, axis: int) -> Dict[Monomial, Fraction]:
    """Substitute x -> x + a (axis 0) or y -> y + a (axis 1), column by column."""
    columns: Dict[int, Dict[int, Fraction]] = defaultdict(dict)
    for m, c in terms.items():
        columns[m[1 - axis]][m[axis]] = c
    out: Dict[Monomial, Fraction] = {}
    for other, col in columns.items():
        top = max(col)
        powers = [Fraction(1)]
        for _ in range(top):
            powers.append(powers[-1] * a)
        for t in range(top + 1):
            s = sum((math.comb(i, t) * powers[i - t] * c for i, c in col.items() if i >= t), Fraction(0))
            if s:
                out[(t, other) if axis == 0 else (other, t)] = s
    return out


def product(factors: Iterable[BivariatePolynomial]) -> BivariatePolynomial:
    result = ONE
    for f in factors:
        result = result * f
    return result


# ---------- операции модуля ----------
_ARITH: Dict[str, Callable] = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "pow": lambda a, b: a ** b,
    "diff_x": lambda a, _b: a.diff_x(),
    "diff_y": lambda a, _b: a.diff_y(),
}


def poly_arith(op: str, a: BivariatePolynomial, b=None) -> BivariatePolynomial:
    try:
        fn = _ARITH[op]
    except KeyError:
        raise ValueError(f"unknown polynomial operation {op!r}") from None
    return fn(a, b)


def poly_eval(p: BivariatePolynomial, point: Tuple[float, float]) -> float:
    return float(p.evaluate(float(point[0]), float(point[1])))


def exact_divide(p: BivariatePolynomial, d: BivariatePolynomial) -> Optional[BivariatePolynomial]:
    """Quotient q with p = q*d, or None when d does not divide p.

    Division by a single divisor in graded-lex order: the remainder vanishes
    iff d | p, and a leading term not divisible by LT(d) stays in the
    remainder for good, so the scan stops there.
    """
    if d.is_zero:
        raise DivisionByZeroPolynomial("division by the zero polynomial")
    if p.is_zero:
        return ZERO
    (li, lj), lc = d.leading_term()
    divisor = list(d._terms.items())
    rem = dict(p._terms)
    heap = [(-(i + j), -i, (i, j)) for (i, j) in rem]
    heapq.heapify(heap)
    quotient: Dict[Monomial, Fraction] = {}

    while heap:
        _, _, m = heapq.heappop(heap)
        c = rem.get(m)
        if c is None:
            continue
        if m[0] < li or m[1] < lj:
            return None
        qm = (m[0] - li, m[1] - lj)
        qc = c / lc
        quotient[qm] = qc
        for (di, dj), dc in divisor:
            t = (qm[0] + di, qm[1] + dj)
            old = rem.get(t)
            new = (old or 0) - qc * dc
            if new:
                if old is None:
                    heapq.heappush(heap, (-(t[0] + t[1]), -t[0], t))
                rem[t] = new
            elif old is not None:
                del rem[t]
    return BivariatePolynomial._wrap(quotient)


def vanishing_order(p: BivariatePolynomial, f: BivariatePolynomial) -> int:
    """Largest k with f^k | p."""
    if p.is_zero:
        raise UndefinedOrder("vanishing order of the zero polynomial is undefined")
    if f.degree < 1:
        raise ValueError("vanishing order needs a non-constant factor")
    k = 0
    q = exact_divide(p, f)
    while q is not None:
        k += 1
        p = q
        q = exact_divide(p, f)
    return k


def stacked_evaluator(polys: Sequence[BivariatePolynomial], center: Optional[Tuple[Scalar, Scalar]] = None) -> Callable:
    """Evaluate several polynomials at once; result shape (len(polys),) + x.shape.

    With ``center`` the polynomials are re-expanded about it first, which keeps
    the monomial sums from cancelling catastrophically near that point.
    """
    if center is not None:
        a, b = Fraction(center[0]), Fraction(center[1])
        polys = [p.shifted(a, b) for p in polys]
        fa, fb = float(a), float(b)
    nx = max(p.dense().shape[0] for p in polys)
    ny = max(p.dense().shape[1] for p in polys)
    c = np.zeros((nx, ny, len(polys)))
    for k, p in enumerate(polys):
        d = p.dense()
        c[: d.shape[0], : d.shape[1], k] = d

    def _eval(x, y):
        if center is None:
            return npoly.polyval2d(x, y, c)
        return npoly.polyval2d(np.subtract(x, fa), np.subtract(y, fb), c)

    return _eval
