"""Circle configurations: validation, nesting combinatorics, forest layout and
the stability augmentation with concentric helper circles."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import FrozenSet, List, Optional, Sequence, Tuple

from app.config import settings
from app.services.errors import (
    AugmentationFailed,
    CenterOnCircle,
    ClearanceTooSmall,
    DuplicateCircle,
    InvalidInput,
    NonpositiveRadius,
    Overlap,
)
from app.services.ratpoly import BivariatePolynomial
from app.utils.logging import log_event

log = logging.getLogger(__name__)

Point = Tuple[Fraction, Fraction]

HYPERBOLIC = "hyperbolic"
GENERAL = "general"


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: Fraction

    def __post_init__(self) -> None:
        a, b = self.center
        object.__setattr__(self, "center", (Fraction(a), Fraction(b)))
        object.__setattr__(self, "radius", Fraction(self.radius))

    @property
    def f(self) -> BivariatePolynomial:
        a, b = self.center
        return BivariatePolynomial.circle(a, b, self.radius)

    @property
    def g(self) -> BivariatePolynomial:
        a, b = self.center
        return BivariatePolynomial.squared_distance(a, b)

    def power(self, point: Tuple[Fraction, Fraction]) -> Fraction:
        """f(p) exactly: negative inside, zero on the circle, positive outside."""
        dx = Fraction(point[0]) - self.center[0]
        dy = Fraction(point[1]) - self.center[1]
        return dx * dx + dy * dy - self.radius * self.radius

    def point_at_zero_angle(self) -> Point:
        return (self.center[0] + self.radius, self.center[1])

    def concentric(self, radius: Fraction) -> "Circle":
        return Circle(self.center, radius)

    def as_floats(self) -> Tuple[float, float, float]:
        return float(self.center[0]), float(self.center[1]), float(self.radius)


@dataclass(frozen=True)
class CycleSpec:
    circle: Circle
    period: float
    multiplicity: int = 1
    interior_stability: int = 1

    def __post_init__(self) -> None:
        if not (isinstance(self.period, (int, float)) and math.isfinite(self.period) and self.period > 0):
            raise InvalidInput(f"period must be a positive finite number, got {self.period!r}")
        if isinstance(self.multiplicity, bool) or not isinstance(self.multiplicity, int) or self.multiplicity < 1:
            raise InvalidInput(f"multiplicity must be an integer >= 1, got {self.multiplicity!r}")
        if self.interior_stability not in (-1, 1):
            raise InvalidInput(f"interior stability must be -1 or +1, got {self.interior_stability!r}")
        object.__setattr__(self, "period", float(self.period))

    @property
    def exterior_stability(self) -> int:
        return self.interior_stability if self.multiplicity % 2 else -self.interior_stability


@dataclass(frozen=True)
class Configuration:
    cycles: Tuple[CycleSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cycles", tuple(self.cycles))
        if not self.cycles:
            raise InvalidInput("a configuration needs at least one cycle")

    @property
    def n(self) -> int:
        return len(self.cycles)

    @property
    def circles(self) -> Tuple[Circle, ...]:
        return tuple(c.circle for c in self.cycles)

    @property
    def multiplicities(self) -> Tuple[int, ...]:
        return tuple(c.multiplicity for c in self.cycles)

    @property
    def periods(self) -> Tuple[float, ...]:
        return tuple(c.period for c in self.cycles)

    @property
    def stabilities(self) -> Tuple[int, ...]:
        return tuple(c.interior_stability for c in self.cycles)


@dataclass(frozen=True)
class NestingIndex:
    parents: Tuple[Optional[int], ...]
    containers: Tuple[FrozenSet[int], ...]
    is_primary: Tuple[bool, ...]
    depth: Tuple[int, ...]
    enclosing_multiplicity: Tuple[int, ...]
    primaries_inside: Tuple[int, ...]
    multiplicities: Tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.parents)

    @property
    def r(self) -> int:
        return sum(self.is_primary)

    @property
    def roots(self) -> List[int]:
        return [k for k, p in enumerate(self.parents) if p is None]

    def children(self, k: int) -> List[int]:
        return [j for j, p in enumerate(self.parents) if p == k]

    def primary_ids(self) -> List[int]:
        return [k for k, flag in enumerate(self.is_primary) if flag]


# ---------- проверка и вложенность ----------
def _relation(ci: Circle, cj: Circle) -> str:
    """'outside', 'i_in_j', 'j_in_i', 'duplicate' or 'overlap' by exact comparison."""
    dx = ci.center[0] - cj.center[0]
    dy = ci.center[1] - cj.center[1]
    d2 = dx * dx + dy * dy
    if d2 == 0 and ci.radius == cj.radius:
        return "duplicate"
    if d2 > (ci.radius + cj.radius) ** 2:
        return "outside"
    if d2 < (ci.radius - cj.radius) ** 2:
        return "i_in_j" if ci.radius < cj.radius else "j_in_i"
    return "overlap"


def index_circles(circles: Sequence[Circle], multiplicities: Sequence[int]) -> NestingIndex:
    """Validate a circle set and derive parents, depths, enclosing multiplicities
    and primary counts.

    No center may lie on any circle; that check runs before the pairwise
    classification, so it wins over Overlap.
    """
    n = len(circles)
    for k, c in enumerate(circles):
        if c.radius <= 0:
            raise NonpositiveRadius(k)
    for k in range(n):
        for j in range(n):
            if j != k and circles[j].power(circles[k].center) == 0:
                raise CenterOnCircle(j, k)

    containers: List[set] = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            rel = _relation(circles[i], circles[j])
            if rel == "duplicate":
                raise DuplicateCircle(i, j)
            if rel == "overlap":
                raise Overlap(i, j)
            if rel == "i_in_j":
                containers[i].add(j)
            elif rel == "j_in_i":
                containers[j].add(i)

    contains_any = [False] * n
    for k in range(n):
        for j in containers[k]:
            contains_any[j] = True
    is_primary = tuple(not flag for flag in contains_any)

    parents: List[Optional[int]] = []
    for k in range(n):
        if containers[k]:
            parents.append(min(containers[k], key=lambda j: (circles[j].radius, j)))
        else:
            parents.append(None)

    primaries_inside = tuple(
        sum(1 for i in range(n) if is_primary[i] and (i == k or k in containers[i])) for k in range(n)
    )
    return NestingIndex(
        parents=tuple(parents),
        containers=tuple(frozenset(s) for s in containers),
        is_primary=is_primary,
        depth=tuple(len(s) for s in containers),
        enclosing_multiplicity=tuple(sum(multiplicities[j] for j in s) for s in containers),
        primaries_inside=primaries_inside,
        multiplicities=tuple(multiplicities),
    )


def validate_configuration(c: Configuration) -> NestingIndex:
    return index_circles(c.circles, c.multiplicities)


def expected_stability(idx: NestingIndex, k: int, hyperbolic: bool = False) -> int:
    """Interior stability forced by the nesting: (-1)^N_k for the hyperbolic
    family, (-1)^(m_k + M_k + 1) in general."""
    if not 0 <= k < idx.n:
        raise IndexError(f"cycle {k} out of range")
    if hyperbolic:
        return -1 if idx.depth[k] % 2 else 1
    e = idx.multiplicities[k] + idx.enclosing_multiplicity[k] + 1
    return -1 if e % 2 else 1


# ---------- зазоры ----------
def _sqrt_bounds(q: Fraction, bits: int) -> Tuple[Fraction, Fraction]:
    scale = 1 << bits
    s = math.isqrt(q.numerator * scale * scale // q.denominator)
    return Fraction(s, scale), Fraction(s + 1, scale)


def _gap_bounds(circles: Sequence[Circle], bits: int) -> List[Fraction]:
    gaps: List[Fraction] = [c.radius for c in circles]
    n = len(circles)
    for i in range(n):
        for j in range(i + 1, n):
            ci, cj = circles[i], circles[j]
            dx = ci.center[0] - cj.center[0]
            dy = ci.center[1] - cj.center[1]
            lo, hi = _sqrt_bounds(dx * dx + dy * dy, bits)
            if dx * dx + dy * dy > (ci.radius + cj.radius) ** 2:
                gaps.append(lo - ci.radius - cj.radius)
            else:
                gaps.append(abs(ci.radius - cj.radius) - hi)
    for k in range(n):
        p = circles[k].center
        for j in range(n):
            if j == k:
                continue
            cj = circles[j]
            dx = p[0] - cj.center[0]
            dy = p[1] - cj.center[1]
            lo, hi = _sqrt_bounds(dx * dx + dy * dy, bits)
            gaps.append(lo - cj.radius if cj.power(p) > 0 else cj.radius - hi)
    return gaps


def min_clearance(circles: Sequence[Circle]) -> Fraction:
    """Exact rational lower bound on the smallest circle gap, center-to-circle gap or radius.

    Distances are irrational in general; square roots are bracketed with
    growing precision until every bound is positive.
    """
    bits = 32
    while bits <= 4096:
        gaps = _gap_bounds(circles, bits)
        lowest = min(gaps)
        if lowest > 0:
            return lowest
        bits *= 2
    raise ClearanceTooSmall("circle clearance could not be bounded away from zero")


# ---------- раскладка леса ----------
@dataclass
class ForestNode:
    period: float
    multiplicity: int = 1
    interior_stability: int = 1
    children: List["ForestNode"] = field(default_factory=list)

    def size(self) -> int:
        return 1 + sum(ch.size() for ch in self.children)


def _place(node: ForestNode, center: Point, radius: Fraction, out: List[CycleSpec]) -> None:
    out.append(
        CycleSpec(
            Circle(center, radius),
            period=node.period,
            multiplicity=node.multiplicity,
            interior_stability=node.interior_stability,
        )
    )
    k = len(node.children)
    if not k:
        return
    margin = radius / 10 if k <= 9 else radius / (k + 1)
    rho = (2 * radius - (k + 1) * margin) / (2 * k)
    a, b = center
    for i, child in enumerate(node.children):
        cx = a - radius + margin + rho + i * (2 * rho + margin)
        _place(child, (cx, b), rho, out)


def layout_forest(forest: Sequence[ForestNode]) -> Configuration:
    """Realize a nesting forest by circles; cycles come out in preorder.

    Roots are unit circles spaced 3 apart on the x axis; children sit on the
    horizontal diameter of their parent.
    """
    if not forest:
        raise InvalidInput("forest must have at least one node")
    out: List[CycleSpec] = []
    for i, root in enumerate(forest):
        _place(root, (Fraction(3 * i), Fraction(0)), Fraction(1), out)
    return Configuration(tuple(out))


def forest_of(idx: NestingIndex) -> List[Tuple]:
    """Canonical shape of the containment forest (sorted child-shape tuples per root)."""

    def shape(k: int) -> Tuple:
        return tuple(sorted(shape(j) for j in idx.children(k)))

    return sorted(shape(k) for k in idx.roots)


# ---------- аугментация ----------
@dataclass(frozen=True)
class AugmentedConfiguration:
    base: Configuration
    extra_circles: Tuple[Circle, ...]
    owners: Tuple[int, ...]
    epsilon: Fraction
    singular_points: Tuple[Point, ...]
    mode: str
    index: NestingIndex
    base_index: NestingIndex

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def N(self) -> int:
        return self.base.n + len(self.extra_circles)

    @property
    def circles(self) -> Tuple[Circle, ...]:
        return self.base.circles + self.extra_circles

    @property
    def multiplicities(self) -> Tuple[int, ...]:
        return self.base.multiplicities + (1,) * len(self.extra_circles)

    @property
    def n1(self) -> int:
        return sum(1 for m in self.base.multiplicities if m % 2)

    @property
    def n2(self) -> int:
        """Cycles that received two helper circles (even m, nu = +1)."""
        return sum(1 for c in self.base.cycles if c.multiplicity % 2 == 0 and c.interior_stability == 1)

    @property
    def n2_stated(self) -> int:
        """Even-multiplicity cycles with an odd enclosing multiplicity sum."""
        return sum(
            1
            for k, c in enumerate(self.base.cycles)
            if c.multiplicity % 2 == 0 and self.base_index.enclosing_multiplicity[k] % 2
        )

    @property
    def N_stated(self) -> int:
        return self.n + self.n1 + 2 * self.n2_stated


def _helper_radii(cyc: CycleSpec, eps: Fraction, mode: str) -> List[Fraction]:
    r = cyc.circle.radius
    nu = cyc.interior_stability
    if mode == HYPERBOLIC or cyc.multiplicity % 2:
        return [r - nu * eps]
    if nu == -1:
        return []
    return [r - eps, r + eps]


def augment_for_stability(c: Configuration, idx: NestingIndex, mode: str = GENERAL) -> AugmentedConfiguration:
    """Add concentric helper circles so every base cycle gets its prescribed
    interior stability, and check that it did."""
    if mode not in (HYPERBOLIC, GENERAL):
        raise ValueError(f"unknown augmentation mode {mode!r}")
    if mode == HYPERBOLIC and any(m != 1 for m in c.multiplicities):
        raise InvalidInput("hyperbolic augmentation needs every multiplicity equal to 1")

    eps = min_clearance(c.circles) / 4
    if eps < settings.EPSILON_FLOOR:
        raise ClearanceTooSmall(f"augmentation epsilon {eps} below floor {settings.EPSILON_FLOOR}", epsilon=str(eps))

    extras: List[Circle] = []
    owners: List[int] = []
    for k, cyc in enumerate(c.cycles):
        for rad in _helper_radii(cyc, eps, mode):
            extras.append(cyc.circle.concentric(rad))
            owners.append(k)
    points = tuple(e.point_at_zero_angle() for e in extras)

    all_circles = c.circles + tuple(extras)
    aug_index = index_circles(all_circles, c.multiplicities + (1,) * len(extras))

    for j, (e, q) in enumerate(zip(extras, points)):
        if e.power(q) != 0:
            raise AugmentationFailed(f"singular point of helper circle {j} is off its circle", j=j)
    for k, cyc in enumerate(c.cycles):
        got = expected_stability(aug_index, k, hyperbolic=(mode == HYPERBOLIC))
        if got != cyc.interior_stability:
            raise AugmentationFailed(
                f"cycle {k}: augmented nesting forces stability {got}, prescribed {cyc.interior_stability}",
                k=k,
                expected=cyc.interior_stability,
                got=got,
            )

    aug = AugmentedConfiguration(
        base=c,
        extra_circles=tuple(extras),
        owners=tuple(owners),
        epsilon=eps,
        singular_points=points,
        mode=mode,
        index=aug_index,
        base_index=idx,
    )
    log_event(
        "augmentation_done",
        message=f"{len(extras)} helper circles, eps={eps}",
        mode=mode,
        n=aug.n,
        N=aug.N,
        N_stated=aug.N_stated,
    )
    if aug.N != aug.N_stated:
        log.debug("helper-circle count %s differs from the closed-form count %s", aug.N, aug.N_stated)
    return aug
