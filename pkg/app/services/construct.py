"""Exact construction of the realizing vector fields.

Every builder returns a :class:`VectorField` with rational coefficients and its
inverse integrating factor V. On each circle C_k of the layout the field is
``tangential[k] * (-f_y, f_x)``; the tangential polynomials are kept alongside
P and Q so that verification can compare the two independently.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import settings
from app.runtime import map_ordered
from app.services.analysis import circle_quadrature
from app.services.configuration import (
    GENERAL,
    HYPERBOLIC,
    AugmentedConfiguration,
    Circle,
    Configuration,
    NestingIndex,
    Point,
    augment_for_stability,
    validate_configuration,
)
from app.services.errors import InvalidInput, ScalingVanishesOnCycle
from app.services.ratpoly import ONE, ZERO, BivariatePolynomial, product, stacked_evaluator
from app.utils.logging import log_event
from app.utils.normalize import rationalize

log = logging.getLogger(__name__)

Layout = Union[Configuration, AugmentedConfiguration]


class Mode(str, enum.Enum):
    LR = "lr"
    T = "t"
    M = "m"
    TM = "tm"
    TS = "ts"
    FULL = "full"

    @classmethod
    def parse(cls, value: Union[str, "Mode"]) -> "Mode":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise InvalidInput(f"unknown mode {value!r}") from None


# Режимы, в которых все кратности считаются равными 1
HYPERBOLIC_MODES = frozenset({Mode.LR, Mode.T, Mode.TS})
PERIOD_MODES = frozenset({Mode.T, Mode.TM, Mode.TS, Mode.FULL})


# ---------- вспомогательные функции ----------
@dataclass(frozen=True)
class AuxiliaryBundle:
    f: Tuple[BivariatePolynomial, ...]
    g: Tuple[BivariatePolynomial, ...]
    mu: Tuple[BivariatePolynomial, ...]
    lam: Tuple[BivariatePolynomial, ...]
    l: Tuple[BivariatePolynomial, ...]
    A: BivariatePolynomial
    A_m: BivariatePolynomial
    B: BivariatePolynomial
    L: BivariatePolynomial
    Lambda: int
    F: BivariatePolynomial
    G: BivariatePolynomial
    F_T: BivariatePolynomial
    G_T: BivariatePolynomial
    tau: Tuple[Fraction, ...]
    include: FrozenSet[int]
    multiplicities: Tuple[int, ...]
    primary_centers: Tuple[Point, ...]


def _prefix_suffix(items: Sequence[BivariatePolynomial]) -> List[BivariatePolynomial]:
    """Products of all items except the k-th, for every k."""
    n = len(items)
    prefix = [ONE]
    for p in items:
        prefix.append(prefix[-1] * p)
    out: List[BivariatePolynomial] = [ZERO] * n
    suffix = ONE
    for k in range(n - 1, -1, -1):
        out[k] = prefix[k] * suffix
        suffix = suffix * items[k]
    return out


def _index_of(layout: Layout) -> NestingIndex:
    if isinstance(layout, AugmentedConfiguration):
        return layout.index
    return validate_configuration(layout)


def auxiliaries(
    layout: Layout,
    idx: NestingIndex,
    tau: Optional[Sequence[Fraction]] = None,
    include: Optional[Iterable[int]] = None,
    points: Sequence[Point] = (),
    multiplicities: Optional[Sequence[int]] = None,
) -> AuxiliaryBundle:
    circles = layout.circles
    n = len(circles)
    mults = tuple(multiplicities if multiplicities is not None else layout.multiplicities)
    tau = tuple(Fraction(t) for t in (tau if tau is not None else [1] * n))
    if len(tau) != n:
        raise InvalidInput(f"expected {n} tau values, got {len(tau)}")
    inc = frozenset(range(n) if include is None else include)

    f = tuple(c.f for c in circles)
    g = tuple(c.g for c in circles)
    fm = [fk ** m for fk, m in zip(f, mults)]
    mu = tuple(_prefix_suffix(f))
    lam = tuple(_prefix_suffix(fm))
    primaries = [k for k in range(n) if idx.is_primary[k]]
    B = product(g[k] for k in primaries)
    l = tuple(BivariatePolynomial.squared_distance(a, b) for a, b in points)
    Lambda = sum(m - 1 for m in mults)

    F = G = F_T = G_T = ZERO
    if Lambda:
        for k in range(n):
            fx, fy = f[k].diff_x(), f[k].diff_y()
            F = F + lam[k] * fy
            G = G + lam[k] * fx
            if k in inc:
                F_T = F_T + (lam[k] * fy).scale(tau[k])
                G_T = G_T + (lam[k] * fx).scale(tau[k])
        F, G, F_T, G_T = F.scale(Lambda), G.scale(Lambda), F_T.scale(Lambda), G_T.scale(Lambda)

    return AuxiliaryBundle(
        f=f,
        g=g,
        mu=mu,
        lam=lam,
        l=l,
        A=product(f),
        A_m=product(fm),
        B=B,
        L=product(l),
        Lambda=Lambda,
        F=F,
        G=G,
        F_T=F_T,
        G_T=G_T,
        tau=tau,
        include=inc,
        multiplicities=mults,
        primary_centers=tuple(circles[k].center for k in primaries),
    )


# ---------- поле ----------
@dataclass(frozen=True)
class VectorField:
    P: BivariatePolynomial
    Q: BivariatePolynomial
    V: BivariatePolynomial
    tau: Tuple[Fraction, ...]
    mode: Mode
    degree_bound: int
    circles: Tuple[Circle, ...]
    multiplicities: Tuple[int, ...]
    base_count: int
    primary_centers: Tuple[Point, ...]
    tangential: Tuple[BivariatePolynomial, ...]
    holes: Tuple[Point, ...] = ()
    omitted: Tuple[int, ...] = ()
    source: Optional[Layout] = field(default=None, compare=False)

    @property
    def degree(self) -> int:
        return int(max(self.P.degree, self.Q.degree, 0))

    @property
    def extra_count(self) -> int:
        return len(self.circles) - self.base_count

    @cached_property
    def divergence(self) -> BivariatePolynomial:
        return self.P.diff_x() + self.Q.diff_y()

    @cached_property
    def _pq(self):
        return stacked_evaluator([self.P, self.Q])

    def evaluate(self, x, y) -> np.ndarray:
        """(P, Q) at float points; shape (2,) + shape(x)."""
        return self._pq(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    @cached_property
    def _frames(self) -> Dict[Tuple[Point, str], Callable]:
        return {}

    def local(self, center: Point, parts: str = "pq") -> Callable:
        """Evaluator re-expanded about ``center``, accurate on circles around it.

        ``parts`` picks from p, q, d (divergence) and v (the factor V); the
        result has shape (len(parts),) + shape(x).
        """
        key = ((Fraction(center[0]), Fraction(center[1])), parts)
        ev = self._frames.get(key)
        if ev is None:
            polys = {"p": self.P, "q": self.Q, "d": self.divergence, "v": self.V}
            ev = stacked_evaluator([polys[c] for c in parts], center=key[0])
            self._frames[key] = ev
        return ev

    def local_rhs(self, center: Point) -> Callable[[float, np.ndarray], np.ndarray]:
        pq = self.local(center)
        return lambda _t, state: pq(state[0], state[1])

    def center_near(self, x: float, y: float) -> Point:
        """Center of the circle passing closest to (x, y)."""
        if not self.circles:
            return (Fraction(0), Fraction(0))
        gaps = [abs(math.hypot(x - a, y - b) - r) for a, b, r in (c.as_floats() for c in self.circles)]
        return self.circles[int(np.argmin(gaps))].center

    @property
    def singular_zones(self) -> Tuple[Point, ...]:
        """Points the flow must not be trusted near: primary centers and holes."""
        return self.primary_centers + self.holes


def _tangential_sum(aux: AuxiliaryBundle, weights: Sequence[BivariatePolynomial]):
    sx, sy = ZERO, ZERO
    for k, w in enumerate(weights):
        if k not in aux.include or w.is_zero:
            continue
        sx = sx + w * aux.f[k].diff_x()
        sy = sy + w * aux.f[k].diff_y()
    return sx, sy


def _finish(
    layout: Layout,
    aux: AuxiliaryBundle,
    P: BivariatePolynomial,
    Q: BivariatePolynomial,
    V: BivariatePolynomial,
    tangential: Sequence[BivariatePolynomial],
    mode: Mode,
    degree_bound: int,
) -> VectorField:
    v = VectorField(
        P=P,
        Q=Q,
        V=V,
        tau=aux.tau,
        mode=mode,
        degree_bound=degree_bound,
        circles=tuple(layout.circles),
        multiplicities=aux.multiplicities,
        base_count=layout.n,
        primary_centers=aux.primary_centers,
        tangential=tuple(tangential),
        omitted=tuple(k for k in range(len(layout.circles)) if k not in aux.include),
        source=layout,
    )
    log.debug("built %s field: degree %s, bound %s", mode.value, v.degree, degree_bound)
    return v


def build_XT(
    c: Layout,
    idx: NestingIndex,
    tau: Sequence[Fraction],
    *,
    include: Optional[Iterable[int]] = None,
    mode: Mode = Mode.T,
) -> VectorField:
    """P_T = A(B_x - B_y) - B sum tau_k mu_k f_k,y ; Q_T = A(B_x + B_y) + B sum tau_k mu_k f_k,x."""
    n = len(c.circles)
    aux = auxiliaries(c, idx, tau, include, multiplicities=(1,) * n)
    bx, by = aux.B.diff_x(), aux.B.diff_y()
    weights = [aux.mu[k].scale(aux.tau[k]) if k in aux.include else ZERO for k in range(n)]
    sx, sy = _tangential_sum(aux, weights)
    P = aux.A * (bx - by) - aux.B * sy
    Q = aux.A * (bx + by) + aux.B * sx
    tangential = [aux.B * w for w in weights]
    return _finish(c, aux, P, Q, aux.A * aux.B, tangential, mode, 2 * (n + idx.r))


def build_Xm(c: Layout, idx: NestingIndex) -> VectorField:
    """P_m = P_LR * prod f^(m-1) - B F ; Q_m = Q_LR * prod f^(m-1) + B G."""
    n = len(c.circles)
    lr = build_XT(c, idx, [1] * n, mode=Mode.LR)
    aux = auxiliaries(c, idx)
    excess = product(fk ** (m - 1) for fk, m in zip(aux.f, aux.multiplicities))
    P = lr.P * excess - aux.B * aux.F
    Q = lr.Q * excess + aux.B * aux.G
    tangential = [
        aux.B * aux.lam[k] * (aux.f[k] ** (aux.multiplicities[k] - 1) + aux.Lambda) for k in range(n)
    ]
    bound = 2 * (idx.r + sum(aux.multiplicities))
    return _finish(c, aux, P, Q, aux.A_m * aux.B, tangential, Mode.M, bound)


def build_XTm(
    c: Layout,
    idx: NestingIndex,
    tau: Sequence[Fraction],
    *,
    include: Optional[Iterable[int]] = None,
    mode: Mode = Mode.TM,
) -> VectorField:
    """-A_m B dH_T/dy - B F_T with the logarithmic terms cleared termwise:
    A_m * tau_k f_k,y / f_k = tau_k lambda_k f_k^(m_k - 1) f_k,y."""
    n = len(c.circles)
    aux = auxiliaries(c, idx, tau, include)
    bx, by = aux.B.diff_x(), aux.B.diff_y()
    weights = []
    for k in range(n):
        if k not in aux.include:
            weights.append(ZERO)
            continue
        m = aux.multiplicities[k]
        weights.append((aux.lam[k] * aux.f[k] ** (m - 1)).scale(aux.tau[k]))
    sx, sy = _tangential_sum(aux, weights)
    P = aux.A_m * (bx - by) - aux.B * sy - aux.B * aux.F_T
    Q = aux.A_m * (bx + by) + aux.B * sx + aux.B * aux.G_T
    tangential = [
        aux.B * (w + aux.lam[k].scale(aux.tau[k] * aux.Lambda)) if k in aux.include else ZERO
        for k, w in enumerate(weights)
    ]
    bound = 2 * (idx.r + sum(aux.multiplicities))
    return _finish(c, aux, P, Q, aux.A_m * aux.B, tangential, mode, bound)


def apply_hole_factor(v: VectorField, points: Sequence[Point]) -> VectorField:
    """Multiply X and V by L = prod l_j so the field vanishes at every q_j."""
    if not points:
        raise InvalidInput("apply_hole_factor needs at least one point")
    L = product(BivariatePolynomial.squared_distance(a, b) for a, b in points)
    return replace(
        v,
        P=v.P * L,
        Q=v.Q * L,
        V=v.V * L,
        tangential=tuple(t * L for t in v.tangential),
        degree_bound=v.degree_bound + 2 * len(points),
        holes=v.holes + tuple((Fraction(a), Fraction(b)) for a, b in points),
    )


# ---------- периоды ----------
def _scaling_values(layout: Layout, k: int, mode: Mode, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Factor S with X = tau_k * S * X_LR on C_k, evaluated at points of C_k."""
    s = np.ones_like(xs)
    if mode in (Mode.TM, Mode.FULL):
        mults = layout.multiplicities
        Lambda = sum(m - 1 for m in mults)
        for j, (circ, m) in enumerate(zip(layout.circles, mults)):
            if j != k and m == 1:
                continue
            a, b, r = circ.as_floats()
            # f_j в центрированной форме
            fj = (xs - a) ** 2 + (ys - b) ** 2 - r * r
            s = s * (Lambda + fj ** (m - 1) if j == k else fj ** (m - 1))
    if mode in (Mode.TS, Mode.FULL) and isinstance(layout, AugmentedConfiguration):
        for a, b in layout.singular_points:
            s = s * ((xs - float(a)) ** 2 + (ys - float(b)) ** 2)
    return np.abs(s)


def compute_tau(
    layout: Layout,
    k: int,
    mode: Union[Mode, str],
    period: float,
    *,
    idx: Optional[NestingIndex] = None,
    lr_field: Optional[VectorField] = None,
) -> Fraction:
    """tau_k = (1/T_k) * integral over C_k of ds / (|S| |X_LR|), rounded to a rational."""
    mode = Mode.parse(mode)
    if not (period > 0 and math.isfinite(period)):
        raise InvalidInput(f"period must be positive, got {period!r}")
    if lr_field is None:
        idx = idx or _index_of(layout)
        lr_field = build_XT(layout, idx, [1] * len(layout.circles), mode=Mode.LR)
    circle = layout.circles[k]
    lr_pq = lr_field.local(circle.center)

    def _integrand(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        pq = lr_pq(xs, ys)
        speed = np.hypot(pq[0], pq[1])
        s = _scaling_values(layout, k, mode, xs, ys)
        scale = float(np.max(s))
        if scale == 0.0 or float(np.min(s)) <= 1e-300 or float(np.min(speed)) == 0.0:
            raise ScalingVanishesOnCycle(f"scaling function vanishes on cycle {k}", k=k)
        return 1.0 / (s * speed)

    weighted = circle_quadrature(_integrand, circle)
    tau = rationalize(weighted / period, settings.TAU_RTOL)
    log.debug("tau[%s] = %s (mode %s, T=%r)", k, tau, mode.value, period)
    return tau


def _base_taus(layout: Layout, idx: NestingIndex, mode: Mode, periods: Sequence[float]) -> List[Fraction]:
    lr = build_XT(layout, idx, [1] * len(layout.circles), mode=Mode.LR)
    taus = map_ordered(
        lambda k: compute_tau(layout, k, mode, periods[k], lr_field=lr),
        range(len(periods)),
        settings.WORKERS,
    )
    log_event("tau_computed", message=f"{len(taus)} tau values for mode {mode.value}", mode=mode.value)
    return taus


# ---------- конвейеры ----------
def build_hyperbolic_field(c: Configuration, *, remark: bool = False) -> Tuple[VectorField, AugmentedConfiguration]:
    """Periods and stabilities for hyperbolic cycles: one helper circle per
    cycle, tau from the hole-scaled X_LR, then the hole factor."""
    idx = validate_configuration(c)
    aug = augment_for_stability(c, idx, HYPERBOLIC)
    taus = _base_taus(aug, aug.index, Mode.TS, c.periods)
    tau = taus + [Fraction(1)] * len(aug.extra_circles)
    include = range(aug.n) if remark else None
    v = build_XT(aug, aug.index, tau, include=include, mode=Mode.TS)
    v = apply_hole_factor(v, aug.singular_points)
    return v, aug


def build_realizing_field(c: Configuration, *, remark: Optional[bool] = None) -> Tuple[VectorField, AugmentedConfiguration]:
    """Prescribed periods, multiplicities and interior stabilities at once."""
    if remark is None:
        remark = settings.REMARK_OPTIMIZATION
    idx = validate_configuration(c)
    aug = augment_for_stability(c, idx, GENERAL)
    taus = _base_taus(aug, aug.index, Mode.FULL, c.periods)
    tau = taus + [Fraction(1)] * len(aug.extra_circles)
    include = range(aug.n) if remark else None
    v = build_XTm(aug, aug.index, tau, include=include, mode=Mode.FULL)
    if aug.singular_points:
        v = apply_hole_factor(v, aug.singular_points)
    expected = 2 * (2 * (aug.N - aug.n) + idx.r + sum(c.multiplicities))
    if v.degree_bound != expected:
        raise AssertionError(f"degree bound {v.degree_bound} != {expected}")
    return v, aug


def build_field(
    c: Configuration, mode: Union[Mode, str], *, remark: Optional[bool] = None
) -> Tuple[VectorField, Optional[AugmentedConfiguration]]:
    mode = Mode.parse(mode)
    if remark is None:
        remark = settings.REMARK_OPTIMIZATION
    if mode is Mode.FULL:
        v, aug = build_realizing_field(c, remark=remark)
    elif mode is Mode.TS:
        v, aug = build_hyperbolic_field(c, remark=remark)
    else:
        idx = validate_configuration(c)
        aug = None
        if mode is Mode.LR:
            v = build_XT(c, idx, [1] * c.n, mode=Mode.LR)
        elif mode is Mode.T:
            v = build_XT(c, idx, _base_taus(c, idx, Mode.T, c.periods))
        elif mode is Mode.M:
            v = build_Xm(c, idx)
        else:
            v = build_XTm(c, idx, _base_taus(c, idx, Mode.TM, c.periods))
    log_event(
        "field_built",
        message=f"{mode.value} field of degree {v.degree} (bound {v.degree_bound})",
        mode=mode.value,
        degree=v.degree,
        degree_bound=v.degree_bound,
        circles=len(v.circles),
    )
    return v, aug


# ---------- интеграл Дарбу ----------
@dataclass(frozen=True)
class DarbouxData:
    """G = prod f_j^e_j * prod g_p * exp(-2 sum theta_p) * exp(sum c_j f_j^(1-m_j)).

    ``factors`` holds (f_j, e_j); ``angular_centers`` the primary centers with
    weight -2 (B contributes the matching g_p with exponent 1);
    ``exponential_terms`` holds (f_j, 1 - m_j, c_j) with c_j = Lambda tau_j / (1 - m_j).
    """

    kind: str
    factors: Tuple[Tuple[BivariatePolynomial, Fraction], ...]
    angular_centers: Tuple[Tuple[Point, int], ...]
    exponential_terms: Tuple[Tuple[BivariatePolynomial, int, Fraction], ...]
    Lambda: int
    omitted: Tuple[int, ...] = ()

    def gradient_log(self, x: float, y: float) -> np.ndarray:
        gx = gy = 0.0
        for f, e in self.factors:
            fv = float(f.evaluate(x, y))
            gx += float(e) * float(f.diff_x().evaluate(x, y)) / fv
            gy += float(e) * float(f.diff_y().evaluate(x, y)) / fv
        for (a, b), w in self.angular_centers:
            dx, dy = x - float(a), y - float(b)
            r2 = dx * dx + dy * dy
            # ln g_p
            gx += 2 * dx / r2
            gy += 2 * dy / r2
            # w * theta_p
            gx += w * (-dy) / r2
            gy += w * dx / r2
        for f, p, c in self.exponential_terms:
            fv = float(f.evaluate(x, y))
            scale = float(c) * p * fv ** (p - 1)
            gx += scale * float(f.diff_x().evaluate(x, y))
            gy += scale * float(f.diff_y().evaluate(x, y))
        return np.array([gx, gy])

    def log_value(self, x: float, y: float) -> float:
        """Principal branch of ln|G| (the angular part is multivalued)."""
        val = 0.0
        for f, e in self.factors:
            val += float(e) * math.log(abs(float(f.evaluate(x, y))))
        for (a, b), w in self.angular_centers:
            dx, dy = x - float(a), y - float(b)
            val += math.log(dx * dx + dy * dy) + w * math.atan2(dy, dx)
        for f, p, c in self.exponential_terms:
            val += float(c) * float(f.evaluate(x, y)) ** p
        return val


_DARBOUX_KIND = {
    Mode.LR: "A*B*C",
    Mode.T: "A_T*B*C",
    Mode.TS: "A_T*B*C",
    Mode.M: "A*B*C*exp(Lambda*sum h)",
    Mode.TM: "A_T*B*C*exp(Lambda*sum tau*h)",
    Mode.FULL: "A_T*B*C*exp(Lambda*sum tau*h)",
}


def darboux_data(v: VectorField) -> DarbouxData:
    mults = v.multiplicities
    Lambda = sum(m - 1 for m in mults)
    factors = []
    exp_terms = []
    for k, circ in enumerate(v.circles):
        if k in v.omitted:
            continue
        tau = v.tau[k]
        if mults[k] == 1:
            factors.append((circ.f, tau * (1 + Lambda)))
        else:
            factors.append((circ.f, tau))
            if Lambda:
                exp_terms.append((circ.f, 1 - mults[k], Fraction(Lambda) * tau / (1 - mults[k])))
    return DarbouxData(
        kind=_DARBOUX_KIND[v.mode],
        factors=tuple(factors),
        angular_centers=tuple((p, -2) for p in v.primary_centers),
        exponential_terms=tuple(exp_terms),
        Lambda=Lambda,
        omitted=v.omitted,
    )
