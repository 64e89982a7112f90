"""Numerical dynamics on the constructed fields.

Circle quadrature, orbit integration, first returns to the angle-0 radial ray
and the measurements built on them (periods, stability sides, multiplicity
slopes, residue/divergence/flux integrals).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.config import check_tolerance, settings, ODE_TOL_RANGE
from app.services.configuration import Circle
from app.services.errors import (
    Indeterminate,
    NoReturn,
    QuadratureNotConverged,
    StepUnderflow,
    TestCircleInvalid,
)
from app.services.integrator import DormandPrince, Step

if TYPE_CHECKING:
    from app.services.construct import VectorField

log = logging.getLogger(__name__)

GL_NODES = 16
START_PANELS = 4
TWO_PI = 2.0 * math.pi
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(GL_NODES)
CHUNK_NODES = 2**15
# разность, которая уменьшилась меньше чем вдвое, считается шумом
STALL_RATIO = 0.5

DENSE_SAMPLES = 8
BISECT_TIME_TOL = 1e-12
STABILITY_DELTA = 1e-3
LADDER_DELTA0 = 0.05
LADDER_SIZE = 7
NOISE_FACTOR = 1e3
MIN_FIT_POINTS = 4


# ---------- квадратуры ----------
def circle_quadrature(
    g: Callable[[np.ndarray, np.ndarray], np.ndarray],
    circle: Circle,
    *,
    rtol: Optional[float] = None,
    max_panels: Optional[int] = None,
    noise_rtol: Optional[float] = None,
) -> float:
    """Line integral of g over the circle, composite Gauss–Legendre in the angle.

    Panels double until two successive estimates agree to ``rtol`` relative
    (with an absolute floor proportional to the integral of |g|). Estimates
    that stop improving while already within ``noise_rtol`` of that integral
    sit at the evaluation noise of g and are accepted as they are. Nodes are
    fed to g in chunks of CHUNK_NODES, so memory does not grow with the panel
    count.
    """
    rtol = settings.QUAD_RTOL if rtol is None else rtol
    max_panels = settings.QUAD_MAX_PANELS if max_panels is None else max_panels
    noise_rtol = settings.QUAD_NOISE_RTOL if noise_rtol is None else noise_rtol
    a, b, r = circle.as_floats()
    per_chunk = max(1, CHUNK_NODES // GL_NODES)

    def _estimate(panels: int) -> Tuple[float, float]:
        half = math.pi / panels
        total = mass = 0.0
        for start in range(0, panels, per_chunk):
            mids = (np.arange(start, min(start + per_chunk, panels)) + 0.5) * (2 * half)
            t = (mids[:, None] + half * _NODES[None, :]).ravel()
            w = np.tile(_WEIGHTS, len(mids))
            vals = np.broadcast_to(np.asarray(g(a + r * np.cos(t), b + r * np.sin(t)), dtype=float), t.shape)
            total += float(np.dot(w, vals))
            mass += float(np.dot(w, np.abs(vals)))
        return r * half * total, r * half * mass

    panels = START_PANELS
    prev, mass = _estimate(panels)
    if mass == 0.0:
        return 0.0
    last_diff = math.inf
    while panels < max_panels:
        panels *= 2
        cur, mass = _estimate(panels)
        if not math.isfinite(cur):
            break
        diff = abs(cur - prev)
        if diff <= rtol * abs(cur) + 1e-13 * mass:
            return cur
        if diff <= noise_rtol * mass and diff > STALL_RATIO * last_diff:
            log.debug("quadrature stalled at %.3g of %.3g with %s panels", diff, mass, panels)
            return cur
        prev, last_diff = cur, diff
    raise QuadratureNotConverged(f"no convergence with {panels} panels", panels=panels)


# ---------- траектории ----------
@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    steps: int = 0
    rejected: int = 0

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "x": self.states[:, 0], "y": self.states[:, 1]})

    def to_csv(self, path: Path) -> Path:
        from app.storage.files import write_text_atomic

        return write_text_atomic(path, self.to_frame().to_csv(index=False, float_format="%.17g"))


def _tolerances(tol: Optional[float], rtol: Optional[float]) -> Tuple[float, float]:
    atol = settings.TOL_ODE if tol is None else tol
    check_tolerance("tol", atol, ODE_TOL_RANGE)
    return atol, settings.RTOL_ODE if rtol is None else rtol


def integrate_orbit(
    v: "VectorField",
    start: Sequence[float],
    t_end: float,
    tol: Optional[float] = None,
    *,
    rtol: Optional[float] = None,
    stop: Optional[Callable[[Step], Optional[float]]] = None,
    max_steps: int = 200_000,
) -> Trajectory:
    """Integrate from ``start`` over [0, t_end]; a negative t_end runs backwards.

    ``stop`` may return a time inside the step at which to cut the orbit.
    """
    atol, rtol = _tolerances(tol, rtol)
    y0 = np.array(start, dtype=float)
    direction = 1 if t_end >= 0 else -1
    rhs = v.local_rhs(v.center_near(float(y0[0]), float(y0[1])))
    if t_end == 0 or not np.any(rhs(0.0, y0)):
        return Trajectory(np.array([0.0, float(t_end)]), np.vstack([y0, y0]))

    solver = DormandPrince(rhs, 0.0, y0, atol=atol, rtol=rtol, direction=direction)
    times: List[float] = [0.0]
    states: List[np.ndarray] = [y0]
    while len(times) <= max_steps:
        step = solver.step()
        cut = stop(step) if stop is not None else None
        if cut is not None:
            times.append(cut)
            states.append(step.dense(cut))
            break
        if direction * (step.t1 - t_end) >= 0:
            times.append(float(t_end))
            states.append(step.dense(t_end))
            break
        times.append(step.t1)
        states.append(step.y1)
    else:
        raise StepUnderflow(f"step budget {max_steps} exhausted before t={t_end!r}", t=solver.t)
    return Trajectory(np.array(times), np.vstack(states), solver.steps, solver.rejected)


# ---------- геометрия ----------
def _circle_index(v: "VectorField", circle: Circle) -> Optional[int]:
    for k, c in enumerate(v.circles):
        if c == circle:
            return k
    return None


def _clearance_of(v: "VectorField", circle: Circle, skip: Optional[int]) -> float:
    a, b, r = circle.as_floats()
    gaps: List[float] = []
    for j, c in enumerate(v.circles):
        if j == skip or c == circle:
            continue
        aj, bj, rj = c.as_floats()
        d = math.hypot(a - aj, b - bj)
        gaps.append(d - r - rj if d > r + rj else abs(r - rj) - d)
    for px, py in v.singular_zones:
        gaps.append(abs(math.hypot(float(px) - a, float(py) - b) - r))
    positive = [g for g in gaps if g > 0]
    return min(positive) if positive else r


def cycle_clearance(v: "VectorField", k: int) -> float:
    """Distance from C_k to the nearest other circle, primary center or hole."""
    return _clearance_of(v, v.circles[k], k)


def _orientation(v: "VectorField", circle: Circle) -> int:
    """Sign of the angular velocity along the circle (taken at angle 0)."""
    a, b, r = circle.as_floats()
    q = float(v.local(circle.center)(a + r, b)[1])
    return 1 if q > 0 else -1


# ---------- первое возвращение ----------
@dataclass(frozen=True)
class ReturnObservation:
    delta: float
    returned: float
    time: float
    direction: int

    @property
    def side(self) -> str:
        return "exterior" if self.delta > 0 else "interior"

    @property
    def displacement(self) -> float:
        """Offset change over one return in the integration direction."""
        return self.returned - self.delta

    @property
    def forward_displacement(self) -> float:
        """P(delta) - delta for the forward map, oriented by the side."""
        return self.direction * self.displacement

    @property
    def stability(self) -> int:
        """+1 when forward orbits on this side move away from the cycle."""
        return 1 if self.forward_displacement * self.delta > 0 else -1


def _first_return(
    v: "VectorField",
    circle: Circle,
    delta: float,
    direction: int,
    clearance: float,
    *,
    atol: float,
    rtol: float,
    t_max: float,
    max_steps: int = 200_000,
) -> Tuple[float, float]:
    """(offset at the next crossing of the angle-0 ray, elapsed time)."""
    a, b, r = circle.as_floats()
    s = direction * _orientation(v, circle)
    y0 = np.array([a + r + delta, b])
    band = clearance / 2

    solver = DormandPrince(v.local_rhs(circle.center), 0.0, y0, atol=atol, rtol=rtol, direction=direction)
    phi = 0.0
    last_angle = 0.0

    def _angle(p: np.ndarray) -> float:
        return math.atan2(p[1] - b, p[0] - a)

    def _unwrap(prev: float, ang: float) -> float:
        d = ang - prev
        return (d + math.pi) % TWO_PI - math.pi

    for _ in range(max_steps):
        step = solver.step()
        ts = np.linspace(step.t0, step.t1, DENSE_SAMPLES + 1)[1:]
        t_prev = step.t0
        for t in ts:
            p = step.dense(t)
            rho = math.hypot(p[0] - a, p[1] - b)
            if abs(rho - r) > band:
                raise NoReturn(f"orbit left the annulus of width {band:g}", t=float(t), delta=delta)
            ang = _angle(p)
            new_phi = phi + _unwrap(last_angle, ang)
            if s * new_phi >= TWO_PI:
                lo, hi = t_prev, float(t)
                base_phi, base_ang = phi, last_angle
                while abs(hi - lo) > BISECT_TIME_TOL * max(1.0, abs(hi)):
                    mid = 0.5 * (lo + hi)
                    m_phi = base_phi + _unwrap(base_ang, _angle(step.dense(mid)))
                    if s * m_phi >= TWO_PI:
                        hi = mid
                    else:
                        lo = mid
                p_hit = step.dense(hi)
                return math.hypot(p_hit[0] - a, p_hit[1] - b) - r, abs(hi)
            phi, last_angle, t_prev = new_phi, ang, float(t)
        if abs(step.t1) > t_max:
            raise NoReturn(f"no return within t={t_max:g}", t=t_max, delta=delta)
    raise NoReturn(f"no return within {max_steps} steps", delta=delta)


def quadrature_period(v: "VectorField", circle: Circle) -> float:
    pq_at = v.local(circle.center)

    def _inv_speed(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        pq = pq_at(xs, ys)
        return 1.0 / np.hypot(pq[0], pq[1])

    return circle_quadrature(_inv_speed, circle)


def poincare_return(
    v: "VectorField",
    circle: Circle,
    delta: float,
    *,
    direction: Optional[int] = None,
    tol: Optional[float] = None,
) -> ReturnObservation:
    """First return to the angle-0 ray from radius r + delta.

    Without an explicit direction, forward time is tried first and backward
    time when the forward orbit leaves the annulus.
    """
    atol, rtol = _tolerances(tol, None)
    clearance = _clearance_of(v, circle, _circle_index(v, circle))
    if not 0 < abs(delta) < clearance / 2:
        raise ValueError(f"offset {delta!r} outside (0, {clearance / 2:g})")
    t_max = 20.0 * quadrature_period(v, circle)
    directions = (direction,) if direction else (1, -1)
    last_err: Optional[NoReturn] = None
    for d in directions:
        try:
            returned, t = _first_return(v, circle, delta, d, clearance, atol=atol, rtol=rtol, t_max=t_max)
        except NoReturn as exc:
            last_err = exc
            continue
        return ReturnObservation(delta=delta, returned=returned, time=t, direction=d)
    assert last_err is not None
    raise last_err


# ---------- интегралы ----------
def divergence_period_integral(v: "VectorField", circle: Circle) -> float:
    """Integral of div X over one period: the circle integral of div X / |X|."""
    pqd_at = v.local(circle.center, "pqd")

    def _g(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        p, q, div = pqd_at(xs, ys)
        return div / np.hypot(p, q)

    return circle_quadrature(_g, circle)


def time_of_flight(v: "VectorField", circle: Circle, *, tol: Optional[float] = None) -> float:
    """ODE period: first return of the orbit started on the cycle, integrated
    in the time direction in which the cycle attracts."""
    atol, rtol = _tolerances(tol, None)
    k = _circle_index(v, circle)
    clearance = _clearance_of(v, circle, k)
    direction = -1 if divergence_period_integral(v, circle) > 0 else 1
    t_max = 20.0 * quadrature_period(v, circle)
    _, t = _first_return(v, circle, 0.0, direction, clearance, atol=atol, rtol=rtol, t_max=t_max)
    return t


@dataclass(frozen=True)
class PeriodMeasurement:
    quadrature: float
    ode: float

    @property
    def value(self) -> float:
        return self.quadrature

    @property
    def discrepancy(self) -> float:
        return abs(self.ode - self.quadrature) / self.quadrature


def measure_period(v: "VectorField", circle: Circle, *, tol: Optional[float] = None) -> PeriodMeasurement:
    return PeriodMeasurement(quadrature=quadrature_period(v, circle), ode=time_of_flight(v, circle, tol=tol))


def _check_test_circle(v: "VectorField", test: Circle) -> None:
    a, b, r = test.as_floats()
    scale = max(r, 1.0)
    for c in v.circles:
        aj, bj, rj = c.as_floats()
        d = math.hypot(a - aj, b - bj)
        gap = d - r - rj if d > r + rj else abs(r - rj) - d
        if gap <= 1e-9 * scale:
            raise TestCircleInvalid("test circle meets a cycle", center=[a, b], radius=r)
    for px, py in v.singular_zones:
        if abs(math.hypot(float(px) - a, float(py) - b) - r) <= 1e-9 * scale:
            raise TestCircleInvalid("test circle passes through a singular point", center=[a, b], radius=r)


def _omega_over_v(v: "VectorField", test: Circle) -> float:
    a, b, _ = test.as_floats()
    pqv_at = v.local(test.center, "pqv")

    def _g(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        p, q, vv = pqv_at(xs, ys)
        nx, ny = xs - a, ys - b
        norm = np.hypot(nx, ny)
        return (p * nx + q * ny) / norm / vv

    return circle_quadrature(_g, test)


def residue_integral(v: "VectorField", circle: Circle, offset: float) -> float:
    """Counter-clockwise integral of (-Q dx + P dy)/V on the concentric circle
    of radius r + offset; equals 4*pi times the enclosed primary count."""
    test = circle.concentric(circle.radius + Fraction(offset))
    if test.radius <= 0:
        raise TestCircleInvalid("test circle radius must be positive", offset=offset)
    _check_test_circle(v, test)
    return _omega_over_v(v, test)


def flux_sign(v: "VectorField", circle: Circle, rho: float, *, side: str = "interior") -> int:
    """Sign of the outward flux of X through the concentric test circle at
    r - rho (interior) or r + rho (exterior).

    When X.n changes sign on the test circle it is not transversal; the sign
    then comes from sign(V) * sign(integral of omega/V), which is the flux
    sign of any transversal curve homotopic to it in the annulus.
    """
    if rho <= 0:
        raise TestCircleInvalid("flux test offset must be positive", rho=rho)
    offset = -rho if side == "interior" else rho
    test = circle.concentric(circle.radius + Fraction(offset))
    if test.radius <= 0:
        raise TestCircleInvalid("test circle radius must be positive", rho=rho)
    _check_test_circle(v, test)
    a, b, r = test.as_floats()
    t = np.linspace(0.0, TWO_PI, 4 * max(v.degree_bound, 8) + 1)[:-1]
    xs, ys = a + r * np.cos(t), b + r * np.sin(t)
    p, q, vv = v.local(test.center, "pqv")(xs, ys)
    normal = p * np.cos(t) + q * np.sin(t)
    if np.all(normal > 0):
        return 1
    if np.all(normal < 0):
        return -1
    v_sign = 1 if float(vv[0]) > 0 else -1
    total = _omega_over_v(v, test)
    if total == 0:
        raise Indeterminate("flux through the test circle vanishes", rho=rho)
    return v_sign * (1 if total > 0 else -1)


# ---------- устойчивость и кратность ----------
@dataclass
class StabilityEstimate:
    interior: int
    exterior: int
    multiplicity: Optional[int]
    slope: Optional[float]
    interior_source: str = "return"
    exterior_source: str = "return"
    observations: List[ReturnObservation] = field(default_factory=list)
    note: Optional[str] = None


def _side_sign(v: "VectorField", circle: Circle, delta: float, clearance: float, noise: float) -> Tuple[int, str]:
    try:
        obs = poincare_return(v, circle, delta)
        if abs(obs.displacement) > noise:
            return obs.stability, "return"
    except NoReturn:
        log.debug("no return at delta=%g, falling back to flux", delta)
    side = "interior" if delta < 0 else "exterior"
    flux = flux_sign(v, circle, clearance / 4, side=side)
    return (-flux if side == "interior" else flux), "flux"


def estimate_stability_and_multiplicity(v: "VectorField", circle: Circle, *, tol: Optional[float] = None) -> StabilityEstimate:
    """Side stabilities from one return each, multiplicity from the slope of
    log|displacement| against log|delta| on a halving ladder of offsets."""
    atol, _ = _tolerances(tol, None)
    noise = NOISE_FACTOR * atol
    clearance = _clearance_of(v, circle, _circle_index(v, circle))

    d = STABILITY_DELTA * clearance
    interior, interior_src = _side_sign(v, circle, -d, clearance, noise)
    exterior, exterior_src = _side_sign(v, circle, d, clearance, noise)

    observations: List[ReturnObservation] = []
    for sign in (1, -1):
        observations = []
        for i in range(LADDER_SIZE):
            delta = sign * LADDER_DELTA0 * clearance * 2.0**-i
            try:
                obs = poincare_return(v, circle, delta, tol=atol)
            except NoReturn:
                continue
            if abs(obs.displacement) > noise:
                observations.append(obs)
        if len(observations) >= MIN_FIT_POINTS:
            break

    estimate = StabilityEstimate(
        interior=interior,
        exterior=exterior,
        multiplicity=None,
        slope=None,
        interior_source=interior_src,
        exterior_source=exterior_src,
        observations=observations,
    )
    if len(observations) < MIN_FIT_POINTS:
        exc = Indeterminate(f"only {len(observations)} usable return observations", usable=len(observations))
        exc.partial = estimate
        raise exc
    xs = np.log([abs(o.delta) for o in observations])
    ys = np.log([abs(o.displacement) for o in observations])
    slope = float(np.polyfit(xs, ys, 1)[0])
    estimate.slope = slope
    estimate.multiplicity = int(round(slope))
    return estimate
