from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from app.config import settings
from app.runtime import map_ordered
from app.services import analysis
from app.services.configuration import AugmentedConfiguration, Configuration, NestingIndex, expected_stability, index_circles
from app.services.construct import PERIOD_MODES, Mode, VectorField, darboux_data
from app.services.errors import Indeterminate, RealizationError
from app.services.ratpoly import BivariatePolynomial, exact_divide, stacked_evaluator, vanishing_order
from app.utils.logging import log_event
from app.utils.normalize import format_float, format_rational

log = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
EXPECTED = "expected"
SKIPPED = "skipped"

RESTRICTION_SAMPLES = 64
FIRST_INTEGRAL_ANGLES = 8
FIRST_INTEGRAL_TOL = 1e-8
NONVANISHING_RATIO = 1e-9


@dataclass
class Verdict:
    name: str
    status: str
    message: str = ""
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"name": self.name, "status": self.status}
        if self.message:
            out["message"] = self.message
        if self.details:
            out["details"] = self.details
        return out


def _verdict(name: str, ok: bool, message: str = "", **details: Any) -> Verdict:
    return Verdict(name, PASS if ok else FAIL, message, details)


def _guarded(name: str, fn: Callable[[], Verdict]) -> Verdict:
    """Measurement errors become failed verdicts."""
    try:
        return fn()
    except RealizationError as exc:
        return Verdict(name, FAIL, str(exc), exc.to_dict())
    except (ValueError, ArithmeticError) as exc:
        return Verdict(name, FAIL, f"{type(exc).__name__}: {exc}")


# ---------- символьные проверки ----------
def check_inverse_integrating_factor(v: VectorField) -> Verdict:
    residual = v.P * v.V.diff_x() + v.Q * v.V.diff_y() - v.V * v.divergence
    return _verdict(
        "inverse_integrating_factor",
        residual.is_zero,
        "" if residual.is_zero else f"residual has {len(residual)} terms",
        residual_terms=len(residual),
    )


def check_degree_bound(v: VectorField) -> Verdict:
    details = {"degree": v.degree, "bound": v.degree_bound}
    if v.mode in (Mode.M, Mode.TM):
        # грубая оценка из доказательства, для сравнения
        details["proof_bound"] = 2 * (len(v.circles) + sum(v.multiplicities)) - 1
    return _verdict("degree_bound", v.degree < v.degree_bound, f"deg {v.degree} vs bound {v.degree_bound}", **details)


def check_vanishing_orders(v: VectorField) -> List[Verdict]:
    out = []
    for k, circle in enumerate(v.circles):
        want = v.multiplicities[k] if k < v.base_count else 1
        got = vanishing_order(v.V, circle.f)
        out.append(_verdict(f"vanishing_order[{k}]", got == want, f"order {got}, expected {want}", order=got, expected=want))
    return out


def _angles(count: int) -> np.ndarray:
    return np.arange(count) * (2 * math.pi / count)


def check_nonvanishing_on_cycles(v: VectorField) -> List[Verdict]:
    """Tangential scalar sampled at 4 * degree_bound + 1 angles of every circle."""
    out = []
    count = 4 * v.degree_bound + 1
    t = _angles(count)
    for k, circle in enumerate(v.circles):
        a, b, r = circle.as_floats()
        near = stacked_evaluator([v.tangential[k]], center=circle.center)
        vals = np.asarray(near(a + r * np.cos(t), b + r * np.sin(t))[0], dtype=float)
        vals = np.broadcast_to(vals, t.shape)
        peak = float(np.max(np.abs(vals)))
        ok = peak > 0 and (bool(np.all(vals > 0)) or bool(np.all(vals < 0)))
        ok = ok and float(np.min(np.abs(vals))) > NONVANISHING_RATIO * peak
        name = f"nonvanishing[{k}]"
        if ok:
            out.append(Verdict(name, PASS))
            continue
        worst = float(t[int(np.argmin(np.abs(vals)))])
        if k >= v.base_count or k in v.omitted:
            reason = "curve of equilibria" if k in v.omitted else "homoclinic helper circle"
            out.append(Verdict(name, EXPECTED, reason, {"angle": worst}))
        else:
            out.append(Verdict(name, FAIL, "tangential factor vanishes on the cycle", {"angle": worst}))
    return out


def check_tangency(v: VectorField) -> List[Verdict]:
    """f_k divides P f_k,x + Q f_k,y exactly."""
    out = []
    for k, circle in enumerate(v.circles):
        f = circle.f
        flow = v.P * f.diff_x() + v.Q * f.diff_y()
        out.append(_verdict(f"tangency[{k}]", exact_divide(flow, f) is not None))
    return out


def _abs_poly(p: BivariatePolynomial) -> BivariatePolynomial:
    return BivariatePolynomial({m: abs(c) for m, c in p.items()})


def check_restriction(v: VectorField) -> List[Verdict]:
    """Built field against its closed tangential form on each circle."""
    out = []
    t = _angles(RESTRICTION_SAMPLES)
    absP, absQ = _abs_poly(v.P), _abs_poly(v.Q)
    eps = float(np.finfo(float).eps)
    for k, circle in enumerate(v.circles):
        a, b, r = circle.as_floats()
        xs, ys = a + r * np.cos(t), b + r * np.sin(t)
        pq = v.evaluate(xs, ys)
        s = np.broadcast_to(np.asarray(v.tangential[k].evaluate(xs, ys), dtype=float), t.shape)
        want_p = -s * (2 * (ys - b))
        want_q = s * (2 * (xs - a))
        err = float(np.max(np.hypot(pq[0] - want_p, pq[1] - want_q)))
        ax, ay = np.abs(xs), np.abs(ys)
        absT = _abs_poly(v.tangential[k])
        rounding = float(np.max(absP.evaluate(ax, ay) + absQ.evaluate(ax, ay) + 2 * r * absT.evaluate(ax, ay)))
        scale = float(np.max(np.hypot(want_p, want_q)))
        allowed = 1e-9 * scale + 1e3 * eps * rounding
        out.append(_verdict(f"restriction[{k}]", err <= allowed, f"max deviation {err:.3e}", deviation=format_float(err)))
    return out


def _first_integral_points(v: VectorField) -> List[tuple]:
    pts = []
    t = _angles(FIRST_INTEGRAL_ANGLES) + 0.1
    for k, circle in enumerate(v.circles):
        a, b, r = circle.as_floats()
        gap = analysis.cycle_clearance(v, k) / 3
        for rho in (r - gap, r + gap):
            pts.extend((a + rho * math.cos(th), b + rho * math.sin(th)) for th in t)
    return pts


def check_first_integral(v: VectorField) -> Verdict:
    """X . grad(ln G) vanishes (relative to |X| |grad ln G|) at sample points."""
    data = darboux_data(v)
    worst = 0.0
    for x, y in _first_integral_points(v):
        grad = data.gradient_log(x, y)
        pq = v.local(v.center_near(x, y))(x, y)
        denom = float(np.hypot(*pq) * np.hypot(*grad))
        if denom == 0.0:
            continue
        worst = max(worst, abs(float(pq[0] * grad[0] + pq[1] * grad[1])) / denom)
    return _verdict(
        "first_integral",
        worst <= FIRST_INTEGRAL_TOL,
        f"max relative X.grad(ln G) = {worst:.3e}",
        kind=data.kind,
        worst=format_float(worst),
    )


# ---------- отчёт ----------
@dataclass
class CycleReport:
    index: int
    prescribed: Dict[str, Any]
    measured: Dict[str, Any] = field(default_factory=dict)
    verdicts: List[Verdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(vd.failed for vd in self.verdicts)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "prescribed": self.prescribed,
            "measured": self.measured,
            "passed": self.passed,
            "checks": [vd.to_dict() for vd in self.verdicts],
        }


@dataclass
class VerificationReport:
    mode: str
    summary: Dict[str, Any]
    checks: List[Verdict]
    cycles: List[CycleReport]

    @property
    def passed(self) -> bool:
        return not any(vd.failed for vd in self.checks) and all(c.passed for c in self.cycles)

    def failures(self) -> List[str]:
        names = [vd.name for vd in self.checks if vd.failed]
        for c in self.cycles:
            names.extend(f"cycle[{c.index}].{vd.name}" for vd in c.verdicts if vd.failed)
        return names

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "passed": self.passed,
            "summary": self.summary,
            "checks": [vd.to_dict() for vd in self.checks],
            "cycles": [c.to_dict() for c in self.cycles],
        }


def _base_configuration(v: VectorField) -> Optional[Configuration]:
    src = v.source
    if isinstance(src, AugmentedConfiguration):
        return src.base
    if isinstance(src, Configuration):
        return src
    return None


def _sign(x: float) -> int:
    return 1 if x > 0 else -1


def _cycle_report(v: VectorField, k: int, cfg: Optional[Configuration], idx: NestingIndex) -> CycleReport:
    circle = v.circles[k]
    spec = cfg.cycles[k] if cfg is not None else None
    prescribed: Dict[str, Any] = {}
    if spec is not None:
        prescribed = {
            "period": format_float(spec.period),
            "multiplicity": spec.multiplicity,
            "interior_stability": spec.interior_stability,
            "exterior_stability": spec.exterior_stability,
        }
    rep = CycleReport(index=k, prescribed=prescribed)
    m_field = v.multiplicities[k]
    tol = settings.TOL_REPORT
    clearance = analysis.cycle_clearance(v, k)

    # период
    def _period() -> Verdict:
        pm = analysis.measure_period(v, circle)
        rep.measured["period_quadrature"] = format_float(pm.quadrature)
        rep.measured["period_ode"] = format_float(pm.ode)
        if pm.discrepancy > tol:
            return Verdict("period_oracles", FAIL, f"quadrature/ODE discrepancy {pm.discrepancy:.3e}")
        if spec is None or v.mode not in PERIOD_MODES:
            return Verdict("period", SKIPPED, f"mode {v.mode.value} does not prescribe periods")
        rel = abs(pm.quadrature - spec.period) / spec.period
        return _verdict("period", rel <= tol, f"relative error {rel:.3e}", relative_error=format_float(rel))

    rep.verdicts.append(_guarded("period", _period))

    # устойчивость и кратность
    formula = expected_stability(idx, k)
    estimate = None
    try:
        estimate = analysis.estimate_stability_and_multiplicity(v, circle)
    except Indeterminate as exc:
        estimate = exc.partial
        rep.verdicts.append(Verdict("multiplicity_numeric", SKIPPED, str(exc)))
    except RealizationError as exc:
        rep.verdicts.append(Verdict("stability", FAIL, str(exc), exc.to_dict()))
    except (ValueError, ArithmeticError) as exc:
        rep.verdicts.append(Verdict("stability", FAIL, f"{type(exc).__name__}: {exc}"))

    if estimate is not None:
        rep.measured["interior_stability"] = estimate.interior
        rep.measured["exterior_stability"] = estimate.exterior
        rep.measured["stability_source"] = [estimate.interior_source, estimate.exterior_source]
        rep.verdicts.append(
            _verdict("stability_formula", estimate.interior == formula, f"measured {estimate.interior}, nesting gives {formula}")
        )
        if spec is not None:
            rep.verdicts.append(
                _verdict(
                    "interior_stability",
                    estimate.interior == spec.interior_stability,
                    f"measured {estimate.interior}, prescribed {spec.interior_stability}",
                )
            )
            rep.verdicts.append(
                _verdict(
                    "exterior_stability",
                    estimate.exterior == spec.exterior_stability,
                    f"measured {estimate.exterior}, prescribed {spec.exterior_stability}",
                )
            )
        if estimate.slope is not None:
            rep.measured["multiplicity_slope"] = format_float(estimate.slope)
            rep.measured["multiplicity_estimate"] = estimate.multiplicity
            close = abs(estimate.slope - m_field) <= settings.MULTIPLICITY_SLOPE_TOL
            if close:
                rep.verdicts.append(Verdict("multiplicity_numeric", PASS))
            elif m_field >= 4:
                rep.verdicts.append(Verdict("multiplicity_numeric", SKIPPED, "indeterminate at double precision"))
            else:
                rep.verdicts.append(Verdict("multiplicity_numeric", FAIL, f"slope {estimate.slope:.3f} vs {m_field}"))

    rep.measured["vanishing_order"] = vanishing_order(v.V, circle.f)
    if spec is not None:
        rep.verdicts.append(
            _verdict(
                "multiplicity",
                rep.measured["vanishing_order"] == spec.multiplicity,
                f"vanishing order {rep.measured['vanishing_order']}, prescribed {spec.multiplicity}",
            )
        )

    # вычет
    def _residue() -> Verdict:
        value = analysis.residue_integral(v, circle, clearance / 3)
        want = 4 * math.pi * idx.primaries_inside[k]
        rep.measured["residue"] = format_float(value)
        return _verdict("residue", abs(value - want) <= tol, f"{value:.12g} vs {want:.12g}", expected=format_float(want))

    rep.verdicts.append(_guarded("residue", _residue))

    # дивергенция
    def _divergence() -> Verdict:
        value = analysis.divergence_period_integral(v, circle)
        rep.measured["divergence_integral"] = format_float(value)
        if v.mode in (Mode.LR, Mode.T):
            want = formula * 4 * math.pi * idx.primaries_inside[k] / float(v.tau[k])
            return _verdict("divergence", abs(value - want) <= tol, f"{value:.12g} vs {want:.12g}", expected=format_float(want))
        if m_field != 1:
            return Verdict("divergence", SKIPPED, "non-hyperbolic cycle")
        return _verdict("divergence", _sign(value) == formula, f"sign {_sign(value)} vs {formula}")

    rep.verdicts.append(_guarded("divergence", _divergence))
    return rep


def assemble_report(v: VectorField, aug: Optional[AugmentedConfiguration] = None) -> VerificationReport:
    """Run every symbolic check and every per-cycle measurement. Never raises
    on measurement problems; they become failed verdicts."""
    if aug is None and isinstance(v.source, AugmentedConfiguration):
        aug = v.source
    cfg = _base_configuration(v)
    idx = index_circles(v.circles, v.multiplicities)
    checks: List[Verdict] = []
    checks.append(_guarded("inverse_integrating_factor", lambda: check_inverse_integrating_factor(v)))
    checks.append(check_degree_bound(v))
    checks.extend(check_vanishing_orders(v))
    checks.extend(check_tangency(v))
    checks.extend(check_nonvanishing_on_cycles(v))
    checks.extend(check_restriction(v))
    checks.append(_guarded("first_integral", lambda: check_first_integral(v)))

    cycles = map_ordered(lambda k: _cycle_report(v, k, cfg, idx), range(v.base_count), settings.WORKERS)

    summary: Dict[str, Any] = {
        "n": v.base_count,
        "r": idx.r,
        "degree": v.degree,
        "degree_bound": v.degree_bound,
        "tau": [format_rational(t) for t in v.tau],
    }
    if aug is not None:
        summary.update(
            {
                "N": aug.N,
                "N_stated": aug.N_stated,
                "n1": aug.n1,
                "n2": aug.n2,
                "n2_stated": aug.n2_stated,
                "epsilon": format_rational(aug.epsilon),
            }
        )
    report = VerificationReport(mode=v.mode.value, summary=summary, checks=checks, cycles=cycles)
    log_event(
        "report_assembled",
        level="INFO" if report.passed else "WARNING",
        message=f"report {'passed' if report.passed else 'failed'}: {len(report.failures())} failing checks",
        mode=v.mode.value,
        failures=report.failures()[:20],
    )
    return report
