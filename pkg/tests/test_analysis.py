from fractions import Fraction
import math
from pathlib import Path
import sys

import numpy as np
import pandas as pd
import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))

from app.services import analysis
from app.services.configuration import Circle, validate_configuration
from app.services.construct import Mode, build_field, build_Xm, build_XT
from app.services.errors import QuadratureNotConverged, TestCircleInvalid
from tests.corpus import CASES, cfg, cyc

TWO_PI = 2 * math.pi
UNIT = Circle((0, 0), 1)


@pytest.fixture(scope="module")
def lr_unit():
    c = cfg(cyc(0, 0, 1))
    return build_XT(c, validate_configuration(c), [1], mode=Mode.LR)


@pytest.fixture(scope="module")
def xt_unit_fast():
    c = cfg(cyc(0, 0, 1))
    return build_XT(c, validate_configuration(c), [2])


@pytest.fixture(scope="module")
def xm_double():
    c = cfg(cyc(0, 0, 1, m=2))
    return build_Xm(c, validate_configuration(c))


@pytest.fixture(scope="module")
def lr_nested():
    c = cfg(cyc(0, 0, 1), cyc(0, 0, 2))
    return build_XT(c, validate_configuration(c), [1, 1], mode=Mode.LR)


# ---------- квадратура ----------
def test_quadrature_closed_forms(lr_unit):
    assert analysis.circle_quadrature(lambda xs, ys: np.ones_like(xs), UNIT) == pytest.approx(TWO_PI, rel=1e-14)
    assert abs(analysis.circle_quadrature(lambda xs, ys: xs, UNIT)) < 1e-12

    def inv_speed(xs, ys):
        pq = lr_unit.evaluate(xs, ys)
        return 1.0 / np.hypot(pq[0], pq[1])

    assert analysis.circle_quadrature(inv_speed, UNIT) == pytest.approx(math.pi, rel=1e-13)


def test_quadrature_gives_up():
    with pytest.raises(QuadratureNotConverged):
        analysis.circle_quadrature(lambda xs, ys: np.abs(ys) ** 0.1, UNIT, rtol=1e-15, max_panels=8)


def test_quadrature_chunks_stay_bounded():
    seen = []

    def rough(xs, ys):
        seen.append(xs.size)
        return np.abs(ys) ** 0.1

    with pytest.raises(QuadratureNotConverged):
        analysis.circle_quadrature(rough, UNIT, rtol=1e-15, max_panels=2**12, noise_rtol=0.0)
    assert max(seen) <= analysis.CHUNK_NODES


def test_quadrature_accepts_noise_floor():
    rng = np.random.default_rng(7)

    def noisy(xs, ys):
        return 1.0 + 1e-10 * rng.standard_normal(xs.shape)

    got = analysis.circle_quadrature(noisy, UNIT, max_panels=2**14)
    assert got == pytest.approx(TWO_PI, rel=1e-9)


def test_quadrature_of_zero():
    assert analysis.circle_quadrature(lambda xs, ys: np.zeros_like(xs), UNIT) == 0.0


def test_zero_integral_stops_at_noise():
    # интеграл нулевой, слагаемые порядка 1
    rng = np.random.default_rng(11)

    def odd(xs, ys):
        return ys * (1.0 + 1e-12 * rng.standard_normal(xs.shape))

    assert abs(analysis.circle_quadrature(odd, UNIT, max_panels=2**14)) < 1e-9


def test_period_far_from_origin():
    c = cfg(cyc(6, 0, 1))
    v = build_XT(c, validate_configuration(c), [1], mode=Mode.LR)
    circle = Circle((6, 0), 1)
    assert analysis.quadrature_period(v, circle) == pytest.approx(math.pi, rel=1e-12)
    pm = analysis.measure_period(v, circle)
    assert pm.discrepancy < 1e-8


# ---------- траектории ----------
def test_orbit_stays_on_cycle(xt_unit_fast):
    traj = analysis.integrate_orbit(xt_unit_fast, (1.0, 0.0), math.pi / 2, 1e-12)
    radii = np.hypot(traj.states[:, 0], traj.states[:, 1])
    assert np.max(np.abs(radii - 1.0)) < 1e-8
    assert traj.times[-1] == pytest.approx(math.pi / 2)


def test_orbit_reverses(lr_unit):
    forward = analysis.integrate_orbit(lr_unit, (1.0, 0.0), math.pi, 1e-12)
    back = analysis.integrate_orbit(lr_unit, forward.end, -math.pi, 1e-12)
    assert np.allclose(back.end, [1.0, 0.0], atol=1e-7)


def test_equilibrium_start_does_not_move():
    v, aug = build_field(cfg(cyc(0, 0, 1, nu=-1)), Mode.FULL)
    q = tuple(float(c) for c in aug.singular_points[0])
    traj = analysis.integrate_orbit(v, q, 1.0)
    assert np.allclose(traj.end, q, atol=1e-9)


def test_trajectory_csv(tmp_path, lr_unit):
    traj = analysis.integrate_orbit(lr_unit, (1.0, 0.0), 1.0, 1e-10)
    path = traj.to_csv(tmp_path / "orbit.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["t", "x", "y"]
    assert len(frame) == len(traj.times)


def test_orbit_tolerance_is_checked(lr_unit):
    with pytest.raises(ValueError):
        analysis.integrate_orbit(lr_unit, (1.0, 0.0), 1.0, 1e-3)


# ---------- периоды ----------
def test_periods(lr_unit, xt_unit_fast):
    pm = analysis.measure_period(lr_unit, UNIT)
    assert pm.quadrature == pytest.approx(math.pi, rel=1e-9)
    assert pm.discrepancy < 1e-8
    assert analysis.measure_period(xt_unit_fast, UNIT).value == pytest.approx(math.pi / 2, rel=1e-9)


def test_return_time_tends_to_period(lr_unit):
    obs = analysis.poincare_return(lr_unit, UNIT, 1e-6, direction=-1)
    assert obs.time == pytest.approx(math.pi, rel=1e-4)


# ---------- первое возвращение ----------
def test_unstable_cycle_pushes_out(lr_unit):
    obs = analysis.poincare_return(lr_unit, UNIT, 0.01)
    assert obs.forward_displacement > 0
    assert obs.stability == 1
    assert obs.side == "exterior"


def test_semistable_double_cycle(xm_double):
    inside = analysis.poincare_return(xm_double, UNIT, -0.01)
    outside = analysis.poincare_return(xm_double, UNIT, 0.01)
    assert inside.forward_displacement > 0  # к циклу изнутри
    assert inside.stability == -1
    assert outside.stability == 1


def test_return_offset_must_fit_annulus(lr_unit):
    with pytest.raises(ValueError):
        analysis.poincare_return(lr_unit, UNIT, 0.6)


# ---------- интегралы ----------
def test_divergence_integrals(lr_unit, xt_unit_fast, lr_nested):
    assert analysis.divergence_period_integral(lr_unit, UNIT) == pytest.approx(4 * math.pi, abs=1e-6)
    assert analysis.divergence_period_integral(xt_unit_fast, UNIT) == pytest.approx(2 * math.pi, abs=1e-6)
    assert analysis.divergence_period_integral(lr_nested, UNIT) == pytest.approx(-4 * math.pi, abs=1e-6)


def test_residues(lr_unit, lr_nested):
    assert analysis.residue_integral(lr_unit, UNIT, 0.1) == pytest.approx(4 * math.pi, abs=1e-6)
    assert analysis.residue_integral(lr_nested, Circle((0, 0), 2), 0.2) == pytest.approx(4 * math.pi, abs=1e-6)
    far = Circle((10, 0), 1)
    assert abs(analysis.residue_integral(lr_unit, far, 0.5)) < 1e-8


def test_residue_test_circle_must_avoid_cycles(lr_unit):
    with pytest.raises(TestCircleInvalid):
        analysis.residue_integral(lr_unit, Circle((0, 0), Fraction(1, 2)), 0.5)


def test_flux_signs(lr_unit, xm_double, lr_nested):
    assert analysis.flux_sign(lr_unit, UNIT, 0.1) == -1
    assert analysis.flux_sign(xm_double, UNIT, 0.1) == 1
    assert analysis.flux_sign(lr_nested, UNIT, 0.1) == 1


def test_cycle_clearance(lr_nested):
    assert analysis.cycle_clearance(lr_nested, 0) == pytest.approx(1.0)
    assert analysis.cycle_clearance(lr_nested, 1) == pytest.approx(1.0)


# ---------- устойчивость и кратность ----------
def test_estimate_hyperbolic(lr_unit):
    est = analysis.estimate_stability_and_multiplicity(lr_unit, UNIT)
    assert (est.interior, est.exterior) == (1, 1)
    assert est.multiplicity == 1


def test_estimate_double(xm_double):
    est = analysis.estimate_stability_and_multiplicity(xm_double, UNIT)
    assert (est.interior, est.exterior) == (-1, 1)
    assert abs(est.slope - 2) <= 0.25
    assert est.multiplicity == 2


def test_estimate_triple():
    c = cfg(cyc(0, 0, 1, m=3))
    v = build_Xm(c, validate_configuration(c))
    est = analysis.estimate_stability_and_multiplicity(v, UNIT)
    assert (est.interior, est.exterior) == (1, 1)
    assert abs(est.slope - 3) <= 0.25
    assert est.multiplicity == 3


# ---------- корпус ----------
@pytest.mark.parametrize("case", CASES, ids=lambda c: c.name)
def test_quadrature_and_ode_periods_agree(case):
    mode = "t" if case.hyperbolic else "tm"
    v, _ = build_field(case.for_mode(mode), mode)
    for k, spec in enumerate(case.config.cycles):
        pm = analysis.measure_period(v, v.circles[k])
        assert pm.discrepancy < 1e-8, (k, pm)
        assert pm.quadrature == pytest.approx(spec.period, rel=1e-8), k
