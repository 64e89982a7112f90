from fractions import Fraction as Fr
import math
from pathlib import Path
import sys

import numpy as np
import pytest
import sympy as sp

sys.path.append(str(Path(__file__).resolve().parents[1]))

from app.services import analysis
from app.services.configuration import validate_configuration
from app.services.construct import (
    Mode,
    apply_hole_factor,
    auxiliaries,
    build_field,
    build_realizing_field,
    build_Xm,
    build_XT,
    build_XTm,
    compute_tau,
    darboux_data,
)
from app.services.errors import InvalidInput
from app.services.ratpoly import BivariatePolynomial as BP
from app.services.verify import check_degree_bound, check_inverse_integrating_factor
from tests.corpus import CASES, case, cfg, cyc

x, y = sp.symbols("x y")


def to_sympy(p: BP) -> sp.Expr:
    return sp.expand(sum(sp.Rational(c.numerator, c.denominator) * x**i * y**j for (i, j), c in p.items()))


def unit(**kw):
    c = cfg(cyc(0, 0, 1, **kw))
    return c, validate_configuration(c)


# ---------- X_T ----------
def test_xt_unit_circle_closed_form():
    c, idx = unit()
    v = build_XT(c, idx, [1])
    f, g = x**2 + y**2 - 1, x**2 + y**2
    assert to_sympy(v.P) == sp.expand(f * (2 * x - 2 * y) - g * 2 * y)
    assert to_sympy(v.Q) == sp.expand(f * (2 * x + 2 * y) + g * 2 * x)
    assert to_sympy(v.V) == sp.expand(f * g)
    assert v.evaluate(1.0, 0.0).tolist() == [0.0, 2.0]
    assert v.degree == 3 and v.degree_bound == 4


def test_xt_nested_pair_against_sympy():
    c = cfg(cyc(0, 0, 1), cyc(Fr(1, 2), 0, 3))
    idx = validate_configuration(c)
    tau = [Fr(2), Fr(1, 3)]
    v = build_XT(c, idx, tau)
    f1 = x**2 + y**2 - 1
    f2 = (x - sp.Rational(1, 2)) ** 2 + y**2 - 9
    B = x**2 + y**2
    A = f1 * f2
    P = A * (sp.diff(B, x) - sp.diff(B, y)) - B * (2 * f2 * sp.diff(f1, y) + sp.Rational(1, 3) * f1 * sp.diff(f2, y))
    Q = A * (sp.diff(B, x) + sp.diff(B, y)) + B * (2 * f2 * sp.diff(f1, x) + sp.Rational(1, 3) * f1 * sp.diff(f2, x))
    assert to_sympy(v.P) == sp.expand(P)
    assert to_sympy(v.Q) == sp.expand(Q)


# ---------- X_m и X_Tm ----------
def test_xm_with_simple_cycles_is_x_lr():
    c = cfg(cyc(0, 0, 1), cyc(4, 0, 1))
    idx = validate_configuration(c)
    lr = build_XT(c, idx, [1, 1], mode=Mode.LR)
    m = build_Xm(c, idx)
    assert (m.P, m.Q, m.V) == (lr.P, lr.Q, lr.V)


def test_xm_double_unit_circle():
    c, idx = unit(m=2)
    aux = auxiliaries(c, idx)
    assert aux.Lambda == 1
    assert aux.F == 2 * BP.y() and aux.G == 2 * BP.x()
    v = build_Xm(c, idx)
    assert v.evaluate(1.0, 0.0).tolist() == [0.0, 2.0]
    assert v.V.vanishing_order(c.circles[0].f) == 2
    assert v.degree <= 5 and v.degree_bound == 6


def test_xtm_reduces_to_xm_and_xt():
    c = cfg(cyc(0, 0, 1, m=2), cyc(0, 0, 2, m=3))
    idx = validate_configuration(c)
    xm = build_Xm(c, idx)
    xtm = build_XTm(c, idx, [1, 1])
    assert (xtm.P, xtm.Q) == (xm.P, xm.Q)

    simple = cfg(cyc(0, 0, 1), cyc(3, 0, 1))
    sidx = validate_configuration(simple)
    tau = [Fr(3, 2), Fr(5)]
    xt, xtm1 = build_XT(simple, sidx, tau), build_XTm(simple, sidx, tau)
    assert (xtm1.P, xtm1.Q, xtm1.V) == (xt.P, xt.Q, xt.V)


def test_xtm_restriction_scaling():
    c, idx = unit(m=2)
    v = build_XTm(c, idx, [3])
    assert v.evaluate(1.0, 0.0).tolist() == pytest.approx([0.0, 6.0], abs=1e-12)


# ---------- дырки ----------
def test_hole_factor():
    c, idx = unit()
    lr = build_XT(c, idx, [1], mode=Mode.LR)
    v = apply_hole_factor(lr, [(2, 0)])
    assert v.evaluate(2.0, 0.0).tolist() == pytest.approx([0.0, 0.0], abs=1e-12)
    assert v.degree == 5 and v.degree_bound == 6
    p = (0.3, -1.7)
    l = (p[0] - 2) ** 2 + p[1] ** 2
    assert np.allclose(v.evaluate(*p), l * lr.evaluate(*p), rtol=1e-13)
    assert check_inverse_integrating_factor(v).status == "pass"
    with pytest.raises(InvalidInput):
        apply_hole_factor(lr, [])


# ---------- tau ----------
def test_tau_closed_forms():
    c, idx = unit()
    assert compute_tau(c, 0, Mode.T, math.pi) == 1
    assert compute_tau(c, 0, Mode.T, math.pi / 2) == 2
    c2, _ = unit(m=2)
    tau = compute_tau(c2, 0, Mode.TM, 2.0)
    assert float(tau) == pytest.approx(math.pi / 2, rel=1e-12)


def test_tau_rejects_bad_period():
    c, _ = unit()
    with pytest.raises(InvalidInput):
        compute_tau(c, 0, Mode.T, -1.0)


# ---------- полный конвейер ----------
def test_realizing_field_bounds():
    v, aug = build_realizing_field(cfg(cyc(0, 0, 1, m=2, nu=-1)))
    assert aug.N == 1 and v.degree_bound == 6
    v, aug = build_realizing_field(cfg(cyc(0, 0, 1, m=1, nu=-1)))
    assert aug.N - aug.n == 1 and v.degree_bound == 8
    assert v.holes == aug.singular_points
    assert v.evaluate(*map(float, aug.singular_points[0])).tolist() == pytest.approx([0.0, 0.0], abs=1e-12)


def test_hyperbolic_field_bound():
    v, aug = build_field(cfg(cyc(0, 0, 1)), "ts")
    assert v.degree_bound == 2 * (3 * 1 + 1)
    assert v.degree < v.degree_bound
    assert aug.mode == "hyperbolic"


def test_remark_optimization_omits_helpers():
    v, aug = build_field(cfg(cyc(0, 0, 1, nu=-1)), Mode.FULL, remark=True)
    assert v.omitted == (1,)
    assert v.tangential[1].is_zero
    # вспомогательная окружность остаётся множителем V
    assert v.V.vanishing_order(aug.extra_circles[0].f) == 1
    assert darboux_data(v).omitted == (1,)


def test_mode_parse():
    assert Mode.parse("FULL") is Mode.FULL
    with pytest.raises(InvalidInput):
        Mode.parse("bogus")


# ---------- Дарбу ----------
def test_darboux_descriptions():
    c, idx = unit()
    d = darboux_data(build_XT(c, idx, [Fr(1, 2)]))
    assert d.kind == "A_T*B*C"
    assert d.factors == ((c.circles[0].f, Fr(1, 2)),)
    assert d.angular_centers == (((Fr(0), Fr(0)), -2),)
    assert d.exponential_terms == ()

    simple = cfg(cyc(0, 0, 1), cyc(3, 0, 1))
    assert darboux_data(build_Xm(simple, validate_configuration(simple))).Lambda == 0

    v, _ = build_field(cfg(cyc(0, 0, 1, m=3, nu=-1)), Mode.FULL)
    d = darboux_data(v)
    assert d.Lambda == 2
    (f, power, coeff), = d.exponential_terms
    assert power == -2 and coeff == Fr(2) * v.tau[0] / -2


def test_first_integral_is_constant_along_an_orbit():
    v, _ = build_field(cfg(cyc(0, 0, 1, T=2.0)), Mode.T)
    d = darboux_data(v)
    # за 0.2 угол растёт меньше чем на 1, разрез atan2 не пересекается
    start = (1.05 * math.cos(0.1), 1.05 * math.sin(0.1))
    traj = analysis.integrate_orbit(v, start, 0.2)
    values = [d.log_value(px, py) for px, py in traj.states]
    assert len(values) > 2
    assert max(values) - min(values) < 1e-7


# ---------- корпус ----------
@pytest.mark.parametrize("case", CASES, ids=lambda c: c.name)
def test_corpus_identities_and_bounds(case):
    for mode in case.modes:
        v, aug = build_field(case.for_mode(mode), mode)
        assert v.P * v.V.diff_x() + v.Q * v.V.diff_y() - v.V * v.divergence == BP(), mode
        assert check_degree_bound(v).status == "pass", (mode, v.degree, v.degree_bound)
        if mode == "full":
            r = validate_configuration(case.config).r
            want = 2 * (2 * (aug.N - aug.n) + r + sum(case.config.multiplicities))
            assert v.degree_bound == want


def test_far_circles_get_their_periods():
    # окружности в (3, 0) и (6, 0): значения поля там большие, квадратура должна сойтись
    c = case("row_of_three")
    for mode in ("t", "ts", "full"):
        v, _ = build_field(c.for_mode(mode), mode)
        for k, spec in enumerate(c.config.cycles):
            got = analysis.quadrature_period(v, v.circles[k])
            assert got == pytest.approx(spec.period, rel=1e-8), (mode, k)
