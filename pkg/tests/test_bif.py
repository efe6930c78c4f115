import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enso_mz import bif, dde
from enso_mz.bif import CharCoeffs, char_coeffs, equilibria, hopf_curve, hopf_residual, rightmost_root


def test_equilibria_fig3():
    e = equilibria(0.93, 0.49)
    assert e.values[2] == pytest.approx(0.358616157487086555, rel=1e-14)
    assert e.values[0] == -e.values[2] and 0.0 in e.values


def test_equilibria_special_cases():
    assert equilibria(1.0, 0.3).values == (0.0,) and equilibria(1.0, 0.3).pitchfork
    assert equilibria(0.5, 0.0).values[2] == pytest.approx(math.sqrt(0.5))
    with pytest.raises(ValueError):
        equilibria(0.5, 1.0)


@settings(max_examples=50, deadline=None)
@given(gamma=st.floats(0.0, 0.99), frac=st.floats(1e-6, 0.99))
def test_pitchfork_count(gamma, frac):
    # locally around alpha = 1, i.e. below the singular point alpha = 1/gamma
    da = frac * min(0.5, (1.0 / gamma - 1.0) if gamma > 0 else 0.5)
    assert len(equilibria(1.0 - da, gamma).values) == 3
    assert len(equilibria(1.0 + da, gamma).values) == 1


@pytest.mark.parametrize("kind", ["SS", "VoC", "MZ"])
def test_equilibria_are_fixed_points(kind):
    a, g = 0.7, 0.4 if kind != "SS" else 0.0
    for T in equilibria(a, g).values:
        rhs = dde.DelayModel.scaled(kind, a, g, 1.0).rhs(np.array(T), [np.array(T)])
        assert abs(rhs) < 1e-14


def test_char_coeffs_table():
    T0 = 0.4
    T2 = T0 * T0
    c = char_coeffs("VoC", 0.8, 0.3, 2.0, T0)
    assert (c.a, c.b) == pytest.approx((1 - 3 * T2 + 2 * 0.8 * 0.3 * T2, -0.8 * (1 - 0.3 * T2)))
    c = char_coeffs("MZ", 0.8, 0.3, 2.0, T0)
    assert (c.a, c.b) == pytest.approx((1 - 3 * T2, -0.8 * (1 - 3 * 0.3 * T2)))
    c = char_coeffs("SS", 0.8, 0.3, 2.0, T0)
    assert (c.a, c.b) == pytest.approx((1 - 3 * T2, -0.8))


@pytest.mark.parametrize("kind", ["VoC", "MZ"])
def test_char_coeffs_match_numerical_jacobian(kind):
    a, g, T0, h = 0.7, 0.4, 0.35, 1e-6
    m = dde.DelayModel.scaled(kind, a, g, 1.0)
    f = lambda T, Td: float(m.rhs(np.array(T), [np.array(Td)]))
    c = char_coeffs(kind, a, g, 1.0, T0)
    assert (f(T0 + h, T0) - f(T0 - h, T0)) / (2 * h) == pytest.approx(c.a, abs=1e-8)
    assert (f(T0, T0 + h) - f(T0, T0 - h)) / (2 * h) == pytest.approx(c.b, abs=1e-8)


def test_rightmost_root_analytic_hopf():
    lam = rightmost_root(CharCoeffs(1.0, -math.sqrt(2.0), math.pi / 4))
    assert abs(lam - 1j) < 1e-12
    assert abs(CharCoeffs(1.0, -math.sqrt(2.0), math.pi / 4).residual(lam)) < 1e-10


def test_rightmost_root_limits():
    assert rightmost_root(CharCoeffs(0.3, 0.0, 2.0)) == 0.3
    assert rightmost_root(CharCoeffs(0.3, -0.5, 0.0)) == pytest.approx(-0.2)
    with pytest.raises(ValueError):
        rightmost_root(CharCoeffs(0.3, -0.5, -1.0))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-1, 1), b=st.floats(-2, 2), delta=st.floats(0.1, 5))
def test_root_residual(a, b, delta):
    c = CharCoeffs(a, b, delta)
    lam = rightmost_root(c)
    assert abs(c.residual(lam)) < 1e-10 * max(1.0, abs(lam))


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.2, 1.0), b=st.floats(-2, -0.3), delta=st.floats(0.3, 3), c_=st.floats(0.5, 2.0))
def test_time_scaling_invariance(a, b, delta, c_):
    lam = rightmost_root(CharCoeffs(a, b, delta))
    lam_c = rightmost_root(CharCoeffs(a / c_, b / c_, delta * c_))
    assert lam_c == pytest.approx(lam / c_, abs=1e-8)
    assert (lam.real < 0) == (lam_c.real < 0) or abs(lam.real) < 1e-9


def test_hopf_trivial_contains_analytic_point():
    curve = hopf_curve(0.49, "trivial", (0.5, 1.5), 3)
    pt = curve.points[1]
    assert pt.omega == 1.0
    assert pt.alpha == pytest.approx(math.sqrt(2.0), abs=1e-14)
    assert pt.delta == pytest.approx(math.pi / 4, abs=1e-14)
    assert hopf_residual(pt, "VoC", 0.49, "trivial") < 1e-10


def test_hopf_trivial_limit_at_pitchfork():
    pt = hopf_curve(0.0, "trivial", (1e-4, 1.0), 2).points[0]
    assert pt.alpha == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("kind,gamma", [("SS", 0.0), ("VoC", 0.49), ("MZ", 0.49)])
def test_hopf_nontrivial_residuals(kind, gamma):
    curve = hopf_curve(gamma, "nontrivial", (0.05, 2.0), 40, kind=kind)
    assert len(curve.points) > 10
    for pt in curve.points:
        assert 0 < pt.alpha < 1
        assert hopf_residual(pt, kind, gamma, "nontrivial") < 1e-10


def test_ss_nontrivial_branch_delta_decreasing():
    pts = [p for p in hopf_curve(0.0, "nontrivial", (0.05, 2.0), 60, kind="SS").points if p.alpha > 0.75]
    d = np.array([p.delta for p in pts])
    assert len(pts) > 5 and np.all(np.diff(d) < 0)


def test_hopf_bad_inputs():
    with pytest.raises(ValueError):
        hopf_curve(0.3, "trivial", (0.0, 1.0))
    with pytest.raises(ValueError):
        hopf_curve(0.3, "sideways")


@pytest.mark.parametrize("omega", [0.6, 1.0])
def test_hopf_consistency_with_simulation(omega):
    pt = next(p for p in hopf_curve(0.49, "trivial", (omega, omega + 1), 2).points)
    above = dde.integrate(dde.DelayModel.scaled("VoC", pt.alpha, 0.49, pt.delta + 0.05), history=0.01,
                          t_end=120 * pt.delta)
    est = dde.measure_period(above)
    assert est.oscillating
    assert est.period == pytest.approx(2 * math.pi / pt.omega, rel=0.15)
    below = dde.integrate(dde.DelayModel.scaled("VoC", pt.alpha, 0.49, pt.delta - 0.05), history=0.01,
                          t_end=120 * pt.delta)
    assert not dde.measure_period(below).oscillating


def test_stability_matches_simulation():
    assert bif.is_stable(char_coeffs("VoC", 1.2, 0.49, 0.6))
    assert not bif.is_stable(char_coeffs("VoC", 1.2, 0.49, 1.5))
    assert not bif.is_stable(char_coeffs("VoC", 0.5, 0.49, 1.0))  # T00 unstable for alpha < 1


def test_oscillation_boundary_ordering():
    al = np.array([0.8, 0.9, 0.93])
    ss = bif.oscillation_boundary("SS", 0.0, al, tol=0.05)
    voc = bif.oscillation_boundary("VoC", 0.49, al, tol=0.05)
    assert not ss.flagged.any() and not voc.flagged.any()
    assert np.all(voc.delta > ss.delta)
    assert ss.delta[-1] < 4.8
    with pytest.raises(ValueError):
        bif.oscillation_boundary("SS", 0.0, [1.2])


def test_period_sweep_small_grid():
    g = bif.period_sweep(ranges={"theta": (2.8, 3.2, 0.2), "A0": (0.2, 0.2, 0.05)})
    assert len(g.cells) == 3
    for c in g.cells:
        if c["class_VoC"] == "oscillating":
            assert c["period_VoC"] > 0 and c["period_years_VoC"] > 0
            assert c["period_VoC"] > c["period_SS"]
    bad = bif.period_sweep(ranges={"A0": (0.01, 0.01, 0.05)})
    assert bad.cells[0]["class_VoC"] == "error"


def test_grid_values_table1():
    assert len(bif.grid_values(*bif.TABLE1_RANGES["theta"])) == 16
    assert len(bif.grid_values(*bif.TABLE1_RANGES["A0"])) == 11
    assert len(bif.grid_values(*bif.TABLE1_RANGES["y_n"])) == 11
