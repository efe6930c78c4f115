import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enso_mz.params import (
    ParamError, PhysicalParams, ScalingError, background_forcing, dimensionalize_time, discrepancy_report,
    load_params, local_coeffs, save_params, scale, schema,
)

# independent high-precision evaluations (mpmath, 30 digits) at the default constants
F_09 = -0.154354353857760255
CT_E = 1.32729945201577712
CH_E = 33.7893041075081130
CS_STAR = 2.59975097495665357
CL_STAR = 1.45533132448878287


def test_background_forcing_values():
    assert background_forcing(0.57) == pytest.approx(-0.528, abs=1e-15)
    assert background_forcing(0.9) == pytest.approx(F_09, rel=1e-14)
    with pytest.raises(ParamError):
        background_forcing(1.14)
    with pytest.raises(ParamError):
        background_forcing(-0.1)


def test_local_coeffs_defaults():
    p = PhysicalParams()
    cT, ch = local_coeffs(p, p.x_E)
    assert cT == pytest.approx(CT_E, rel=1e-13)
    assert ch == pytest.approx(CH_E, rel=1e-13)
    s = scale(p)
    assert s.eps_w == pytest.approx(0.69375, rel=1e-15)
    assert s.alpha0 == 1.0


def test_local_coeffs_vectorised_matches_scalar():
    p = PhysicalParams()
    xs = np.linspace(0, 1, 11)
    cT, ch = local_coeffs(p, xs)
    for x, a, b in zip(xs, cT, ch):
        assert (a, b) == pytest.approx(local_coeffs(p, float(x)), rel=1e-14)


def test_ch_vanishes_where_forcing_positive():
    p = PhysicalParams()
    # F > 0 far from x0: the switch closes the thermocline feedback
    x = 0.0
    assert background_forcing(x) > 0
    assert abs(local_coeffs(p, x)[1]) < 1e-12


def test_scale_defaults_locked():
    s = scale(PhysicalParams())
    assert s.cS_star == pytest.approx(CS_STAR, rel=1e-13)
    assert s.cL_star == pytest.approx(CL_STAR, rel=1e-13)
    assert s.d == 3.4 and s.d_short == pytest.approx(0.4, abs=1e-15)
    assert s.A_rW == pytest.approx(2.0, abs=1e-15) and s.A_rE == 0.0
    assert s.beta == pytest.approx(1 / 64)
    # locked values (published point not reproduced, see discrepancy report)
    assert s.alpha == pytest.approx(1.14372241162102314, rel=1e-12)
    assert s.gamma == pytest.approx(0.489451310990312223, rel=1e-12)
    assert s.delta == pytest.approx(4.32633517799897993, rel=1e-12)


def test_scale_internal_consistency():
    s = scale(PhysicalParams(theta=2.4, A0=0.35, y_n=2.6))
    g = s.cS_star - s.cT_E
    assert s.alpha == pytest.approx(s.cL_star / g, rel=1e-15)
    assert s.gamma == pytest.approx(g / s.cS_star, rel=1e-15)
    assert s.delta == pytest.approx(g * s.d, rel=1e-15)
    assert 0 < s.gamma < 1


def test_scale_error_on_nonpositive_growth():
    with pytest.raises(ScalingError, match="non-positive growth rate"):
        scale(PhysicalParams(A0=0.01))


def test_dimensionalize_time():
    p = PhysicalParams()
    s = scale(p)
    assert dimensionalize_time(s, 0.0) == 0.0
    assert p.crossing_time == pytest.approx(7.5e6)
    # delta in scaled time is d basin crossings
    assert dimensionalize_time(s, s.delta) == pytest.approx(s.d * 7.5e6, rel=1e-14)


def test_discrepancy_report_records_values():
    rep = discrepancy_report()
    assert rep["scaled"]["gamma"]["within_tolerance"]
    assert not rep["all_within_tolerance"]
    assert rep["scaled"]["alpha"]["computed"] == pytest.approx(scale(PhysicalParams()).alpha)
    json.dumps(rep)


@settings(max_examples=40, deadline=None)
@given(c_se=st.floats(0.1, 5.0))
def test_scaled_parameters_independent_of_cse(c_se):
    a, b = scale(PhysicalParams()), scale(PhysicalParams(c_se=c_se))
    assert (b.alpha, b.gamma, b.delta) == (a.alpha, a.gamma, a.delta)
    assert b.beta == pytest.approx((c_se / 8.0) ** 2)


@settings(max_examples=30, deadline=None)
@given(field=st.sampled_from(["eps_T", "tau0", "b_w", "H1", "H", "H_star", "a_M", "T0"]),
       factor=st.floats(0.5, 2.0))
def test_delays_depend_only_on_geometry(field, factor):
    p = PhysicalParams()
    try:
        s = scale(p.replace(**{field: getattr(p, field) * factor}))
    except ParamError:  # invalid combination or undefined scaling
        return
    assert s.d == 3.4 and s.d_short == pytest.approx(0.4, abs=1e-15)


@given(lo=st.floats(0.0, 0.99), gap=st.floats(1e-6, 1.0))
def test_A_rE_monotone(lo, gap):
    hi = min(1.0, lo + gap)
    assert PhysicalParams(r_E=lo).A_rE < PhysicalParams(r_E=hi).A_rE
    assert PhysicalParams(r_E=0.0).A_rE == 0.0


@pytest.mark.parametrize("bad", [dict(x_w=0.95), dict(y_n=0.9), dict(T0=20.0), dict(L=-1.0), dict(r_E=-0.1)])
def test_invalid_params_rejected(bad):
    with pytest.raises(ParamError):
        PhysicalParams(**bad)


def test_param_file_roundtrip(tmp_path):
    p = PhysicalParams(theta=2.2, A0=0.3)
    f = tmp_path / "p.json"
    save_params(p, f)
    assert load_params(f) == p
    assert load_params(f, {"params.theta": 3.4}).theta == 3.4
    assert set(schema()["properties"]) >= set(p.to_dict())


def test_param_file_unknown_key(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({"thetta": 2.0}))
    with pytest.raises(ParamError, match="unknown"):
        load_params(f)
    f.write_text("{not json")
    with pytest.raises(ParamError, match="malformed"):
        load_params(f)
