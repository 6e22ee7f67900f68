"""Thermodynamics: EOS validation, conversions, and their invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tovds import model
from tovds.errors import CausalityViolated, DomainExceeded, GammaNotAdmissible

P = model.ModelParams()


def poly15():
    return model.validate_spec(model.EosSpec(A=1.0, gamma=1.5), P)


def spec_corrected():
    return model.validate_spec(model.EosSpec(A=1.0, gamma=1.5, omega=(1.0,)), P)


# --- validate_spec -----------------------------------------------------------

def test_validate_gamma_15():
    s = poly15()
    assert s.N == 6
    assert s.A1 == pytest.approx((0.5 / 1.5) ** 2)


def test_validate_gamma_14_rejected():
    with pytest.raises(GammaNotAdmissible):
        model.validate_spec(model.EosSpec(gamma=1.4), P)


def test_validate_gamma_43():
    s = model.validate_spec(model.EosSpec(gamma=4.0 / 3.0), P)
    assert s.N == 8


@pytest.mark.parametrize("gamma", [0.9, 1.0, 2.0, 2.5])
def test_validate_gamma_out_of_range(gamma):
    with pytest.raises(GammaNotAdmissible):
        model.validate_spec(model.EosSpec(gamma=gamma), P)


def test_causality_rejected_on_declared_range():
    # Pure polytrope: dP/drho = 1.5 sqrt(rho) reaches c^2 = 1 at rho = 4/9.
    with pytest.raises(CausalityViolated):
        model.validate_spec(model.EosSpec(gamma=1.5, rho_max=1.0), P)
    ok = model.validate_spec(model.EosSpec(gamma=1.5, rho_max=0.4), P)
    assert ok.rho_causal == pytest.approx(0.4)


def test_causal_range_resolved_by_default():
    s = poly15()
    assert s.rho_causal == pytest.approx(4.0 / 9.0, rel=1e-6)


def test_domain_exceeded_beyond_declared_radius():
    s = model.validate_spec(model.EosSpec(gamma=1.5, rho_max=0.1), P)
    with pytest.raises(DomainExceeded):
        model.pressure(0.2, s, P)


# --- pressure ----------------------------------------------------------------

def test_pressure_zero_at_vacuum():
    assert model.pressure(0.0, poly15(), P) == 0.0


def test_pressure_pure_polytrope_unit():
    assert model.pressure(1.0, poly15(), P) == pytest.approx(1.0, rel=1e-15)


def test_pressure_with_correction_series():
    # rho = 4, s = sqrt(4) = 2, P = 4^1.5 * (1 + 2) = 24
    assert model.pressure(4.0, spec_corrected(), P) == pytest.approx(24.0, rel=1e-14)


def test_pressure_strictly_increasing_and_causal():
    s = poly15()
    rho = np.logspace(-6, np.log10(s.rho_causal * 0.999), 200)
    p = model.pressure(rho, s, P)
    assert np.all(np.diff(p) > 0)
    dpdr = model.dpdrho_from_s(model.s_of_rho(rho, s, P), s, P)
    assert np.all(dpdr > 0) and np.all(dpdr < P.c**2)


# --- enthalpy_u / rho_of_u ---------------------------------------------------

def test_enthalpy_zero_at_vacuum():
    assert model.enthalpy_u(0.0, poly15(), P) == 0.0


def test_enthalpy_closed_form_point():
    # Omega = 1, gamma = 3/2: u = 3 ln(1 + sqrt(rho))
    assert model.enthalpy_u(1.0, poly15(), P) == pytest.approx(3 * math.log(2), rel=1e-12)


def test_enthalpy_closed_form_100_densities():
    s = poly15()
    rho = np.logspace(-8, 0, 100)
    u = model.enthalpy_u(rho, s, P)
    closed = (s.gamma / (s.gamma - 1)) * P.c**2 * np.log(1 + np.sqrt(rho))
    assert np.max(np.abs(u / closed - 1)) < 1e-12


def test_enthalpy_small_density_limit():
    # u / ((gamma A/(gamma-1)) rho^(gamma-1)) -> 1 with bounded slope in s
    s = spec_corrected()
    rho = np.logspace(-8, -2, 24)
    u = model.enthalpy_u(rho, s, P)
    lead = (s.gamma * s.A / (s.gamma - 1)) * rho ** (s.gamma - 1)
    ratio = u / lead
    svals = model.s_of_rho(rho, s, P)
    slope = (ratio - 1) / svals
    assert abs(ratio[0] - 1) < 1e-4
    assert np.all(np.abs(slope) < 10.0)


def test_enthalpy_derivative_matches_integrand():
    s = spec_corrected()
    rho = np.logspace(-3, 0, 12)
    h = 1e-6
    for r in rho:
        du_fd = (model.enthalpy_u(r * (1 + h), s, P) -
                 model.enthalpy_u(r * (1 - h), s, P)) / (2 * r * h)
        sv = float(model.s_of_rho(r, s, P))
        expected = model.dpdrho_from_s(sv, s, P) / (
            r + model.pressure_from_s(sv, s, P) / P.c**2)
        assert du_fd == pytest.approx(expected, rel=1e-8)


def test_rho_of_u_origin():
    assert model.rho_of_u(0.0, poly15(), P) == 0.0


def test_rho_of_u_round_trip_unit():
    s = poly15()
    assert abs(model.rho_of_u(model.enthalpy_u(1.0, s, P), s, P) - 1.0) <= 1e-10 * 2


def test_rho_of_u_small_u_limit():
    s = spec_corrected()
    for u in (1e-8, 1e-6, 1e-4):
        rho = model.rho_of_u(u, s, P)
        lead = s.A1 * u ** (1.0 / (s.gamma - 1.0))
        assert rho / lead == pytest.approx(1.0, abs=1e-3)


@settings(max_examples=25, deadline=None)
@given(rho=st.floats(min_value=1e-6, max_value=2.0),
       w1=st.floats(min_value=-0.05, max_value=0.5))
def test_round_trip_property(rho, w1):
    s = model.validate_spec(model.EosSpec(gamma=1.5, omega=(w1,)), P)
    err = abs(model.rho_of_u(model.enthalpy_u(rho, s, P), s, P) - rho)
    assert err <= 1e-10 * (1 + rho)


# --- gamma1 ------------------------------------------------------------------

def test_gamma1_pure_polytrope_constant():
    s = poly15()
    for u in (1e-6, 0.1, 1.0, 2.0):
        assert model.gamma1(u, s, P) == pytest.approx(1.5, rel=1e-14)


def test_gamma1_limit_at_small_u():
    assert model.gamma1(1e-10, spec_corrected(), P) == pytest.approx(1.5, abs=1e-6)


def test_gamma1_finite_difference_oracle():
    # Gamma = (rho/P) dP/drho, checked against a central difference of P.
    s = spec_corrected()
    rho = 1.0
    h = 1e-6
    dP = (model.pressure(rho * (1 + h), s, P) -
          model.pressure(rho * (1 - h), s, P)) / (2 * rho * h)
    g_fd = rho / model.pressure(rho, s, P) * dP
    u = model.enthalpy_u(rho, s, P)
    assert model.gamma1(u, s, P) == pytest.approx(g_fd, rel=1e-8)


def test_expansion_ratios_bounded_slope():
    # Omega_u, Omega_rho style ratios stay 1 + O(s) on s in (0, 0.1]
    s = spec_corrected()
    svals = np.linspace(1e-4, 0.1, 30)
    rho = model.rho_from_s(svals, s, P)
    u = model.enthalpy_u(rho, s, P)
    om_u = u / ((s.gamma * s.A / (s.gamma - 1)) * rho ** (s.gamma - 1))
    om_rho = rho / (s.A1 * u ** (1 / (s.gamma - 1)))
    for om in (om_u, om_rho):
        assert np.all(np.abs((om - 1) / svals) < 10)


# --- JSON interface ----------------------------------------------------------

def test_json_round_trip():
    spec = model.EosSpec(A=2.0, gamma=4 / 3, omega=(0.1, -0.02), rho_max=0.05)
    params = model.ModelParams(G=2.0, c=3.0, Lambda=0.1)
    d = model.model_to_dict(spec, params)
    assert set(d) == {"A", "gamma", "omega", "G", "c", "Lambda", "rho_max"}
    spec2, params2 = model.model_from_dict(d)
    assert spec2 == spec and params2 == params


def test_json_missing_omega_means_polytrope():
    spec, _ = model.model_from_dict({"A": 1, "gamma": 1.5, "G": 1, "c": 1, "Lambda": 0})
    assert spec.omega == ()


# --- unit scaling ------------------------------------------------------------

def test_internal_units_identity_when_geometrized():
    si, pi, sc = model.to_internal(poly15(), P)
    assert sc.length == 1.0 and sc.mass == 1.0 and sc.time == 1.0
    assert si.A == 1.0 and pi.G == 1.0 and pi.c == 1.0


def test_internal_units_si_consistency():
    params = model.ModelParams(G=6.674e-11, c=2.998e8, Lambda=1.1e-52)
    spec = model.validate_spec(model.EosSpec(A=5.38e3, gamma=1.5), params)
    si, pi, sc = model.to_internal(spec, params)
    # A scales as pressure/density^gamma
    assert sc.pressure / sc.density**spec.gamma == pytest.approx(spec.A, rel=1e-12)
    # a physical density maps consistently through pressure
    rho = 1e17
    p_phys = model.pressure(rho, spec, params)
    p_int = model.pressure(rho / sc.density, si, pi)
    assert p_int * sc.pressure == pytest.approx(p_phys, rel=1e-12)
    assert pi.Lambda == pytest.approx(params.Lambda * sc.length**2)
