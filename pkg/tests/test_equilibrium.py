"""Equilibrium structure: series start, integration, classification, fits."""

import dataclasses

import numpy as np
import pytest
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicSpline

from tovds import equilibrium as eq
from tovds import model
from tovds.errors import (
    HorizonApproached,
    InsufficientResolution,
    NoBoundary,
    NotMonotoneShort,
)

P0 = model.ModelParams()
SPEC = model.validate_spec(model.EosSpec(A=1.0, gamma=1.5), P0)


def lane_emden_zero_rk4(n=2, h=1e-3):
    """Independent brute-force Lane-Emden integrator (classic RK4, scalar).

    theta'' + (2/xi) theta' + theta^n = 0, theta(0) = 1, theta'(0) = 0.
    Returns the first zero xi_1, refined by one Newton step at the crossing.
    """
    def f(xi, th, dth):
        return dth, -(max(th, 0.0) ** n) - 2.0 * dth / xi

    xi = 1e-8
    th, dth = 1.0 - xi**2 / 6.0, -xi / 3.0
    while th > 0:
        k1 = f(xi, th, dth)
        k2 = f(xi + h / 2, th + h / 2 * k1[0], dth + h / 2 * k1[1])
        k3 = f(xi + h / 2, th + h / 2 * k2[0], dth + h / 2 * k2[1])
        k4 = f(xi + h, th + h * k3[0], dth + h * k3[1])
        th_n = th + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        dth_n = dth + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if th_n <= 0:
            return (xi + h) - th_n / dth_n
        th, dth, xi = th_n, dth_n, xi + h
    raise AssertionError("no zero found")


@pytest.fixture(scope="module")
def newtonian_profile():
    c = eq.center_state(1e-9, SPEC, P0)
    return eq.integrate_tov(c, SPEC, P0)


@pytest.fixture(scope="module")
def lambda_profile():
    """Mid-relativistic star with Lambda > 0 (about 30 percent of the
    mean-density threshold where Q_plus would vanish)."""
    rho_c = 0.01
    prof0 = eq.integrate_tov(eq.center_state(rho_c, SPEC, P0), SPEC, P0)
    lam = 0.3 * 3 * prof0.m_plus / prof0.r_plus**3
    params = model.ModelParams(Lambda=lam)
    spec = model.validate_spec(model.EosSpec(), params)
    return eq.integrate_tov(eq.center_state(rho_c, spec, params), spec, params)


# --- center series -----------------------------------------------------------

def test_center_state_consistency():
    c = eq.center_state(0.01, SPEC, P0)
    assert c.P_c == pytest.approx(model.pressure(0.01, SPEC, P0), rel=1e-15)
    assert c.r0 == pytest.approx(1e-4 * np.sqrt(1.0 / 0.01))


def test_center_series_mass_leading_order():
    c = eq.center_state(1.0, SPEC, P0, r0=1e-3)
    m0, _, _ = eq.center_series(c, SPEC, P0)
    assert m0 == pytest.approx(4 * np.pi / 3 * 1e-9, rel=1e-12)


def test_center_series_flat_center():
    # c^2 Lambda/3 = (4 pi G/3)(rho_c + 3 P_c/c^2) kills the quadratic term
    rho_c = 0.01
    P_c = model.pressure(rho_c, SPEC, P0)
    lam = 4 * np.pi * (rho_c + 3 * P_c)
    params = model.ModelParams(Lambda=lam)
    c = eq.center_state(rho_c, SPEC, params, r0=1e-3)
    _, Pr0, dPdr0 = eq.center_series(c, SPEC, params)
    assert Pr0 == pytest.approx(c.P_c, abs=1e-16)
    assert dPdr0 == pytest.approx(0.0, abs=1e-18)


def test_center_series_self_convergence():
    # series error at r0 shrinks like r0^4 against a fine integration
    rho_c, lam = 0.05, 0.01
    params = model.ModelParams(Lambda=lam)
    spec = model.validate_spec(model.EosSpec(), params)
    s_c = float(model.s_of_rho(rho_c, spec, params))

    def rhs(r, y):
        m, s = y
        rho = model.rho_from_s(s, spec, params)
        Pv = model.pressure_from_s(s, spec, params)
        k = eq.kappa_of(r, m, params)
        dudr = -eq.q_of(r, m, Pv, params) / (r**2 * k)
        return [4 * np.pi * r**2 * rho, dudr / model.du_ds(s, spec, params)]

    errs = []
    r0s = [2e-2, 1e-2, 5e-3]
    for r0 in r0s:
        r_tiny = 1e-6
        m_t, P_t, _ = eq.center_series(
            eq.CenterState(rho_c, model.pressure(rho_c, spec, params), r_tiny),
            spec, params)
        s_t = s_c + (P_t - model.pressure(rho_c, spec, params)) / \
            model.dpdrho_from_s(s_c, spec, params) * \
            (spec.gamma - 1) * s_c / rho_c
        sol = solve_ivp(rhs, (r_tiny, r0), [m_t, s_t], method="DOP853",
                        rtol=1e-13, atol=1e-20)
        P_true = model.pressure_from_s(sol.y[1, -1], spec, params)
        _, P_series, _ = eq.center_series(
            eq.CenterState(rho_c, model.pressure(rho_c, spec, params), r0),
            spec, params)
        errs.append(abs(P_series - P_true))
    ratios = np.array(errs) / np.array(r0s) ** 4
    assert ratios.max() / ratios.min() < 3.0


# --- integration -------------------------------------------------------------

def test_newtonian_limit_lane_emden(newtonian_profile):
    prof = newtonian_profile
    assert np.max(prof.u) / P0.c**2 < 1e-4
    n = 2
    alpha = np.sqrt((n + 1) * SPEC.A * prof.rho[0] ** (SPEC.gamma - 2)
                    / (4 * np.pi * P0.G))
    xi1 = lane_emden_zero_rk4(n=n)
    assert prof.r_plus / alpha == pytest.approx(xi1, rel=1e-3)


def test_mass_quadrature_consistency(lambda_profile):
    prof = lambda_profile
    quad = simpson(4 * np.pi * prof.rho * prof.r**2, x=prof.r) + prof.m[0]
    assert quad == pytest.approx(prof.m_plus, rel=1e-8)


def test_boundary_invariants_consistency(lambda_profile):
    prof = lambda_profile
    p = prof.params
    k = 1 - 2 * p.G * prof.m_plus / (p.c**2 * prof.r_plus) \
        - p.Lambda * prof.r_plus**2 / 3
    q = p.G * prof.m_plus - p.c**2 * p.Lambda * prof.r_plus**3 / 3
    assert k == pytest.approx(prof.kappa_plus, rel=1e-12)
    assert q == pytest.approx(prof.Q_plus, rel=1e-12)
    assert prof.kappa_plus > 0 and prof.Q_plus > 0


def test_kappa_positive_on_grid(lambda_profile):
    prof = lambda_profile
    assert np.all(eq.kappa_of(prof.r, prof.m, prof.params) > 0)


def test_monotonicity(lambda_profile):
    prof = lambda_profile
    assert np.all(np.diff(prof.rho) < 0)
    assert np.all(np.diff(prof.P) < 0)
    assert np.all(np.diff(prof.u) < 0)
    # mass increments fall below double precision in the deep boundary
    # layer; require strict increase where density is resolvable
    core = prof.rho > 1e-10 * prof.rho[0]
    assert np.all(np.diff(prof.m[core]) > 0)
    assert np.all(np.diff(prof.m) >= 0)


def test_step_off_radius_small(lambda_profile):
    assert lambda_profile.r[0] <= lambda_profile.r_plus / 100


def test_refinement_convergence():
    rho_c = 0.01
    tol = 1e-9
    c = eq.center_state(rho_c, SPEC, P0)
    a = eq.integrate_tov(c, SPEC, P0, tol=tol)
    b = eq.integrate_tov(c, SPEC, P0, tol=tol / 2)
    for fa, fb in ((a.r_plus, b.r_plus), (a.m_plus, b.m_plus),
                   (a.kappa_plus, b.kappa_plus), (a.Q_plus, b.Q_plus)):
        assert abs(fa - fb) / abs(fb) < 10 * tol


def test_lambda_continuity():
    rho_c = 0.01
    lam0 = 0.002
    r_plus = {}
    for lam in (lam0, lam0 + 4e-5, lam0 + 2e-5):
        params = model.ModelParams(Lambda=lam)
        spec = model.validate_spec(model.EosSpec(), params)
        prof = eq.integrate_tov(eq.center_state(rho_c, spec, params),
                                spec, params)
        r_plus[lam] = prof.r_plus
    slope1 = (r_plus[lam0 + 4e-5] - r_plus[lam0]) / 4e-5
    slope2 = (r_plus[lam0 + 2e-5] - r_plus[lam0]) / 2e-5
    assert slope2 == pytest.approx(slope1, rel=0.02)


# --- failure modes -----------------------------------------------------------

def test_not_monotone_short_at_center():
    rho_c = 0.01
    P_c = model.pressure(rho_c, SPEC, P0)
    params = model.ModelParams(Lambda=1.2 * 4 * np.pi * (rho_c + 3 * P_c))
    spec = model.validate_spec(model.EosSpec(), params)
    with pytest.raises(NotMonotoneShort):
        eq.integrate_tov(eq.center_state(rho_c, spec, params), spec, params)


def test_not_monotone_short_mid_star():
    params = model.ModelParams(Lambda=0.02)   # about 2x the Q_plus threshold
    spec = model.validate_spec(model.EosSpec(), params)
    with pytest.raises(NotMonotoneShort) as exc:
        eq.integrate_tov(eq.center_state(0.01, spec, params), spec, params)
    assert exc.value.radius is not None and exc.value.radius > 0


def test_horizon_approached():
    params = model.ModelParams(Lambda=1.0)
    spec = model.validate_spec(model.EosSpec(), params)
    with pytest.raises(HorizonApproached):
        eq.integrate_tov(eq.center_state(0.1, spec, params), spec, params)


def test_no_boundary_for_unbounded_polytrope():
    # gamma = 1.2 (n = 5): the Newtonian polytrope has infinite radius
    spec = model.validate_spec(model.EosSpec(gamma=1.2), P0)
    with pytest.raises(NoBoundary):
        eq.integrate_tov(eq.center_state(1e-6, spec, P0), spec, P0, tol=1e-8)


# --- classification ----------------------------------------------------------

def test_classify_monotone_short(lambda_profile):
    assert eq.classify(lambda_profile).monotone_short


def test_classify_kappa_plus_violation(lambda_profile):
    doctored = dataclasses.replace(lambda_profile, kappa_plus=-0.1)
    c = eq.classify(doctored)
    assert c.kind is eq.ClassKind.KAPPA_PLUS_NONPOSITIVE
    assert c.radius == doctored.r_plus


def test_classify_q_plus_violation(lambda_profile):
    doctored = dataclasses.replace(lambda_profile, Q_plus=0.0)
    c = eq.classify(doctored)
    assert c.kind is eq.ClassKind.Q_PLUS_NONPOSITIVE


def test_classify_pressure_violation(lambda_profile):
    P = lambda_profile.P.copy()
    P[10] = P[9] * 1.01
    doctored = dataclasses.replace(lambda_profile, P=P)
    c = eq.classify(doctored)
    assert c.kind is eq.ClassKind.PRESSURE_NOT_DECREASING


# --- metric coefficients -----------------------------------------------------

def test_metric_boundary_values(lambda_profile):
    prof = lambda_profile
    assert np.exp(2 * prof.F[-1]) == pytest.approx(prof.kappa_plus, rel=1e-12)
    assert np.exp(2 * prof.H[-1]) == pytest.approx(1 / prof.kappa_plus, rel=1e-12)


def test_metric_euler_identity(lambda_profile):
    # P' + F'(c^2 rho + P) = 0 along the grid
    prof = lambda_profile
    c2 = prof.params.c**2
    Ps = CubicSpline(prof.r, prof.P)
    Fs = CubicSpline(prof.r, prof.F)
    Rs = CubicSpline(prof.r, prof.rho)
    rr = np.linspace(prof.r[2], 0.995 * prof.r_plus, 300)
    resid = Ps(rr, 1) + Fs(rr, 1) * (c2 * Rs(rr) + Ps(rr))
    scale = np.max(np.abs(Ps(rr, 1)))
    assert np.max(np.abs(resid)) / scale < 1e-6


def test_metric_classical_reduction(newtonian_profile):
    prof = newtonian_profile
    H_classic = -0.5 * np.log(1 - 2 * prof.m / prof.r)
    assert np.allclose(prof.H, H_classic, rtol=1e-12, atol=1e-15)


# --- boundary asymptotics ----------------------------------------------------

def test_boundary_fits(lambda_profile):
    fit = eq.boundary_asymptotics(lambda_profile)
    assert fit.n_points >= 20
    assert fit.dudr_slope == pytest.approx(fit.slope_expected, rel=0.01)
    assert fit.density_exponent == pytest.approx(fit.exponent_expected, rel=0.02)
    assert fit.C_rho_fit == pytest.approx(fit.C_rho, rel=0.02)


def test_boundary_fit_slope_refines(newtonian_profile):
    fit = eq.boundary_asymptotics(newtonian_profile)
    assert fit.dudr_slope == pytest.approx(fit.slope_expected, rel=1e-3)


def test_insufficient_resolution_raised(lambda_profile):
    prof = lambda_profile
    keep = prof.r < 0.98 * prof.r_plus
    keep[-1] = True
    sub = dataclasses.replace(
        prof, r=prof.r[keep], m=prof.m[keep], rho=prof.rho[keep],
        P=prof.P[keep], u=prof.u[keep], F=prof.F[keep], H=prof.H[keep],
        s=prof.s[keep])
    with pytest.raises(InsufficientResolution):
        eq.boundary_asymptotics(sub)


# --- export ------------------------------------------------------------------

def test_profile_csv_format(tmp_path, lambda_profile):
    path = tmp_path / "profile.csv"
    eq.profile_to_csv(lambda_profile, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "r,m,rho,P,u,F,H"
    assert len(lines) == len(lambda_profile.r) + 1
    first = [float(v) for v in lines[1].split(",")]
    assert first[0] == pytest.approx(lambda_profile.r[0])
    side = eq.profile_sidecar(lambda_profile)
    assert set(side) == {"r_plus", "m_plus", "kappa_plus", "Q_plus", "C_rho"}
