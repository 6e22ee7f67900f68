"""Equilibrium stars: hydrostatic structure with cosmological constant.

The structure system is

    dm/dr = 4 pi r^2 rho
    dP/dr = -(rho + P/c^2) Q(r, m, P) / (r^2 kappa(r, m))

with kappa = 1 - 2Gm/(c^2 r) - Lambda r^2/3 and
Q = G(m + 4 pi r^3 P/c^2) - c^2 Lambda r^3/3.  Dividing the pressure
equation by rho + P/c^2 turns it into du/dr = -Q/(r^2 kappa) for the state
variable u, which has a simple zero at the vacuum boundary.  Integration
runs in two phases:

  1. outward in r with state (m, s), where s = A rho^(gamma-1)/c^2 makes
     every thermodynamic quantity closed-form;
  2. once u drops below 1e-3 of its central value, with s as the
     independent variable down to s = 0, so the boundary r_plus is the
     exact endpoint of the integration rather than an interpolated event.

The stored grid is the adaptive steps plus a geometric cluster of 64
points in the outer layer, where the boundary asymptotics and the chart
quadratures need resolution.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import model
from .errors import (
    CausalityViolated,
    HorizonApproached,
    InsufficientResolution,
    NoBoundary,
    NotMonotoneShort,
)

__all__ = [
    "CenterState",
    "EquilibriumProfile",
    "Classification",
    "ClassKind",
    "center_state",
    "center_series",
    "integrate_tov",
    "classify",
    "metric_coeffs",
    "boundary_asymptotics",
    "profile_to_csv",
    "profile_sidecar",
]

_SWITCH_FRACTION = 1e-3      # switch to the s-chart when u < this * u_center
_CLUSTER_POINTS = 64
_CLUSTER_DEPTH = 1e-8        # cluster spans 8 decades of s below its anchor


def kappa_of(r, m, params):
    """Metric factor 1 - 2Gm/(c^2 r) - Lambda r^2/3."""
    return 1.0 - 2.0 * params.G * m / (params.c**2 * r) - params.Lambda * r**2 / 3.0


def q_of(r, m, P, params):
    """Effective gravity numerator G(m + 4 pi r^3 P/c^2) - c^2 Lambda r^3/3."""
    return (params.G * (m + 4.0 * np.pi * r**3 * P / params.c**2)
            - params.c**2 * params.Lambda * r**3 / 3.0)


@dataclass(frozen=True)
class CenterState:
    """Central data and the step-off radius for the series start."""

    rho_c: float
    P_c: float
    r0: float

    def __post_init__(self):
        if self.rho_c <= 0 or self.r0 <= 0:
            raise ValueError("rho_c and r0 must be positive")


def center_state(rho_c, spec, params, r0=None) -> CenterState:
    """Build a CenterState with P_c = pressure(rho_c).

    The default step-off radius is 1e-4 of the free-fall length
    sqrt(c^2/(G rho_c)); integrate_tov then halves it until the boundary
    data stop changing.
    """
    P_c = float(model.pressure(rho_c, spec, params))
    if r0 is None:
        r0 = 1e-4 * np.sqrt(params.c**2 / (params.G * rho_c))
    return CenterState(rho_c=float(rho_c), P_c=P_c, r0=float(r0))


def center_series(center: CenterState, spec, params):
    """Truncated series at the center: (m(r0), P(r0), dP/dr(r0)).

    m = (4 pi/3) rho_c r0^3 and P = P_c - (rho_c + P_c/c^2) *
    ((4 pi G/3)(rho_c + 3 P_c/c^2) - c^2 Lambda/3) * r0^2/2, both with the
    next term of relative size O(r0^2) dropped.
    """
    rho_c, P_c, r0 = center.rho_c, center.P_c, center.r0
    c2 = params.c**2
    coef = (4.0 * np.pi * params.G / 3.0) * (rho_c + 3.0 * P_c / c2) \
        - c2 * params.Lambda / 3.0
    m0 = (4.0 * np.pi / 3.0) * rho_c * r0**3
    P0 = P_c - (rho_c + P_c / c2) * coef * r0**2 / 2.0
    dPdr0 = -(rho_c + P_c / c2) * coef * r0
    return m0, P0, dPdr0


class ClassKind(enum.Enum):
    MONOTONE_SHORT = "MonotoneShort"
    PRESSURE_NOT_DECREASING = "PressureNotDecreasing"
    KAPPA_NONPOSITIVE = "KappaNonpositive"
    KAPPA_PLUS_NONPOSITIVE = "KappaPlusNonpositive"
    Q_PLUS_NONPOSITIVE = "QPlusNonpositive"


@dataclass(frozen=True)
class Classification:
    kind: ClassKind
    radius: float | None = None

    @property
    def monotone_short(self):
        return self.kind is ClassKind.MONOTONE_SHORT


@dataclass
class EquilibriumProfile:
    """Radial profiles of an equilibrium star plus its boundary invariants.

    Grids are in the unit system of params/spec; r runs from the step-off
    radius to r_plus inclusive.  xi_plus is filled later by the chart
    builder; everything else is immutable by convention.
    """

    r: np.ndarray
    m: np.ndarray
    rho: np.ndarray
    P: np.ndarray
    u: np.ndarray
    F: np.ndarray
    H: np.ndarray
    s: np.ndarray                      # EOS variable A rho^(gamma-1)/c^2
    r_plus: float
    m_plus: float
    kappa_plus: float
    Q_plus: float
    boundary_density_coeff: float
    spec: model.EosSpec
    params: model.ModelParams
    xi_plus: float | None = None
    _s_of_r: CubicSpline = field(default=None, repr=False)
    _m_of_r: CubicSpline = field(default=None, repr=False)
    _u_of_r: CubicSpline = field(default=None, repr=False)

    def __post_init__(self):
        self._s_of_r = CubicSpline(self.r, self.s)
        self._m_of_r = CubicSpline(self.r, self.m)
        self._u_of_r = CubicSpline(self.r, self.u)

    # interpolants (clipped to physical ranges at the boundary)
    def s_at(self, r):
        return np.clip(self._s_of_r(r), 0.0, None)

    def m_at(self, r):
        return self._m_of_r(r)

    def u_at(self, r):
        return np.clip(self._u_of_r(r), 0.0, None)

    def dudr_at(self, r):
        return self._u_of_r(r, 1)

    def kappa_at(self, r):
        return kappa_of(r, self.m_at(r), self.params)


def _lane_emden_first_zero(n, xi_cap=50.0):
    """First zero of the Lane-Emden function of index n (None if not
    reached before xi_cap)."""
    def rhs(xi, y):
        th, dth = y
        return [dth, -max(th, 0.0) ** n - 2.0 * dth / xi]

    xi0 = 1e-6
    y0 = [1.0 - xi0**2 / 6.0, -xi0 / 3.0]
    hit = lambda xi, y: y[0]
    hit.terminal, hit.direction = True, -1
    sol = solve_ivp(rhs, (xi0, xi_cap), y0, method="DOP853",
                    rtol=1e-12, atol=1e-14, events=hit)
    if sol.t_events[0].size:
        return float(sol.t_events[0][0])
    return None


def newtonian_radius_estimate(rho_c, spec, params):
    """Lane-Emden estimate of the Lambda = 0 polytrope radius.

    For n = 1/(gamma-1) >= 5 the Newtonian polytrope is unbounded; a cap
    of 20 length scales stands in so the radius cap stays finite.
    """
    g = spec.gamma
    n = round(1.0 / (g - 1.0))
    alpha = np.sqrt((n + 1) * spec.A * rho_c ** (g - 2.0)
                    / (4.0 * np.pi * params.G))
    xi1 = _lane_emden_first_zero(n) if n < 5 else None
    return alpha * (xi1 if xi1 is not None else 20.0), alpha


def integrate_tov(center: CenterState, spec, params, tol=1e-10,
                  r_cap=None) -> EquilibriumProfile:
    """Integrate the structure equations from the series start to the
    vacuum boundary and assemble the full profile.

    The step-off radius is halved (up to 8 times) until (r_plus, m_plus)
    move by less than max(tol, 1e-13) relative.  Errors: NotMonotoneShort
    when the pressure gradient loses its sign, HorizonApproached when
    kappa reaches zero, NoBoundary when the radius cap is hit first.
    """
    if not spec.validated:
        spec = model.validate_spec(spec, params)
    # work in geometrized-polytropic units, convert on the way out
    spec_i, params_i, sc = model.to_internal(spec, params)
    rho_c = center.rho_c / sc.density
    s_c = float(model.s_of_rho(rho_c, spec_i, params_i))
    if s_c > getattr(spec_i, "_s_causal", np.inf):
        raise CausalityViolated(
            "central density beyond the admissible (causal) range")
    r0 = center.r0 / sc.length
    r_est, _ = newtonian_radius_estimate(rho_c, spec_i, params_i)
    cap = (r_cap / sc.length) if r_cap is not None else 10.0 * r_est

    prev = None
    result = None
    for _ in range(9):
        result = _integrate_once(rho_c, r0, spec_i, params_i, tol, cap, r_est)
        if prev is not None and r0 <= result["r_plus"] / 100.0:
            dr = abs(result["r_plus"] - prev["r_plus"]) / result["r_plus"]
            dm = abs(result["m_plus"] - prev["m_plus"]) / result["m_plus"]
            if max(dr, dm) < max(tol, 1e-13) * 10:
                break
        prev = result
        r0 *= 0.5
    return _assemble_profile(result, spec, params, spec_i, params_i, sc)


def _integrate_once(rho_c, r0, spec, params, tol, cap, r_est):
    """One two-phase integration in internal units."""
    c2 = params.c**2
    s_c = float(model.s_of_rho(rho_c, spec, params))
    P_c = float(model.pressure_from_s(s_c, spec, params))
    u_c = model.u_from_s(s_c, spec, params)

    # series start, second-order accurate in the u -> s conversion
    coef = (4.0 * np.pi * params.G / 3.0) * (rho_c + 3.0 * P_c / c2) \
        - c2 * params.Lambda / 3.0
    if coef <= 0.0:
        raise NotMonotoneShort(
            "pressure gradient non-negative at the center: "
            "c^2 Lambda/3 >= (4 pi G/3)(rho_c + 3 P_c/c^2)", radius=0.0)
    m0 = (4.0 * np.pi / 3.0) * rho_c * r0**3
    du0 = coef * r0**2 / 2.0
    s0 = s_c - du0 / model.du_ds(s_c, spec, params)
    s0 = s_c - du0 / model.du_ds(0.5 * (s_c + s0), spec, params)

    def rhs_r(r, y):
        m, s = y
        rho = model.rho_from_s(s, spec, params)
        P = model.pressure_from_s(s, spec, params)
        k = kappa_of(r, m, params)
        dudr = -q_of(r, m, P, params) / (r**2 * k)
        return [4.0 * np.pi * r**2 * rho, dudr / model.du_ds(s, spec, params)]

    s_switch = _switch_level(s_c, u_c, spec, params)
    ev_switch = lambda r, y: y[1] - s_switch
    ev_switch.terminal, ev_switch.direction = True, -1
    ev_Q = lambda r, y: q_of(r, y[0], model.pressure_from_s(max(y[1], 0.0), spec, params), params)
    ev_Q.terminal, ev_Q.direction = True, -1
    ev_k = lambda r, y: kappa_of(r, y[0], params) - 1e-11
    ev_k.terminal, ev_k.direction = True, -1

    sol1 = solve_ivp(rhs_r, (r0, cap), [m0, s0], method="DOP853",
                     rtol=tol, atol=[tol * m0, tol * s_c * 1e-6],
                     events=[ev_switch, ev_Q, ev_k],
                     dense_output=True, max_step=r_est / 600.0)
    if sol1.t_events[1].size:
        raise NotMonotoneShort(
            "dP/dr >= 0 before the boundary (Q reached zero)",
            radius=float(sol1.t_events[1][0]))
    if sol1.t_events[2].size:
        raise HorizonApproached(
            "kappa reached zero before the boundary: no static star",
            radius=float(sol1.t_events[2][0]))
    if not sol1.t_events[0].size:
        raise NoBoundary(
            f"u did not reach zero within the radius cap {cap:g}")
    r_sw = float(sol1.t_events[0][0])
    m_sw, s_sw = (float(v) for v in sol1.y_events[0][0])

    def rhs_s(s, y):
        r, m = y
        rho = model.rho_from_s(s, spec, params)
        P = model.pressure_from_s(s, spec, params)
        k = kappa_of(r, m, params)
        Q = q_of(r, m, P, params)
        drds = -r**2 * k / Q * model.du_ds(s, spec, params)
        return [drds, 4.0 * np.pi * r**2 * rho * drds]

    ev_Q2 = lambda s, y: q_of(y[0], y[1], model.pressure_from_s(max(s, 0.0), spec, params), params)
    ev_Q2.terminal, ev_Q2.direction = True, -1
    ev_k2 = lambda s, y: kappa_of(y[0], y[1], params) - 1e-11
    ev_k2.terminal, ev_k2.direction = True, -1
    sol2 = solve_ivp(rhs_s, (s_sw, 0.0), [r_sw, m_sw], method="DOP853",
                     rtol=tol, atol=[tol * r_sw, tol * m_sw],
                     events=[ev_Q2, ev_k2], dense_output=True)
    if sol2.t_events[0].size:
        raise NotMonotoneShort(
            "dP/dr >= 0 in the boundary layer",
            radius=float(sol2.y_events[0][0][0]))
    if sol2.t_events[1].size:
        raise HorizonApproached(
            "kappa reached zero in the boundary layer",
            radius=float(sol2.y_events[1][0][0]))
    r_plus, m_plus = (float(v) for v in sol2.y[:, -1])
    return {"sol1": sol1, "sol2": sol2, "r_sw": r_sw, "s_sw": s_sw,
            "r_plus": r_plus, "m_plus": m_plus, "s_c": s_c}


def _switch_level(s_c, u_c, spec, params):
    """s at which u = 1e-3 * u_center (Newton from the linearized value)."""
    target = _SWITCH_FRACTION * u_c
    s = target / model.du_ds(0.0, spec, params)
    for _ in range(30):
        f = model.u_from_s(s, spec, params) - target
        s -= f / model.du_ds(s, spec, params)
        if abs(f) < 1e-14 * u_c:
            break
    return s


def _assemble_profile(res, spec, params, spec_i, params_i, sc):
    sol1, sol2 = res["sol1"], res["sol2"]
    r_plus, m_plus = res["r_plus"], res["m_plus"]
    r_sw, s_sw = res["r_sw"], res["s_sw"]

    # phase-1 grid: the adaptive steps
    r1 = sol1.t[sol1.t < r_sw * (1 - 1e-13)]
    m1, s1 = sol1.sol(r1)

    # bridge so the outer 1 percent always holds >= 20 points
    r99 = 0.99 * r_plus
    if r99 < r_sw:
        rb = np.linspace(max(r99, r1[-1] if len(r1) else 0.0), r_sw, 14)[:-1]
        rb = rb[rb > (r1[-1] if len(r1) else 0.0)]
        mb, sb = sol1.sol(rb)
        s_anchor = s_sw
    else:
        rb = np.empty(0)
        mb = sb = np.empty(0)
        s_anchor = float(brentq(lambda s: sol2.sol(s)[0] - r99, 0.0, s_sw,
                                rtol=4 * np.finfo(float).eps))

    # geometric cluster in s down the boundary layer, then the boundary
    s_cl = np.geomspace(s_anchor * (1 - 1e-9), s_anchor * _CLUSTER_DEPTH,
                        _CLUSTER_POINTS)
    r_cl, m_cl = sol2.sol(s_cl)

    r = np.concatenate([r1, rb, r_cl, [r_plus]])
    m = np.concatenate([m1, mb, m_cl, [m_plus]])
    s = np.concatenate([s1, sb, s_cl, [0.0]])
    order = np.argsort(r)
    r, m, s = r[order], m[order], s[order]
    keep = np.concatenate([[True], np.diff(r) > 1e-13 * r_plus])
    r, m, s = r[keep], m[keep], s[keep]
    s = np.clip(s, 0.0, None)

    # thermodynamics along the grid (u by cumulative quadrature in s)
    rho = model.rho_from_s(s, spec_i, params_i)
    P = model.pressure_from_s(s, spec_i, params_i)
    u = np.zeros_like(s)
    pos = s > 0
    sort_s = np.argsort(s[pos])
    u_sorted = model.u_from_s_batch(s[pos][sort_s], spec_i, params_i)
    tmp = np.empty_like(u_sorted)
    tmp[sort_s] = u_sorted
    u[pos] = tmp

    kappa_plus = float(kappa_of(r_plus, m_plus, params_i))
    Q_plus = float(params_i.G * m_plus
                   - params_i.c**2 * params_i.Lambda * r_plus**3 / 3.0)
    if kappa_plus <= 0:
        raise HorizonApproached("kappa_plus <= 0", radius=r_plus)
    if Q_plus <= 0:
        raise NotMonotoneShort("Q_plus <= 0", radius=r_plus)

    g = spec.gamma
    slope = Q_plus / (r_plus**2 * kappa_plus)
    C_rho_i = ((g - 1.0) / (spec_i.A * g) * slope) ** (1.0 / (g - 1.0))

    # metric exponents (dimensionless, computed in internal units)
    F = 0.5 * np.log(kappa_plus) - u
    H = -0.5 * np.log(kappa_of(r, m, params_i))

    # convert out of internal units
    return EquilibriumProfile(
        r=r * sc.length,
        m=m * sc.mass,
        rho=rho * sc.density,
        P=P * sc.pressure,
        u=u * params.c**2,             # internal u is in units of c^2
        F=F,
        H=H,
        s=s,
        r_plus=r_plus * sc.length,
        m_plus=m_plus * sc.mass,
        kappa_plus=kappa_plus,
        Q_plus=Q_plus * params.G * sc.mass,  # G*M_unit = c^2 * length_unit
        boundary_density_coeff=C_rho_i * sc.density / sc.length ** (1.0 / (g - 1.0)),
        spec=spec,
        params=params,
    )


def classify(profile: EquilibriumProfile) -> Classification:
    """Name the first violated monotone-short condition, if any."""
    k = kappa_of(profile.r, profile.m, profile.params)
    bad = np.nonzero(k <= 0)[0]
    if bad.size:
        return Classification(ClassKind.KAPPA_NONPOSITIVE,
                              radius=float(profile.r[bad[0]]))
    dP = np.diff(profile.P)
    bad = np.nonzero(dP >= 0)[0]
    if bad.size:
        return Classification(ClassKind.PRESSURE_NOT_DECREASING,
                              radius=float(profile.r[bad[0] + 1]))
    if profile.kappa_plus <= 0:
        return Classification(ClassKind.KAPPA_PLUS_NONPOSITIVE,
                              radius=profile.r_plus)
    if profile.Q_plus <= 0:
        return Classification(ClassKind.Q_PLUS_NONPOSITIVE,
                              radius=profile.r_plus)
    return Classification(ClassKind.MONOTONE_SHORT)


def metric_coeffs(profile: EquilibriumProfile, params):
    """Metric exponents along the grid: F = ln(kappa_plus)/2 - u/c^2 and
    e^(2H) = 1/kappa(r, m)."""
    F = 0.5 * np.log(profile.kappa_plus) - profile.u / params.c**2
    k = kappa_of(profile.r, profile.m, params)
    H = -0.5 * np.log(k)
    return F, H


@dataclass(frozen=True)
class BoundaryFit:
    """Outer-layer fits against the analytic boundary behavior."""

    dudr_slope: float            # fitted u ~ slope * (r_plus - r)
    slope_expected: float        # Q_plus/(r_plus^2 kappa_plus)
    density_exponent: float      # fitted rho ~ (r_plus - r)^exponent
    exponent_expected: float     # 1/(gamma - 1)
    C_rho_fit: float
    C_rho: float
    n_points: int


def boundary_asymptotics(profile: EquilibriumProfile) -> BoundaryFit:
    """Least-squares fits of the vacuum-boundary behavior on the outer
    layer: u against (r_plus - r), log rho against log(r_plus - r), and
    the density prefactor at fixed exponent."""
    r_plus = profile.r_plus
    sel = (profile.r >= 0.99 * r_plus) & (profile.r < r_plus) & (profile.rho > 0)
    if np.count_nonzero(sel) < 20:
        raise InsufficientResolution(
            "need >= 20 grid points in the outer 1 percent of radius")
    d = r_plus - profile.r[sel]
    u = profile.u[sel]
    rho = profile.rho[sel]

    # u = a1 d + a2 d^2 through the origin
    M = np.column_stack([d, d * d])
    a, *_ = np.linalg.lstsq(M, u, rcond=None)
    slope = float(a[0])

    # free-exponent log-log fit
    ln_d, ln_rho = np.log(d), np.log(rho)
    p = np.polyfit(ln_d, ln_rho, 1)
    exponent = float(p[0])

    # prefactor at the exact exponent, with a linear-in-d correction
    g = profile.spec.gamma
    p0 = 1.0 / (g - 1.0)
    resid = ln_rho - p0 * ln_d
    q = np.polyfit(d, resid, 1)
    C_fit = float(np.exp(q[1]))

    slope_expected = profile.Q_plus / (r_plus**2 * profile.kappa_plus)
    return BoundaryFit(
        dudr_slope=slope,
        slope_expected=float(slope_expected),
        density_exponent=exponent,
        exponent_expected=p0,
        C_rho_fit=C_fit,
        C_rho=profile.boundary_density_coeff,
        n_points=int(np.count_nonzero(sel)),
    )


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def profile_to_csv(profile: EquilibriumProfile, path):
    """Write the grid as CSV with the exact header r,m,rho,P,u,F,H."""
    cols = np.column_stack([profile.r, profile.m, profile.rho, profile.P,
                            profile.u, profile.F, profile.H])
    with open(path, "w") as fh:
        fh.write("r,m,rho,P,u,F,H\n")
        for row in cols:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def profile_sidecar(profile: EquilibriumProfile) -> dict:
    return {
        "r_plus": profile.r_plus,
        "m_plus": profile.m_plus,
        "kappa_plus": profile.kappa_plus,
        "Q_plus": profile.Q_plus,
        "C_rho": profile.boundary_density_coeff,
    }


def profile_sidecar_to_json(profile: EquilibriumProfile, path):
    with open(path, "w") as fh:
        json.dump(profile_sidecar(profile), fh, indent=2, sort_keys=True)
        fh.write("\n")
