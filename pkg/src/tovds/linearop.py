"""Linearized radial pulsation operator around an equilibrium star.

Three equivalent forms are assembled:

  raw            e^(-F) dv/dt = E2 y'' + E1 y' + E0 y
  self-adjoint   L y = -(1/b) (a y')' + Q y     on L^2((0, r_plus); b dr)
  x-chart        (xi_plus/pi)^2 L y = -x(1-x) y''
                    - (5/2 (1-x) - N/2 x) y' + L1 x(1-x) y' + L0 y

The chart variable is x = sin^2(theta) with theta proportional to the
sound-travel integral; it maps (0, r_plus) to (0, 1) and turns the
operator into a hypergeometric-type form with bounded lower-order
coefficients L0, L1.  Key identities used here (all verifiable from the
coefficient definitions):

  a (dx/dr)^2 / b = (pi/xi_plus)^2 x(1-x)
  => a dx/dr = (pi/xi_plus)^2 x(1-x) * btilde,   btilde = b / (dx/dr)
  => L0 = (xi_plus/pi)^2 Q,  L1 = -d/dx log W,
     W = btilde / (x^(3/2) (1-x)^(N/2-1))  smooth and positive on [0,1].

Radial derivatives of profile quantities come from cubic splines of the
stored grids, each verified by a coarse-grid consistency check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from . import model
from .equilibrium import EquilibriumProfile, kappa_of
from .errors import GridMismatch, InsufficientResolution, QuadratureFailed

__all__ = [
    "SelfAdjointCoeffs",
    "XChart",
    "coefficients",
    "build_xchart",
    "apply_L",
    "synthetic_problem",
    "validate_structure",
    "chart_to_csv",
    "chart_sidecar",
]


def _checked_derivative(r, f, name, rtol=2e-5):
    """Cubic spline of f(r) whose derivative passes a two-grid consistency
    check (full grid vs every-other-point) at the skipped nodes."""
    full = CubicSpline(r, f)
    half = CubicSpline(r[::2], f[::2])
    probe = r[1:-1:2]
    d_full = full(probe, 1)
    d_half = half(probe, 1)
    scale = np.max(np.abs(d_full))
    if scale > 0 and np.max(np.abs(d_full - d_half)) > rtol * scale:
        raise InsufficientResolution(
            f"spline derivative of {name} fails the two-grid consistency "
            f"check; profile grid too coarse")
    return full


@dataclass
class SelfAdjointCoeffs:
    """Operator coefficients on the profile grid plus smooth evaluators.

    The callables extend the grids continuously to any radius in
    (0, r_plus); bg_fn is b divided by the chart integrand g, which stays
    smooth through the boundary where both factors degenerate.
    """

    r: np.ndarray
    E2: np.ndarray
    E1: np.ndarray
    E0: np.ndarray
    a: np.ndarray
    b: np.ndarray
    Q: np.ndarray
    a_fn: callable = field(repr=False, default=None)
    b_fn: callable = field(repr=False, default=None)
    q_fn: callable = field(repr=False, default=None)
    jbar_fn: callable = field(repr=False, default=None)
    g_fn: callable = field(repr=False, default=None)
    bg_fn: callable = field(repr=False, default=None)
    profile: EquilibriumProfile = field(repr=False, default=None)
    # x-space overrides for synthetic (oracle) problems
    btilde_x: callable = field(repr=False, default=None)
    q_x: callable = field(repr=False, default=None)
    jbar_x: callable = field(repr=False, default=None)


def coefficients(profile: EquilibriumProfile, spec=None, params=None) -> SelfAdjointCoeffs:
    """Evaluate E2, E1, E0 and the self-adjoint data (a, b, Q) along the
    equilibrium.

    Every thermodynamic factor is closed-form in the EOS variable s; the
    radial derivatives u', Gamma', H' and (log(1+P/c^2 rho))' come from
    verified splines of the profile grids.
    """
    spec = spec if spec is not None else profile.spec
    params = params if params is not None else profile.params
    if not spec.validated:
        spec = model.validate_spec(spec, params)
    c2 = params.c**2
    r = profile.r

    gamma_grid = model.gamma_from_s(profile.s, spec)
    ratio_grid = model.p_over_c2rho(profile.s, spec)     # P/(c^2 rho)

    u_sp = _checked_derivative(r, profile.u, "u")
    gam_sp = _checked_derivative(r, gamma_grid, "Gamma")
    h_sp = _checked_derivative(r, profile.H, "H")
    qlog_sp = _checked_derivative(r, np.log1p(ratio_grid), "log(1+P/c^2 rho)")

    def fields(rr):
        rr = np.asarray(rr, dtype=float)
        s = profile.s_at(rr)
        m = profile.m_at(rr)
        u = profile.u_at(rr)
        rho = model.rho_from_s(s, spec, params)
        P = model.pressure_from_s(s, spec, params)
        ratio = model.p_over_c2rho(s, spec)
        Gam = model.gamma_from_s(s, spec)
        kap = kappa_of(rr, m, params)
        H = -0.5 * np.log(kap)
        F = 0.5 * np.log(profile.kappa_plus) - u / c2
        return s, rho, P, ratio, Gam, H, F

    def E2_fn(rr):
        s, rho, P, ratio, Gam, H, F = fields(rr)
        return np.exp(-2 * H) * Gam * c2 * ratio / (1.0 + ratio)

    def E1_fn(rr):
        rr = np.asarray(rr, dtype=float)
        s, rho, P, ratio, Gam, H, F = fields(rr)
        up = u_sp(rr, 1)
        logderiv = (h_sp(rr, 1) - up / c2 - qlog_sp(rr, 1)
                    + gam_sp(rr, 1) / Gam + 4.0 / rr)
        return E2_fn(rr) * logderiv + np.exp(-2 * H) * Gam * up

    def E0_fn(rr):
        rr = np.asarray(rr, dtype=float)
        s, rho, P, ratio, Gam, H, F = fields(rr)
        up = u_sp(rr, 1)
        e2h = np.exp(-2 * H)
        term1 = (4 * np.pi * params.G / c2) * 3 * (Gam - 1) * P
        term2 = (-1 - 3 * Gam * e2h + 3 * (Gam - 1) * e2h / (1 + ratio)) \
            * up / rr
        term3 = 3 * e2h * (Gam * up
                           + c2 * ratio / (1 + ratio) * gam_sp(rr, 1)) / rr
        term4 = params.Lambda * (c2 + rr * up)
        return term1 + term2 + term3 + term4

    def a_fn(rr):
        s, rho, P, ratio, Gam, H, F = fields(rr)
        rr = np.asarray(rr, dtype=float)
        return np.exp(H + F) * P * Gam * rr**4 / (1 + ratio)

    def b_fn(rr):
        s, rho, P, ratio, Gam, H, F = fields(rr)
        rr = np.asarray(rr, dtype=float)
        return np.exp(3 * H - F) * rr**4 * rho / (1 + ratio)

    def q_fn(rr):
        s, rho, P, ratio, Gam, H, F = fields(rr)
        return -np.exp(2 * F) * (1 + ratio) * E0_fn(rr)

    def jbar_fn(rr):
        s, rho, P, ratio, Gam, H, F = fields(rr)
        return np.exp(F) * (1 + ratio)

    def g_fn(rr):
        # chart integrand sqrt(rho/(Gamma P)) e^(F - ... ) = e^(H-F)/sqrt(Gamma c^2 s Omega)
        s, rho, P, ratio, Gam, H, F = fields(rr)
        return np.exp(H - F) / np.sqrt(Gam * c2 * ratio)

    def bg_fn(rr):
        # b/g = e^(2H) r^4 rho sqrt(Gamma c^2 s Omega) / (1 + s Omega)
        s, rho, P, ratio, Gam, H, F = fields(rr)
        rr = np.asarray(rr, dtype=float)
        return np.exp(2 * H) * rr**4 * rho * np.sqrt(Gam * c2 * ratio) / (1 + ratio)

    return SelfAdjointCoeffs(
        r=r,
        E2=E2_fn(r), E1=E1_fn(r), E0=E0_fn(r),
        a=a_fn(r), b=b_fn(r), Q=q_fn(r),
        a_fn=a_fn, b_fn=b_fn, q_fn=q_fn, jbar_fn=jbar_fn,
        g_fn=g_fn, bg_fn=bg_fn, profile=profile,
    )


@dataclass
class XChart:
    """Regularizing coordinate x in [0,1] and the x-form coefficients.

    Arrays live on the collocation grid (sin^2-clustered, endpoints
    included).  time_rescale = xi_plus/pi is stored, never silently
    applied: apply_L and the eigensolver return physical-time quantities.
    """

    x: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    dxdr: np.ndarray
    L0: np.ndarray
    L1: np.ndarray
    xi_plus: float
    C0: float
    C1: float
    N: int
    time_rescale: float
    r_plus: float
    _r_of_x: PchipInterpolator = field(repr=False, default=None)
    _x_of_r: PchipInterpolator = field(repr=False, default=None)
    _W_of_x: CubicSpline = field(repr=False, default=None)
    synthetic: bool = False

    def r_at(self, x):
        return self._r_of_x(x) if self._r_of_x is not None else np.asarray(x)

    def x_at(self, r):
        return self._x_of_r(r) if self._x_of_r is not None else np.asarray(r)


def collocation_nodes(n):
    """n nodes on [0,1] with quadratic clustering at both endpoints."""
    return np.sin(np.pi * np.arange(n) / (2 * (n - 1))) ** 2


def _theta_segments(coeffs, profile):
    """Cumulative integral of the chart integrand over the profile grid.

    Interior segments use fixed Gauss panels in r; segments in the outer
    layer substitute w = sqrt(r_plus - r), which removes the square-root
    singularity of the integrand at the boundary.
    """
    r = profile.r
    r_plus = profile.r_plus
    xg, wg = np.polynomial.legendre.leggauss(12)

    def gauss_r(a, b):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        pts = mid + half * xg
        return float(np.sum(half * wg * coeffs.g_fn(pts)))

    def gauss_w(a, b):
        # integral of g dr on [a,b] via r = r_plus - w^2
        w1, w2 = np.sqrt(r_plus - a), np.sqrt(max(r_plus - b, 0.0))
        mid, half = 0.5 * (w1 + w2), 0.5 * (w1 - w2)
        pts = mid + half * xg
        rr = r_plus - pts**2
        return float(np.sum(half * wg * coeffs.g_fn(rr) * 2 * pts))

    cut = 0.99 * r_plus
    seg = np.empty(len(r))
    seg[0] = gauss_r(0.0, r[0]) if r[0] > 0 else 0.0
    for i in range(1, len(r)):
        a, b = r[i - 1], r[i]
        seg[i] = gauss_w(a, b) if a >= cut else gauss_r(a, b)
    theta_cum = np.cumsum(seg)
    return theta_cum


def xi_plus_quadrature(coeffs, profile=None):
    """Time scale xi_plus = integral of the chart integrand over the star,
    with the boundary square-root singularity removed by substitution."""
    profile = profile if profile is not None else coeffs.profile
    theta_cum = _theta_segments(coeffs, profile)
    return float(theta_cum[-1])


def build_xchart(profile: EquilibriumProfile, coeffs: SelfAdjointCoeffs,
                 spec=None, n_grid=256) -> XChart:
    """Construct the chart: xi_plus by singular-substitution quadrature,
    the monotone spline pair x(r), r(x), endpoint constants by fits, and
    the lower-order coefficients L0, L1 by residual subtraction."""
    spec = spec if spec is not None else profile.spec
    if not spec.validated:
        spec = model.validate_spec(spec, profile.params)
    N = spec.N
    r_plus = profile.r_plus

    theta_cum = _theta_segments(coeffs, profile)
    xi_plus = float(theta_cum[-1])
    if not np.all(np.diff(theta_cum) > 0):
        raise QuadratureFailed("chart integrand quadrature not monotone")

    # node values of theta and x on the profile grid (plus the center)
    theta_nodes = np.concatenate(([0.0], (np.pi / 2) * theta_cum / xi_plus))
    r_nodes = np.concatenate(([0.0], profile.r))
    theta_nodes[-1] = np.pi / 2
    x_nodes = np.sin(theta_nodes) ** 2
    x_of_r = PchipInterpolator(r_nodes, x_nodes)
    theta_of_r = PchipInterpolator(r_nodes, theta_nodes)

    # collocation grid in x; radii by inverting theta(r)
    x = collocation_nodes(n_grid)
    theta_t = np.arcsin(np.sqrt(x))
    r_coll = np.empty(n_grid)
    r_coll[0], r_coll[-1] = 0.0, r_plus
    for j in range(1, n_grid - 1):
        r_coll[j] = brentq(lambda rr: theta_of_r(rr) - theta_t[j],
                           0.0, r_plus, xtol=1e-15 * r_plus,
                           rtol=4 * np.finfo(float).eps)

    # analytic dx/dr on the collocation grid (limit values at endpoints)
    g1 = _g_boundary_limit(profile, spec)
    dxdr = np.empty(n_grid)
    interior = slice(1, n_grid - 1)
    dxdr[interior] = (np.pi / xi_plus) * np.sqrt(
        x[interior] * (1 - x[interior])) * coeffs.g_fn(r_coll[interior])
    dxdr[0] = 0.0
    C1_closed = (xi_plus / np.pi) ** 2 / g1**2
    dxdr[-1] = (np.pi / xi_plus) * g1 / np.sqrt(C1_closed)

    # endpoint scale constants from log-log endpoint fits
    lo = (x > 0) & (x < 1e-4)
    if np.count_nonzero(lo) < 3:
        lo = (x > 0) & (x <= x[4])
    C0 = float(np.exp(np.mean(np.log(r_coll[lo]) - 0.5 * np.log(x[lo]))))
    hi = (x < 1) & (1 - x < 1e-4)
    if np.count_nonzero(hi) < 3:
        hi = (x < 1) & (x >= x[-5])
    C1 = float(np.exp(np.mean(np.log(r_plus - r_coll[hi]) - np.log(1 - x[hi]))))

    # L0 = (xi_plus/pi)^2 Q; L1 = -(log W)' with the singular parts of the
    # weight peeled off; endpoint values by quadratic extrapolation
    L0 = np.empty(n_grid)
    L0[1:-1] = (xi_plus / np.pi) ** 2 * np.asarray(
        coeffs.q_fn(r_coll[1:-1]), dtype=float)
    L0[0] = _quad_extrapolate(x[1:4], L0[1:4], 0.0)
    L0[-1] = _quad_extrapolate(x[-4:-1], L0[-4:-1], 1.0)

    btilde_int = (xi_plus / np.pi) * coeffs.bg_fn(r_coll[interior]) / np.sqrt(
        x[interior] * (1 - x[interior]))
    lnW = np.empty(n_grid)
    lnW[interior] = np.log(btilde_int) - 1.5 * np.log(x[interior]) \
        - (N / 2 - 1) * np.log(1 - x[interior])
    lnW[0] = _quad_extrapolate(x[1:4], lnW[1:4], 0.0)
    lnW[-1] = _quad_extrapolate(x[-4:-1], lnW[-4:-1], 1.0)
    W_sp = CubicSpline(x, lnW)
    L1 = -W_sp(x, 1)

    chart = XChart(
        x=x, r=r_coll, theta=theta_t, dxdr=dxdr, L0=L0, L1=L1,
        xi_plus=xi_plus, C0=C0, C1=C1, N=N,
        time_rescale=xi_plus / np.pi, r_plus=r_plus,
        _r_of_x=PchipInterpolator(x_nodes, r_nodes),
        _x_of_r=x_of_r, _W_of_x=W_sp,
    )
    profile.xi_plus = xi_plus
    return chart


def _quad_extrapolate(xs, ys, x0):
    return float(np.polyval(np.polyfit(xs - x0, ys, 2), 0.0))


def _g_boundary_limit(profile, spec):
    """lim (r_plus - r)^(1/2) g(r): the square-root strength of the chart
    integrand at the boundary."""
    g = spec.gamma
    slope = profile.Q_plus / (profile.r_plus**2 * profile.kappa_plus)
    return 1.0 / (profile.kappa_plus * np.sqrt((g - 1.0) * slope))


def btilde_of_x(x, chart: XChart, coeffs: SelfAdjointCoeffs):
    """Weight of the pulled-back operator: btilde = b / (dx/dr).

    Evaluated through b/g so the boundary degeneracies cancel; vanishes
    like x^(3/2) at the center and (1-x)^(N/2-1) at the surface.
    """
    if coeffs.btilde_x is not None:
        return coeffs.btilde_x(np.asarray(x, dtype=float))
    x = np.asarray(x, dtype=float)
    rr = chart.r_at(x)
    out = (chart.xi_plus / np.pi) * coeffs.bg_fn(rr) / np.sqrt(x * (1 - x))
    return out


def q_of_x(x, chart: XChart, coeffs: SelfAdjointCoeffs):
    if coeffs.q_x is not None:
        return coeffs.q_x(np.asarray(x, dtype=float))
    return coeffs.q_fn(chart.r_at(np.asarray(x, dtype=float)))


def jbar_of_x(x, chart: XChart, coeffs: SelfAdjointCoeffs):
    if coeffs.jbar_x is not None:
        return coeffs.jbar_x(np.asarray(x, dtype=float))
    return coeffs.jbar_fn(chart.r_at(np.asarray(x, dtype=float)))


def apply_L(y, chart: XChart, coeffs: SelfAdjointCoeffs = None):
    """Apply the pulsation operator to values sampled on the chart's
    collocation grid, in physical time units: (pi/xi_plus)^2 times the
    normalized x-form."""
    y = np.asarray(y, dtype=float)
    if y.shape != chart.x.shape:
        raise GridMismatch(
            f"y has shape {y.shape}, chart grid has {chart.x.shape}")
    if not np.all(np.isfinite(y)):
        raise GridMismatch("y contains non-finite values")
    x = chart.x
    sp = CubicSpline(x, y)
    yp = sp(x, 1)
    ypp = sp(x, 2)
    N = chart.N
    Lx = (-x * (1 - x) * ypp
          - (2.5 * (1 - x) - 0.5 * N * x) * yp
          + chart.L1 * x * (1 - x) * yp
          + chart.L0 * y)
    return (np.pi / chart.xi_plus) ** 2 * Lx


def synthetic_problem(N, L0=0.0, n_grid=256):
    """Oracle problem: the bare hypergeometric-type operator with
    constant L0 and L1 = 0 on the unit interval (xi_plus = pi, so
    normalized and physical units coincide).

    Eigenvalues are k(k + (3+N)/2) + L0, eigenfunctions the Jacobi-type
    polynomials 2F1(-k, k+(3+N)/2; 5/2; x).
    """
    if N % 2 != 0 or N < 6:
        raise ValueError("N must be an even integer >= 6")
    x = collocation_nodes(n_grid)
    chart = XChart(
        x=x, r=x.copy(), theta=np.arcsin(np.sqrt(x)),
        dxdr=np.ones_like(x),
        L0=np.full_like(x, float(L0)), L1=np.zeros_like(x),
        xi_plus=np.pi, C0=1.0, C1=1.0, N=int(N), time_rescale=1.0,
        r_plus=1.0, synthetic=True,
    )
    btilde = lambda xx: xx**1.5 * (1 - xx) ** (N / 2 - 1)
    coeffs = SelfAdjointCoeffs(
        r=x.copy(),
        E2=np.zeros_like(x), E1=np.zeros_like(x), E0=np.zeros_like(x),
        a=x**2.5 * (1 - x) ** (N / 2), b=btilde(x),
        Q=np.full_like(x, float(L0)),
        btilde_x=btilde,
        q_x=lambda xx: np.full_like(np.asarray(xx, dtype=float), float(L0)),
        jbar_x=lambda xx: np.ones_like(np.asarray(xx, dtype=float)),
    )
    return chart, coeffs


def validate_structure(chart: XChart, coeffs: SelfAdjointCoeffs) -> dict:
    """Structural conditions on the assembled operator:

    - endpoint exponents of the chart (r ~ C0 sqrt(x), r_plus - r ~ C1(1-x));
    - N and the center exponent parameter both exceed 4;
    - sup|Q| finite; L0, L1 bounded;
    - the evolution factor Jbar bounded between 1/C and C.
    """
    out = {}
    x, r = chart.x, chart.r
    lo = (x > 0) & (x < 1e-3)
    p_lo = np.polyfit(np.log(x[lo]), np.log(r[lo]), 1)[0]
    out["center_exponent"] = float(1.0 / p_lo)     # x ~ r^2 => d ln x/d ln r = 2
    hi = (x < 1) & (1 - x < 1e-3)
    p_hi = np.polyfit(np.log(1 - x[hi]), np.log(chart.r_plus - r[hi]), 1)[0]
    out["boundary_exponent"] = float(p_hi)
    out["N_parameter_ok"] = bool(chart.N > 4)
    out["center_parameter_ok"] = True              # 5 > 4 always
    out["sup_Q"] = float(np.max(np.abs(coeffs.Q)))
    out["sup_L0"] = float(np.max(np.abs(chart.L0)))
    out["sup_L1"] = float(np.max(np.abs(chart.L1)))
    jb = jbar_of_x(x[1:-1], chart, coeffs)
    out["jbar_min"] = float(np.min(jb))
    out["jbar_max"] = float(np.max(jb))
    out["jbar_bounded"] = bool(out["jbar_min"] > 0 and np.isfinite(out["jbar_max"]))
    return out


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def chart_to_csv(chart: XChart, path):
    """CSV with the exact header x,r,L0,L1."""
    with open(path, "w") as fh:
        fh.write("x,r,L0,L1\n")
        for xx, rr, l0, l1 in zip(chart.x, chart.r, chart.L0, chart.L1):
            fh.write(f"{xx:.17g},{rr:.17g},{l0:.17g},{l1:.17g}\n")


def chart_sidecar(chart: XChart) -> dict:
    return {"xi_plus": chart.xi_plus, "C0": chart.C0, "C1": chart.C1,
            "N": chart.N}


def chart_sidecar_to_json(chart: XChart, path):
    with open(path, "w") as fh:
        json.dump(chart_sidecar(chart), fh, indent=2, sort_keys=True)
        fh.write("\n")
