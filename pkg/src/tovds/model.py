"""Barotropic equation of state and thermodynamic conversions.

The pressure law is P = A rho^gamma Omega(s) with s = A rho^(gamma-1)/c^2,
where Omega is an analytic correction, represented here as a finite
polynomial Omega(s) = 1 + w1 s + w2 s^2 + ... with a declared validity
range.  The state variable

    u = integral_0^rho dP / (rho' + P/c^2)

vanishes at the vacuum boundary and is the well-conditioned variable for
everything downstream.  Internally most conversions run through s, because
rho, P, dP/drho and du/ds are all closed-form in s:

    rho      = (c^2 s / A)^(1/(gamma-1))
    P        = c^2 rho s Omega(s)
    dP/drho  = c^2 s (gamma Omega + (gamma-1) s Omega')
    du/ds    = c^2/(gamma-1) * (gamma Omega + (gamma-1) s Omega')/(1 + s Omega)

Only u(s) itself needs quadrature; its integrand is smooth on [0, s_max].

All public operations are pure functions of immutable inputs and are safe
to call concurrently.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import (
    CausalityViolated,
    DomainExceeded,
    GammaNotAdmissible,
    NoConvergence,
)

__all__ = [
    "ModelParams",
    "EosSpec",
    "ThermoState",
    "Scales",
    "validate_spec",
    "pressure",
    "enthalpy_u",
    "rho_of_u",
    "gamma1",
    "model_to_dict",
    "model_from_dict",
]

_INVERT_TOL = 1e-12   # absolute tolerance on u in rho_of_u
_INVERT_MAXIT = 60


@dataclass(frozen=True)
class ModelParams:
    """Physical constants: gravitational constant, light speed, cosmological
    constant.  Lambda = 0 is permitted as the classical-limit regression
    case."""

    G: float = 1.0
    c: float = 1.0
    Lambda: float = 0.0

    def __post_init__(self):
        if not (self.G > 0 and self.c > 0):
            raise ValueError("G and c must be positive")
        if self.Lambda < 0:
            raise ValueError("Lambda must be non-negative")


@dataclass(frozen=True)
class EosSpec:
    """EOS parameters.

    omega holds the polynomial coefficients (w1, w2, ...) of the correction
    Omega(s) = 1 + w1 s + ...; an empty tuple means the pure polytrope.
    rho_max, when given, declares the validity radius of Omega: evaluating
    the thermodynamic functions beyond it raises DomainExceeded, and
    validation rejects the spec if causality fails anywhere below it.
    rho_causal is derived: the largest density with 0 < dP/drho < c^2;
    stellar models must keep their central density below it.  A1 and N are
    also derived during validation.
    """

    A: float = 1.0
    gamma: float = 1.5
    omega: tuple = ()
    rho_max: float | None = None
    A1: float | None = None
    N: int | None = None
    rho_causal: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        if self.A <= 0:
            raise ValueError("A must be positive")
        if self.rho_max is not None and self.rho_max <= 0:
            raise ValueError("rho_max must be positive when declared")

    @property
    def validated(self) -> bool:
        return self.A1 is not None and self.N is not None


@dataclass(frozen=True)
class ThermoState:
    """One thermodynamic point: density, pressure, state variable u and
    adiabatic index Gamma = (rho/P) dP/drho."""

    rho: float
    P: float
    u: float
    Gamma: float


# ---------------------------------------------------------------------------
# Omega polynomial and closed-form s-space thermodynamics
# ---------------------------------------------------------------------------

def _omega_coeffs(spec):
    return np.concatenate(([1.0], np.asarray(spec.omega, dtype=float)))


def omega_val(s, spec):
    """Omega(s) = 1 + w1 s + w2 s^2 + ..."""
    return np.polynomial.polynomial.polyval(s, _omega_coeffs(spec))


def omega_der(s, spec):
    """dOmega/ds."""
    c = _omega_coeffs(spec)
    if len(c) == 1:
        return np.zeros_like(np.asarray(s, dtype=float))
    return np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(c))


def s_of_rho(rho, spec, params):
    return spec.A * np.asarray(rho, dtype=float) ** (spec.gamma - 1.0) / params.c**2


def rho_from_s(s, spec, params):
    return (params.c**2 * np.asarray(s, dtype=float) / spec.A) ** (1.0 / (spec.gamma - 1.0))


def pressure_from_s(s, spec, params):
    s = np.asarray(s, dtype=float)
    return params.c**2 * rho_from_s(s, spec, params) * s * omega_val(s, spec)


def dpdrho_from_s(s, spec, params):
    """Sound speed squared dP/drho as a function of s."""
    s = np.asarray(s, dtype=float)
    g = spec.gamma
    return params.c**2 * s * (g * omega_val(s, spec) + (g - 1.0) * s * omega_der(s, spec))


def p_over_c2rho(s, spec):
    """P/(c^2 rho) = s Omega(s); vanishes linearly at the boundary."""
    s = np.asarray(s, dtype=float)
    return s * omega_val(s, spec)


def gamma_from_s(s, spec):
    """Adiabatic index Gamma = (rho/P) dP/drho = (gamma Omega + (gamma-1) s Omega')/Omega."""
    s = np.asarray(s, dtype=float)
    g = spec.gamma
    om = omega_val(s, spec)
    return (g * om + (g - 1.0) * s * omega_der(s, spec)) / om


def du_ds(s, spec, params):
    """Exact derivative of the state variable with respect to s."""
    s = np.asarray(s, dtype=float)
    g = spec.gamma
    num = g * omega_val(s, spec) + (g - 1.0) * s * omega_der(s, spec)
    return params.c**2 / (g - 1.0) * num / (1.0 + s * omega_val(s, spec))


def u_from_s(s, spec, params):
    """u(s) by adaptive quadrature of the smooth integrand du/ds."""
    s = float(s)
    if s == 0.0:
        return 0.0
    _check_s(s, spec)
    val, err = quad(lambda t: du_ds(t, spec, params), 0.0, s,
                    epsabs=1e-300, epsrel=1e-13, limit=200)
    return val


def u_from_s_batch(s_values, spec, params, panel=0.02, order=12):
    """Cumulative u(s) for an ascending array of s, by composite Gauss
    panels between consecutive nodes (integrand is smooth, so a fixed
    high-order rule is effectively exact)."""
    s_values = np.asarray(s_values, dtype=float)
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.concatenate(([0.0], s_values))
    out = np.empty(len(s_values))
    acc = 0.0
    for i in range(len(s_values)):
        a, b = edges[i], edges[i + 1]
        nsub = max(1, int(np.ceil((b - a) / panel)))
        sub = np.linspace(a, b, nsub + 1)
        mid = 0.5 * (sub[:-1] + sub[1:])[:, None]
        half = 0.5 * (sub[1:] - sub[:-1])[:, None]
        pts = mid + half * xg[None, :]
        acc += float(np.sum(half * wg[None, :] * du_ds(pts, spec, params)))
        out[i] = acc
    return out


def s_of_u(u, spec, params):
    """Invert u(s): bracketing in s followed by Newton refinement."""
    u = float(u)
    if u < 0:
        raise ValueError("u must be non-negative")
    if u == 0.0:
        return 0.0
    s_hi = _invert_bracket(u, spec, params)
    try:
        s = brentq(lambda t: u_from_s(t, spec, params) - u, 0.0, s_hi,
                   xtol=1e-300, rtol=4 * np.finfo(float).eps,
                   maxiter=_INVERT_MAXIT)
    except (RuntimeError, ValueError) as exc:
        raise NoConvergence(f"inversion of u(s) stalled: {exc}") from exc
    for _ in range(2):
        f = u_from_s(s, spec, params) - u
        step = f / du_ds(s, spec, params)
        if abs(step) > abs(s):
            break
        s -= step
        if abs(f) < _INVERT_TOL * params.c**2:
            break
    return max(s, 0.0)


def _invert_bracket(u, spec, params):
    """Upper bracket for s_of_u: grow until u(s_hi) >= u, staying inside the
    declared Omega radius and the monotone range of u(s)."""
    s_cap = _s_omega(spec)
    s_hi = min(1.0, s_cap)
    for _ in range(200):
        if du_ds(s_hi, spec, params) <= 0:
            raise NoConvergence(
                "u(s) is not monotone up to the requested value: "
                "ill-posed Omega series")
        if u_from_s(s_hi, spec, params) >= u:
            return s_hi
        if s_hi >= s_cap:
            raise DomainExceeded(
                f"u = {u:g} exceeds u at the declared Omega validity radius")
        s_hi = min(2.0 * s_hi, s_cap)
    raise NoConvergence("could not bracket s for the requested u")


def _s_omega(spec):
    """Validity radius of Omega in the variable s (inf when undeclared)."""
    return getattr(spec, "_s_omega", np.inf)


def _check_s(s, spec):
    if np.any(np.asarray(s) > _s_omega(spec) * (1 + 1e-12)):
        raise DomainExceeded(
            "density beyond the declared validity radius of Omega")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_spec(spec: EosSpec, params: ModelParams) -> EosSpec:
    """Check admissibility and populate derived fields A1, N.

    Raises GammaNotAdmissible when gamma is outside (1, 2) or 1/(gamma-1)
    is not an integer, and CausalityViolated when dP/drho exits (0, c^2)
    anywhere on the declared density range.
    """
    g = spec.gamma
    if not (1.0 < g < 2.0):
        raise GammaNotAdmissible(f"gamma = {g} not in (1, 2)")
    n = 1.0 / (g - 1.0)
    n_int = round(n)
    if abs(n - n_int) > 1e-9 * max(1.0, n):
        raise GammaNotAdmissible(
            f"1/(gamma-1) = {n:.12g} is not an integer")
    N = 2 * (n_int + 1)          # 2*gamma/(gamma-1), exactly even
    if N % 2 != 0 or N < 6:
        raise GammaNotAdmissible(f"N = 2*gamma/(gamma-1) = {N} must be an even integer >= 6")
    A1 = ((g - 1.0) / (g * spec.A)) ** n_int

    # Causality: on a declared range it must hold everywhere (hard reject);
    # otherwise resolve the largest admissible density.
    if spec.rho_max is not None:
        s_omega = float(s_of_rho(spec.rho_max, spec, params))
        _require_causal(spec, params, s_omega, declared=True)
        s_causal = s_omega
    else:
        s_omega = np.inf
        s_causal = _causal_s_limit(spec, params)

    checked = dataclasses.replace(
        spec, A1=A1, N=N,
        rho_causal=float(rho_from_s(s_causal, spec, params)))
    object.__setattr__(checked, "_s_omega", s_omega)
    object.__setattr__(checked, "_s_causal", s_causal)
    return checked


def _causal_sq(s, spec):
    """dP/drho in units of c^2; must stay in (0, 1)."""
    g = spec.gamma
    return s * (g * omega_val(s, spec) + (g - 1.0) * s * omega_der(s, spec))


def _require_causal(spec, params, s_max, declared=False):
    grid = np.linspace(0.0, s_max, 4097)[1:]
    f = _causal_sq(grid, spec)
    if np.any(f <= 0.0) or np.any(f >= 1.0):
        where = "declared" if declared else "resolved"
        raise CausalityViolated(
            f"dP/drho exits (0, c^2) on the {where} density range "
            f"(s up to {s_max:g})")


def _causal_s_limit(spec, params):
    """Largest s with 0 < dP/drho < c^2, found by scan plus bisection.
    For the pure polytrope this is exactly 1/gamma."""
    if not spec.omega:
        return (1.0 / spec.gamma) * (1.0 - 1e-12)
    s_hi = 10.0 / spec.gamma
    grid = np.linspace(0.0, s_hi, 20001)[1:]
    f = _causal_sq(grid, spec)
    bad = np.nonzero((f <= 0.0) | (f >= 1.0))[0]
    if bad.size == 0:
        s_star = s_hi
    else:
        j = bad[0]
        lo = grid[j - 1] if j > 0 else grid[0] * 1e-6
        hi = grid[j]
        crossed_one = f[j] >= 1.0
        fn = (lambda s: _causal_sq(s, spec) - 1.0) if crossed_one else (
            lambda s: _causal_sq(s, spec))
        s_star = brentq(fn, lo, hi, xtol=1e-300, rtol=1e-14)
    s_star *= 1.0 - 1e-12
    if s_star <= 0:
        raise CausalityViolated("no admissible density range for this Omega")
    _require_causal(spec, params, s_star)
    return s_star


# ---------------------------------------------------------------------------
# Public thermodynamic operations (rho- and u-based contracts)
# ---------------------------------------------------------------------------

def pressure(rho, spec: EosSpec, params: ModelParams):
    """P = A rho^gamma Omega(A rho^(gamma-1)/c^2); exactly 0 at rho = 0."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be non-negative")
    s = s_of_rho(rho, spec, params)
    _check_s(s, spec)
    out = spec.A * rho**spec.gamma * omega_val(s, spec)
    return float(out) if out.ndim == 0 else out


def enthalpy_u(rho, spec: EosSpec, params: ModelParams):
    """State variable u(rho) by adaptive quadrature.

    For Omega == 1 this equals c^2 gamma/(gamma-1) * log(1 + A rho^(gamma-1)/c^2).
    """
    rho_arr = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(rho_arr < 0):
        raise ValueError("rho must be non-negative")
    s = s_of_rho(rho_arr, spec, params)
    _check_s(s, spec)
    out = np.array([u_from_s(si, spec, params) for si in s])
    return float(out[0]) if np.isscalar(rho) or np.asarray(rho).ndim == 0 else out


def rho_of_u(u, spec: EosSpec, params: ModelParams):
    """Inverse of enthalpy_u by safeguarded root finding."""
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.array([rho_from_s(s_of_u(ui, spec, params), spec, params)
                    for ui in u_arr])
    return float(out[0]) if np.isscalar(u) or np.asarray(u).ndim == 0 else out


def gamma1(u, spec: EosSpec, params: ModelParams):
    """Adiabatic index Gamma = (rho/P) dP/drho at rho = rho_of_u(u).

    Tends to gamma as u -> 0; equals gamma identically for Omega == 1.
    """
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.array([gamma_from_s(s_of_u(ui, spec, params), spec)
                    if ui > 0 else spec.gamma for ui in u_arr])
    return float(out[0]) if np.isscalar(u) or np.asarray(u).ndim == 0 else out


def thermo_state(rho, spec: EosSpec, params: ModelParams) -> ThermoState:
    """Bundle (rho, P, u, Gamma) at one density."""
    s = float(s_of_rho(rho, spec, params))
    return ThermoState(
        rho=float(rho),
        P=float(pressure_from_s(s, spec, params)),
        u=u_from_s(s, spec, params),
        Gamma=float(gamma_from_s(s, spec)),
    )


# ---------------------------------------------------------------------------
# JSON interface
# ---------------------------------------------------------------------------

def model_to_dict(spec: EosSpec, params: ModelParams) -> dict:
    """Serialize to the flat JSON object {"A","gamma","omega","G","c","Lambda"}."""
    out = {"A": spec.A, "gamma": spec.gamma, "G": params.G,
           "c": params.c, "Lambda": params.Lambda}
    if spec.omega:
        out["omega"] = list(spec.omega)
    if spec.rho_max is not None:
        out["rho_max"] = spec.rho_max
    return out


def model_from_dict(d: dict) -> tuple[EosSpec, ModelParams]:
    """Inverse of model_to_dict; a missing "omega" means Omega == 1."""
    spec = EosSpec(A=float(d["A"]), gamma=float(d["gamma"]),
                   omega=tuple(d.get("omega", ())),
                   rho_max=d.get("rho_max"))
    params = ModelParams(G=float(d["G"]), c=float(d["c"]),
                         Lambda=float(d["Lambda"]))
    return spec, params


# ---------------------------------------------------------------------------
# Unit scaling: geometrized-polytropic internal units G = c = A = 1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scales:
    """Conversion factors between input units and the internal system in
    which G = c = A = 1.  internal = physical / scale."""

    length: float
    time: float
    mass: float
    density: float
    pressure: float

    @classmethod
    def for_model(cls, spec: EosSpec, params: ModelParams) -> "Scales":
        g, A, c, G = spec.gamma, spec.A, params.c, params.G
        length = math.sqrt((A * c ** (2 * g - 4)) ** (1.0 / (g - 1.0)) / G)
        time = length / c
        mass = c**2 * length / G
        density = mass / length**3
        pres = mass / (length * time**2)
        return cls(length=length, time=time, mass=mass,
                   density=density, pressure=pres)


def to_internal(spec: EosSpec, params: ModelParams):
    """Nondimensionalized (spec, params, scales) with G = c = A = 1."""
    sc = Scales.for_model(spec, params)
    spec_i = EosSpec(A=1.0, gamma=spec.gamma, omega=spec.omega,
                     rho_max=(None if spec.rho_max is None
                              else spec.rho_max / sc.density))
    params_i = ModelParams(G=1.0, c=1.0, Lambda=params.Lambda * sc.length**2)
    spec_i = validate_spec(spec_i, params_i)
    return spec_i, params_i, sc
