"""Symmetric discretization of the pulsation operator on the chart grid.

The weighted form -(atilde y')' + q btilde y = lambda btilde y on (0,1)
with atilde = (pi/xi_plus)^2 x(1-x) btilde is discretized with piecewise
linear elements on the clustered collocation grid, endpoints included as
unknowns.  Both endpoint coefficients degenerate (atilde ~ x^(5/2) and
~(1-x)^(N/2)), so the natural (zero-flux) closure selects exactly the
bounded solution branch; no Dirichlet data is imposed.  Element integrals
use Gauss panels in the uniform map parameter of the sin^2 clustering,
where the degenerate endpoint factors are polynomial-like; this keeps the
eigenvalue error a clean second-order expansion that Richardson
extrapolation can remove.

The assembled pencil (A, M) is symmetric tridiagonal with M positive
definite, so eigenpairs are real and simple by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from .linearop import SelfAdjointCoeffs, XChart, btilde_of_x, jbar_of_x, q_of_x

__all__ = ["DiscreteOperator", "build_operator"]

_GAUSS_ORDER = 8


@dataclass
class DiscreteOperator:
    """Tridiagonal pencil (A, M) for L on the collocation grid, plus the
    nodal equilibrium factor Jbar used by the time stepper."""

    x: np.ndarray                 # collocation nodes, endpoints included
    A_diag: np.ndarray
    A_off: np.ndarray
    M_diag: np.ndarray
    M_off: np.ndarray
    jbar: np.ndarray
    q_floor: float                # min(q, 0): lower bound on the spectrum
    pref: float                   # (pi/xi_plus)^2, the eigenvalue scale
    _lambda_max: float | None = field(default=None, repr=False)

    @property
    def n(self):
        return len(self.x)

    def apply(self, y):
        """L y = M^{-1} A y (nodal values in, nodal values out)."""
        return self.solve_mass(self.apply_stiffness(y))

    def apply_stiffness(self, y):
        out = self.A_diag * y
        out[:-1] += self.A_off * y[1:]
        out[1:] += self.A_off * y[:-1]
        return out

    def apply_mass(self, y):
        out = self.M_diag * y
        out[:-1] += self.M_off * y[1:]
        out[1:] += self.M_off * y[:-1]
        return out

    def solve_mass(self, rhs):
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.M_off
        ab[1] = self.M_diag
        ab[2, :-1] = self.M_off
        return solve_banded((1, 1), ab, rhs)

    def inner(self, f, g):
        """Weighted inner product f^T M g (the P1 quadrature of f g b dr
        pulled back to the chart)."""
        return float(np.dot(f, self.apply_mass(g)))

    def sparse(self):
        A = sp.diags([self.A_off, self.A_diag, self.A_off], [-1, 0, 1],
                     format="csc")
        M = sp.diags([self.M_off, self.M_diag, self.M_off], [-1, 0, 1],
                     format="csc")
        return A, M

    def lambda_max(self):
        """Largest eigenvalue of the pencil, by inverse-mass power
        iteration (deterministic start, ~1e-8 relative accuracy)."""
        if self._lambda_max is None:
            v = np.ones(self.n)
            v /= np.sqrt(self.inner(v, v))
            lam = 0.0
            for _ in range(200):
                w = self.apply(v)
                lam_new = self.inner(v, w)
                nrm = np.sqrt(abs(self.inner(w, w)))
                if nrm == 0:
                    break
                v = w / nrm
                if abs(lam_new - lam) <= 1e-8 * abs(lam_new):
                    lam = lam_new
                    break
                lam = lam_new
            self._lambda_max = float(abs(lam))
        return self._lambda_max


def _gauss_panels(sig_lo, sig_hi):
    xg, wg = np.polynomial.legendre.leggauss(_GAUSS_ORDER)
    mid = 0.5 * (sig_lo + sig_hi)[:, None]
    half = 0.5 * (sig_hi - sig_lo)[:, None]
    return mid + half * xg[None, :], half * wg[None, :]


def build_operator(chart: XChart, coeffs: SelfAdjointCoeffs,
                   n_grid=None) -> DiscreteOperator:
    """Assemble the pencil on n_grid sin^2-clustered nodes (defaults to
    the chart's own collocation size)."""
    n = n_grid if n_grid is not None else len(chart.x)
    m = n - 1
    sig = np.arange(n) / m
    x = np.sin(np.pi * sig / 2) ** 2
    pref = (np.pi / chart.xi_plus) ** 2

    # all Gauss points of all elements at once
    sg, swg = _gauss_panels(sig[:-1], sig[1:])
    xgp = np.sin(np.pi * sg / 2) ** 2
    jac = (np.pi / 2) * np.sin(np.pi * sg)          # dx/dsigma
    flat = xgp.ravel()
    bt = btilde_of_x(flat, chart, coeffs).reshape(xgp.shape)
    qv = q_of_x(flat, chart, coeffs).reshape(xgp.shape)
    w_meas = swg * jac * bt                          # btilde dx weights

    h = np.diff(x)
    phiR = (xgp - x[:-1, None]) / h[:, None]
    phiL = 1.0 - phiR

    ke = pref * np.sum(swg * jac * xgp * (1 - xgp) * bt, axis=1) / h**2
    mLL = np.sum(w_meas * phiL * phiL, axis=1)
    mLR = np.sum(w_meas * phiL * phiR, axis=1)
    mRR = np.sum(w_meas * phiR * phiR, axis=1)
    qLL = np.sum(w_meas * qv * phiL * phiL, axis=1)
    qLR = np.sum(w_meas * qv * phiL * phiR, axis=1)
    qRR = np.sum(w_meas * qv * phiR * phiR, axis=1)

    A_diag = np.zeros(n)
    A_off = np.zeros(n - 1)
    M_diag = np.zeros(n)
    M_off = np.zeros(n - 1)
    A_diag[:-1] += ke + qLL
    A_diag[1:] += ke + qRR
    A_off[:] = -ke + qLR
    M_diag[:-1] += mLL
    M_diag[1:] += mRR
    M_off[:] = mLR

    jbar = np.empty(n)
    jbar[1:-1] = jbar_of_x(x[1:-1], chart, coeffs)
    jbar[0] = _extrap3(x[1:4], jbar[1:4], 0.0)
    jbar[-1] = _extrap3(x[-4:-1], jbar[-4:-1], 1.0)

    q_floor = float(np.min(np.concatenate([qv.ravel(), [0.0]])))
    return DiscreteOperator(x=x, A_diag=A_diag, A_off=A_off,
                            M_diag=M_diag, M_off=M_off,
                            jbar=jbar, q_floor=q_floor, pref=pref)


def _extrap3(xs, ys, x0):
    return float(np.polyval(np.polyfit(xs - x0, ys, 2), 0.0))


def eig_smallest(op: DiscreteOperator, k, tol=0.0):
    """The k algebraically smallest eigenpairs of (A, M) by shift-invert
    Lanczos with a deterministic start vector.

    The Rayleigh bound lambda_1 >= min(q, 0) places the shift strictly
    below, but within one eigenvalue scale of, the bottom of the spectrum.
    """
    A, M = op.sparse()
    sigma = op.q_floor - op.pref
    vals, vecs = spla.eigsh(A, k=k, M=M, sigma=sigma, which="LM",
                            v0=np.ones(op.n), tol=tol, maxiter=5000)
    order = np.argsort(vals)
    return vals[order], vecs[:, order]
