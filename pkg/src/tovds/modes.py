"""Discrete pulsation spectrum of the singular eigenvalue problem.

The operator's canonical self-adjoint realization selects solutions that
stay bounded at the two degenerate endpoints; its spectrum is an
increasing sequence of simple eigenvalues.  Here the symmetric pencil
from `discretize` is solved by shift-invert Lanczos; eigenvectors come
out weighted-orthogonal and are rescaled to psi(x=1) = 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .discretize import DiscreteOperator, build_operator, eig_smallest
from .errors import GridMismatch, NotConverged, SpuriousMode
from .linearop import SelfAdjointCoeffs, XChart

__all__ = [
    "ModeSet",
    "solve_modes",
    "convergence_study",
    "weighted_inner_product",
    "sign_changes",
    "modes_to_csv",
    "modes_sidecar",
]

_RESIDUAL_TOL = 1e-8
_SPURIOUS_FRACTION = 0.30
_SPURIOUS_CELLS = 2


@dataclass
class ModeSet:
    """Eigenvalues (ascending, simple), eigenfunctions on the x-grid
    normalized to 1 at the boundary node, and their frequencies."""

    lambdas: np.ndarray
    psis: np.ndarray              # shape (n_grid, K)
    frequencies: np.ndarray       # sqrt(lambda) where lambda > 0, else nan
    x: np.ndarray
    grid_size: int
    xi_plus: float
    residuals: np.ndarray
    spurious: list = field(default_factory=list)
    convergence: dict | None = None

    @property
    def K(self):
        return len(self.lambdas)


def _edge_fraction(op: DiscreteOperator, v):
    """Fraction of the weighted norm carried by the outermost cells."""
    lump = op.M_diag.copy()
    lump[:-1] += op.M_off
    lump[1:] += op.M_off
    w = lump * v * v
    total = np.sum(w)
    k = _SPURIOUS_CELLS
    return float((np.sum(w[:k]) + np.sum(w[-k:])) / total)


def solve_modes(chart: XChart, coeffs: SelfAdjointCoeffs, K=4,
                grid=None) -> ModeSet:
    """K smallest eigenpairs with boundedness (natural) conditions at the
    degenerate endpoints; no Dirichlet data is imposed anywhere."""
    if K < 1:
        raise ValueError("K must be >= 1")
    n = grid if grid is not None else len(chart.x)
    if n < 8 * K:
        raise ValueError(f"grid {n} too small for K = {K}: need >= {8 * K}")
    op = build_operator(chart, coeffs, n)
    pad = min(2 + K // 2, op.n - 2 - K)
    vals, vecs = eig_smallest(op, K + pad)

    # residual check on the pencil, scaled by the matrix norms
    normA = np.max(np.abs(op.A_diag)) + 2 * np.max(np.abs(op.A_off))
    normM = np.max(np.abs(op.M_diag)) + 2 * np.max(np.abs(op.M_off))
    resid = np.empty(len(vals))
    for j in range(len(vals)):
        v = vecs[:, j]
        rv = op.apply_stiffness(v) - vals[j] * op.apply_mass(v)
        scale = (normA + abs(vals[j]) * normM) * np.linalg.norm(v) + 1e-300
        resid[j] = np.linalg.norm(rv) / scale
    if np.any(resid[:K] > _RESIDUAL_TOL):
        raise NotConverged(
            f"eigenvalue residuals {resid[:K]} above {_RESIDUAL_TOL}")

    kept_vals, kept_vecs, kept_res, spurious = [], [], [], []
    for j in range(len(vals)):
        frac = _edge_fraction(op, vecs[:, j])
        boundary = vecs[-1, j]
        if frac > _SPURIOUS_FRACTION or abs(boundary) < 1e-8 * np.max(np.abs(vecs[:, j])):
            spurious.append({"lambda": float(vals[j]), "edge_fraction": frac})
            continue
        kept_vals.append(vals[j])
        kept_vecs.append(vecs[:, j] / boundary)
        kept_res.append(resid[j])
        if len(kept_vals) == K:
            break
    if len(kept_vals) < K:
        raise SpuriousMode(
            f"only {len(kept_vals)} of {K} modes survived the endpoint "
            f"smoothness filter; flagged: {spurious}")

    lam = np.array(kept_vals)
    if np.any(np.diff(lam) <= 0):
        raise NotConverged("eigenvalues not strictly increasing")
    freqs = np.where(lam > 0, np.sqrt(np.maximum(lam, 0.0)), np.nan)
    return ModeSet(
        lambdas=lam,
        psis=np.column_stack(kept_vecs),
        frequencies=freqs,
        x=op.x,
        grid_size=n,
        xi_plus=chart.xi_plus,
        residuals=np.array(kept_res),
        spurious=spurious,
    )


def sign_changes(psi, x=None):
    """Number of interior sign changes of a grid function."""
    v = np.asarray(psi)
    v = v[np.abs(v) > 1e-12 * np.max(np.abs(v))]
    return int(np.sum(np.sign(v[:-1]) * np.sign(v[1:]) < 0))


def convergence_study(chart: XChart, coeffs: SelfAdjointCoeffs, K,
                      grids) -> dict:
    """Eigenvalues across grids, observed convergence orders, and
    Richardson-extrapolated values.

    With three or more grids the order is measured from the last triple;
    with two it is assumed second order.  Modes with observed order < 1
    are flagged.
    """
    grids = sorted(int(g) for g in grids)
    if len(grids) < 2:
        raise ValueError("need at least two grid sizes")
    table = {}
    for g in grids:
        table[g] = solve_modes(chart, coeffs, K, grid=g).lambdas
    lam = np.array([table[g] for g in grids])      # (n_grids, K)

    ratio = (grids[-1] - 1) / (grids[-2] - 1)
    scale = 1.0 + np.abs(lam[-1])
    converged = np.abs(lam[-1] - lam[-2]) <= 1e-11 * scale
    if len(grids) >= 3:
        d1 = lam[-2] - lam[-3]
        d2 = lam[-1] - lam[-2]
        with np.errstate(divide="ignore", invalid="ignore"):
            orders = np.log(np.abs(d1 / d2)) / np.log(ratio)
        orders = np.where(np.isfinite(orders), orders, np.inf)
    else:
        orders = np.full(K, 2.0)
    orders = np.where(converged, np.inf, orders)

    p_used = np.where((orders >= 0.5) & (orders < 12), orders, 2.0)
    extrap = lam[-1] + (lam[-1] - lam[-2]) / (ratio**p_used - 1.0)
    extrap = np.where(converged, lam[-1], extrap)
    return {
        "grids": grids,
        "lambdas": lam,
        "orders": orders,
        "extrapolated": extrap,
        "flagged": [k for k in range(K) if orders[k] < 1.0],
    }


def _chart_operator(chart, coeffs):
    cache = getattr(chart, "_op_cache", None)
    if cache is None:
        cache = build_operator(chart, coeffs, len(chart.x))
        chart._op_cache = cache
    return cache


def weighted_inner_product(f, g, chart: XChart, coeffs: SelfAdjointCoeffs):
    """Quadrature of f g b dr pulled back to the chart (the P1 mass
    matrix of the clustered grid handles the endpoint weight
    degeneracy)."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != chart.x.shape or g.shape != chart.x.shape:
        raise GridMismatch("f and g must live on the chart grid")
    op = _chart_operator(chart, coeffs)
    return op.inner(f, g)


def richardson_eigenfunctions(coarse: ModeSet, fine: ModeSet):
    """Second-order Richardson extrapolation of eigenfunctions on nested
    grids (fine nodes 2i coincide with coarse nodes i)."""
    if fine.grid_size != 2 * coarse.grid_size - 1:
        raise GridMismatch("grids are not nested (need n_fine = 2 n_coarse - 1)")
    restricted = fine.psis[::2]
    return restricted + (restricted - coarse.psis) / 3.0


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def modes_to_csv(ms: ModeSet, path):
    """CSV with header x,psi_1,...,psi_K."""
    header = "x," + ",".join(f"psi_{k + 1}" for k in range(ms.K))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(ms.x)):
            row = [ms.x[i]] + list(ms.psis[i])
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def modes_sidecar(ms: ModeSet) -> dict:
    return {
        "lambdas": [float(v) for v in ms.lambdas],
        "frequencies": [None if not np.isfinite(v) else float(v)
                        for v in ms.frequencies],
        "xi_plus": ms.xi_plus,
    }


def modes_sidecar_to_json(ms: ModeSet, path):
    with open(path, "w") as fh:
        json.dump(modes_sidecar(ms), fh, indent=2, sort_keys=True)
        fh.write("\n")
