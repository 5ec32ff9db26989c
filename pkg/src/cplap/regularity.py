"""Empirical gradient-regularity measurements on nested sub-squares.

Balls are replaced by axis-aligned squares of half-width rho whose corners are
grid nodes; gradient "points" are quadrature points.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import coefficients as co
from .coefficients import CoefficientField
from .discretization import gradients
from .mesh import GAUSS2, FEFunction, QuadRule, RectGrid
from .solver import SolverConfig, solve_dirichlet
from .structure import FluxParams


class ResolutionError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass
class ExcessProfile:
    center: tuple
    radii: list
    excess: list
    fitted_beta: float
    fit_r2: float
    slope: float
    p: float
    degenerate: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def to_csv(self) -> str:
        lines = ["rho,excess"] + [f"{r!r},{e!r}" for r, e in zip(self.radii, self.excess)]
        return "\n".join(lines) + "\n"


def subsquare_cells(grid: RectGrid, center, rho: float) -> np.ndarray:
    """Ids of cells lying entirely inside the square of half-width rho about center."""
    cx, cy = center
    (x0, x1), (y0, y1) = grid.bounds
    tol = 1e-9 * max(grid.h)
    if cx - rho < x0 - tol or cx + rho > x1 + tol or cy - rho < y0 - tol or cy + rho > y1 + tol:
        raise ResolutionError(f"square of half-width {rho} about {center} leaves the domain")
    o = grid.cell_origin
    hx, hy = grid.h
    inside = ((o[:, 0] >= cx - rho - tol) & (o[:, 0] + hx <= cx + rho + tol)
              & (o[:, 1] >= cy - rho - tol) & (o[:, 1] + hy <= cy + rho + tol))
    ids = np.flatnonzero(inside)
    if ids.size == 0:
        raise ResolutionError(f"square of half-width {rho} contains no full cell")
    return ids


def _samples(u: FEFunction, center, rho, rule):
    cells = subsquare_cells(u.grid, center, rho)
    G = gradients(u.grid, u.values, rule)[cells]  # (k, Q, N, 2)
    w = np.broadcast_to(rule.weights, G.shape[:2]).ravel()
    return G.reshape(-1, *G.shape[2:]), w


def excess(u: FEFunction, center, rho: float, p: float, rule: QuadRule = GAUSS2) -> float:
    """Mean over the sub-square of |grad u - mean(grad u)|^p."""
    G, w = _samples(u, center, rho, rule)
    # Centering on a sample first keeps constant gradients exactly zero.
    G = G - G[0]
    mean = np.tensordot(w, G, axes=1) / w.sum()
    d2 = np.sum(np.abs(G - mean) ** 2, axis=(-2, -1))
    return float(np.sum(w * d2 ** (p / 2)) / w.sum())


def mean_power(u: FEFunction, center, rho: float, p: float, rule: QuadRule = GAUSS2) -> float:
    """Mean over the sub-square of |grad u|^p."""
    G, w = _samples(u, center, rho, rule)
    return float(np.sum(w * np.sum(np.abs(G) ** 2, axis=(-2, -1)) ** (p / 2)) / w.sum())


def decay_fit(u: FEFunction, center, radii, p: float, rule: QuadRule = GAUSS2) -> ExcessProfile:
    """Least-squares fit of log(excess) against log(rho); beta estimate = slope / p."""
    rs, ex = [], []
    for rho in sorted(radii, reverse=True):
        try:
            ex.append(excess(u, center, rho, p, rule))
        except ResolutionError:
            continue
        rs.append(float(rho))
    if len(rs) < 4:
        raise InsufficientDataError(f"only {len(rs)} resolvable radii, need 4")
    ex_arr = np.array(ex)
    if np.any(ex_arr <= 0):
        return ExcessProfile(tuple(center), rs, ex, 0.0, 0.0, 0.0, p, degenerate=True)
    x, y = np.log(rs), np.log(ex_arr)
    slope, icept = np.polyfit(x, y, 1)
    resid = y - (slope * x + icept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return ExcessProfile(tuple(center), rs, ex, float(slope / p), float(r2), float(slope), p)


def grad_oscillation(u: FEFunction, center, rho: float, rule: QuadRule = GAUSS2) -> float:
    """max |grad u(x) - grad u(y)| over quadrature points in the sub-square.

    Only extreme points of the sample cloud can realize the diameter, so the
    pairwise search runs over convex-hull vertices when the hull exists.
    """
    G, _ = _samples(u, center, rho, rule)
    X = np.concatenate([G.real, G.imag], axis=-2).reshape(len(G), -1)
    X = np.unique(X, axis=0)
    if len(X) < 2:
        return 0.0
    try:
        X = X[ConvexHull(X).vertices]
    except (QhullError, ValueError):
        pass
    best = 0.0
    chunk = max(1, 4_000_000 // len(X))
    for s in range(0, len(X), chunk):
        d = np.sqrt(((X[s:s + chunk, None, :] - X[None, :, :]) ** 2).sum(-1))
        best = max(best, float(d.max()))
    return best


def subgrid(grid: RectGrid, center, rho: float) -> RectGrid:
    hx, hy = grid.h
    kx = int(round(2 * rho / hx))
    ky = int(round(2 * rho / hy))
    cx, cy = center
    return RectGrid(((cx - rho, cx + rho), (cy - rho, cy + rho)), (kx, ky))


def restrict(u: FEFunction, sub: RectGrid) -> FEFunction:
    """Nodal restriction of u to a node-aligned sub-grid."""
    grid = u.grid
    hx, hy = grid.h
    (x0, _), (y0, _) = grid.bounds
    i = np.rint((sub.nodes[:, 0] - x0) / hx).astype(int)
    j = np.rint((sub.nodes[:, 1] - y0) / hy).astype(int)
    return FEFunction(sub, u.values[grid.node_id(i, j)])


@dataclass
class ComparisonReport:
    rho: float
    lhs: float  # mean |grad u - grad v|^p
    rhs_shape: float  # rho^alpha0 * mean(|grad u|^p + 1)
    ratio: float
    energy_ratio: float  # mean |grad v|^p / mean(|grad u|^p + 1)
    alpha0: float


def compare_homogeneous(u: FEFunction, center, rho: float, params: FluxParams, a: CoefficientField,
                        cfg: SolverConfig | None = None) -> ComparisonReport:
    """Solve the frozen-coefficient homogeneous problem on the sub-square with data u."""
    sub = subgrid(u.grid, center, rho)
    subsquare_cells(u.grid, center, rho)
    u_sub = restrict(u, sub)
    a0 = complex(a(np.asarray(center, dtype=float)))
    frozen = co.constant(a0, a.nu, a.L)
    lookup = {tuple(np.round(x, 12)): val for x, val in zip(sub.nodes, u_sub.values)}

    def g(x):
        return np.array([lookup[tuple(np.round(pt, 12))] for pt in x])

    v, _ = solve_dirichlet(sub, frozen, params, co.zero_source(u.N), g, cfg, init=u_sub)
    p = params.p
    d = u_sub - v
    lhs = mean_power(d, center, rho, p)
    up = mean_power(u_sub, center, rho, p) + 1
    pprime = p / (p - 1)
    alpha = min(a.holder_exponent * pprime, 1.0)
    alpha0 = min(alpha, alpha * (p - 1))
    rhs = rho**alpha0 * up
    return ComparisonReport(rho, lhs, rhs, lhs / rhs, mean_power(v, center, rho, p) / up, alpha0)


def decay_constant(u: FEFunction, center, radii, p: float, kappa: float) -> float:
    """Smallest C with int_rho (|grad u|^p+1) <= C (rho/r)^kappa int_r (|grad u|^p+1) over radius pairs."""
    radii = sorted(radii)
    vals = {r: (mean_power(u, center, r, p) + 1) * (2 * r) ** 2 for r in radii}
    worst = 0.0
    for i, rho in enumerate(radii):
        for r in radii[i + 1:]:
            worst = max(worst, vals[rho] / ((rho / r) ** kappa * vals[r]))
    return worst
