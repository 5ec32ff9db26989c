"""Directional derivative w_theta of the solution map z -> u(z).

For h = t theta with real t, w_theta solves a real-linear system whose
conjugate-linear term carries the twist conj(theta)/theta.  It is assembled
realified, like the Newton Jacobian, which it reduces to when theta is real.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .coefficients import CoefficientField, ParametricCoefficient, SourceField, sensitivity_condition
from .discretization import (
    coefficient_at,
    gradients,
    operator_from_blocks,
    residual_full,
    source_at,
    split,
    tangent_blocks,
    weak_vector,
    w12_distance,
    norms,
)
from .mesh import GAUSS2, FEFunction, QuadRule, RectGrid
from .solver import SolverConfig, SolverError, solve_dirichlet
from .structure import FluxParams, flux_weight

log = logging.getLogger(__name__)


class ConditionViolated(ValueError):
    pass


class RateTestError(AssertionError):
    def __init__(self, msg, table):
        super().__init__(msg)
        self.table = table


@dataclass(frozen=True)
class Direction:
    theta: complex
    theta_twist: complex = field(init=False)

    def __post_init__(self):
        th = complex(self.theta)
        if th == 0:
            raise ValueError("direction must be nonzero")
        th = th / abs(th)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "theta_twist", th.conjugate() / th)


@dataclass
class SensitivitySolution:
    w_theta: FEFunction
    linear_residual: float
    s_star: float
    direction: Direction
    rate_table: list = field(default_factory=list)  # (t, err(t)/t, ||quotient||_W12)


def assemble_linearized(grid: RectGrid, a_z: CoefficientField, params: FluxParams, u_z: FEFunction,
                        direction: Direction, a_prime, F: SourceField | None = None, tol: float | None = None,
                        rule: QuadRule = GAUSS2):
    """Realified operator and right-hand side of the linearized equation at z.

    ``a_prime(x)`` evaluates the z-derivative of the coefficient.  When ``F``
    and ``tol`` are given, ``u_z`` is checked to be a converged solution.
    """
    if params.eps <= 0:
        raise ValueError("the linearized system requires eps > 0")
    a_q = coefficient_at(grid, a_z, rule)
    N = u_z.N
    if F is not None and tol is not None:
        r = residual_full(grid, a_q, source_at(grid, F, rule), params, u_z.values, rule)[grid.interior_dofs(N)]
        if r.size and np.max(np.abs(r)) > tol:
            raise ValueError(f"u_z is not converged: residual {np.max(np.abs(r)):.2e} > {tol:.1e}")
    G = gradients(grid, u_z.values, rule)
    D = tangent_blocks(a_q, params, G, "linearized", direction.theta_twist)
    op = split(grid, operator_from_blocks(grid, D, N, rule), N)
    ap_q = np.asarray(a_prime(grid.quad_points(rule)), dtype=complex)
    mu = flux_weight(params, np.sum(np.abs(G) ** 2, axis=(-2, -1)))
    rhs = -weak_vector(grid, (ap_q * mu)[..., None, None] * G, rule)[op.interior]
    return op.II, rhs


def coercivity_witness(grid: RectGrid, a_z: CoefficientField, params: FluxParams, u_z: FEFunction, K, x,
                       rule: QuadRule = GAUSS2):
    """Quadratic form x.Kx and its lower bounds.

    Returns (form, pointwise_bound, crude_bound) with
    pointwise_bound = 1/2 int mu (p a^R - |p-2||a|) |grad w|^2 and
    crude_bound = (1 - s*) p/2 min(a^R mu) ||grad w||^2.
    """
    N = u_z.N
    w = FEFunction.zeros(grid, N).with_interior(x)
    q = grid.quad_weights(rule)
    a_q = coefficient_at(grid, a_z, rule)
    mu = flux_weight(params, np.sum(np.abs(gradients(grid, u_z.values, rule)) ** 2, axis=(-2, -1)))
    gw2 = np.sum(np.abs(gradients(grid, w.values, rule)) ** 2, axis=(-2, -1))
    p = params.p
    point = 0.5 * np.sum(mu * (p * a_q.real - abs(p - 2) * np.abs(a_q)) * gw2 * q)
    s_star = float(np.max(abs(p - 2) / p * np.abs(a_q) / a_q.real))
    crude = (1 - s_star) * p / 2 * float(np.min(a_q.real * mu)) * float(np.sum(gw2 * q))
    return float(x @ (K @ x)), float(point), crude


def _check_condition(s_star: float, strict: bool):
    if s_star >= 1:
        if strict or s_star > 1:
            raise ConditionViolated(f"sensitivity condition fails: s* = {s_star:.4f} >= 1")
        log.warning("s* = 1: only weak convergence of difference quotients is expected")


def solve_w_theta(grid: RectGrid, pc: ParametricCoefficient, z, direction: Direction, params: FluxParams,
                  F: SourceField, cfg: SolverConfig | None = None, g=None, strict: bool = True,
                  u_z: FEFunction | None = None) -> SensitivitySolution:
    cfg = cfg or SolverConfig()
    z = complex(z)
    a_z = pc.at(z)
    s_star = sensitivity_condition(a_z, grid, params.p)
    _check_condition(s_star, strict)
    if u_z is None:
        u_z, _ = solve_dirichlet(grid, a_z, params, F, g, cfg)
    K, rhs = assemble_linearized(grid, a_z, params, u_z, direction, lambda x: pc.derivative_at(z, x), F,
                                 cfg.tol * 10)
    try:
        x = spla.splu(K.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SolverError(f"linearized operator is singular at s* = {s_star:.4f}") from exc
    res = float(np.max(np.abs(K @ x - rhs))) if rhs.size else 0.0
    w = FEFunction.zeros(grid, u_z.N).with_interior(x)
    return SensitivitySolution(w, res, s_star, direction)


def difference_quotient(grid: RectGrid, pc: ParametricCoefficient, z, direction: Direction, t: float,
                        params: FluxParams, F: SourceField, cfg: SolverConfig | None = None, g=None,
                        u_z: FEFunction | None = None) -> FEFunction:
    """(u(z + t theta) - u(z)) / (t theta); zero on the boundary."""
    if t == 0:
        raise ValueError("t must be nonzero")
    z = complex(z)
    h = t * direction.theta
    if u_z is None:
        u_z, _ = solve_dirichlet(grid, pc.at(z), params, F, g, cfg)
    u_h, _ = solve_dirichlet(grid, pc.at(z + h), params, F, g, cfg, init=u_z)
    q = (u_h - u_z) / h
    q.values[grid.boundary] = 0
    return q


def rate_test(grid: RectGrid, pc: ParametricCoefficient, z, direction: Direction, t_list, params: FluxParams,
              F: SourceField, cfg: SolverConfig | None = None, g=None, min_factor: float = 5.0,
              strict: bool = True) -> SensitivitySolution:
    """Fill the rate table err(t)/t, err(t) = ||u(z+t theta) - u(z) - t theta w_theta||_W12.

    Rows are (t, err/t, ||quotient||_W12).  Above the floor 10 tol / t every
    decade must shrink err/t by ``min_factor``; otherwise RateTestError.
    """
    cfg = cfg or SolverConfig()
    t_list = sorted((float(t) for t in t_list), reverse=True)
    if len(t_list) < 2 or t_list[0] / t_list[-1] < 100:
        raise ValueError("t_list must span at least two decades")
    z = complex(z)
    u_z, _ = solve_dirichlet(grid, pc.at(z), params, F, g, cfg)
    sol = solve_w_theta(grid, pc, z, direction, params, F, cfg, g, strict=True, u_z=u_z)
    for t in t_list:
        q = difference_quotient(grid, pc, z, direction, t, params, F, cfg, g, u_z)
        err_over_t = w12_distance(q, sol.w_theta)  # ||u(z+h)-u(z)-h w|| / t with |theta| = 1
        sol.rate_table.append((t, err_over_t, norms(q, 2.0).w12))
    if strict:
        check_rate_table(sol.rate_table, cfg.tol, min_factor)
    return sol


def rate_floor(t: float, tol: float) -> float:
    return 10 * tol / t


def check_rate_table(table, tol: float, min_factor: float = 5.0) -> list:
    """Per-decade reduction factors above the floor; raises if any is below ``min_factor``."""
    factors = []
    for (t0, e0, _), (t1, e1, _) in zip(table, table[1:]):
        if e1 <= rate_floor(t1, tol):
            break
        decades = np.log10(t0 / t1)
        f = (e0 / e1) ** (1 / decades) if e1 > 0 else np.inf
        factors.append(f)
        if f < min_factor:
            raise RateTestError(f"err/t shrank only {f:.2f}x per decade between t={t0:g} and t={t1:g}", table)
    return factors
