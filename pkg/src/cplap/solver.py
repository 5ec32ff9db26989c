"""Nonlinear Dirichlet solve: lagged-weight Picard followed by damped Newton."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .coefficients import CoefficientField, ParametricCoefficient, SourceField
from .discretization import (
    DegenerateError,
    assemble_newton_jacobian,
    assemble_picard_operator,
    coefficient_at,
    gradients,
    lift_boundary,
    norms,
    require_admissible,
    residual_full,
    source_at,
    w12_distance,
)
from .mesh import GAUSS2, FEFunction, QuadRule, RectGrid
from .structure import FluxParams, c1_of, c2_of, flux_weight, power_weight

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_picard: int = 200
    max_newton: int = 50
    damping: float = 1.0
    switch_threshold: float = 1e-3
    eps0_floor: bool = False  # allow p < 2, eps = 0 by flooring the weight argument
    strict_ell2: bool = False
    polish: bool = True  # one extra Newton step after reaching tol, kept only if it helps

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_picard < 1 or self.max_newton < 1:
            raise ValueError("iteration caps must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class SolveReport:
    picard_count: int = 0
    newton_count: int = 0
    residual_history: list = field(default_factory=list)
    energy: float = float("nan")
    energy_bound_ratio: float = float("nan")
    converged: bool = False
    degenerate_cells: int = 0
    monotonicity_gap: float | None = None

    @property
    def iterations(self):
        return self.picard_count, self.newton_count

    def to_dict(self) -> dict:
        d = asdict(self)
        d["iterations"] = list(self.iterations)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class SolverError(RuntimeError):
    def __init__(self, msg, report: SolveReport | None = None, cells=None):
        super().__init__(msg)
        self.report = report
        self.cells = cells


def _factor_solve(A, b, degenerate=None):
    try:
        return spla.splu(A.tocsc()).solve(b)
    except RuntimeError as exc:
        raise SolverError(f"singular linear system ({exc}); degenerate cells: {list(degenerate or [])}",
                          cells=degenerate) from exc


def energy_integrals(grid: RectGrid, u: FEFunction, F_q: np.ndarray | None, p: float, rule: QuadRule = GAUSS2):
    w = grid.quad_weights(rule)
    g2 = np.sum(np.abs(gradients(grid, u.values, rule)) ** 2, axis=(-2, -1))
    energy = float(np.sum(g2 ** (p / 2) * w))
    pp = p / (p - 1)
    if F_q is None:
        f_term = 0.0
    else:
        f_term = np.sum(np.sum(np.abs(F_q) ** 2, axis=(-2, -1)) ** (pp / 2) * w)
    bound = float(f_term + grid.cell_area * grid.n_cells)
    return energy, bound


def energy_check(u: FEFunction, F: SourceField, p: float, rule: QuadRule = GAUSS2) -> float:
    """int |grad u|^p / int (|F|^p' + 1)."""
    e, b = energy_integrals(u.grid, u, source_at(u.grid, F, rule), p, rule)
    return e / b


def monotonicity_witness(grid: RectGrid, a: CoefficientField, params: FluxParams, u: FEFunction, w: FEFunction,
                         rule: QuadRule = GAUSS2):
    """Discrete uniqueness chain for two functions with equal boundary data.

    Returns (lhs, rhs) with lhs = Re sum a <A(grad u) - A(grad w), grad u - grad w>
    and rhs = sum kappa (eps^2 + |grad u|^2 + |grad w|^2)^((p-2)/2) |grad u - grad w|^2,
    where kappa = c1 a^R - c2 |a^I| pointwise.  kappa > nu wherever the c1/c2 margin is positive.
    """
    q = grid.quad_weights(rule)
    a_q = coefficient_at(grid, a, rule)
    Gu = gradients(grid, u.values, rule)
    Gw = gradients(grid, w.values, rule)
    su = np.sum(np.abs(Gu) ** 2, axis=(-2, -1))
    sw = np.sum(np.abs(Gw) ** 2, axis=(-2, -1))
    Au = flux_weight(params, su)[..., None, None] * Gu
    Aw = flux_weight(params, sw)[..., None, None] * Gw
    D = Gu - Gw
    lhs = np.sum(np.real(a_q * np.sum((Au - Aw) * np.conj(D), axis=(-2, -1))) * q)
    kappa = c1_of(params.p) * a_q.real - c2_of(params.p) * np.abs(a_q.imag)
    W = power_weight(params.eps**2 + su + sw, (params.p - 2) / 2)
    rhs = np.sum(kappa * W * np.sum(np.abs(D) ** 2, axis=(-2, -1)) * q)
    return float(lhs), float(rhs)


def _with_boundary(init: FEFunction, lift: FEFunction) -> FEFunction:
    v = init.values.copy()
    b = init.grid.boundary
    v[b] = lift.values[b]
    return FEFunction(init.grid, v, True)


def solve_dirichlet(grid: RectGrid, a: CoefficientField, params: FluxParams, F: SourceField, g=None,
                    cfg: SolverConfig | None = None, init: FEFunction | None = None,
                    rule: QuadRule = GAUSS2):
    """Solve -div(a (eps^2+|grad u|^2)^((p-2)/2) grad u) = -div F with u = g on the boundary.

    Returns (u_h, report).  Raises SolverError if the residual sup-norm does not
    reach ``cfg.tol`` within the iteration caps.
    """
    cfg = cfg or SolverConfig()
    adm = require_admissible(a, grid, params.p, cfg.strict_ell2)
    floor = 0.0
    if params.p < 2 and params.eps == 0:
        if not cfg.eps0_floor:
            raise ValueError("p < 2 with eps = 0 makes the flux tangent singular; set eps0_floor to override")
        floor = np.finfo(float).eps ** 2

    N = F.N
    lift = lift_boundary(grid, g, N)
    u = lift.copy() if init is None else _with_boundary(init, lift)
    u0 = u.copy()
    a_q = coefficient_at(grid, a, rule)
    F_q = source_at(grid, F, rule)
    I = grid.interior_dofs(N)

    def residual(v: FEFunction):
        return residual_full(grid, a_q, F_q, params, v.values, rule, floor)[I]

    rep = SolveReport()
    r = residual(u)
    res = float(np.max(np.abs(r))) if r.size else 0.0
    rep.residual_history.append(res)

    def line_search(u, direction, res):
        lam = cfg.damping
        for _ in range(40):
            cand = u.with_interior(u.interior_vector() + lam * direction)
            rc = residual(cand)
            rn = float(np.max(np.abs(rc)))
            if rn < res:
                return cand, rc, rn
            lam /= 2
        return None, None, res

    # Picard phase: lagged weight, damped toward the new iterate.
    while res > max(cfg.switch_threshold, cfg.tol) and rep.picard_count < cfg.max_picard:
        A, rhs, degenerate = assemble_picard_operator(grid, a, params, u, F, rule, floor)
        rep.degenerate_cells = max(rep.degenerate_cells, len(degenerate))
        x = _factor_solve(A, rhs, degenerate)
        cand, r_c, res_c = line_search(u, x - u.interior_vector(), res)
        if cand is None:
            break
        u, r, res = cand, r_c, res_c
        rep.picard_count += 1
        rep.residual_history.append(res)

    # Newton phase.
    while res > cfg.tol and rep.newton_count < cfg.max_newton:
        try:
            J = assemble_newton_jacobian(grid, a, params, u, rule, floor)
        except DegenerateError as exc:
            rep.degenerate_cells = len(exc.cells)
            raise SolverError(str(exc), rep, exc.cells) from exc
        delta = _factor_solve(J, -r)
        cand, r_c, res_c = line_search(u, delta, res)
        if cand is None:
            break
        u, r, res = cand, r_c, res_c
        rep.newton_count += 1
        rep.residual_history.append(res)

    # An initial guess that already meets tol is returned untouched.
    if res <= cfg.tol and cfg.polish and r.size and res > 0 and sum(rep.iterations):
        J = assemble_newton_jacobian(grid, a, params, u, rule, floor)
        cand = u.with_interior(u.interior_vector() + _factor_solve(J, -r))
        rc = residual(cand)
        rn = float(np.max(np.abs(rc)))
        if rn < res:
            u, r, res = cand, rc, rn
            rep.newton_count += 1
            rep.residual_history.append(res)

    rep.converged = res <= cfg.tol
    rep.energy, bound = energy_integrals(grid, u, F_q, params.p, rule)
    rep.energy_bound_ratio = rep.energy / bound
    if adm.ell2_margin > 0:
        lhs, rhs = monotonicity_witness(grid, a, params, u, u0, rule)
        rep.monotonicity_gap = lhs - rhs
    if not rep.converged:
        raise SolverError(f"no convergence: residual {res:.3e} > tol {cfg.tol:.1e} after "
                          f"{rep.picard_count} Picard / {rep.newton_count} Newton steps", rep)
    log.debug("solved %s p=%g in %s steps, residual %.2e", a.name, params.p, rep.iterations, res)
    return u, rep


def solve_problem(problem, cfg: SolverConfig | None = None, init: FEFunction | None = None):
    return solve_dirichlet(problem.grid, problem.a, problem.params, problem.F, problem.g, cfg, init)


def random_init(grid: RectGrid, N: int, rng: np.random.Generator, amplitude: float = 1.0,
                oscillation: int = 0) -> FEFunction:
    """Random interior values, optionally with a high-frequency checkerboard mode."""
    v = amplitude * (rng.standard_normal((grid.n_nodes, N)) + 1j * rng.standard_normal((grid.n_nodes, N)))
    if oscillation:
        X, Y = grid.nodes[:, 0], grid.nodes[:, 1]
        v += amplitude * np.sin(oscillation * np.pi * X)[:, None] * np.sin(oscillation * np.pi * Y)[:, None]
    return FEFunction(grid, v)


def uniqueness_probe(problem, inits, cfg: SolverConfig | None = None) -> float:
    """Max pairwise W12 distance between solves started from the given initial guesses."""
    inits = list(inits)
    if len(inits) < 2:
        raise ValueError("need at least two initial guesses")
    sols = [solve_problem(problem, cfg, init)[0] for init in inits]
    best = 0.0
    for i in range(len(sols)):
        for j in range(i + 1, len(sols)):
            best = max(best, w12_distance(sols[i], sols[j]))
    return best


def continuity_in_z_probe(pc: ParametricCoefficient, z, h_list, params: FluxParams, F: SourceField,
                          grid: RectGrid, g=None, cfg: SolverConfig | None = None) -> list:
    """Rows (h, ||u(z+h) - u(z)||_W12 / |h|, max |grad u(z+h) - grad u(z)|)."""
    if params.eps <= 0:
        raise ValueError("the z-continuity probe needs eps > 0")
    z = complex(z)
    u0, _ = solve_dirichlet(grid, pc.at(z), params, F, g, cfg)
    rows = []
    for h in h_list:
        h = complex(h)
        uh, _ = solve_dirichlet(grid, pc.at(z + h), params, F, g, cfg, init=u0)
        d = uh - u0
        rows.append((h, w12_distance(uh, u0) / abs(h), norms(d, 2.0).sup_grad))
    return rows
