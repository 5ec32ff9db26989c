"""Weak-form assembly for the complex p-Laplace system on Q1 elements.

The discrete test space is spanned by real basis functions phi_j e_k; complex
testing is encoded by keeping both the real and the imaginary part of every
residual entry (testing with phi and i*phi).  Every operator here therefore
acts on the realified interior vector of length 2 N (#interior nodes).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coefficients import AdmissibilityError, CoefficientField, SourceField, check_admissible
from .complex_fields import CMat
from .mesh import GAUSS2, FEFunction, QuadRule, RectGrid, realify
from .structure import FluxParams, power_weight


class DegenerateError(ArithmeticError):
    """Singular flux weight (p < 2, eps = 0, vanishing gradient)."""

    def __init__(self, msg, cells):
        super().__init__(msg)
        self.cells = np.asarray(cells)


def require_admissible(a: CoefficientField, grid: RectGrid, p: float, strict_ell2: bool = False):
    """Refuse coefficients outside the admissible class.

    The two ellipticity bounds are always required.  The c1/c2 margin rests on
    constants that are far from sharp for p != 2, so by default s* < 1 is
    accepted in its place: it makes the flux tangent coercive, hence the
    operator strictly monotone.  ``strict_ell2`` demands the margin itself.
    """
    rep = check_admissible(a, grid, p)
    ok = rep.ell_margin > 0 and rep.upper_margin > 0
    ok = ok and (rep.ell2_margin > 0 or (not strict_ell2 and rep.s_star < 1))
    if not ok:
        raise AdmissibilityError(f"coefficient {a.name!r} is not admissible for p={p}: {rep.to_dict()}")
    return rep


def gradients(grid: RectGrid, values: np.ndarray, rule: QuadRule = GAUSS2) -> np.ndarray:
    """(C, Q, N, 2) gradients at quadrature points.

    Written in difference form so that an affine nodal field with exact node
    differences yields bit-identical gradients on every cell.
    """
    U = np.asarray(values)[grid.cells]  # (C, 4, N)
    hx, hy = grid.h
    s = rule.points[:, 0][None, :, None]
    t = rule.points[:, 1][None, :, None]
    U0, U1, U2, U3 = (U[:, k, None, :] for k in range(4))
    bot, top = U1 - U0, U2 - U3
    left, right = U3 - U0, U2 - U1
    gx = (bot + t * (top - bot)) / hx
    gy = (left + s * (right - left)) / hy
    return np.stack([gx, gy], axis=-1)


def values_at(grid: RectGrid, values: np.ndarray, rule: QuadRule = GAUSS2) -> np.ndarray:
    """(C, Q, N) function values at quadrature points."""
    U = np.asarray(values)[grid.cells]
    return np.einsum("qa,cak->cqk", rule.shape_values(), U)


def gradient_at(f: FEFunction, cell: int, qp: int, rule: QuadRule = GAUSS2) -> CMat:
    if not 0 <= cell < f.grid.n_cells or not 0 <= qp < rule.size:
        raise IndexError(f"cell {cell} / quadrature point {qp} out of range")
    U = f.values[f.grid.cells[cell:cell + 1]]
    hx, hy = f.grid.h
    s, t = rule.points[qp]
    U0, U1, U2, U3 = U[0]
    gx = ((U1 - U0) + t * ((U2 - U3) - (U1 - U0))) / hx
    gy = ((U3 - U0) + s * ((U2 - U1) - (U3 - U0))) / hy
    return CMat.from_complex(np.stack([gx, gy], axis=-1))


def weak_vector(grid: RectGrid, P: np.ndarray, rule: QuadRule = GAUSS2) -> np.ndarray:
    """Full realified vector of sum_q w_q <P, grad phi_a> over all nodes.

    ``P`` has shape (C, Q, N, 2).  The result has length 2 N n_nodes.
    """
    dN = grid.shape_grads(rule)
    w = grid.quad_weights(rule)
    elem = np.einsum("cqkd,qad,q->cak", P, dN, w)
    N = P.shape[2]
    nodes = grid.cells.ravel()
    out = np.empty(2 * N * grid.n_nodes)
    for k in range(N):
        vals = elem[:, :, k].ravel()
        out[k * grid.n_nodes:(k + 1) * grid.n_nodes] = np.bincount(nodes, vals.real, grid.n_nodes)
        out[(N + k) * grid.n_nodes:(N + k + 1) * grid.n_nodes] = np.bincount(nodes, vals.imag, grid.n_nodes)
    return out


def operator_from_blocks(grid: RectGrid, D: np.ndarray, N: int, rule: QuadRule = GAUSS2) -> sp.csr_matrix:
    """Assemble the full realified operator from pointwise tangent blocks.

    ``D`` has shape (C, Q, m, m) with m = 4N and maps the flattened hat of a
    gradient perturbation to the flattened hat of the flux perturbation.
    """
    C = grid.n_cells
    dN = grid.shape_grads(rule)
    w = grid.quad_weights(rule)
    Dr = D.reshape(C, rule.size, 2 * N, 2, 2 * N, 2)
    K = np.einsum("qad,cqrdse,qbe,q->carbs", dN, Dr, dN, w, optimize=True)
    nn = grid.n_nodes
    r = np.arange(2 * N)
    dof = grid.cells[:, :, None] + nn * r[None, None, :]  # (C, 4, 2N)
    rows = np.broadcast_to(dof[:, :, :, None, None], K.shape).ravel()
    cols = np.broadcast_to(dof[:, None, None, :, :], K.shape).ravel()
    size = 2 * N * nn
    return sp.coo_matrix((K.ravel(), (rows, cols)), shape=(size, size)).tocsr()


def _j_matrix(N: int) -> np.ndarray:
    """Flattened hat -> flattened check (multiplication by i)."""
    m = 4 * N
    J = np.zeros((m, m))
    half = 2 * N  # N rows x 2 columns of real parts
    J[:half, half:] = -np.eye(half)
    J[half:, :half] = np.eye(half)
    return J


def _hat_flat(G: np.ndarray) -> np.ndarray:
    return np.concatenate([G.real, G.imag], axis=-2).reshape(*G.shape[:-2], -1)


def coefficient_at(grid: RectGrid, a: CoefficientField, rule: QuadRule = GAUSS2) -> np.ndarray:
    return a(grid.quad_points(rule))


def source_at(grid: RectGrid, F: SourceField, rule: QuadRule = GAUSS2) -> np.ndarray:
    return F(grid.quad_points(rule))


def _weights(params: FluxParams, G: np.ndarray, floor: float = 0.0):
    sq = params.eps**2 + np.sum(G.real**2 + G.imag**2, axis=(-2, -1))
    if floor:
        sq = np.maximum(sq, floor)
    mu = power_weight(sq, (params.p - 2) / 2)
    dmu = power_weight(sq, (params.p - 4) / 2)
    return sq, mu, dmu


def _degenerate_cells(params: FluxParams, sq: np.ndarray) -> np.ndarray:
    if params.p >= 2:
        return np.array([], dtype=int)
    return np.flatnonzero(np.any(sq == 0, axis=1))


def flux_at(grid, a_q, params, G, floor=0.0) -> np.ndarray:
    _, mu, _ = _weights(params, G, floor)
    return (a_q * mu)[..., None, None] * G


def residual_full(grid, a_q, F_q, params, values, rule=GAUSS2, floor=0.0) -> np.ndarray:
    G = gradients(grid, values, rule)
    P = flux_at(grid, a_q, params, G, floor)
    if F_q is not None:
        P = P - F_q
    return weak_vector(grid, P, rule)


def assemble_residual(grid: RectGrid, a: CoefficientField, params: FluxParams, F: SourceField, u: FEFunction,
                      rule: QuadRule = GAUSS2, check: bool = True) -> np.ndarray:
    """Realified interior residual, Re and Im of int a mu <grad u, grad phi_j> - <F, grad phi_j>."""
    if check:
        require_admissible(a, grid, params.p)
    full = residual_full(grid, coefficient_at(grid, a, rule), source_at(grid, F, rule), params, u.values, rule)
    return full[grid.interior_dofs(u.N)]


def load_vector(grid: RectGrid, F: SourceField, rule: QuadRule = GAUSS2) -> np.ndarray:
    """Full realified vector of int <F, grad phi_j>."""
    return weak_vector(grid, source_at(grid, F, rule), rule)


def tangent_blocks(a_q, params: FluxParams, G, mode: str = "newton", theta_twist: complex = 1.0,
                   floor: float = 0.0, refuse_degenerate: bool = True):
    """Pointwise realified tangent blocks, shape (C, Q, 4N, 4N).

    mode="picard": lagged weight only, a mu I.
    mode="newton": derivative of the flux, a [mu I + (p-2) dmu g g^T].
    mode="linearized": the direction-dependent operator of the sensitivity
    system; the conjugate-linear term carries the factor ``theta_twist``.
    Newton is the special case theta_twist = 1.
    """
    N = G.shape[-2]
    m = 4 * N
    sq, mu, dmu = _weights(params, G, floor)
    if refuse_degenerate and mode != "picard":
        bad = _degenerate_cells(params, sq)
        if bad.size:
            raise DegenerateError(f"singular tangent (p < 2, eps = 0) on {bad.size} cells", bad)
    Jm = _j_matrix(N)
    eye = np.eye(m)
    inner = mu[..., None, None] * eye
    if mode != "picard" and params.p != 2:
        g = _hat_flat(G)
        cp = (params.p - 2) / 2
        if mode == "newton":
            theta_twist = 1.0
        tr, ti = complex(theta_twist).real, complex(theta_twist).imag
        gc = g @ Jm.T
        left1 = g
        right1 = (1 + tr) * g + ti * gc
        left2 = gc
        right2 = ti * g + (1 - tr) * gc
        T = left1[..., :, None] * right1[..., None, :] + left2[..., :, None] * right2[..., None, :]
        inner = inner + (cp * dmu)[..., None, None] * T
    elif mode not in ("picard", "newton", "linearized"):
        raise ValueError(f"unknown tangent mode {mode!r}")
    aR = a_q.real[..., None, None]
    aI = a_q.imag[..., None, None]
    return aR * inner + aI * (Jm @ inner)


@dataclass
class SplitOperator:
    """An operator restricted to interior rows with its interior/boundary column blocks."""

    II: sp.csr_matrix
    IB: sp.csr_matrix
    interior: np.ndarray
    boundary: np.ndarray

    def matvec(self, x):
        return self.II @ x


def split(grid: RectGrid, K: sp.csr_matrix, N: int) -> SplitOperator:
    I = grid.interior_dofs(N)
    mask = np.ones(K.shape[0], bool)
    mask[I] = False
    B = np.flatnonzero(mask)
    Kr = K[I]
    return SplitOperator(Kr[:, I].tocsc(), Kr[:, B].tocsr(), I, B)


def assemble_picard_operator(grid: RectGrid, a: CoefficientField, params: FluxParams, u_k: FEFunction,
                             F: SourceField | None = None, rule: QuadRule = GAUSS2, floor: float = 0.0):
    """Lagged-weight operator on interior DOFs and the matching right-hand side.

    Returns (operator, rhs, degenerate_cells).  ``rhs`` includes the load and
    the boundary lifting, so the next iterate solves operator @ x = rhs.
    """
    N = u_k.N
    G = gradients(grid, u_k.values, rule)
    sq, _, _ = _weights(params, G, floor)
    degenerate = _degenerate_cells(params, sq)
    a_q = coefficient_at(grid, a, rule)
    D = tangent_blocks(a_q, params, G, "picard", floor=floor)
    op = split(grid, operator_from_blocks(grid, D, N, rule), N)
    xB = realify(u_k.values)[op.boundary]
    rhs = -(op.IB @ xB)
    if F is not None:
        rhs = rhs + load_vector(grid, F, rule)[op.interior]
    return op.II, rhs, degenerate


def assemble_newton_jacobian(grid: RectGrid, a: CoefficientField, params: FluxParams, u: FEFunction,
                             rule: QuadRule = GAUSS2, floor: float = 0.0) -> sp.csc_matrix:
    if params.p < 2 and params.eps == 0 and not floor:
        G = gradients(grid, u.values, rule)
        bad = _degenerate_cells(params, params.eps**2 + np.sum(np.abs(G) ** 2, axis=(-2, -1)))
        if bad.size:
            raise DegenerateError(f"Jacobian singular on {bad.size} cells (p < 2, eps = 0)", bad)
    G = gradients(grid, u.values, rule)
    D = tangent_blocks(coefficient_at(grid, a, rule), params, G, "newton", floor=floor)
    return split(grid, operator_from_blocks(grid, D, u.N, rule), u.N).II


@dataclass
class Norms:
    w12: float
    lp_grad: float
    sup_grad: float


def norms(f: FEFunction, p: float, rule: QuadRule = GAUSS2) -> Norms:
    grid = f.grid
    w = grid.quad_weights(rule)
    G = gradients(grid, f.values, rule)
    V = values_at(grid, f.values, rule)
    g2 = np.sum(np.abs(G) ** 2, axis=(-2, -1))
    v2 = np.sum(np.abs(V) ** 2, axis=-1)
    w12 = np.sqrt(np.sum((g2 + v2) * w))
    lp = np.sum(g2 ** (p / 2) * w) ** (1 / p)
    return Norms(float(w12), float(lp), float(np.sqrt(g2.max())))


def error_norms(f: FEFunction, exact, exact_grad, rule: QuadRule | None = None) -> dict:
    """L2, gradient-L2 and W12 errors against an analytic function.

    ``exact(x) -> (..., N)`` and ``exact_grad(x) -> (..., N, 2)``.  A 5x5 rule is
    used by default so the 2x2 Gauss superconvergence does not leak into
    observed orders.
    """
    rule = rule or QuadRule.gauss(5)
    grid = f.grid
    X = grid.quad_points(rule)
    w = grid.quad_weights(rule)
    G = gradients(grid, f.values, rule)
    V = values_at(grid, f.values, rule)
    ue = np.asarray(exact(X), dtype=complex).reshape(V.shape)
    ge = np.asarray(exact_grad(X), dtype=complex).reshape(G.shape)
    l2 = np.sqrt(np.sum(np.sum(np.abs(V - ue) ** 2, axis=-1) * w))
    h1 = np.sqrt(np.sum(np.sum(np.abs(G - ge) ** 2, axis=(-2, -1)) * w))
    return {"L2": float(l2), "grad_L2": float(h1), "W12": float(np.hypot(l2, h1))}


def w12_distance(u: FEFunction, v: FEFunction, rule: QuadRule = GAUSS2) -> float:
    return norms(u - v, 2.0, rule).w12


def lift_boundary(grid: RectGrid, g, N: int = 1) -> FEFunction:
    """Nodal interpolant of g on the boundary, zero at interior nodes."""
    vals = np.zeros((grid.n_nodes, N), dtype=complex)
    if g is not None:
        b = grid.boundary
        vals[b] = np.asarray(g(grid.nodes[b]), dtype=complex).reshape(len(b), N)
    return FEFunction(grid, vals, True)
