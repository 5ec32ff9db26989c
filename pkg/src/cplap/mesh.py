"""Uniform rectangular Q1 meshes, tensor Gauss quadrature and nodal FE functions.

Nodes are numbered x-fastest: ``id = i + j * (nx + 1)``.  Cells list their
corners counter-clockwise from the lower-left node.  Realified vectors are
component-major: all real parts of component 0..N-1, then all imaginary parts,
which is the ordering of the hat map.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class QuadRule:
    """Tensor Gauss rule on the reference cell [0, 1]^2."""

    points: np.ndarray  # (Q, 2)
    weights: np.ndarray  # (Q,)

    @classmethod
    def gauss(cls, k: int = 2) -> "QuadRule":
        x, w = np.polynomial.legendre.leggauss(k)
        x = (x + 1) / 2
        w = w / 2
        s, t = np.meshgrid(x, x, indexing="xy")
        ws, wt = np.meshgrid(w, w, indexing="xy")
        return cls(np.column_stack([s.ravel(), t.ravel()]), (ws * wt).ravel())

    @property
    def size(self) -> int:
        return len(self.weights)

    def shape_values(self) -> np.ndarray:
        """(Q, 4) bilinear shape function values."""
        s, t = self.points[:, 0], self.points[:, 1]
        return np.column_stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])

    def shape_grads_ref(self) -> np.ndarray:
        """(Q, 4, 2) reference-coordinate gradients."""
        s, t = self.points[:, 0], self.points[:, 1]
        ds = np.column_stack([-(1 - t), 1 - t, t, -t])
        dt = np.column_stack([-(1 - s), -s, s, 1 - s])
        return np.stack([ds, dt], axis=-1)


GAUSS2 = QuadRule.gauss(2)


@dataclass(frozen=True)
class RectGrid:
    bounds: tuple  # ((x0, x1), (y0, y1))
    cells_per_axis: tuple  # (nx, ny)

    def __post_init__(self):
        b = tuple(tuple(float(v) for v in ax) for ax in self.bounds)
        c = tuple(int(v) for v in self.cells_per_axis)
        if len(b) != 2 or len(c) != 2:
            raise ValueError("only two-dimensional grids are supported")
        if any(hi <= lo for lo, hi in b) or any(k < 1 for k in c):
            raise ValueError(f"degenerate grid {b} / {c}")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "cells_per_axis", c)

    @classmethod
    def unit_square(cls, nx: int, ny: int | None = None) -> "RectGrid":
        return cls(((0.0, 1.0), (0.0, 1.0)), (nx, nx if ny is None else ny))

    @classmethod
    def cube(cls, R: float, nx: int, ny: int | None = None) -> "RectGrid":
        return cls(((-R, R), (-R, R)), (nx, nx if ny is None else ny))

    @property
    def n(self) -> int:
        return 2

    @property
    def h(self) -> tuple:
        return tuple((hi - lo) / k for (lo, hi), k in zip(self.bounds, self.cells_per_axis))

    @property
    def shape_nodes(self) -> tuple:
        nx, ny = self.cells_per_axis
        return nx + 1, ny + 1

    @property
    def n_nodes(self) -> int:
        a, b = self.shape_nodes
        return a * b

    @property
    def n_cells(self) -> int:
        return self.cells_per_axis[0] * self.cells_per_axis[1]

    @property
    def cell_area(self) -> float:
        return self.h[0] * self.h[1]

    def node_id(self, i, j):
        return np.asarray(i) + np.asarray(j) * self.shape_nodes[0]

    @cached_property
    def axes(self) -> tuple:
        (x0, x1), (y0, y1) = self.bounds
        nx, ny = self.cells_per_axis
        hx, hy = self.h
        # lo + k*h keeps dyadic grids exact.
        return x0 + hx * np.arange(nx + 1), y0 + hy * np.arange(ny + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        xs, ys = self.axes
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        a, b = self.shape_nodes
        I, J = np.meshgrid(np.arange(a), np.arange(b), indexing="xy")
        m = (I == 0) | (I == a - 1) | (J == 0) | (J == b - 1)
        return m.ravel()

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @cached_property
    def cells(self) -> np.ndarray:
        """(C, 4) connectivity, cell id = i + j * nx."""
        nx, ny = self.cells_per_axis
        I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
        I, J = I.ravel(), J.ravel()
        return np.column_stack([self.node_id(I, J), self.node_id(I + 1, J),
                                self.node_id(I + 1, J + 1), self.node_id(I, J + 1)])

    @cached_property
    def cell_origin(self) -> np.ndarray:
        return self.nodes[self.cells[:, 0]]

    def cell_index(self, i, j):
        return np.asarray(i) + np.asarray(j) * self.cells_per_axis[0]

    def quad_points(self, rule: QuadRule = GAUSS2) -> np.ndarray:
        """(C, Q, 2) physical quadrature points."""
        h = np.array(self.h)
        return self.cell_origin[:, None, :] + rule.points[None, :, :] * h

    def quad_weights(self, rule: QuadRule = GAUSS2) -> np.ndarray:
        return rule.weights * self.cell_area

    def shape_grads(self, rule: QuadRule = GAUSS2) -> np.ndarray:
        """(Q, 4, 2) physical shape-function gradients (same on every cell)."""
        return rule.shape_grads_ref() / np.array(self.h)

    def sample_points(self, rule: QuadRule = GAUSS2) -> np.ndarray:
        """Quadrature points plus nodes, flattened to (K, 2)."""
        return np.vstack([self.quad_points(rule).reshape(-1, 2), self.nodes])

    def interior_dofs(self, N: int) -> np.ndarray:
        """Indices of interior DOFs inside a full realified vector of length 2N*n_nodes."""
        r = np.arange(2 * N)[:, None] * self.n_nodes
        return (r + self.interior[None, :]).ravel()

    def describe(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds], "cells": list(self.cells_per_axis)}


def realify(values: np.ndarray) -> np.ndarray:
    """(M, N) complex -> length 2NM real vector, component-major (hat ordering)."""
    return np.concatenate([values.real.T.ravel(), values.imag.T.ravel()])


def complexify(x: np.ndarray, N: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    half = x.size // 2
    re = x[:half].reshape(N, -1).T
    im = x[half:].reshape(N, -1).T
    return re + 1j * im


@dataclass
class FEFunction:
    """Complex nodal Q1 function with N components per node.

    ``has_dirichlet`` marks that the boundary values are Dirichlet data, i.e.
    the function stands for an element of g + W_0.
    """

    grid: RectGrid
    values: np.ndarray  # (n_nodes, N) complex
    has_dirichlet: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n_nodes:
            raise ValueError(f"expected {self.grid.n_nodes} nodal values, got {v.shape[0]}")
        self.values = v

    @classmethod
    def zeros(cls, grid: RectGrid, N: int = 1) -> "FEFunction":
        return cls(grid, np.zeros((grid.n_nodes, N), dtype=complex))

    @classmethod
    def interpolate(cls, grid: RectGrid, fn, N: int = 1) -> "FEFunction":
        """Nodal interpolant of ``fn(x) -> (..., N)`` or scalar-valued ``fn`` for N = 1."""
        v = np.asarray(fn(grid.nodes), dtype=complex)
        return cls(grid, v.reshape(grid.n_nodes, N))

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def dirichlet_values(self):
        if not self.has_dirichlet:
            return None
        return self.values[self.grid.boundary]

    @property
    def interior_dof_count(self) -> int:
        return self.N * len(self.grid.interior)

    @property
    def realified_dof_count(self) -> int:
        return 2 * self.interior_dof_count

    def interior_vector(self) -> np.ndarray:
        return realify(self.values[self.grid.interior])

    def with_interior(self, x: np.ndarray) -> "FEFunction":
        v = self.values.copy()
        v[self.grid.interior] = complexify(x, self.N)
        return FEFunction(self.grid, v, self.has_dirichlet)

    def copy(self) -> "FEFunction":
        return FEFunction(self.grid, self.values.copy(), self.has_dirichlet)

    def __add__(self, other):
        return FEFunction(self.grid, self.values + _vals(other), self.has_dirichlet)

    def __sub__(self, other):
        return FEFunction(self.grid, self.values - _vals(other), self.has_dirichlet)

    def __mul__(self, lam):
        return FEFunction(self.grid, complex(lam) * self.values, self.has_dirichlet)

    __rmul__ = __mul__

    def __truediv__(self, lam):
        return FEFunction(self.grid, self.values / complex(lam), self.has_dirichlet)

    def conj(self) -> "FEFunction":
        return FEFunction(self.grid, np.conj(self.values), self.has_dirichlet)

    def write_csv(self, path) -> None:
        N = self.N
        header = ["node_id", "x", "y"] + [f"re_{k + 1}" for k in range(N)] + [f"im_{k + 1}" for k in range(N)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, (x, y) in enumerate(self.grid.nodes):
                row = [i, repr(float(x)), repr(float(y))]
                row += [repr(float(v)) for v in self.values[i].real]
                row += [repr(float(v)) for v in self.values[i].imag]
                w.writerow(row)

    @classmethod
    def read_csv(cls, path, grid: RectGrid) -> "FEFunction":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[0] != grid.n_nodes:
            raise ValueError(f"dump has {data.shape[0]} nodes, grid has {grid.n_nodes}")
        if not np.allclose(data[:, 1:3], grid.nodes, rtol=0, atol=1e-12 * max(1.0, np.abs(grid.nodes).max())):
            raise ValueError("dump node coordinates do not match the grid")
        N = (data.shape[1] - 3) // 2
        order = np.argsort(data[:, 0].astype(int))
        data = data[order]
        return cls(grid, data[:, 3:3 + N] + 1j * data[:, 3 + N:3 + 2 * N])


def _vals(other):
    return other.values if isinstance(other, FEFunction) else other
