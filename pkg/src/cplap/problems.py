"""Problem bundles and the fixture suite used by tests and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import coefficients as co
from .coefficients import CoefficientField, SourceField
from .mesh import RectGrid
from .structure import FluxParams, flux_weight

ROTATE = (1 + 1j) / np.sqrt(2)


@dataclass
class Problem:
    grid: RectGrid
    a: CoefficientField
    params: FluxParams
    F: SourceField
    g: Callable | None = None  # boundary data x -> (..., N)
    exact: Callable | None = None
    exact_grad: Callable | None = None
    name: str = "problem"
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.F.N

    def on(self, grid: RectGrid) -> "Problem":
        return Problem(grid, self.a, self.params, self.F, self.g, self.exact, self.exact_grad, self.name, self.meta)


def sine_bump(x):
    """u* = sin(pi x) sin(pi y) (1+i)/sqrt(2) on the unit square."""
    return ROTATE * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def sine_bump_grad(x):
    X, Y = x[..., 0], x[..., 1]
    gx = np.pi * np.cos(np.pi * X) * np.sin(np.pi * Y)
    gy = np.pi * np.sin(np.pi * X) * np.cos(np.pi * Y)
    return (ROTATE * np.stack([gx, gy], axis=-1))[..., None, :]


def manufactured_source(a: CoefficientField, params: FluxParams, exact_grad) -> SourceField:
    """F = a (eps^2 + |grad u*|^2)^((p-2)/2) grad u*, so u* solves the problem exactly."""

    def ev(x):
        G = exact_grad(x)
        mu = flux_weight(params, np.sum(np.abs(G) ** 2, axis=(-2, -1)))
        return (a(x) * mu)[..., None, None] * G

    return SourceField(ev, 1, 0.5, 0.0, "manufactured", {"p": params.p, "eps": params.eps})


def cos_coefficient(amp: float = 0.3) -> CoefficientField:
    """a = 1 + amp i cos(pi x1)."""
    return co.cosine(1.0, 1j * amp, 1.0, nu=0.05, L=2.0)


def manufactured(p: float, eps: float = 0.5, cells: int = 16, a: CoefficientField | None = None) -> Problem:
    a = a or cos_coefficient()
    params = FluxParams(p, eps)
    F = manufactured_source(a, params, sine_bump_grad)
    return Problem(RectGrid.unit_square(cells), a, params, F, None, sine_bump, sine_bump_grad,
                   f"manufactured_p{p}", {"u_star": "sin(pi x) sin(pi y) (1+i)/sqrt(2)"})


def linear_fixture(cells: int = 64, a_value: complex = 1 + 0.3j) -> Problem:
    return Problem(RectGrid.unit_square(cells), co.constant(a_value, 0.1, 2.0), FluxParams(2.0, 0.0),
                   co.smooth_source(), None, name="linear")


def p3_fixture(cells: int = 24, eps: float = 0.5) -> Problem:
    """Nonlinear p = 3 problem with nonzero boundary data."""

    def g(x):
        return 0.5 * x[..., 0] + 0.25j * x[..., 1] ** 2

    return Problem(RectGrid.unit_square(cells), cos_coefficient(0.3), FluxParams(3.0, eps),
                   co.smooth_source(1.5), g, name="p3")


def fixture_suite() -> list:
    return [manufactured(1.5), manufactured(2.0), manufactured(3.0)]
