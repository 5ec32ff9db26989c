"""Complex coefficient fields a(x), source fields F(x) and z-families a(z, x).

Evaluators are vectorized: they take points of shape ``(..., 2)`` and return
``(...)`` complex values (coefficients) or ``(..., N, 2)`` (sources).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .mesh import GAUSS2, QuadRule, RectGrid
from .structure import c1_of, c2_of


class EvaluationError(ValueError):
    pass


class AdmissibilityError(ValueError):
    pass


class DomainError(ValueError):
    pass


def _finite_or_raise(vals, points, what):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        loc = points[tuple(idx[: points.ndim - 1])]
        raise EvaluationError(f"{what} evaluated to a non-finite value at x = {loc.tolist()}")


@dataclass
class CoefficientField:
    evaluator: Callable
    nu: float
    L: float
    holder_exponent: float = 0.5
    holder_seminorm_bound: float = 0.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.nu < self.L:
            raise ValueError(f"need 0 < nu < L, got nu={self.nu}, L={self.L}")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.broadcast_to(np.asarray(self.evaluator(x), dtype=complex), x.shape[:-1])
        _finite_or_raise(v, x, f"coefficient {self.name!r}")
        return v

    def scaled(self, lam: float) -> "CoefficientField":
        f = self.evaluator
        return CoefficientField(lambda x: lam * f(x), self.nu * lam, self.L * lam, self.holder_exponent,
                                self.holder_seminorm_bound * lam, f"{lam}*{self.name}", dict(self.params))

    def conj(self) -> "CoefficientField":
        f = self.evaluator
        return CoefficientField(lambda x: np.conj(f(x)), self.nu, self.L, self.holder_exponent,
                                self.holder_seminorm_bound, f"conj({self.name})", dict(self.params))


@dataclass
class SourceField:
    evaluator: Callable
    N: int = 1
    holder_exponent: float = 0.5
    holder_seminorm_bound: float = 0.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.broadcast_to(np.asarray(self.evaluator(x), dtype=complex), (*x.shape[:-1], self.N, 2))
        _finite_or_raise(v, x, f"source {self.name!r}")
        return v

    def scaled(self, lam: complex) -> "SourceField":
        f = self.evaluator
        return SourceField(lambda x: lam * f(x), self.N, self.holder_exponent,
                           abs(lam) * self.holder_seminorm_bound, f"{lam}*{self.name}", dict(self.params))

    def conj(self) -> "SourceField":
        f = self.evaluator
        return SourceField(lambda x: np.conj(f(x)), self.N, self.holder_exponent,
                           self.holder_seminorm_bound, f"conj({self.name})", dict(self.params))


@dataclass(frozen=True)
class Disk:
    """Admissible parameter region U = {z : |z - center| < radius}."""

    center: complex = 0j
    radius: float = 1.0

    def contains(self, z) -> bool:
        return abs(complex(z) - self.center) < self.radius


@dataclass
class ParametricCoefficient:
    evaluator: Callable  # (z, x) -> complex
    derivative_evaluator: Callable  # (z, x) -> complex
    admissible_region: Disk
    nu: float
    L: float
    uniform_holder_bound: float = 0.0
    holder_exponent: float = 0.5
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def _require(self, z):
        if not self.admissible_region.contains(z):
            raise DomainError(f"z = {z} lies outside the admissible region {self.admissible_region}")

    def at(self, z) -> CoefficientField:
        self._require(z)
        f = self.evaluator
        z = complex(z)
        return CoefficientField(lambda x: f(z, x), self.nu, self.L, self.holder_exponent,
                                self.uniform_holder_bound, f"{self.name}(z={z})", dict(self.params))

    def derivative_at(self, z, x) -> np.ndarray:
        self._require(z)
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.derivative_evaluator(complex(z), x), dtype=complex), x.shape[:-1])

    def validate(self, grid: RectGrid, p: float, zs) -> dict:
        """Admissibility and uniform Holder bound over the tested parameters."""
        reports = {complex(z): check_admissible(self.at(z), grid, p) for z in zs}
        seminorms = [holder_seminorm_estimate(self.at(z), grid, self.holder_exponent) for z in zs]
        return {"reports": reports, "max_seminorm": max(seminorms),
                "ok": all(r.passed for r in reports.values()) and max(seminorms) <= self.uniform_holder_bound}


@dataclass
class AdmissibilityReport:
    ell_margin: float  # min(a^R - |a^I|) - nu
    upper_margin: float  # L - max(a^R + |a^I|)
    ell2_margin: float  # min(c1 a^R - c2 |a^I|) - nu
    s_star: float
    passed: bool
    sampled_points: int
    note: str = "sampled check on quadrature points and nodes, not a proof"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def check_admissible(field: CoefficientField, grid: RectGrid, p: float, rule: QuadRule = GAUSS2) -> AdmissibilityReport:
    pts = grid.sample_points(rule)
    a = field(pts)
    aR, aI = a.real, np.abs(a.imag)
    ell = float(np.min(aR - aI) - field.nu)
    upper = float(field.L - np.max(aR + aI))
    ell2 = float(np.min(c1_of(p) * aR - c2_of(p) * aI) - field.nu)
    if np.min(aR) > 0:
        s_star = float(np.max(abs(p - 2) / p * np.abs(a) / aR))
    else:
        s_star = float("inf")
    return AdmissibilityReport(ell, upper, ell2, s_star, ell > 0 and upper > 0 and ell2 > 0, len(pts))


def _holder_points(grid: RectGrid, max_per_axis: int) -> np.ndarray:
    nx, ny = grid.cells_per_axis
    sx = max(1, -(-nx // max_per_axis))
    sy = max(1, -(-ny // max_per_axis))
    xs, ys = grid.axes
    xs = xs[::sx] if xs[-1] in xs[::sx] else np.append(xs[::sx], xs[-1])
    ys = ys[::sy] if ys[-1] in ys[::sy] else np.append(ys[::sy], ys[-1])
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def holder_seminorm_estimate(field, grid: RectGrid, exponent: float, max_per_axis: int = 64) -> float:
    """max |a(x) - a(y)| / |x - y|^exponent over all pairs of grid nodes.

    Grids finer than ``max_per_axis`` cells are subsampled by a fixed stride.
    This is a lower bound for the true seminorm.
    """
    if not 0 < exponent < 1:
        raise ValueError("exponent must lie in (0, 1)")
    pts = _holder_points(grid, max_per_axis)
    vals = np.asarray(field(pts), dtype=complex).reshape(len(pts), -1)
    best = 0.0
    chunk = max(1, 2_000_000 // len(pts))
    for start in range(0, len(pts), chunk):
        P = pts[start:start + chunk]
        d = np.sqrt(((P[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        dv = np.sqrt((np.abs(vals[start:start + chunk, None, :] - vals[None, :, :]) ** 2).sum(-1))
        mask = d > 0
        if np.any(mask):
            best = max(best, float(np.max(dv[mask] / d[mask] ** exponent)))
    return best


def sensitivity_condition(field: CoefficientField, grid: RectGrid, p: float, rule: QuadRule = GAUSS2) -> float:
    """Smallest s with s a^R >= (|p-2|/p)|a| at every sample point."""
    a = field(grid.sample_points(rule))
    if np.min(a.real) <= 0:
        raise AdmissibilityError("a^R must be positive for the sensitivity condition")
    return float(np.max(abs(p - 2) / p * np.abs(a) / a.real))


def derivative_consistency(pc: ParametricCoefficient, z, h_list, grid: RectGrid) -> list:
    """Rows (h, sup_x |a(z+h) - a(z) - h a'(z)| / |h|)."""
    z = complex(z)
    pts = grid.sample_points()
    a0 = pc.at(z)(pts)
    da = pc.derivative_at(z, pts)
    rows = []
    for h in h_list:
        h = complex(h)
        if h == 0:
            raise ValueError("steps must be nonzero")
        a1 = pc.at(z + h)(pts)
        rows.append((h, float(np.max(np.abs(a1 - a0 - h * da)) / abs(h))))
    return rows


# Built-in families.

def constant(value: complex, nu: float, L: float, **kw) -> CoefficientField:
    value = complex(value)
    return CoefficientField(lambda x: np.full(np.shape(x)[:-1], value), nu, L, kw.get("holder_exponent", 0.5),
                            0.0, "constant", {"value": value})


def affine_x(c0: complex, c1: complex, c2: complex, nu: float, L: float, **kw) -> CoefficientField:
    c0, c1, c2 = complex(c0), complex(c1), complex(c2)
    return CoefficientField(lambda x: c0 + c1 * x[..., 0] + c2 * x[..., 1], nu, L,
                            kw.get("holder_exponent", 0.5), kw.get("holder_seminorm_bound", abs(c1) + abs(c2)),
                            "affine_x", {"c0": c0, "c1": c1, "c2": c2})


def cosine(base: complex, amp: complex, k: float, nu: float, L: float, axis: int = 0, **kw) -> CoefficientField:
    """base + amp * cos(k pi x_axis)."""
    base, amp = complex(base), complex(amp)
    return CoefficientField(lambda x: base + amp * np.cos(k * np.pi * x[..., axis]), nu, L,
                            kw.get("holder_exponent", 0.5), kw.get("holder_seminorm_bound", abs(amp) * k * np.pi),
                            "cosine", {"base": base, "amp": amp, "k": k, "axis": axis})


def rough(base: complex, amp: complex, alpha: float, center: float, nu: float, L: float, axis: int = 0) -> CoefficientField:
    """base + amp * |x_axis - center|^alpha; Holder of order alpha at the kink."""
    base, amp = complex(base), complex(amp)
    return CoefficientField(lambda x: base + amp * np.abs(x[..., axis] - center) ** alpha, nu, L,
                            alpha, abs(amp), "rough", {"base": base, "amp": amp, "alpha": alpha, "center": center})


def affine_z(a0: CoefficientField, a1: CoefficientField, region: Disk, nu: float, L: float,
             uniform_holder_bound: float | None = None) -> ParametricCoefficient:
    """a(z, x) = a0(x) + z a1(x)."""
    f0, f1 = a0.evaluator, a1.evaluator

    def ev(z, x):
        return f0(x) + z * f1(x)

    def dev(z, x):
        return np.broadcast_to(np.asarray(f1(x), dtype=complex), np.shape(x)[:-1])

    bound = uniform_holder_bound
    if bound is None:
        r = abs(region.center) + region.radius
        bound = a0.holder_seminorm_bound + r * a1.holder_seminorm_bound
    return ParametricCoefficient(ev, dev, region, nu, L, bound, a0.holder_exponent, "affine_z",
                                 {"a0": a0.name, "a1": a1.name})


def exponential_z(g: CoefficientField, region: Disk, nu: float, L: float, shift: complex = 0j) -> ParametricCoefficient:
    """a(z, x) = shift + exp(z) g(x)."""
    fg = g.evaluator
    shift = complex(shift)

    def ev(z, x):
        return shift + np.exp(z) * fg(x)

    def dev(z, x):
        return np.exp(z) * np.broadcast_to(np.asarray(fg(x), dtype=complex), np.shape(x)[:-1])

    r = abs(region.center) + region.radius
    return ParametricCoefficient(ev, dev, region, nu, L, np.exp(r) * g.holder_seminorm_bound, g.holder_exponent,
                                 "exponential_z", {"g": g.name, "shift": shift})


def zero_source(N: int = 1) -> SourceField:
    return SourceField(lambda x: np.zeros((*np.shape(x)[:-1], N, 2), dtype=complex), N, 0.5, 0.0, "zero")


def constant_source(value, N: int = 1) -> SourceField:
    v = np.asarray(value, dtype=complex).reshape(N, 2)
    return SourceField(lambda x: np.broadcast_to(v, (*np.shape(x)[:-1], N, 2)), N, 0.5, 0.0, "constant",
                       {"value": v.tolist()})


def smooth_source(amp: complex = 1.0, k: float = 1.0, N: int = 1) -> SourceField:
    """F_j = amp * (sin(k pi x) cos(k pi y), (1+i)/2 * cos(k pi x) sin(k pi y)) for each component."""
    amp = complex(amp)

    def ev(x):
        X, Y = x[..., 0], x[..., 1]
        f1 = amp * np.sin(k * np.pi * X) * np.cos(k * np.pi * Y)
        f2 = amp * 0.5 * (1 + 1j) * np.cos(k * np.pi * X) * np.sin(k * np.pi * Y)
        one = np.stack([f1, f2], axis=-1)[..., None, :]
        scale = np.arange(1, N + 1).reshape(N, 1)
        return one * scale

    return SourceField(ev, N, 0.5, abs(amp) * k * np.pi * N, "smooth", {"amp": amp, "k": k})
