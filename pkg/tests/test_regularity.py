import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cplap.coefficients import constant, cosine, rough, smooth_source, zero_source
from cplap.discretization import gradients
from cplap.mesh import FEFunction, RectGrid
from cplap.regularity import (
    InsufficientDataError, ResolutionError, compare_homogeneous, decay_constant, decay_fit, excess,
    grad_oscillation, mean_power, subsquare_cells,
)
from cplap.solver import solve_dirichlet
from cplap.structure import FluxParams

CENTER = (0.5, 0.5)
RADII = [0.25 / 2**k for k in range(4)]


def affine(grid, c=(0.25 - 0.5j, 0.75 + 0.125j, 2.0 + 1j)):
    # dyadic coefficients on a dyadic grid: exact node differences
    return FEFunction.interpolate(grid, lambda x: c[0] * x[:, 0] + c[1] * x[:, 1] + c[2])


@pytest.fixture(scope="module")
def smooth_solution():
    grid = RectGrid.unit_square(64)
    a = cosine(1.2, 0.3, 1, 0.1, 3)
    u, _ = solve_dirichlet(grid, a, FluxParams(2, 0.5), smooth_source(1.5))
    return u, a


def test_affine_excess_and_oscillation_exactly_zero():
    grid = RectGrid.unit_square(32)
    u = affine(grid)
    for p in (1.5, 2, 3):
        for rho in RADII:
            assert excess(u, CENTER, rho, p) == 0.0
            assert grad_oscillation(u, CENTER, rho) == 0.0
    prof = decay_fit(u, CENTER, RADII, 2)
    assert prof.degenerate and prof.excess == [0.0] * 4


def test_x1_squared_closed_form():
    # The interpolant of x1^2 has d/dx1 = 2 * (cell midpoint) and d/dx2 = 0, so with k cells of width h
    # across the square the p = 2 excess is 4 * var(midpoints) = ((2 rho)^2 - h^2) / 3.
    for n in (16, 32, 64):
        grid = RectGrid.unit_square(n)
        u = FEFunction.interpolate(grid, lambda x: x[:, 0] ** 2)
        h = 1 / n
        for rho in (0.25, 0.125):
            e = excess(u, CENTER, rho, 2)
            assert e == pytest.approx(((2 * rho) ** 2 - h**2) / 3, rel=1e-12)
            assert abs(e - (2 * rho) ** 2 / 3) <= h**2 / 3 * (1 + 1e-9)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.sampled_from([1.5, 2.0, 3.0]))
def test_excess_invariant_under_affine_shift(c, p):
    grid = RectGrid.unit_square(16)
    rng = np.random.default_rng(3)
    base = FEFunction(grid, rng.standard_normal(grid.n_nodes) + 1j * rng.standard_normal(grid.n_nodes))
    shift = FEFunction.interpolate(grid, lambda x: complex(c[0], c[1]) * x[:, 0] + complex(c[2], c[3]) * x[:, 1]
                                   + complex(c[4], c[5]))
    for rho in (0.25, 0.125):
        e0 = excess(base, CENTER, rho, p)
        assert excess(base + shift, CENTER, rho, p) == pytest.approx(e0, rel=1e-9)


def test_triangle_sanity_bound(rng):
    grid = RectGrid.unit_square(16)
    for _ in range(10):
        u = FEFunction(grid, rng.standard_normal((grid.n_nodes, 2)) + 1j * rng.standard_normal((grid.n_nodes, 2)))
        for p in (1.5, 2, 3):
            for rho in (0.5, 0.25, 0.125):
                G = gradients(grid, u.values)[subsquare_cells(grid, CENTER, rho)]
                m = np.sqrt(np.sum(np.abs(G.mean(axis=(0, 1))) ** 2))
                assert excess(u, CENTER, rho, p) <= 2**p * (mean_power(u, CENTER, rho, p) + m**p)


def test_resolution_errors():
    grid = RectGrid.unit_square(8)
    u = affine(grid)
    with pytest.raises(ResolutionError):
        excess(u, CENTER, 0.6, 2)
    with pytest.raises(ResolutionError):
        excess(u, CENTER, 0.05, 2)
    with pytest.raises(InsufficientDataError):
        decay_fit(u, CENTER, [0.25, 0.125, 0.06, 0.03], 2)


def test_smooth_fit(smooth_solution):
    u, _ = smooth_solution
    prof = decay_fit(u, CENTER, RADII, 2)
    assert not prof.degenerate
    assert prof.fitted_beta > 0 and prof.fit_r2 > 0.9
    assert prof.to_csv().splitlines()[0] == "rho,excess"
    assert '"fitted_beta"' in prof.to_json()


def test_rough_coefficient_lowers_beta(smooth_solution):
    u_s, _ = smooth_solution
    grid = u_s.grid
    u_r, _ = solve_dirichlet(grid, rough(1.2, 0.8, 0.3, 0.5, 0.1, 3), FluxParams(2, 0.5), smooth_source(1.5))
    assert decay_fit(u_r, CENTER, RADII, 2).fitted_beta < decay_fit(u_s, CENTER, RADII, 2).fitted_beta


def test_oscillation_monotone_and_bounded(smooth_solution):
    u, _ = smooth_solution
    osc = [grad_oscillation(u, CENTER, r) for r in RADII]
    assert all(b <= a for a, b in zip(osc, osc[1:]))
    beta = decay_fit(u, CENTER, RADII, 2).fitted_beta
    ratios = np.array(osc) / np.array(RADII) ** beta
    assert ratios.max() / ratios.min() < 3


def test_oscillation_matches_brute_force(rng):
    grid = RectGrid.unit_square(8)
    u = FEFunction(grid, rng.standard_normal(grid.n_nodes) + 1j * rng.standard_normal(grid.n_nodes))
    G = gradients(grid, u.values)[subsquare_cells(grid, CENTER, 0.25)].reshape(-1, 2)
    d = np.sqrt(np.sum(np.abs(G[:, None] - G[None]) ** 2, axis=-1)).max()
    assert grad_oscillation(u, CENTER, 0.25) == pytest.approx(d, rel=1e-12)


def test_comparison_trivial_case():
    grid = RectGrid.unit_square(32)
    a = constant(1 + 0.2j, 0.05, 2)
    prm = FluxParams(3, 0.5)
    u, _ = solve_dirichlet(grid, a, prm, zero_source(), lambda x: np.sin(2 * x[..., 0]) + 1j * x[..., 1] ** 2)
    for rho in (0.25, 0.125):
        rep = compare_homogeneous(u, CENTER, rho, prm, a)
        assert rep.lhs <= 1e-20


def test_comparison_sweep(smooth_solution):
    u, a = smooth_solution
    prm = FluxParams(2, 0.5)
    reps = [compare_homogeneous(u, CENTER, r, prm, a) for r in RADII]
    for rep in reps:
        assert np.isfinite(rep.ratio)
        assert rep.energy_ratio <= 1.0
    scaled = [rep.lhs / rep.rho**rep.alpha0 for rep in reps]
    assert all(b <= a for a, b in zip(scaled, scaled[1:]))


def test_decay_estimate_shape(smooth_solution):
    u, _ = smooth_solution
    assert decay_constant(u, CENTER, RADII, 2, kappa=0.9 * 2) <= 10
