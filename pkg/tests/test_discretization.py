import numpy as np
import pytest
import scipy.sparse as sp

from cplap.coefficients import AdmissibilityError, EvaluationError, SourceField, constant, cosine, smooth_source, zero_source
from cplap.discretization import (
    DegenerateError, assemble_newton_jacobian, assemble_picard_operator, assemble_residual, error_norms,
    gradient_at, gradients, lift_boundary, norms,
)
from cplap.mesh import GAUSS2, FEFunction, QuadRule, RectGrid, complexify
from cplap.problems import sine_bump, sine_bump_grad
from cplap.structure import FluxParams

from . import oracles

CENTER = QuadRule(np.array([[0.5, 0.5]]), np.array([1.0]))


def _random_state(grid, rng, N=1, boundary=True):
    v = rng.standard_normal((grid.n_nodes, N)) + 1j * rng.standard_normal((grid.n_nodes, N))
    if not boundary:
        v[grid.boundary] = 0
    return FEFunction(grid, v)


def test_gradient_examples():
    grid = RectGrid.unit_square(4)
    assert np.all(gradient_at(FEFunction.interpolate(grid, lambda x: 0 * x[:, 0] + 2 - 1j), 5, 2).to_complex() == 0)
    f = FEFunction.interpolate(grid, lambda x: x[:, 0] + 1j * x[:, 1])
    for c in range(grid.n_cells):
        for q in range(4):
            np.testing.assert_allclose(gradient_at(f, c, q).to_complex(), [[1, 1j]], atol=1e-14)
    g = FEFunction.interpolate(grid, lambda x: x[:, 0] * x[:, 1])
    for c in range(grid.n_cells):
        xc = grid.nodes[grid.cells[c]].mean(axis=0)
        np.testing.assert_allclose(gradient_at(g, c, 0, CENTER).to_complex(), [[xc[1], xc[0]]], atol=1e-14)
    with pytest.raises(IndexError):
        gradient_at(f, grid.n_cells, 0)


def test_gradients_match_shape_function_oracle(rng):
    grid = RectGrid((( -1, 2), (0, 0.5)), (5, 3))
    v = rng.standard_normal(grid.n_nodes) + 1j * rng.standard_normal(grid.n_nodes)
    G = gradients(grid, v[:, None])
    for q, (s, t) in enumerate(GAUSS2.points):
        np.testing.assert_allclose(G[:, q, 0, :], oracles.q1_gradients(grid, v, s, t), rtol=1e-13, atol=1e-13)


def test_element_oracle_consistency():
    # closed-form element stiffness equals the quadrature loop
    grid = RectGrid(((0, 1), (0, 2)), (3, 5))
    K1, _ = oracles.complex_system(grid, lambda x: 1.0)
    K2, _ = oracles.complex_system(grid, None, closed_form_a=1.0)
    assert abs(K1 - K2).max() <= 1e-13


def test_zero_residual_for_zero_data():
    grid = RectGrid.unit_square(6)
    r = assemble_residual(grid, cosine(1, 0.3j, 1, 0.05, 2), FluxParams(3, 0.2), zero_source(), FEFunction.zeros(grid))
    assert np.all(r == 0)


@pytest.mark.parametrize("a_value", [1.0, 1 + 0.3j])
def test_p2_residual_matches_complex_linear_system(rng, a_value):
    grid = RectGrid.unit_square(12, 9)
    F = smooth_source(0.7 - 0.2j, 1.5)
    u = _random_state(grid, rng)
    r = assemble_residual(grid, constant(a_value, 0.05, 2), FluxParams(2, 0.0), F, u)
    K, b = oracles.complex_system(grid, None, lambda x: F(x)[0], closed_form_a=a_value)
    ref = (K @ u.values[:, 0] - b)[grid.interior]
    got = complexify(r, 1)[:, 0]
    assert np.max(np.abs(got - ref)) <= 1e-13 * np.max(np.abs(ref))


def test_p2_residual_variable_coefficient(rng):
    grid = RectGrid.unit_square(10)
    a = cosine(1.0, 0.3j, 1, 0.05, 2)
    F = smooth_source(1.0, 1.0)
    u = _random_state(grid, rng)
    r = assemble_residual(grid, a, FluxParams(2, 0.3), F, u)
    K, b = oracles.complex_system(grid, lambda x: a(x), lambda x: F(x)[0])
    ref = (K @ u.values[:, 0] - b)[grid.interior]
    assert np.max(np.abs(complexify(r, 1)[:, 0] - ref)) <= 1e-13 * np.max(np.abs(ref))


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_conjugate_consistency(rng, p):
    grid = RectGrid.unit_square(7)
    a = cosine(1.0, 0.2j, 1, 0.05, 2)
    F = smooth_source(0.5 + 0.5j, 1, N=2)
    u = _random_state(grid, rng, N=2)
    prm = FluxParams(p, 0.4)
    r = assemble_residual(grid, a, prm, F, u)
    rc = assemble_residual(grid, a.conj(), prm, F.conj(), u.conj())
    half = r.size // 2
    np.testing.assert_allclose(rc[:half], r[:half], rtol=0, atol=1e-14 * np.abs(r).max())
    np.testing.assert_allclose(rc[half:], -r[half:], rtol=0, atol=1e-14 * np.abs(r).max())


def test_inadmissible_coefficient_refused():
    grid = RectGrid.unit_square(4)
    bad = constant(0.5 + 0.6j, 0.01, 2)
    with pytest.raises(AdmissibilityError):
        assemble_residual(grid, bad, FluxParams(2, 0), zero_source(), FEFunction.zeros(grid))


def test_picard_p2_independent_of_state(rng):
    grid = RectGrid.unit_square(6)
    a = cosine(1.0, 0.3j, 1, 0.05, 2)
    prm = FluxParams(2, 0.0)
    A1, _, _ = assemble_picard_operator(grid, a, prm, _random_state(grid, rng))
    A2, _, _ = assemble_picard_operator(grid, a, prm, FEFunction.zeros(grid))
    assert abs(A1 - A2).max() <= 1e-14 * abs(A1).max()


def _poisson_realified(grid, a_value=1.0):
    K, _ = oracles.complex_system(grid, None, closed_form_a=a_value)
    I = grid.interior
    KI = K[I][:, I]
    return sp.bmat([[KI.real, -KI.imag], [KI.imag, KI.real]]).tocsr()


def test_picard_poisson_case():
    grid = RectGrid.unit_square(5)
    A, rhs, deg = assemble_picard_operator(grid, constant(1, 0.1, 2), FluxParams(3, 1.0), FEFunction.zeros(grid))
    assert abs(A - _poisson_realified(grid)).max() <= 1e-13
    assert np.all(rhs == 0) and deg.size == 0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_newton_jacobian_at_zero_state(p):
    grid = RectGrid.unit_square(5)
    a = 1 + 0.2j
    J = assemble_newton_jacobian(grid, constant(a, 0.05, 2), FluxParams(p, 1.0), FEFunction.zeros(grid))
    assert abs(J - _poisson_realified(grid, a)).max() <= 1e-13


def test_newton_equals_picard_at_p2(rng):
    grid = RectGrid.unit_square(6)
    a = cosine(1.0, 0.3j, 1, 0.05, 2)
    u = _random_state(grid, rng)
    prm = FluxParams(2, 0.1)
    A, _, _ = assemble_picard_operator(grid, a, prm, u)
    J = assemble_newton_jacobian(grid, a, prm, u)
    assert abs(A - J).max() <= 1e-14 * abs(A).max()


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_jacobian_central_differences(rng, p):
    grid = RectGrid.unit_square(6)
    a = cosine(1.0, 0.3j, 1, 0.05, 2)
    F = smooth_source(1.0, 1.0, N=2)
    prm = FluxParams(p, 0.5)
    u = _random_state(grid, rng, N=2)
    J = assemble_newton_jacobian(grid, a, prm, u)

    def res(x):
        return assemble_residual(grid, a, prm, F, u.with_interior(x), check=False)

    x0 = u.interior_vector()
    t = 1e-5
    worst = 0.0
    for _ in range(20):
        d = rng.standard_normal(x0.size)
        fd = oracles.central_difference(res, x0, d, t)
        Jd = J @ d
        worst = max(worst, np.linalg.norm(Jd - fd) / np.linalg.norm(Jd))
    assert worst <= 1e-5


def test_jacobian_forward_difference_slope(rng):
    grid = RectGrid.unit_square(6)
    a = cosine(1.0, 0.3j, 1, 0.05, 2)
    prm = FluxParams(3, 0.5)
    u = _random_state(grid, rng)
    J = assemble_newton_jacobian(grid, a, prm, u)
    x0 = u.interior_vector()
    d = rng.standard_normal(x0.size)

    def res(x):
        return assemble_residual(grid, a, prm, zero_source(), u.with_interior(x), check=False)

    r0 = res(x0)
    ts = np.array([1e-3, 1e-4, 1e-5, 1e-6])
    errs = [np.linalg.norm((res(x0 + t * d) - r0) / t - J @ d) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


def test_degenerate_jacobian_names_cells():
    grid = RectGrid.unit_square(4)
    with pytest.raises(DegenerateError) as ei:
        assemble_newton_jacobian(grid, constant(1, 0.1, 2), FluxParams(1.5, 0.0), FEFunction.zeros(grid))
    assert ei.value.cells.size == grid.n_cells


def test_norms_examples(rng):
    grid = RectGrid.unit_square(8)
    z = norms(FEFunction.zeros(grid), 3)
    assert (z.w12, z.lp_grad, z.sup_grad) == (0, 0, 0)
    f = FEFunction.interpolate(grid, lambda x: x[:, 0])
    for p in (1.2, 2, 3.5):
        assert norms(f, p).lp_grad == pytest.approx(1.0, rel=1e-14)
    g = _random_state(grid, rng, N=2)
    lam = -1.7 + 0.4j
    a, b = norms(g, 3), norms(lam * g, 3)
    for k in ("w12", "lp_grad", "sup_grad"):
        assert getattr(b, k) == pytest.approx(abs(lam) * getattr(a, k), rel=1e-13)


def test_interpolant_refinement_orders():
    errs, sups = [], []
    rule = QuadRule.gauss(5)
    for n in (8, 16, 32, 64):
        grid = RectGrid.unit_square(n)
        f = FEFunction.interpolate(grid, sine_bump)
        errs.append(error_norms(f, sine_bump, sine_bump_grad))
        G = gradients(grid, f.values, rule)
        ge = sine_bump_grad(grid.quad_points(rule)).reshape(G.shape)
        sups.append(np.abs(G - ge).max())
    l2 = [e["L2"] for e in errs]
    h1 = [e["grad_L2"] for e in errs]
    for k in range(3):
        assert np.log2(l2[k] / l2[k + 1]) == pytest.approx(2, abs=0.1)
        assert np.log2(h1[k] / h1[k + 1]) == pytest.approx(1, abs=0.1)
        assert np.log2(sups[k] / sups[k + 1]) == pytest.approx(1, abs=0.15)


def test_lift_boundary_examples():
    grid = RectGrid.unit_square(5)
    assert np.all(lift_boundary(grid, None).values == 0)
    assert np.all(lift_boundary(grid, lambda x: 0 * x[:, 0]).values == 0)
    c = lift_boundary(grid, lambda x: np.full(len(x), 2 - 3j))
    assert np.all(c.values[grid.boundary] == 2 - 3j) and np.all(c.values[grid.interior] == 0)
    g = lift_boundary(grid, lambda x: x[:, 0] + 1j * x[:, 1])
    b = grid.boundary
    np.testing.assert_array_equal(g.values[b, 0], grid.nodes[b, 0] + 1j * grid.nodes[b, 1])


def test_csv_round_trip(tmp_path, rng):
    grid = RectGrid(((0, 1), (-1, 1)), (4, 6))
    f = _random_state(grid, rng, N=2)
    path = tmp_path / "u.csv"
    f.write_csv(path)
    assert path.read_text().splitlines()[0] == "node_id,x,y,re_1,re_2,im_1,im_2"
    g = FEFunction.read_csv(path, grid)
    np.testing.assert_array_equal(g.values, f.values)
    with pytest.raises(ValueError):
        FEFunction.read_csv(path, RectGrid.unit_square(4))


def test_non_finite_source_refused():
    grid = RectGrid.unit_square(4)
    F = SourceField(lambda x: np.full((*x.shape[:-1], 1, 2), np.inf))
    with pytest.raises(EvaluationError):
        assemble_residual(grid, constant(1, 0.1, 2), FluxParams(2, 0), F, FEFunction.zeros(grid))
