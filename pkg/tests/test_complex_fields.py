import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cplap.complex_fields import CMat, DimensionError, RealMat2N, check, cinner, cnorm, hat


def unit(N=1, n=2, r=0, c=0, value=1.0):
    z = np.zeros((N, n), complex)
    z[r, c] = value
    return CMat.from_complex(z)


def random_cmat(rng, N=2, n=3):
    return CMat(rng.standard_normal((N, n)), rng.standard_normal((N, n)))


def test_cinner_unit_entries():
    E = unit()
    assert cinner(E, E) == 1 + 0j
    assert cinner(unit(value=1j), E) == 1j


def test_cinner_rejects_shape_mismatch():
    with pytest.raises(DimensionError):
        cinner(CMat.zeros(1, 2), CMat.zeros(2, 2))


def test_hat_and_check_of_unit_entries():
    np.testing.assert_array_equal(hat(unit()).entries, [[1, 0], [0, 0]])
    np.testing.assert_array_equal(hat(unit(value=1j)).entries, [[0, 0], [1, 0]])
    np.testing.assert_array_equal(check(unit()).entries, [[0, 0], [1, 0]])
    np.testing.assert_array_equal(check(unit(value=1j)).entries, [[-1, 0], [0, 0]])


def test_cnorm_examples():
    assert cnorm(CMat.zeros()) == 0
    F = CMat(3 * np.eye(1, 2), 4 * np.eye(1, 2))
    assert cnorm(F) == 5


def test_realification_identity_random(rng):
    for _ in range(50):
        F, G = random_cmat(rng), random_cmat(rng)
        lhs = cinner(F, G)
        hF = hat(F).entries
        rhs = np.sum(hF * hat(G).entries) + 1j * np.sum(hF * check(G).entries)
        assert abs(lhs - rhs) <= 1e-14 * abs(lhs)


def test_norm_equivalence_and_check_is_hat_of_iF(rng):
    for _ in range(50):
        F = random_cmat(rng)
        assert hat(F).norm() == pytest.approx(cnorm(F), rel=1e-15)
        assert check(F).norm() == pytest.approx(cnorm(F), rel=1e-15)
        np.testing.assert_array_equal(check(F).entries, hat(1j * F).entries)
        assert cnorm(F) ** 2 == pytest.approx(cinner(F, F).real, rel=1e-14)
        assert cinner(F, F).imag == 0


def test_cmat_invariants():
    with pytest.raises(ValueError):
        CMat([[np.nan, 0]], [[0, 0]])
    with pytest.raises(DimensionError):
        CMat(np.zeros((1, 2)), np.zeros((2, 1)))
    with pytest.raises(DimensionError):
        RealMat2N(np.zeros((3, 2)))


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
cplx = st.tuples(finite, finite).map(lambda t: complex(*t))
mats = st.lists(cplx, min_size=6, max_size=6).map(lambda v: CMat.from_complex(np.reshape(v, (2, 3))))


@settings(max_examples=200, deadline=None)
@given(mats, mats, mats, cplx)
def test_sesquilinearity(F, G, H, alpha):
    scale = (cnorm(F) * abs(alpha) + cnorm(G)) * cnorm(H) + 1e-300
    lhs = cinner(alpha * F + G, H)
    rhs = alpha * cinner(F, H) + cinner(G, H)
    assert abs(lhs - rhs) <= 1e-13 * scale
    lhs2 = cinner(F, alpha * G)
    rhs2 = np.conj(alpha) * cinner(F, G)
    assert abs(lhs2 - rhs2) <= 1e-13 * (cnorm(F) * cnorm(G) * abs(alpha) + 1e-300)


@settings(max_examples=200, deadline=None)
@given(mats, mats)
def test_hermitian_symmetry(F, G):
    assert cinner(F, G) == pytest.approx(np.conj(cinner(G, F)), rel=1e-14, abs=1e-300)
