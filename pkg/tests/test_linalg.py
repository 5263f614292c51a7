import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_spd, with_spectrum
from descentkit.errors import (
    DimensionMismatch,
    NegativeQuadraticForm,
    NonSymmetric,
    NotPositiveDefinite,
    Singular,
)
from descentkit.linalg import (
    cholesky,
    condition_number,
    eig2x2,
    energy_norm,
    inner,
    matmul,
    matrix_power,
    spectral,
)

A_ASYM = np.array([[20.0, 7.0], [5.0, 5.0]])
A_SPD = np.array([[20.0, 5.0], [5.0, 5.0]])


@pytest.mark.parametrize("u, v, expected", [
    ([1, 2], [3, 4], 11.0),
    ([1, 0], [0, 1], 0.0),
    ([-3, 3.5], [-3, 3.5], 21.25),
])
def test_inner(u, v, expected):
    assert inner(u, v) == expected


def test_inner_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        inner([1, 2], [1, 2, 3])


def test_matmul_examples():
    np.testing.assert_array_equal(matmul(np.eye(2), A_ASYM), A_ASYM)
    np.testing.assert_allclose(matmul(A_ASYM, [-3, 3.5]), [-35.5, 2.5])
    with pytest.raises(DimensionMismatch):
        matmul(np.eye(2), np.ones((3, 3)))


def test_matmul_spectral_q_is_orthogonal(rng):
    a = random_spd(rng, 6)
    q = spectral(a).q
    np.testing.assert_allclose(matmul(q, q.T), np.eye(6), atol=1e-10)


class TestCholesky:
    def test_small_example(self):
        r = cholesky([[4, 2], [2, 3]]).r
        np.testing.assert_allclose(r, [[2, 1], [0, np.sqrt(2)]], rtol=0, atol=1e-15)

    def test_identity(self):
        np.testing.assert_array_equal(cholesky(np.eye(3)).r, np.eye(3))

    @pytest.mark.parametrize("a", [
        [[0, 1], [1, 0]],
        [[1, 2], [2, 1]],
        [[-1, 0], [0, 1]],
        np.zeros((3, 3)),
    ])
    def test_rejects_non_pd(self, a):
        with pytest.raises(NotPositiveDefinite):
            cholesky(a)

    def test_rejects_asymmetric(self):
        with pytest.raises(NonSymmetric):
            cholesky(A_ASYM)

    def test_round_trip_random(self, rng):
        for _ in range(100):
            d = int(rng.integers(1, 21))
            g = rng.standard_normal((d, d))
            a = g.T @ g + 1e-3 * np.eye(d)
            fac = cholesky(a)
            assert np.all(np.diag(fac.r) > 0)
            np.testing.assert_array_equal(fac.r, np.triu(fac.r))
            err = np.linalg.norm(fac.reconstruct() - a) / np.linalg.norm(a)
            assert err <= 1e-12

    def test_solve_matches_numpy(self, rng):
        a = random_spd(rng, 8)
        b = rng.standard_normal(8)
        np.testing.assert_allclose(cholesky(a).solve(b), np.linalg.solve(a, b), rtol=1e-10)


class TestSpectral:
    def test_diagonal_input(self):
        dec = spectral(np.diag([4.0, 40.0]))
        np.testing.assert_array_equal(dec.lam, [40.0, 4.0])
        np.testing.assert_array_equal(dec.q, [[0, 1], [1, 0]])

    def test_two_by_two(self):
        dec = spectral(A_SPD)
        roots = np.array([12.5 + np.sqrt(12.5 ** 2 - 75), 12.5 - np.sqrt(12.5 ** 2 - 75)])
        np.testing.assert_allclose(dec.lam, roots, rtol=1e-14)
        np.testing.assert_allclose(dec.lam, [21.5139, 3.4861], atol=1e-4)

    def test_indefinite(self):
        np.testing.assert_array_equal(spectral(np.diag([200.0, -200.0])).lam, [200.0, -200.0])

    def test_rejects_asymmetric(self):
        with pytest.raises(NonSymmetric):
            spectral(A_ASYM)

    @pytest.mark.parametrize("d", [1, 2, 3, 7, 12, 20])
    def test_round_trip_and_orthonormality(self, rng, d):
        for _ in range(5):
            g = rng.standard_normal((d, d))
            a = g + g.T
            dec = spectral(a)
            assert np.linalg.norm(dec.q.T @ dec.q - np.eye(d)) <= 1e-10
            assert np.linalg.norm(dec.reconstruct() - a) <= 1e-10 * np.linalg.norm(a)
            assert np.all(np.diff(dec.lam) <= 0)
            np.testing.assert_allclose(dec.lam, np.sort(np.linalg.eigvalsh(a))[::-1], atol=1e-10)

    def test_sign_convention(self, rng):
        dec = spectral(random_spd(rng, 9))
        for j in range(9):
            col = dec.q[:, j]
            assert col[np.argmax(np.abs(col))] >= 0

    @pytest.mark.parametrize("d, r", [(5, 2), (8, 3), (10, 10), (6, 0)])
    def test_rank_equals_nonzero_eigenvalues(self, rng, d, r):
        lam = np.concatenate([rng.uniform(1, 5, r) * rng.choice([-1, 1], r), np.zeros(d - r)])
        a = with_spectrum(rng, lam)
        assert spectral(a).rank() == r


class TestEig2x2:
    def test_complex_pair(self):
        pair = eig2x2([[0.8, -1.6], [0.8, -0.6]])
        assert pair.alpha.imag != 0
        assert abs(pair.alpha) == pytest.approx(np.sqrt(0.8), abs=1e-12)
        assert abs(pair.beta) == pytest.approx(np.sqrt(0.8), abs=1e-12)

    def test_real_pair(self):
        pair = eig2x2([[0.2, -0.16], [0.2, 0.84]])
        vals = sorted([pair.alpha.real, pair.beta.real])
        assert pair.alpha.imag == 0 and pair.beta.imag == 0
        assert vals[1] == pytest.approx(0.785, abs=5e-4)
        assert vals[0] == pytest.approx(0.255, abs=5e-4)

    def test_identity(self):
        pair = eig2x2(np.eye(2))
        assert pair.alpha == 1 and pair.beta == 1

    def test_trace_and_determinant(self, rng):
        for _ in range(1000):
            b = rng.standard_normal((2, 2))
            pair = eig2x2(b)
            assert abs(pair.alpha + pair.beta - np.trace(b)) <= 1e-12
            assert abs(pair.alpha * pair.beta - np.linalg.det(b)) <= 1e-12

    def test_rejects_wrong_shape(self):
        with pytest.raises(DimensionMismatch):
            eig2x2(np.eye(3))


@pytest.mark.parametrize("a, expected", [
    (np.diag([4.0, 40.0]), 10.0),
    (np.eye(3), 1.0),
    (A_SPD, 21.51387818866 / 3.48612181134),
])
def test_condition_number(a, expected):
    assert condition_number(a) == pytest.approx(expected, rel=1e-10)


def test_condition_number_singular():
    with pytest.raises(Singular):
        condition_number(np.diag([1.0, 0.0]))


@pytest.mark.parametrize("e, a, expected", [
    ([1, 0], np.diag([4.0, 40.0]), 2.0),
    ([0, 0], A_SPD, 0.0),
    ([1, 1], A_SPD, np.sqrt(35.0)),
])
def test_energy_norm(e, a, expected):
    assert energy_norm(e, a) == pytest.approx(expected, rel=1e-15)


def test_energy_norm_negative():
    with pytest.raises(NegativeQuadraticForm):
        energy_norm([0, 1], np.diag([1.0, -1.0]))


class TestMatrixPower:
    def test_zero_and_one(self):
        np.testing.assert_array_equal(matrix_power(A_SPD, 0), np.eye(2))
        np.testing.assert_array_equal(matrix_power(A_SPD, 1), A_SPD)

    def test_diagonal(self):
        np.testing.assert_allclose(matrix_power(np.diag([2.0, 3.0]), 3), np.diag([8.0, 27.0]), rtol=1e-14)

    @pytest.mark.parametrize("m", range(2, 11))
    def test_matches_repeated_products(self, rng, m):
        a = random_spd(rng, 5) / 3.0
        ref = np.linalg.multi_dot([a] * m)
        assert np.linalg.norm(matrix_power(a, m) - ref) <= 1e-8 * np.linalg.norm(ref)

    def test_rejects_asymmetric(self):
        with pytest.raises(NonSymmetric):
            matrix_power(A_ASYM, 2)


sym2 = arrays(np.float64, (3, 3), elements=st.floats(-10, 10, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(sym2)
def test_spectral_property(g):
    a = g + g.T
    dec = spectral(a)
    assert np.linalg.norm(dec.reconstruct() - a) <= 1e-10 * max(np.linalg.norm(a), 1e-300) + 1e-300
    assert np.linalg.norm(dec.q.T @ dec.q - np.eye(3)) <= 1e-10
