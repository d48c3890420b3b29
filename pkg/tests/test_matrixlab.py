import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volterra_mc.errors import DimensionError, NotPSDError
from volterra_mc.matrixlab import (
    CHOLESKY, SYM_SQRT, factor_psd, kron, loewner_leq, min_eigenvalue, psd_scale, same_gram, sym_sqrt,
)


def random_psd(rng, d, rank=None):
    a = rng.standard_normal((d, rank or d))
    return a @ a.T


def random_orthogonal(rng, q):
    qm, r = np.linalg.qr(rng.standard_normal((q, q)))
    return qm * np.sign(np.diag(r))


class TestFactor:
    def test_identity(self):
        f = factor_psd(np.eye(3))
        assert f.method == CHOLESKY
        np.testing.assert_array_equal(f.factor, np.eye(3))

    def test_rank_one(self):
        f = factor_psd(np.ones((2, 2)))
        assert f.method == SYM_SQRT
        np.testing.assert_allclose(f.factor, np.ones((2, 2)) / np.sqrt(2), atol=1e-15)

    def test_diagonal(self):
        f = factor_psd(np.diag([4.0, 9.0]))
        np.testing.assert_allclose(f.factor, np.diag([2.0, 3.0]), atol=0)

    def test_rejects_indefinite(self):
        with pytest.raises(NotPSDError):
            factor_psd(np.diag([1.0, -0.5]))

    def test_rejects_asymmetric(self):
        with pytest.raises(NotPSDError):
            factor_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(1, 12), deficient=st.booleans())
    def test_round_trip(self, seed, d, deficient):
        rng = np.random.default_rng(seed)
        s = random_psd(rng, d, max(1, d // 2) if deficient else None)
        f = factor_psd(s)
        err = np.linalg.norm(f.factor @ f.factor.T - s)
        assert err <= 1e-8 * (1 + np.linalg.norm(s))
        assert f.reconstruction_error == pytest.approx(err, abs=1e-12 * (1 + np.linalg.norm(s)))
        assert f.matrix_dim == d


class TestLoewner:
    def test_examples(self):
        assert loewner_leq(np.eye(3), 2 * np.eye(3))
        assert not loewner_leq(np.diag([1.0, 3.0]), np.diag([2.0, 2.0]))
        rng = np.random.default_rng(1)
        assert loewner_leq(np.zeros((4, 4)), random_psd(rng, 4, 2))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            loewner_leq(np.eye(2), np.eye(3))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(1, 6))
    def test_partial_order(self, seed, d):
        rng = np.random.default_rng(seed)
        s = random_psd(rng, d) - random_psd(rng, d)
        p1, p2 = random_psd(rng, d, 1), random_psd(rng, d, 2)
        assert loewner_leq(s, s)
        assert loewner_leq(s, s + p1) and loewner_leq(s + p1, s + p1 + p2)
        assert loewner_leq(s, s + p1 + p2)
        # antisymmetry: S <= U and U <= S only when they agree
        if np.abs(p1).max() > 1e-6:
            assert not (loewner_leq(s, s + p1) and loewner_leq(s + p1, s))


class TestKron:
    def test_identities(self):
        np.testing.assert_array_equal(kron(np.eye(2), np.eye(3)), np.eye(6))

    def test_block_placement(self):
        k = kron(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))
        expect = np.zeros((4, 4))
        expect[:2, 2:] = np.eye(2)
        np.testing.assert_array_equal(k, expect)

    def test_entry_formula(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal((3, 3)), rng.standard_normal((2, 2))
        k = kron(a, b)
        for i in range(3):
            for j in range(3):
                np.testing.assert_array_equal(k[2 * i:2 * i + 2, 2 * j:2 * j + 2], a[i, j] * b)


class TestSameGram:
    def test_examples(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((3, 2))
        assert same_gram(a, a)
        assert same_gram(a @ random_orthogonal(rng, 2), a)
        assert not same_gram(np.array([[1.0, 0.0]]), np.array([[0.0, 2.0]]))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            same_gram(np.ones((2, 2)), np.ones((2, 3)))

    def test_sym_sqrt_is_a_gram_factor(self):
        rng = np.random.default_rng(8)
        s = random_psd(rng, 4, 2)
        r = sym_sqrt(s)
        np.testing.assert_allclose(r, r.T, atol=1e-12)
        np.testing.assert_allclose(r @ r, s, atol=1e-10)
        # any other factor of the same Gram differs by an orthogonal matrix
        assert same_gram(np.linalg.cholesky(s + 0 * np.eye(4)) if min_eigenvalue(s) > 1e-9 else r, r)

    def test_scale(self):
        assert psd_scale(np.diag([2.0, 4.0])) == pytest.approx(3.0)
