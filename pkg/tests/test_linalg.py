import warnings

import numpy as np
import pytest

from pacconv.errors import InvalidInputError, ResourceError
from pacconv.linalg import RngStream, as_matrix, frobenius_norm, sample_gaussian, spectral_norm


class TestSpectralNorm:

    def test_diagonal(self):
        assert spectral_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0, rel=1e-9)

    def test_zero_matrix(self):
        assert spectral_norm(np.zeros((4, 5))) == 0.0

    def test_rank_one(self):
        u = np.arange(1.0, 5.0)
        v = np.array([2.0, -1.0, 0.5])
        expected = np.linalg.norm(u) * np.linalg.norm(v)
        assert spectral_norm(np.outer(u, v)) == pytest.approx(expected, rel=1e-9)

    def test_matches_svd_on_random_matrices(self, rng):
        for k in range(20):
            m = rng.spawn(k).generator().standard_normal((7, 11))
            expected = np.linalg.svd(m, compute_uv=False)[0]
            assert spectral_norm(m) == pytest.approx(expected, rel=1e-8)

    def test_circulant_operator(self):
        # the zero frequency of a difference filter is annihilated, the largest gain is 2
        m = np.eye(4) - np.roll(np.eye(4), 1, axis=1)
        assert spectral_norm(m) == pytest.approx(2.0, rel=1e-9)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            spectral_norm(np.array([[1.0, np.nan]]))

    def test_rejects_wrong_rank(self):
        with pytest.raises(InvalidInputError):
            spectral_norm(np.ones(3))

    def test_rejects_bad_tolerance(self):
        with pytest.raises(InvalidInputError):
            spectral_norm(np.eye(2), tol=0.0)

    def test_tall_matrix_converges_without_fallback(self):
        m = np.zeros((2001, 1))
        m[0, 0] = 1.0
        m[1, 0] = -1.0
        assert spectral_norm(m) == pytest.approx(np.sqrt(2.0))

    @pytest.mark.parametrize('c', [-3.5, 0.25, 7.0])
    def test_absolute_homogeneity(self, c, rng):
        m = rng.generator().standard_normal((9, 6))
        assert spectral_norm(c * m) == pytest.approx(abs(c) * spectral_norm(m), rel=1e-9)

    def test_matches_svd_up_to_200_by_200(self):
        for k in range(100):
            gen = RngStream(2024, k).generator()
            rows, cols = (int(v) for v in gen.integers(1, 201, size=2))
            m = gen.standard_normal((rows, cols))
            expected = np.linalg.svd(m, compute_uv=False)[0]
            assert spectral_norm(m) == pytest.approx(expected, rel=1e-8)

    @pytest.mark.parametrize('magnitude', [1e200, 1e-200])
    def test_extreme_magnitudes(self, magnitude):
        m = np.diag([3.0 * magnitude, magnitude])
        with warnings.catch_warnings():
            warnings.simplefilter('error')
            assert spectral_norm(m) == pytest.approx(3.0 * magnitude, rel=1e-9)


class TestFrobeniusNorm:

    def test_value(self):
        assert frobenius_norm([[3.0, 4.0]]) == pytest.approx(5.0)

    def test_bounds_spectral_norm(self, rng):
        m = rng.generator().standard_normal((6, 4))
        assert spectral_norm(m) <= frobenius_norm(m) + 1e-12


class TestRngStream:

    def test_same_stream_same_samples(self):
        a = sample_gaussian(3, 4, 1.0, RngStream(5, 2))
        b = sample_gaussian(3, 4, 1.0, RngStream(5, 2))
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent_of_consumption_order(self):
        parent = RngStream(11)
        first = parent.spawn(3).generator().standard_normal(5)
        parent.spawn(0).generator().standard_normal(100)
        again = parent.spawn(3).generator().standard_normal(5)
        np.testing.assert_array_equal(first, again)

    def test_distinct_indices_differ(self):
        a = RngStream(1).spawn(0).generator().standard_normal(8)
        b = RngStream(1).spawn(1).generator().standard_normal(8)
        assert not np.array_equal(a, b)

    def test_lineage(self):
        child = RngStream(9).spawn(4).spawn(2)
        assert child.key == (0, 4, 2)

    def test_rejects_negative_seed(self):
        with pytest.raises(InvalidInputError):
            RngStream(-1)


class TestSampleGaussian:

    def test_moments(self):
        x = sample_gaussian(1000, 1, 1.0, RngStream(8))
        assert x.shape == (1000, 1)
        assert abs(x.mean()) < 0.1
        assert abs(x.std() - 1.0) < 0.1

    def test_scaling(self):
        base = sample_gaussian(5, 5, 1.0, RngStream(3))
        scaled = sample_gaussian(5, 5, 2.5, RngStream(3))
        np.testing.assert_allclose(scaled, 2.5 * base)

    @pytest.mark.parametrize('rows, cols, sigma', [(0, 3, 1.0), (2, 2, 0.0), (2, 2, -1.0)])
    def test_rejects_bad_arguments(self, rows, cols, sigma):
        with pytest.raises(InvalidInputError):
            sample_gaussian(rows, cols, sigma, RngStream(0))


def test_as_matrix_rejects_empty():
    with pytest.raises(InvalidInputError):
        as_matrix(np.zeros((0, 3)))


def test_svd_fallback_size_cap(monkeypatch):
    import pacconv.linalg as linalg
    monkeypatch.setattr(linalg, 'SVD_FALLBACK_LIMIT', 1)
    m = RngStream(2).generator().standard_normal((6, 6))
    with pytest.raises(ResourceError):
        spectral_norm(m, max_iter=1)


def test_fallback_without_convergence():
    m = RngStream(2).generator().standard_normal((6, 6))
    assert spectral_norm(m, max_iter=1) == pytest.approx(np.linalg.svd(m, compute_uv=False)[0], rel=1e-12)
