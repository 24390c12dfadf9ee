import numpy as np
import pytest

from pacconv.errors import InvalidInputError, ResourceError
from pacconv.linalg import RngStream
from pacconv.operators import (CONV, CONV_LIKE, DENSE_SPARSE, LayerSpec, build_mask, conv_column_positions,
                               materialize, normalize_kind, perturb_like, sample_perturbation, sparsification_margin,
                               sparsify)


class TestLayerSpec:

    def test_conv_shape(self):
        spec = LayerSpec.conv(a=3, b=5, q=3, N=8)
        assert spec.shape == (5 * 64, 3 * 64)
        assert spec.free_parameter_count == 5 * 3 * 9

    def test_dense_shape(self):
        assert LayerSpec.dense_sparse(d_in=10, d_out=4, s=3).shape == (4, 10)

    def test_filter_larger_than_map(self):
        with pytest.raises(InvalidInputError):
            LayerSpec.conv(a=1, b=1, q=5, N=4)

    def test_cap_larger_than_dimensions(self):
        with pytest.raises(InvalidInputError):
            LayerSpec.dense_sparse(d_in=4, d_out=3, s=5)

    @pytest.mark.parametrize('value', [0, -2, 1.5, True])
    def test_rejects_non_positive_integers(self, value):
        with pytest.raises(InvalidInputError):
            LayerSpec.conv_like(a=value, b=1, q=1, N=2)

    def test_kind_aliases(self):
        assert normalize_kind('DenseSparse') == DENSE_SPARSE
        assert normalize_kind('conv-like') == CONV_LIKE
        with pytest.raises(InvalidInputError):
            normalize_kind('attention')


class TestMasks:

    @pytest.mark.parametrize('a, b, q, N', [(1, 1, 3, 5), (2, 3, 2, 4), (4, 2, 3, 6)])
    def test_conv_like_row_and_column_sums(self, a, b, q, N):
        mask = build_mask(LayerSpec.conv_like(a=a, b=b, q=q, N=N, dim=2))
        assert np.all(mask.row_counts == a * q * q)
        assert np.all(mask.col_counts == b * q * q)

    def test_conv_like_1d_sums(self):
        mask = build_mask(LayerSpec.conv_like(a=2, b=3, q=3, N=7, dim=1))
        assert np.all(mask.row_counts == 6)
        assert np.all(mask.col_counts == 9)

    def test_dense_sparse_band(self):
        spec = LayerSpec.dense_sparse(d_in=6, d_out=4, s=2)
        mask = build_mask(spec)
        assert mask.satisfies_cap(2)
        assert mask.nnz == spec.free_parameter_count == 8
        assert (3, 4) in mask.pairs() and (3, 3) in mask.pairs()

    def test_dense_sparse_more_rows_than_columns(self):
        spec = LayerSpec.dense_sparse(d_in=3, d_out=7, s=2)
        mask = build_mask(spec)
        assert mask.satisfies_cap(2)
        assert np.all(mask.col_counts == 2)
        assert mask.nnz == spec.free_parameter_count
        # s entries per column leave some rows short of min(s, d_in)
        assert mask.nnz == 6 < spec.d_out * min(spec.s, spec.d_in)
        assert mask.row_counts.max() <= spec.s
        assert mask.row_counts.min() == 0

    @pytest.mark.parametrize('a, b, q, N, dim', [(1, 1, 3, 5, 1), (2, 3, 2, 4, 2), (3, 1, 4, 4, 2)])
    def test_weight_sharing_does_not_change_support(self, a, b, q, N, dim):
        shared = build_mask(LayerSpec.conv(a=a, b=b, q=q, N=N, dim=dim))
        unshared = build_mask(LayerSpec.conv_like(a=a, b=b, q=q, N=N, dim=dim))
        assert shared == unshared

    def test_conv_column_positions_wrap(self):
        cols = conv_column_positions(N=4, q=2, dim=1)
        np.testing.assert_array_equal(cols, [[0, 1], [1, 2], [2, 3], [3, 0]])

    def test_size_cap(self):
        with pytest.raises(ResourceError):
            build_mask(LayerSpec.conv(a=4, b=4, q=3, N=16), max_cells=100)


class TestMaterialize:

    def test_circulant_1d(self):
        op = materialize(LayerSpec.conv(a=1, b=1, q=2, N=4, dim=1), [[[1.0, 2.0]]])
        expected = np.array([[1, 2, 0, 0], [0, 1, 2, 0], [0, 0, 1, 2], [2, 0, 0, 1]], dtype=float)
        np.testing.assert_array_equal(op.matrix, expected)

    def test_weight_sharing(self, rng):
        spec = LayerSpec.conv(a=2, b=3, q=2, N=5)
        filters = rng.generator().standard_normal((3, 2, 2, 2))
        op = materialize(spec, filters)
        P = spec.spatial
        for j in range(3):
            for i in range(2):
                block = op.matrix[j * P:(j + 1) * P, i * P:(i + 1) * P]
                assert sorted(np.unique(block[block != 0])) == sorted(np.unique(filters[j, i]))
        assert op.free_parameters.size == spec.free_parameter_count

    def test_support_values_in_row_major_order(self):
        spec = LayerSpec.dense_sparse(d_in=3, d_out=3, s=1)
        op = materialize(spec, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(op.matrix, np.diag([1.0, 2.0, 3.0]))

    def test_wrong_parameter_count(self):
        with pytest.raises(InvalidInputError):
            materialize(LayerSpec.dense_sparse(d_in=3, d_out=3, s=1), [1.0, 2.0])

    def test_wrong_filter_shape(self):
        with pytest.raises(InvalidInputError):
            materialize(LayerSpec.conv(a=1, b=1, q=2, N=4, dim=1), np.ones((1, 1, 3)))

    def test_scaled_and_sum(self):
        op = materialize(LayerSpec.conv(a=1, b=1, q=2, N=3, dim=1), [[[1.0, -1.0]]])
        total = op + op.scaled(2.0)
        np.testing.assert_allclose(total.matrix, 3.0 * op.matrix)
        np.testing.assert_allclose(total.filters, [[[3.0, -3.0]]])


class TestPerturbations:

    def test_support_is_respected(self, rng):
        spec = LayerSpec.conv_like(a=2, b=2, q=2, N=4)
        op = sample_perturbation(spec, 1.0, rng)
        assert not np.any(op.matrix[~op.mask.support])
        assert np.all(op.matrix[op.mask.support] != 0)

    def test_conv_perturbation_is_weight_shared(self, rng):
        spec = LayerSpec.conv(a=2, b=1, q=3, N=5, dim=1)
        op = sample_perturbation(spec, 0.5, rng)
        np.testing.assert_array_equal(op.matrix, materialize(spec, op.filters).matrix)

    def test_deterministic(self):
        spec = LayerSpec.dense_sparse(d_in=8, d_out=8, s=3)
        a = sample_perturbation(spec, 1.0, RngStream(4, 1))
        b = sample_perturbation(spec, 1.0, RngStream(4, 1))
        np.testing.assert_array_equal(a.matrix, b.matrix)

    def test_perturb_like_keeps_sparsified_support(self, rng):
        w = rng.spawn(0).generator().standard_normal((6, 9))
        sparse = sparsify(w, 2)
        u = perturb_like(sparse, 1.0, rng.spawn(1))
        assert u.mask == sparse.mask
        assert not np.any(u.matrix[~sparse.mask.support])

    def test_rejects_zero_sigma(self, rng):
        with pytest.raises(InvalidInputError):
            sample_perturbation(LayerSpec.dense_sparse(d_in=2, d_out=2, s=1), 0.0, rng)


class TestSparsify:

    def test_cap_and_idempotence_on_random_matrices(self):
        for k in range(100):
            gen = RngStream(77, k).generator()
            rows, cols = gen.integers(1, 12, size=2)
            s = int(gen.integers(1, max(rows, cols) + 1))
            w = gen.standard_normal((rows, cols))
            out = sparsify(w, s)
            assert out.mask.satisfies_cap(s)
            again = sparsify(out.matrix, s)
            np.testing.assert_array_equal(again.matrix, out.matrix)

    def test_full_cap_is_identity(self, rng):
        w = rng.generator().standard_normal((5, 7))
        np.testing.assert_array_equal(sparsify(w, 7).matrix, w)

    def test_keeps_largest_entries(self):
        w = np.array([[5.0, 1.0], [2.0, 4.0]])
        np.testing.assert_array_equal(sparsify(w, 1).matrix, [[5.0, 0.0], [0.0, 4.0]])

    def test_equal_magnitudes_follow_row_then_column(self):
        w = np.array([[-2.0, 2.0, 2.0], [2.0, 2.0, -2.0], [2.0, 2.0, 2.0]])
        kept = sparsify(w, 1).matrix
        np.testing.assert_array_equal(kept != 0, np.eye(3, dtype=bool))
        np.testing.assert_array_equal(np.diag(kept), [-2.0, 2.0, 2.0])

    def test_rejects_zero_cap(self):
        with pytest.raises(InvalidInputError):
            sparsify(np.eye(2), 0)

    def test_margin(self):
        assert sparsification_margin([[1.0, 2.0]], [[1.5, 1.0]]) == pytest.approx(1.0)
        with pytest.raises(InvalidInputError):
            sparsification_margin([[1.0]], [[1.0, 2.0]])
