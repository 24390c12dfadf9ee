import math

import numpy as np
import pytest

from pacconv.concentration import bound_bvh, bound_sparse
from pacconv.core import TrialRunner
from pacconv.errors import InvalidInputError, ResourceError
from pacconv.lab import (ReluNetwork, channel_sweep, check_perturbation_lemma, check_sigma_condition, forward,
                         lemma_sides, mc_report, mc_spectral_norm, normalize_network, probe_inputs, random_network)
from pacconv.linalg import RngStream, spectral_norm
from pacconv.operators import CONV, CONV_LIKE, LayerSpec, build_mask, materialize, sparsification_margin, sparsify

DESK_LAYERS = (LayerSpec.conv(a=1, b=2, q=3, N=8, dim=1),
               LayerSpec.dense_sparse(d_in=16, d_out=8, s=4),
               LayerSpec.dense_sparse(d_in=8, d_out=4, s=2))

NETWORKS = [
    DESK_LAYERS,
    (LayerSpec.conv_like(a=1, b=2, q=2, N=6, dim=1), LayerSpec.dense_sparse(d_in=12, d_out=5, s=3)),
    (LayerSpec.conv(a=2, b=2, q=2, N=4), LayerSpec.conv(a=2, b=1, q=3, N=4), LayerSpec.dense_sparse(d_in=16, d_out=3, s=16)),
    (LayerSpec.dense_sparse(d_in=10, d_out=10, s=3), LayerSpec.dense_sparse(d_in=10, d_out=4, s=10)),
    (LayerSpec.conv(a=1, b=3, q=3, N=5, dim=1), LayerSpec.conv_like(a=3, b=1, q=2, N=5, dim=1),
     LayerSpec.dense_sparse(d_in=5, d_out=2, s=2)),
]


def _identity(d):
    return materialize(LayerSpec.dense_sparse(d_in=d, d_out=d, s=1), np.ones(d))


def _normalized(layers, seed):
    net, _ = normalize_network(random_network(layers, RngStream(seed)))
    return net


class TestForward:

    def test_zero_input(self, rng):
        net = random_network(DESK_LAYERS, rng)
        np.testing.assert_array_equal(forward(net, np.zeros(8)), np.zeros(4))

    def test_identity_layer(self):
        net = ReluNetwork((_identity(3),))
        x = np.array([0.3, -0.4, 0.5])
        np.testing.assert_allclose(forward(net, x), x)

    def test_relu_between_layers_only(self):
        net = ReluNetwork((_identity(2), _identity(2)))
        np.testing.assert_allclose(forward(net, [0.5, -0.5]), [0.5, 0.0])
        np.testing.assert_allclose(forward(ReluNetwork((_identity(2),)), [0.5, -0.5]), [0.5, -0.5])

    def test_positive_homogeneity(self, rng):
        net = random_network(DESK_LAYERS, rng, input_bound=10.0)
        x = probe_inputs(8, count=1, B=1.0, rng=rng.spawn(9))[0]
        np.testing.assert_allclose(forward(net, 3.0 * x), 3.0 * forward(net, x), rtol=1e-12)

    def test_dimension_mismatch(self, rng):
        net = random_network(DESK_LAYERS, rng)
        with pytest.raises(InvalidInputError):
            forward(net, np.zeros(5))

    def test_input_outside_ball(self, rng):
        net = random_network(DESK_LAYERS, rng, input_bound=1.0)
        with pytest.raises(InvalidInputError):
            forward(net, np.full(8, 1.0))

    def test_layers_must_compose(self):
        with pytest.raises(InvalidInputError):
            ReluNetwork((_identity(3), _identity(4)))


class TestMcSpectralNorm:

    def test_dense_gaussian_level(self, rng, runner):
        spec = LayerSpec.dense_sparse(d_in=100, d_out=100, s=100)
        summary = mc_spectral_norm(spec, 1.0, 100, rng, runner=runner)
        assert 0.85 * 20.0 <= summary.mean <= 20.0
        assert summary.min <= summary.mean <= summary.max

    def test_single_tap_is_half_normal(self, rng, runner):
        spec = LayerSpec.conv(a=1, b=1, q=1, N=4)
        summary = mc_spectral_norm(spec, 1.0, 400, rng, runner=runner)
        assert summary.mean == pytest.approx(math.sqrt(2.0 / math.pi), abs=0.12)

    def test_deterministic(self, runner):
        spec = LayerSpec.conv_like(a=2, b=2, q=2, N=5)
        first = mc_spectral_norm(spec, 1.0, 20, RngStream(5), runner=runner)
        second = mc_spectral_norm(spec, 1.0, 20, RngStream(5), runner=runner)
        np.testing.assert_array_equal(first.samples, second.samples)
        assert first.exceed_counts == second.exceed_counts

    def test_worker_count_does_not_change_results(self):
        spec = LayerSpec.conv(a=2, b=3, q=3, N=6)
        serial = mc_spectral_norm(spec, 1.0, 24, RngStream(8), runner=TrialRunner(1))
        parallel = mc_spectral_norm(spec, 1.0, 24, RngStream(8), runner=TrialRunner(4))
        np.testing.assert_array_equal(serial.samples, parallel.samples)

    @pytest.mark.parametrize('dim', [1, 2])
    def test_fft_and_matrix_paths_agree(self, dim, runner):
        spec = LayerSpec.conv(a=3, b=2, q=2, N=5, dim=dim)
        fft = mc_spectral_norm(spec, 1.0, 30, RngStream(12), runner=runner)
        dense = mc_spectral_norm(spec, 1.0, 30, RngStream(12), runner=runner, use_fft=False, power_max_iter=10_000)
        np.testing.assert_allclose(fft.samples, dense.samples, rtol=1e-7)

    def test_exceed_counts_nonincreasing(self, rng, runner):
        summary = mc_spectral_norm(LayerSpec.dense_sparse(d_in=20, d_out=20, s=5), 1.0, 50, rng, runner=runner)
        counts = [summary.exceed_count(t) for t in summary.t_values]
        assert all(a >= b for a, b in zip(counts, counts[1:]))
        with pytest.raises(InvalidInputError):
            summary.exceed_count(7.5)

    @pytest.mark.parametrize('s', [10, 100])
    def test_tail_frequencies(self, s, runner):
        trials = 1000
        spec = LayerSpec.dense_sparse(d_in=100, d_out=100, s=s)
        summary = mc_spectral_norm(spec, 1.0, trials, RngStream(1000 + s), runner=runner,
                                   bound=bound_sparse(s))
        for count, prob in zip(summary.exceed_counts, summary.tail_probs):
            se = math.sqrt(prob * (1.0 - prob) / trials)
            assert count / trials <= prob + 3.0 * se

    @pytest.mark.parametrize('spec, pattern', [
        (LayerSpec.conv_like(a=2, b=2, q=3, N=6, dim=1), False),
        (LayerSpec.conv(a=2, b=2, q=3, N=8), False),
        (LayerSpec.dense_sparse(d_in=30, d_out=30, s=5), True),
    ])
    def test_structured_tail_frequencies(self, spec, pattern, runner):
        trials = 1000
        bound = bound_bvh(build_mask(spec)) if pattern else None
        summary = mc_spectral_norm(spec, 1.0, trials, RngStream(2000 + spec.shape[0]), runner=runner, bound=bound)
        assert summary.t_values == (0.0, 1.0, 2.0, 3.0)
        for count, prob in zip(summary.exceed_counts, summary.tail_probs):
            se = math.sqrt(prob * (1.0 - prob) / trials)
            assert count / trials <= prob + 3.0 * se
        assert summary.mean < summary.thresholds[0]

    def test_report_rows(self, rng, runner):
        spec = LayerSpec.dense_sparse(d_in=6, d_out=6, s=2, name='fc')
        summary = mc_spectral_norm(spec, 1.0, 10, rng, runner=runner)
        report = mc_report(spec, summary, 1.0)
        assert len(report.rows) == 4
        assert report.column('layer') == ['fc'] * 4


class TestChannelSweep:

    @pytest.fixture(scope='class')
    def sweeps(self):
        rng = RngStream(2718)
        runner = TrialRunner(1)
        return {kind: channel_sweep(kind, 1, 5, 32, [1, 2, 4, 8], 1.0, 50, rng.spawn(k), runner)
                for k, kind in enumerate((CONV_LIKE, CONV))}

    def test_mean_grows_with_channels(self, sweeps):
        for report in sweeps.values():
            means = report.column('mean')
            assert all(a <= b for a, b in zip(means, means[1:]))

    def test_thresholds_hold(self, sweeps):
        for report in sweeps.values():
            assert all(report.column('mean_below_theory'))
            assert all(report.column('max_below_bvh'))

    def test_conv_is_less_concentrated(self, sweeps):
        conv = sweeps[CONV].column('spread')
        like = sweeps[CONV_LIKE].column('spread')
        assert sum(c >= l for c, l in zip(conv, like)) >= 3

    def test_empty_sweep(self, rng):
        with pytest.raises(InvalidInputError):
            channel_sweep(CONV, 1, 3, 8, [], rng=rng)


class TestPerturbationLemma:

    def test_zero_perturbation(self, rng):
        net = random_network(DESK_LAYERS, rng)
        zeros = [np.zeros(op.shape) for op in net.layers]
        lhs, rhs = lemma_sides(net, zeros, probe_inputs(8, 4, 1.0, rng.spawn(5)))
        assert lhs == 0.0 and rhs == 0.0

    def test_single_linear_layer(self, rng):
        net = ReluNetwork((random_network((DESK_LAYERS[1],), rng).layers[0],), input_bound=2.0)
        u = rng.spawn(3).generator().standard_normal((8, 16))
        inputs = probe_inputs(16, 8, 2.0, rng.spawn(4))
        lhs, rhs = lemma_sides(net, [u], inputs)
        assert lhs == pytest.approx(max(np.linalg.norm(u @ x) for x in inputs))
        assert lhs <= spectral_norm(u) * 2.0 <= rhs

    @pytest.mark.parametrize('index', range(len(NETWORKS)))
    def test_no_violations(self, index, runner):
        net = _normalized(NETWORKS[index], 40 + index)
        inputs = probe_inputs(net.input_dim, 16, 1.0, RngStream(90 + index))
        report = check_perturbation_lemma(net, inputs, trials=200, rng=RngStream(index), runner=runner)
        assert report.metadata['violations'] == 0
        assert not any(report.column('violated'))
        assert len(report.rows) == 200

    def test_requires_normalized_network(self, rng, runner):
        net = random_network(DESK_LAYERS, rng)
        inputs = probe_inputs(8, 4, 1.0, rng.spawn(7))
        with pytest.raises(InvalidInputError):
            check_perturbation_lemma(net, inputs, trials=5, rng=rng, runner=runner)

    @pytest.mark.parametrize('sigma', [0.0, -1.0])
    def test_rejects_non_positive_sigma(self, sigma, rng, runner):
        net = _normalized(DESK_LAYERS, 3)
        inputs = probe_inputs(8, 2, 1.0, rng.spawn(7))
        with pytest.raises(InvalidInputError):
            check_perturbation_lemma(net, inputs, sigma=sigma, trials=2, rng=rng, runner=runner)

    def test_resampling_budget(self, rng, runner):
        net = _normalized(DESK_LAYERS, 3)
        inputs = probe_inputs(8, 2, 1.0, rng.spawn(7))
        with pytest.raises(ResourceError):
            check_perturbation_lemma(net, inputs, sigma=100.0, trials=2, rng=rng, runner=runner, max_resamples=3)


class TestSigmaCondition:

    def test_huge_margin(self, rng, runner):
        net = _normalized(DESK_LAYERS, 5)
        inputs = probe_inputs(8, 8, 1.0, rng.spawn(1))
        report = check_sigma_condition(net, inputs, 1e6, trials=50, rng=rng, sigma=1e-3, runner=runner)
        assert report.rows[0]['frequency'] == 1.0
        assert report.rows[0]['premise_rate'] == 1.0

    def test_conv_network(self, runner):
        layers = (LayerSpec.conv(a=1, b=2, q=3, N=8, dim=1), LayerSpec.conv(a=2, b=1, q=3, N=8, dim=1))
        net = random_network(layers, RngStream(61))
        inputs = probe_inputs(8, 16, 1.0, RngStream(62))
        report = check_sigma_condition(net, inputs, 1.0, trials=500, rng=RngStream(63), runner=runner)
        unit = report.rows[0]
        assert unit['asserted'] and unit['passed']
        assert unit['frequency'] >= 0.5
        assert not report.rows[1]['asserted'] and report.rows[1]['passed']
        assert report.rows[1]['sigma'] == pytest.approx(2.0 * unit['sigma'])
        assert 'conditioned_frequency' in report.schema

    def test_rejects_bad_margin(self, rng, runner):
        net = _normalized(DESK_LAYERS, 5)
        with pytest.raises(InvalidInputError):
            check_sigma_condition(net, [np.zeros(8)], 0.0, trials=5, rng=rng, runner=runner)


class TestNetworkHelpers:

    def test_normalization_keeps_the_function(self, rng):
        net = random_network(NETWORKS[2], rng)
        normalized, beta = normalize_network(net)
        norms = [spectral_norm(w) for w in normalized.weights]
        np.testing.assert_allclose(norms, beta, rtol=1e-6)
        for x in probe_inputs(net.input_dim, 16, 1.0, rng.spawn(8)):
            np.testing.assert_allclose(forward(normalized, x), forward(net, x), atol=1e-6)

    def test_probe_inputs_lie_on_the_sphere(self, rng):
        probes = probe_inputs(12, 16, 2.5, rng)
        assert probes.shape == (16, 12)
        np.testing.assert_allclose(np.linalg.norm(probes, axis=1), 2.5)

    def test_random_network_is_seeded(self):
        a = random_network(DESK_LAYERS, RngStream(3))
        b = random_network(DESK_LAYERS, RngStream(3))
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_full_width_sparsification_has_zero_margin(self, rng):
        net = random_network((LayerSpec.dense_sparse(d_in=12, d_out=12, s=12),
                              LayerSpec.dense_sparse(d_in=12, d_out=5, s=12)), rng)
        sparse = ReluNetwork(tuple(sparsify(w, max(w.shape)) for w in net.weights), net.input_bound)
        inputs = probe_inputs(12, 20, 1.0, rng.spawn(9))
        original = [forward(net, x) for x in inputs]
        assert sparsification_margin(original, [forward(sparse, x) for x in inputs]) == 0.0
