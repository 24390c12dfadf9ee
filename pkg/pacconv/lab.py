import math
import logging
from dataclasses import dataclass

import numpy as np

from .bound import ArchitectureSpec, BoundInputs, compute_sigma, normalization_factors
from .concentration import bound_bvh, default_bound
from .core import TrialRunner
from .data import ExperimentReport
from .errors import InvalidInputError, ResourceError
from .fourier import conv_spectral_norm_fft
from .linalg import spectral_norm
from .operators import CONV, LayerSpec, build_mask, materialize, perturb_like, sample_perturbation

DEFAULT_TRIALS = 100
DEFAULT_T_VALUES = (0.0, 1.0, 2.0, 3.0)
DEFAULT_PROBE_COUNT = 16
LAB_POWER_MAX_ITER = 1000
MAX_RESAMPLES = 1000
# Relative spread tolerated between layer norms of a normalized network
NORMALIZATION_TOL = 1e-6
NOTEWORTHY_FREQUENCY = 0.9

MC_SCHEMA = ('layer', 'kind', 'a', 'b', 'q', 'N', 'dim', 's', 'sigma', 'trials', 't', 'threshold', 'tail_prob',
             'exceed_count', 'exceed_frequency', 'mean', 'min', 'max', 'std')
SWEEP_SCHEMA = ('kind', 'channels', 'trials', 'mean', 'min', 'max', 'std', 'spread', 'theory_threshold',
                'bvh_threshold', 'mean_below_theory', 'max_below_bvh')
LEMMA_SCHEMA = ('trial', 'lhs', 'rhs', 'resamples', 'violated')
SIGMA_SCHEMA = ('sigma_scale', 'sigma', 'gamma', 'trials', 'frequency', 'conditioned_frequency',
                'premise_rate', 'asserted', 'passed', 'noteworthy')


@dataclass(frozen=True, eq=False)
class ReluNetwork:
    """
    Feedforward network x -> W_d relu(... relu(W_1 x)) over structured operators.

    ``input_bound`` is B, the largest admissible input 2-norm.
    """
    layers: tuple
    input_bound: float = 1.0

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise InvalidInputError('a network needs at least one layer')
        if not self.input_bound > 0:
            raise InvalidInputError(f'input bound must be positive, got {self.input_bound}')
        for i in range(1, len(layers)):
            if layers[i].shape[1] != layers[i - 1].shape[0]:
                raise InvalidInputError(
                    f'layer {i} takes {layers[i].shape[1]} inputs but layer {i - 1} produces {layers[i - 1].shape[0]}')
        object.__setattr__(self, 'layers', layers)

    @property
    def depth(self):
        return len(self.layers)

    @property
    def input_dim(self):
        return self.layers[0].shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].shape[0]

    @property
    def weights(self):
        return [op.matrix for op in self.layers]


@dataclass(frozen=True, eq=False)
class McSummary:
    """Statistics of the sampled spectral norms and exceedance counts per probed t."""
    trials: int
    mean: float
    min: float
    max: float
    std: float
    samples: np.ndarray
    t_values: tuple = ()
    thresholds: tuple = ()
    tail_probs: tuple = ()
    exceed_counts: tuple = ()

    def exceed_count(self, t):
        for probe, count in zip(self.t_values, self.exceed_counts):
            if probe == t:
                return count
        raise InvalidInputError(f't={t} was not probed; probed values: {self.t_values}')


def operator_norm(op, power_max_iter=LAB_POWER_MAX_ITER, use_fft=True):
    """Spectral norm of a structured operator, through the FFT for Conv layers."""
    if use_fft and op.spec.kind == CONV and op.filters is not None:
        return conv_spectral_norm_fft(op)
    return spectral_norm(op.matrix, max_iter=power_max_iter)


def _check_input(net, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise InvalidInputError(f'input of shape {x.shape} does not match the network input dimension {net.input_dim}')
    if not np.all(np.isfinite(x)):
        raise InvalidInputError('input contains NaN or Inf')
    if np.linalg.norm(x) > net.input_bound * (1.0 + 1e-9):
        raise InvalidInputError(f'input norm {np.linalg.norm(x):.6g} exceeds the bound B={net.input_bound}')
    return x


def _propagate(matrices, x):
    for k, w in enumerate(matrices):
        x = w @ x
        if k < len(matrices) - 1:
            x = np.maximum(x, 0.0)
    return x


def forward(net, x):
    """Output of the network on ``x``: ReLU between layers, none after the last."""
    return _propagate(net.weights, _check_input(net, x))


def _max_output_change(net, perturbed, inputs):
    base = net.weights
    return max(float(np.linalg.norm(_propagate(perturbed, x) - _propagate(base, x))) for x in inputs)


def mc_spectral_norm(spec, sigma, trials=DEFAULT_TRIALS, rng=None, t_values=DEFAULT_T_VALUES, bound=None,
                     runner=None, use_fft=True, power_max_iter=LAB_POWER_MAX_ITER, use_appendix_constant=True):
    """
    Monte Carlo estimate of the spectral norm of a random perturbation of ``spec``.

    Trial ``k`` samples its operator from ``rng.spawn(k)``; norms are computed through
    the FFT for Conv layers (``use_fft``) and by power iteration otherwise.
    ``bound`` defaults to the closed-form tail bound of the layer structure and is
    used for the exceedance counts; ``use_appendix_constant`` picks the 1.4q or q form
    of the Conv bound.

    Returns:
        McSummary
    """
    if rng is None:
        raise InvalidInputError('mc_spectral_norm needs an RngStream')
    runner = runner or TrialRunner()
    if bound is None:
        bound = default_bound(spec, sigma, use_appendix_constant)

    def trial(stream):
        op = sample_perturbation(spec, sigma, stream)
        return operator_norm(op, power_max_iter, use_fft)

    norms = np.asarray(runner.map(trial, rng, trials), dtype=float)
    t_values = tuple(float(t) for t in t_values)
    thresholds = tuple(bound.threshold(t) for t in t_values)
    summary = McSummary(
        trials=int(trials),
        mean=float(norms.mean()),
        min=float(norms.min()),
        max=float(norms.max()),
        std=float(norms.std()),
        samples=norms,
        t_values=t_values,
        thresholds=thresholds,
        tail_probs=tuple(bound.tail_prob(t) for t in t_values),
        exceed_counts=tuple(int(np.sum(norms >= level)) for level in thresholds),
    )
    logging.info(f'[LAB]: {spec.label}: {trials} trials, mean norm {summary.mean:.4g} '
                 f'(bound {bound.leading:.4g})')
    return summary


def mc_report(spec, summary, sigma):
    """One report row per probed t for a Monte Carlo summary."""
    report = ExperimentReport(MC_SCHEMA)
    for t, level, prob, count in zip(summary.t_values, summary.thresholds, summary.tail_probs,
                                     summary.exceed_counts):
        report.add_row(layer=spec.label, kind=spec.kind, a=spec.a, b=spec.b, q=spec.q, N=spec.N,
                       dim=spec.dim if spec.is_conv else None, s=spec.s, sigma=sigma, trials=summary.trials,
                       t=t, threshold=level, tail_prob=prob, exceed_count=count,
                       exceed_frequency=count / summary.trials, mean=summary.mean, min=summary.min,
                       max=summary.max, std=summary.std)
    return report


def channel_sweep(kind, dim, q, N, channel_values, sigma=1.0, trials=DEFAULT_TRIALS, rng=None, runner=None,
                  epsilon=0.5, use_appendix_constant=True, power_max_iter=LAB_POWER_MAX_ITER):
    """
    Empirical spectral norms of ConvLike or Conv perturbations as the channel count
    a = b grows, next to the closed-form threshold at t = 0 and the general
    variance-pattern threshold computed on the exact mask.

    Sweep point ``j`` draws its trials from ``rng.spawn(j)``.

    Returns:
        ExperimentReport with one row per channel value.
    """
    channel_values = list(channel_values)
    if not channel_values:
        raise InvalidInputError('channel sweep needs at least one channel value')
    if rng is None:
        raise InvalidInputError('channel_sweep needs an RngStream')
    runner = runner or TrialRunner()

    report = ExperimentReport(SWEEP_SCHEMA)
    for j, channels in enumerate(channel_values):
        spec = LayerSpec(kind, a=channels, b=channels, q=q, N=N, dim=dim)
        if not spec.is_conv:
            raise InvalidInputError(f'channel sweep needs a conv or conv-like kind, got {kind!r}')
        summary = mc_spectral_norm(spec, sigma, trials, rng.spawn(j), t_values=(0.0,), runner=runner,
                                   power_max_iter=power_max_iter)
        theory = default_bound(spec, sigma, use_appendix_constant).leading
        bvh = bound_bvh(build_mask(spec), epsilon, sigma).leading
        report.add_row(kind=spec.kind, channels=channels, trials=summary.trials, mean=summary.mean,
                       min=summary.min, max=summary.max, std=summary.std, spread=summary.max - summary.min,
                       theory_threshold=theory, bvh_threshold=bvh, mean_below_theory=summary.mean <= theory,
                       max_below_bvh=summary.max <= bvh)
    return report


def lemma_sides(net, perturbations, inputs, beta=None):
    """
    Both sides of the perturbation inequality

        max_x |f_{w+u}(x) - f_w(x)|_2 <= e^2 B beta^(d-1) sum_i |U_i|_2

    for one set of layer perturbations (operators or plain matrices). ``beta``
    defaults to the geometric mean of the layer spectral norms.
    """
    deltas = [np.asarray(getattr(u, 'matrix', u), dtype=float) for u in perturbations]
    if len(deltas) != net.depth:
        raise InvalidInputError(f'got {len(deltas)} perturbations for {net.depth} layers')
    for i, (u, w) in enumerate(zip(deltas, net.weights)):
        if u.shape != w.shape:
            raise InvalidInputError(f'perturbation {i} has shape {u.shape}, layer has {w.shape}')
    inputs = [_check_input(net, x) for x in inputs]
    if beta is None:
        beta, _ = normalization_factors([operator_norm(op) for op in net.layers])

    u_norms = [spectral_norm(u) for u in deltas]
    perturbed = [w + u for w, u in zip(net.weights, deltas)]
    lhs = _max_output_change(net, perturbed, inputs)
    rhs = math.e ** 2 * net.input_bound * beta ** (net.depth - 1) * sum(u_norms)
    return lhs, rhs


def _layer_norms(net, power_max_iter=LAB_POWER_MAX_ITER):
    return [operator_norm(op, power_max_iter) for op in net.layers]


def lemma_sigma(net, fraction=0.5):
    """
    Perturbation scale putting every layer's expected perturbation norm at
    ``fraction`` of the admissible |W_i|_2 / d.
    """
    norms = _layer_norms(net)
    return min(fraction * n / (net.depth * default_bound(op.spec).leading) for op, n in zip(net.layers, norms))


def check_perturbation_lemma(net, inputs, sigma=None, trials=DEFAULT_TRIALS, rng=None, runner=None,
                             max_resamples=MAX_RESAMPLES, power_max_iter=LAB_POWER_MAX_ITER):
    """
    Empirical check of the perturbation inequality on a normalized network.

    Each layer perturbation is resampled until |U_i|_2 <= |W_i|_2 / d (attempt ``r``
    of layer ``i`` in trial ``k`` uses ``rng.spawn(k).spawn(i).spawn(r)``). The
    maximum over ``inputs`` approximates the maximum over the input ball.

    Raises:
        InvalidInputError: the layer spectral norms are not all equal.
        ResourceError: a layer needed more than ``max_resamples`` draws.
    """
    if rng is None:
        raise InvalidInputError('check_perturbation_lemma needs an RngStream')
    norms = _layer_norms(net, power_max_iter)
    if max(norms) - min(norms) > NORMALIZATION_TOL * max(norms):
        raise InvalidInputError(f'network is not normalized: layer spectral norms range over '
                                f'[{min(norms):.6g}, {max(norms):.6g}]; normalize the weights first')
    inputs = [_check_input(net, x) for x in inputs]
    if not inputs:
        raise InvalidInputError('need at least one probe input')
    beta, _ = normalization_factors(norms)
    if sigma is None:
        sigma = lemma_sigma(net)
    elif not sigma > 0:
        raise InvalidInputError(f'sigma must be positive, got {sigma}')
    runner = runner or TrialRunner()
    d = net.depth

    def trial(stream):
        perturbations = []
        resamples = 0
        for i, (op, norm) in enumerate(zip(net.layers, norms)):
            layer_stream = stream.spawn(i)
            for attempt in range(max_resamples):
                u = perturb_like(op, sigma, layer_stream.spawn(attempt))
                if operator_norm(u, power_max_iter) <= norm / d:
                    break
                resamples += 1
            else:
                raise ResourceError(f'layer {i}: no admissible perturbation within {max_resamples} draws '
                                    f'at sigma={sigma:.4g}')
            perturbations.append(u)
        lhs, rhs = lemma_sides(net, perturbations, inputs, beta)
        return lhs, rhs, resamples

    report = ExperimentReport(LEMMA_SCHEMA)
    for k, (lhs, rhs, resamples) in enumerate(runner.map(trial, rng, trials)):
        report.add_row(trial=k, lhs=lhs, rhs=rhs, resamples=resamples, violated=lhs > rhs * (1.0 + 1e-9) + 1e-12)

    violations = int(sum(row['violated'] for row in report.rows))
    report.metadata.update({'violations': violations, 'beta': beta, 'depth': d, 'sigma': sigma,
                            'probe_inputs': len(inputs), 'input_set': 'finite probe set'})
    if violations:
        logging.error(f'[LAB]: perturbation inequality violated in {violations} of {trials} trials')
    else:
        logging.info(f'[LAB]: perturbation inequality held in all {trials} trials')
    return report


def architecture_of(net, name='network', power_max_iter=LAB_POWER_MAX_ITER):
    """
    ArchitectureSpec of a materialized network. Frobenius norms are taken over
    the free parameters (filter tensors for Conv layers).
    """
    return ArchitectureSpec(
        name=name,
        layers=tuple(op.spec for op in net.layers),
        spectral_norms=tuple(_layer_norms(net, power_max_iter)),
        frobenius_norms=tuple(float(np.linalg.norm(op.free_parameters)) for op in net.layers),
    )


def check_sigma_condition(net, inputs, gamma, trials=DEFAULT_TRIALS, rng=None, sigma=None, runner=None,
                          sigma_scales=(1.0, 2.0), power_max_iter=LAB_POWER_MAX_ITER):
    """
    Frequency of {max_x |f_{w+u}(x) - f_w(x)|_2 <= gamma / 4} under unconditioned
    Gaussian perturbations of the free parameters.

    ``sigma`` defaults to ``compute_sigma`` for this network and margin. Every scale
    in ``sigma_scales`` gets one row; only the unit scale is asserted to reach 1/2,
    larger scales are diagnostics. The conditioned frequency restricts to trials
    where every |U_i|_2 <= |W_i|_2 / d.
    """
    if rng is None:
        raise InvalidInputError('check_sigma_condition needs an RngStream')
    if not gamma > 0:
        raise InvalidInputError(f'gamma must be positive, got {gamma}')
    inputs = [_check_input(net, x) for x in inputs]
    if not inputs:
        raise InvalidInputError('need at least one probe input')
    norms = _layer_norms(net, power_max_iter)
    if sigma is None:
        arch = architecture_of(net, power_max_iter=power_max_iter)
        beta, _ = normalization_factors(norms)
        sigma = compute_sigma(arch, BoundInputs(gamma=gamma, B=net.input_bound, m=2, delta=0.5), beta)
    runner = runner or TrialRunner()
    d = net.depth

    report = ExperimentReport(SIGMA_SCHEMA)
    for j, scale in enumerate(sigma_scales):
        scaled_sigma = sigma * scale

        def trial(stream):
            perturbations = [perturb_like(op, scaled_sigma, stream.spawn(i)) for i, op in enumerate(net.layers)]
            premise = all(operator_norm(u, power_max_iter) <= n / d for u, n in zip(perturbations, norms))
            perturbed = [op.matrix + u.matrix for op, u in zip(net.layers, perturbations)]
            return _max_output_change(net, perturbed, inputs) <= gamma / 4.0, premise

        outcomes = runner.map(trial, rng.spawn(j), trials)
        stable = np.array([o[0] for o in outcomes])
        premise = np.array([o[1] for o in outcomes])
        frequency = float(stable.mean())
        conditioned = float(stable[premise].mean()) if premise.any() else math.nan
        asserted = scale == 1.0
        noteworthy = asserted and frequency < NOTEWORTHY_FREQUENCY
        report.add_row(sigma_scale=scale, sigma=scaled_sigma, gamma=gamma, trials=int(trials), frequency=frequency,
                       conditioned_frequency=conditioned, premise_rate=float(premise.mean()), asserted=asserted,
                       passed=frequency >= 0.5 or not asserted, noteworthy=noteworthy)
        if noteworthy:
            logging.warning(f'[LAB]: sigma-condition frequency {frequency:.3f} is below {NOTEWORTHY_FREQUENCY}')

    report.metadata.update({'sigma': sigma, 'gamma': gamma, 'depth': d, 'probe_inputs': len(inputs),
                            'input_set': 'finite probe set'})
    return report


def probe_inputs(dim, count=DEFAULT_PROBE_COUNT, B=1.0, rng=None):
    """``count`` pseudo-random vectors of norm exactly ``B``, as rows of an array."""
    if int(dim) < 1 or int(count) < 1:
        raise InvalidInputError(f'dim and count must be positive, got {dim} and {count}')
    if rng is None:
        raise InvalidInputError('probe_inputs needs an RngStream')
    x = rng.generator().standard_normal((int(count), int(dim)))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return B * x / np.where(norms > 0, norms, 1.0)


def random_network(layers, rng, input_bound=1.0):
    """
    Random ReLU network over the given layer specs. Layer ``i`` draws its
    parameters from ``rng.spawn(i)`` with variance 2 / (entries per row).
    """
    ops = []
    for i, spec in enumerate(layers):
        gen = rng.spawn(i).generator()
        mask = build_mask(spec)
        scale = math.sqrt(2.0 * mask.rows / mask.nnz)
        if spec.kind == CONV:
            values = scale * gen.standard_normal((spec.b, spec.a) + (spec.q,) * spec.dim)
        else:
            values = scale * gen.standard_normal(mask.nnz)
        ops.append(materialize(spec, values, mask=mask))
    return ReluNetwork(tuple(ops), input_bound)


def normalize_network(net, power_max_iter=LAB_POWER_MAX_ITER):
    """
    Rescales every layer to the geometric mean of the spectral norms. The network
    function is unchanged.

    Returns:
        (ReluNetwork, beta)
    """
    norms = _layer_norms(net, power_max_iter)
    if min(norms) == 0.0:
        raise InvalidInputError('cannot normalize a network with an identically zero layer')
    beta, factors = normalization_factors(norms)
    ops = tuple(op.scaled(float(f)) for op, f in zip(net.layers, factors))
    return ReluNetwork(ops, net.input_bound), beta