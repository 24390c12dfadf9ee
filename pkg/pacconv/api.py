import math
import logging
from dataclasses import asdict

from . import __version__
from .bound import BoundInputs, capacity_estimates, generalization_bound, layer_constant, ambient_constant
from .core import TrialRunner
from .data import ExperimentReport, plot_channel_sweep, plot_layer_constants
from .lab import (channel_sweep, check_perturbation_lemma, check_sigma_condition, mc_report, mc_spectral_norm,
                  normalize_network, probe_inputs, random_network)
from .linalg import RngStream
from .operators import CONV, CONV_LIKE
from .zoo import DEFAULT_SPARSITY, TABLE_ENTRIES, get_entry

FIGURE4_SCHEMA = ('architecture', 'layer', 'kind', 'rows', 'cols', 'ambient', 'sparse', 'conv_like', 'conv',
                  'log10_ambient', 'log10_sparse', 'log10_conv')
TABLE1_SCHEMA = ('architecture', 'depth', 'sparsity', 'log10_ours', 'log10_baseline', 'log10_ours_C1_squared',
                 'log10_baseline_C1_squared', 'gamma', 'm', 'delta', 'bound_value', 'baseline_value')
VALIDATE_SCHEMA = ('check', 'sigma_scale', 'sigma', 'trials', 'violations', 'max_lhs_rhs_ratio', 'frequency',
                   'conditioned_frequency', 'premise_rate', 'asserted', 'passed', 'noteworthy')


def _metadata(command, **extra):
    meta = {'command': command, 'version': __version__}
    meta.update(extra)
    return meta


def _log10(value):
    return math.log10(value) if value > 0 and math.isfinite(value) else math.nan


def cmd_figure3(runner: TrialRunner, options, svg_path=None):
    """
    Channel sweep of ConvLike and Conv perturbations (empirical mean, min, max and
    the t = 0 thresholds).

    Args:
        runner: TrialRunner object.
        options (ExperimentOptions): uses seed, trials, sigma, channels, q, N, dim,
            epsilon, use_appendix_constant and power_max_iter.
        svg_path (str): optional plot destination.

    Returns:
        ExperimentReport with one row per (kind, channels).
    """
    rng = RngStream(options.seed)
    report = None
    for k, kind in enumerate((CONV_LIKE, CONV)):
        sweep = channel_sweep(kind, options.dim, options.q, options.N, options.channels, options.sigma,
                              options.trials, rng.spawn(k), runner, epsilon=options.epsilon,
                              use_appendix_constant=options.use_appendix_constant,
                              power_max_iter=options.power_max_iter)
        if report is None:
            report = sweep
        else:
            report.extend(sweep)
    report.metadata = _metadata('figure3', master_seed=options.seed, options=asdict(options))
    if svg_path:
        plot_channel_sweep(report, svg_path)
    return report


def _architecture(entry_or_arch, sparsity):
    if isinstance(entry_or_arch, str):
        return get_entry(entry_or_arch, sparsity).arch
    return entry_or_arch


def cmd_figure4(entry_or_arch, sparsity=DEFAULT_SPARSITY, svg_path=None, log_scale=True):
    """
    Squared per-layer constants of an architecture under the ambient, sparse,
    conv-like and conv estimates.

    Args:
        entry_or_arch: zoo entry name or ArchitectureSpec.
        sparsity (float): dense-layer sparsity for zoo entries; conv layers use it
            for their sparse estimate.
    """
    arch = _architecture(entry_or_arch, sparsity)
    report = ExperimentReport(FIGURE4_SCHEMA)
    for i, layer in enumerate(arch.layers):
        est = capacity_estimates(layer, sparsity)
        rows, cols = layer.shape
        report.add_row(architecture=arch.name, layer=layer.name or f'layer{i + 1}', kind=layer.kind, rows=rows,
                       cols=cols, ambient=est['ambient'], sparse=est['sparse'], conv_like=est['conv_like'],
                       conv=est['conv'], log10_ambient=_log10(est['ambient']), log10_sparse=_log10(est['sparse']),
                       log10_conv=_log10(est['conv']))
    report.metadata = _metadata('figure4', architecture=arch.name, sparsity=sparsity)
    if svg_path:
        plot_layer_constants(report, svg_path, log_scale)
    return report


def cmd_table1(gamma=1.0, m=60000, delta=0.05, B=1.0, sparsity=DEFAULT_SPARSITY, with_log_terms=False,
               names=TABLE_ENTRIES):
    """
    Bound exponents of the zoo architectures with every |W_i|_2 = 1.

    ``log10_ours`` and ``log10_baseline`` sum the squared layer constants; the
    ``*_C1_squared`` columns square the summed constants instead. The bound values
    evaluate the full bound at (gamma, m, delta) with a zero margin loss.
    """
    inputs = BoundInputs(gamma=gamma, B=B, m=m, delta=delta)
    report = ExperimentReport(TABLE1_SCHEMA)
    for name in names:
        arch = get_entry(name, sparsity).arch
        ours = sum(layer_constant(layer, arch.d, with_log_terms) ** 2 for layer in arch.layers)
        baseline = sum(ambient_constant(layer, arch.d, with_log_terms) ** 2 for layer in arch.layers)
        breakdown = generalization_bound(arch, inputs, 0.0, with_log_terms)
        report.add_row(architecture=arch.name, depth=arch.d, sparsity=sparsity, log10_ours=math.log10(ours),
                       log10_baseline=math.log10(baseline), log10_ours_C1_squared=math.log10(breakdown.C1 ** 2),
                       log10_baseline_C1_squared=math.log10(breakdown.baseline_C1 ** 2), gamma=gamma, m=m,
                       delta=delta, bound_value=breakdown.bound_value, baseline_value=breakdown.baseline_value)
    report.metadata = _metadata('table1', with_log_terms=with_log_terms, B=B)
    return report


def cmd_bound(arch, inputs, margin_loss=0.0, with_log_terms=True):
    """One-off generalization bound evaluation as a single report row."""
    row = generalization_bound(arch, inputs, margin_loss, with_log_terms).as_row()
    report = ExperimentReport(tuple(row))
    report.add_row(**row)
    report.metadata = _metadata('bound', architecture=arch.name, inputs=asdict(inputs))
    return report


def cmd_mc(runner: TrialRunner, arch, options):
    """Raw Monte Carlo spectral-norm statistics for every layer of ``arch``."""
    rng = RngStream(options.seed)
    report = None
    for i, spec in enumerate(arch.layers):
        summary = mc_spectral_norm(spec, options.sigma, options.trials, rng.spawn(i), options.t_values,
                                   runner=runner, power_max_iter=options.power_max_iter,
                                   use_appendix_constant=options.use_appendix_constant)
        rows = mc_report(spec, summary, options.sigma)
        if report is None:
            report = rows
        else:
            report.extend(rows)
    report.metadata = _metadata('mc', master_seed=options.seed, architecture=arch.name, options=asdict(options))
    return report


def cmd_validate(runner: TrialRunner, arch, inputs, options):
    """
    Builds a seeded random ReLU network over ``arch`` and runs the perturbation
    inequality check and the sigma stability check on it.

    Returns:
        (ExperimentReport, ok) where ``ok`` is False when any asserted check failed.
    """
    rng = RngStream(options.seed)
    net = random_network(arch.layers, rng.spawn(0), input_bound=inputs.B)
    if options.normalize:
        net, _ = normalize_network(net, options.power_max_iter)
    probes = list(probe_inputs(net.input_dim, options.probe_inputs, inputs.B, rng.spawn(1)))

    report = ExperimentReport(VALIDATE_SCHEMA)
    lemma = check_perturbation_lemma(net, probes, options.lemma_sigma, options.trials, rng.spawn(2), runner,
                                     power_max_iter=options.power_max_iter)
    ratios = [row['lhs'] / row['rhs'] for row in lemma.rows if row['rhs'] > 0]
    violations = lemma.metadata['violations']
    report.add_row(check='perturbation_lemma', sigma_scale=1.0, sigma=lemma.metadata['sigma'], trials=options.trials,
                   violations=violations, max_lhs_rhs_ratio=max(ratios) if ratios else 0.0, frequency=None,
                   conditioned_frequency=None, premise_rate=None, asserted=True, passed=violations == 0,
                   noteworthy=False)

    stability = check_sigma_condition(net, probes, inputs.gamma, options.trials, rng.spawn(3), runner=runner,
                                      power_max_iter=options.power_max_iter)
    for row in stability.rows:
        report.add_row(check='sigma_condition', sigma_scale=row['sigma_scale'], sigma=row['sigma'],
                       trials=row['trials'], violations=None, max_lhs_rhs_ratio=None, frequency=row['frequency'],
                       conditioned_frequency=row['conditioned_frequency'], premise_rate=row['premise_rate'],
                       asserted=row['asserted'], passed=row['passed'], noteworthy=row['noteworthy'])

    ok = all(row['passed'] for row in report.rows)
    report.metadata = _metadata('validate', master_seed=options.seed, architecture=arch.name,
                                inputs=asdict(inputs), options=asdict(options), probe_inputs=len(probes),
                                input_set='finite probe set', ok=ok)
    if not ok:
        logging.error(f'[LAB]: validation of {arch.name} failed')
    return report, ok
