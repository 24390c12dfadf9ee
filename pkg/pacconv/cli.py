import sys
import logging
import argparse
from dataclasses import replace

from . import __version__
from .api import cmd_bound, cmd_figure3, cmd_figure4, cmd_mc, cmd_table1, cmd_validate
from .bound import BoundInputs
from .config import BOUND_DEFAULTS, ExperimentOptions, load_config
from .core import TrialRunner
from .errors import InvalidInputError, PacconvError
from .zoo import DEFAULT_SPARSITY, get_entry

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_INPUT = 2
DEFAULT_VALIDATE_ENTRY = 'desk'


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='master seed (overrides the config)')
    common.add_argument('--trials', type=int, help='Monte Carlo trials (overrides the config)')
    common.add_argument('--out', help='CSV destination; stdout when omitted')
    common.add_argument('--svg', help='optional SVG plot destination')
    common.add_argument('--config', help='JSON config document')
    common.add_argument('--zoo', help='built-in architecture name instead of a config')
    common.add_argument('--workers', type=int, help='parallel trial workers (default: $PACCONV_WORKERS or 1)')
    common.add_argument('--sparsity', type=float, help=f'dense-layer sparsity (default {DEFAULT_SPARSITY})')
    common.add_argument('--verbose', action='store_true', help='debug logging')
    return common


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog='pacconv', description='Spectral-norm concentration and '
                                     'generalization-bound experiments for convolutional networks')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    sweep = sub.add_parser('figure3', parents=[common], help='channel sweep of ConvLike and Conv perturbation norms')
    sub.add_parser('figure4', parents=[common], help='per-layer capacity constants of an architecture')
    table = sub.add_parser('table1', parents=[common], help='bound exponents of the zoo architectures')
    bound = sub.add_parser('bound', parents=[common], help='evaluate the generalization bound once')
    sub.add_parser('validate', parents=[common], help='empirical checks on a seeded random network')
    mc = sub.add_parser('mc', parents=[common], help='raw Monte Carlo spectral-norm statistics per layer')

    for p in (table, bound):
        p.add_argument('--gamma', type=float, help='margin')
        p.add_argument('--m', type=int, help='training-set size')
        p.add_argument('--delta', type=float, help='confidence parameter')
        p.add_argument('--log-terms', action=argparse.BooleanOptionalAction, default=p is bound,
                       help='include the logarithmic terms of the layer constants')
    bound.add_argument('--margin-loss', type=float, help='empirical margin loss in [0, 1]')
    for p in (sweep, mc):
        p.add_argument('--appendix-constant', action=argparse.BooleanOptionalAction, default=None,
                       help='1.4q (default) or q leading constant of the Conv bound')
    return parser


def _load(args, default_entry=None):
    """(arch, inputs, options) from --config or --zoo, with command-line overrides applied."""
    if args.config and args.zoo:
        raise InvalidInputError('--config and --zoo are mutually exclusive')
    arch = None
    inputs = BoundInputs(**BOUND_DEFAULTS)
    options = ExperimentOptions()
    if args.config:
        arch, inputs, options = load_config(args.config)
    elif args.zoo or default_entry:
        arch = get_entry(args.zoo or default_entry, args.sparsity).arch

    overrides = {key: getattr(args, key) for key in ('seed', 'trials', 'workers', 'sparsity')
                 if getattr(args, key, None) is not None}
    if getattr(args, 'appendix_constant', None) is not None:
        overrides['use_appendix_constant'] = args.appendix_constant
    options = replace(options, **overrides)
    bound_overrides = {key: getattr(args, key) for key in ('gamma', 'm', 'delta') if getattr(args, key, None) is not None}
    if bound_overrides:
        inputs = replace(inputs, **bound_overrides)
    return arch, inputs, options


def _emit(report, args):
    if args.out:
        report.write_csv(args.out)
    else:
        sys.stdout.write(report.to_csv_text())


def _require_arch(arch, command):
    if arch is None:
        raise InvalidInputError(f'{command} needs --config or --zoo')
    return arch


def run(args):
    """Dispatches a parsed command line and returns the exit code."""
    arch, inputs, options = _load(args, DEFAULT_VALIDATE_ENTRY if args.command == 'validate' else None)
    runner = TrialRunner(options.workers)
    status = EXIT_OK
    logging.info(f'[CLI]: {args.command} with seed {options.seed} on {runner}')

    if args.command == 'figure3':
        report = cmd_figure3(runner, options, args.svg)
        if not all(report.column('mean_below_theory')) or not all(report.column('max_below_bvh')):
            logging.error('[CLI]: an empirical norm exceeded its theoretical threshold')
            status = EXIT_INVARIANT
    elif args.command == 'figure4':
        report = cmd_figure4(_require_arch(arch, 'figure4'), options.sparsity, args.svg)
    elif args.command == 'table1':
        report = cmd_table1(inputs.gamma, inputs.m, inputs.delta, inputs.B, options.sparsity, args.log_terms)
    elif args.command == 'bound':
        margin_loss = args.margin_loss if args.margin_loss is not None else options.margin_loss
        report = cmd_bound(_require_arch(arch, 'bound'), inputs, margin_loss, args.log_terms)
    elif args.command == 'mc':
        report = cmd_mc(runner, _require_arch(arch, 'mc'), options)
    else:
        report, ok = cmd_validate(runner, arch, inputs, options)
        if not ok:
            status = EXIT_INVARIANT

    _emit(report, args)
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(message)s')
    try:
        return run(args)
    except (PacconvError, OSError) as e:
        logging.error(f'[CLI]: {e}')
        return EXIT_INPUT
