import json
import numbers
from dataclasses import dataclass, fields, replace

from .bound import ArchitectureSpec, BoundInputs, LN_FORMS
from .errors import ConfigError, InvalidInputError
from .operators import CONV_KINDS, LayerSpec, normalize_kind
from .zoo import check_composition

SCHEMA_VERSION = 1
TOP_LEVEL_KEYS = ('schema_version', 'name', 'layers', 'norms', 'bound', 'experiment')
CONV_KEYS = ('kind', 'name', 'a', 'b', 'q', 'N', 'dim', 'pool')
DENSE_KEYS = ('kind', 'name', 'd_in', 'd_out', 's', 'pool')
NORM_KEYS = ('spectral', 'frobenius')
BOUND_DEFAULTS = {'gamma': 1.0, 'B': 1.0, 'm': 10000, 'delta': 0.05, 'k': None, 'ln_form': 'km'}


@dataclass(frozen=True)
class ExperimentOptions:
    """Options of the Monte Carlo commands; every field has a default."""
    seed: int = 0
    trials: int = 100
    sigma: float = 1.0
    t_values: tuple = (0.0, 1.0, 2.0, 3.0)
    workers: int = None
    probe_inputs: int = 16
    sparsity: float = 0.9
    normalize: bool = True
    lemma_sigma: float = None
    margin_loss: float = 0.0
    channels: tuple = (1, 2, 4, 8, 16)
    q: int = 5
    N: int = 64
    dim: int = 1
    epsilon: float = 0.5
    power_max_iter: int = 1000
    use_appendix_constant: bool = True


OPTION_KINDS = {
    'seed': 'int', 'trials': 'int', 'sigma': 'real', 't_values': 'reals', 'workers': 'int?',
    'probe_inputs': 'int', 'sparsity': 'real', 'normalize': 'bool', 'lemma_sigma': 'real?',
    'margin_loss': 'real', 'channels': 'ints', 'q': 'int', 'N': 'int', 'dim': 'int', 'epsilon': 'real',
    'power_max_iter': 'int', 'use_appendix_constant': 'bool',
}


class _Document:
    """Parsed JSON together with its source, for line diagnostics."""

    def __init__(self, text):
        self.lines = text.splitlines()

    def line_of(self, key):
        needle = f'"{key}"'
        for number, line in enumerate(self.lines, start=1):
            if needle in line:
                return number
        return None

    def error(self, message, field, key=None):
        return ConfigError(message, field=field, line=self.line_of(key or field.rsplit('.', 1)[-1].split('[')[0]))


def _is_int(value):
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _is_real(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _check_value(doc, path, key, value, kind):
    optional = kind.endswith('?')
    kind = kind.rstrip('?')
    if value is None and optional:
        return None
    if kind == 'int' and _is_int(value):
        return int(value)
    if kind == 'real' and _is_real(value):
        return float(value)
    if kind == 'bool' and isinstance(value, bool):
        return value
    if kind == 'str' and isinstance(value, str):
        return value
    if kind in ('ints', 'reals') and isinstance(value, list) and value:
        check = _is_int if kind == 'ints' else _is_real
        if all(check(v) for v in value):
            return tuple(int(v) if kind == 'ints' else float(v) for v in value)
    raise doc.error(f'expected {kind}{" or null" if optional else ""}, got {value!r}', path, key)


def _reject_unknown(doc, section, allowed, prefix):
    for key in section:
        if key not in allowed:
            path = f'{prefix}.{key}' if prefix else key
            raise doc.error(f'unknown field; allowed: {", ".join(allowed)}', path, key)


def _section(doc, data, key):
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise doc.error(f'expected an object, got {type(value).__name__}', key)
    return value


def _parse_layer(doc, i, raw):
    path = f'layers[{i}]'
    if not isinstance(raw, dict):
        raise doc.error(f'expected an object, got {type(raw).__name__}', path, 'layers')
    if 'kind' not in raw:
        raise doc.error('missing field', f'{path}.kind', 'layers')
    try:
        kind = normalize_kind(raw['kind'])
    except InvalidInputError as e:
        raise doc.error(str(e), f'{path}.kind', 'kind')
    allowed = CONV_KEYS if kind in CONV_KINDS else DENSE_KEYS
    _reject_unknown(doc, raw, allowed, path)

    values = {}
    for key, value in raw.items():
        if key == 'kind':
            continue
        values[key] = _check_value(doc, f'{path}.{key}', key, value, 'str' if key == 'name' else 'int')
    try:
        return LayerSpec(kind, **values)
    except InvalidInputError as e:
        raise doc.error(str(e), path, 'layers')


def _parse_layers(doc, data):
    raw = data.get('layers')
    if not isinstance(raw, list) or not raw:
        raise doc.error('expected a nonempty list of layers', 'layers')
    layers = tuple(_parse_layer(doc, i, layer) for i, layer in enumerate(raw))
    check_composition(layers)
    return layers


def _parse_bound(doc, data):
    section = _section(doc, data, 'bound')
    _reject_unknown(doc, section, tuple(BOUND_DEFAULTS), 'bound')
    values = dict(BOUND_DEFAULTS)
    kinds = {'gamma': 'real', 'B': 'real', 'm': 'int', 'delta': 'real', 'k': 'int?', 'ln_form': 'str'}
    for key, value in section.items():
        values[key] = _check_value(doc, f'bound.{key}', key, value, kinds[key])
    if values['ln_form'] not in LN_FORMS:
        raise doc.error(f'expected one of {LN_FORMS}, got {values["ln_form"]!r}', 'bound.ln_form', 'ln_form')
    try:
        return BoundInputs(**values)
    except InvalidInputError as e:
        raise doc.error(str(e), 'bound')


def _parse_experiment(doc, data):
    section = _section(doc, data, 'experiment')
    _reject_unknown(doc, section, tuple(OPTION_KINDS), 'experiment')
    values = {key: _check_value(doc, f'experiment.{key}', key, value, OPTION_KINDS[key])
              for key, value in section.items()}
    return replace(ExperimentOptions(), **values)


def _parse_norms(doc, data, name, layers):
    section = _section(doc, data, 'norms')
    _reject_unknown(doc, section, NORM_KEYS, 'norms')
    norms = {key: _check_value(doc, f'norms.{key}', key, section[key], 'reals') for key in section}
    try:
        return ArchitectureSpec(name, layers, norms.get('spectral'), norms.get('frobenius'))
    except InvalidInputError as e:
        raise doc.error(str(e), 'norms')


def parse_config(text):
    """
    Parses a JSON config document.

    Layout::

        {"schema_version": 1, "name": "...", "layers": [{"kind": "conv", ...}, ...],
         "norms": {"spectral": [...], "frobenius": [...]},
         "bound": {"gamma": ..., "B": ..., "m": ..., "delta": ..., "k": ..., "ln_form": "km"},
         "experiment": {...}}

    Only ``layers`` is required. Unknown fields are rejected.

    Returns:
        (ArchitectureSpec, BoundInputs, ExperimentOptions)

    Raises:
        ConfigError: syntax or schema violation, with line and field.
        CompositionError: adjacent layers do not compose.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f'invalid JSON: {e.msg} (column {e.colno})', line=e.lineno)
    doc = _Document(text)
    if not isinstance(data, dict):
        raise ConfigError('config document must be a JSON object', line=1)
    _reject_unknown(doc, data, TOP_LEVEL_KEYS, '')

    version = data.get('schema_version', SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise doc.error(f'unsupported schema version {version!r}; expected {SCHEMA_VERSION}', 'schema_version')
    name = _check_value(doc, 'name', 'name', data.get('name', 'config'), 'str')

    layers = _parse_layers(doc, data)
    arch = _parse_norms(doc, data, name, layers)
    return arch, _parse_bound(doc, data), _parse_experiment(doc, data)


def load_config(path):
    with open(path, encoding='utf-8') as f:
        return parse_config(f.read())


def _layer_document(layer):
    keys = CONV_KEYS if layer.is_conv else DENSE_KEYS
    doc = {'kind': layer.kind}
    for key in keys[1:]:
        value = getattr(layer, key)
        if key == 'name' and value is None:
            continue
        if key == 'pool' and value == 1:
            continue
        doc[key] = value
    return doc


def _plain(value):
    return list(value) if isinstance(value, tuple) else value


def config_document(arch, inputs=None, options=None):
    """Canonical document of a parsed configuration (all defaults spelled out)."""
    inputs = inputs or BoundInputs(**BOUND_DEFAULTS)
    options = options or ExperimentOptions()
    return {
        'schema_version': SCHEMA_VERSION,
        'name': arch.name,
        'layers': [_layer_document(layer) for layer in arch.layers],
        'norms': {'spectral': list(arch.spectral_norms), 'frobenius': list(arch.frobenius_norms)},
        'bound': {key: getattr(inputs, key) for key in BOUND_DEFAULTS},
        'experiment': {f.name: _plain(getattr(options, f.name)) for f in fields(options)},
    }


def emit_config(arch, inputs=None, options=None):
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(config_document(arch, inputs, options), sort_keys=True, indent=2) + '\n'
