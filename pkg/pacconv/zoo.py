import math
import logging
from dataclasses import dataclass

from .bound import ArchitectureSpec
from .errors import CompositionError, InvalidInputError, ZooLookupError
from .operators import DENSE_SPARSE, LayerSpec

DEFAULT_SPARSITY = 0.9


def sparse_width(d_in, sparsity=DEFAULT_SPARSITY):
    """Row cap s keeping a (1 - sparsity) fraction of a row of length ``d_in``."""
    if not 0 <= sparsity < 1:
        raise InvalidInputError(f'sparsity must lie in [0, 1), got {sparsity}')
    return max(1, math.ceil(round((1.0 - sparsity) * d_in, 9)))


def _out_side(layer):
    return layer.N // layer.pool


def check_composition(layers):
    """
    Validates that consecutive layers compose.

    conv -> conv: output channels feed input channels in the same dimensionality and
    the next feature map fits in the pooled previous one. conv -> dense: the pooled
    feature maps flatten to d_in. dense -> dense: d_out = d_in. dense -> conv:
    d_out = a N**dim.

    Raises:
        CompositionError naming both layers.
    """
    for first, second in zip(layers, layers[1:]):
        if first.is_conv and second.is_conv:
            if first.b != second.a:
                raise CompositionError(first.label, second.label, f'{first.b} output channels vs {second.a} input channels')
            if first.dim != second.dim:
                raise CompositionError(first.label, second.label, f'dim {first.dim} vs dim {second.dim}')
            if second.N > _out_side(first):
                raise CompositionError(first.label, second.label,
                                       f'feature map N={second.N} exceeds the pooled side {_out_side(first)}')
        elif first.is_conv:
            flat = first.b * _out_side(first) ** first.dim
            if flat != second.d_in:
                raise CompositionError(first.label, second.label, f'flattened size {flat} vs d_in={second.d_in}')
        elif second.is_conv:
            if first.d_out != second.a * second.spatial:
                raise CompositionError(first.label, second.label,
                                       f'd_out={first.d_out} vs conv input size {second.a * second.spatial}')
        elif first.d_out != second.d_in:
            raise CompositionError(first.label, second.label, f'd_out={first.d_out} vs d_in={second.d_in}')


@dataclass(frozen=True)
class ZooEntry:
    """A canonical architecture with the dense-layer sparsity used to build it."""
    name: str
    arch: ArchitectureSpec
    sparsity: float
    source: str

    def with_sparsity(self, sparsity):
        layers = tuple(
            LayerSpec.dense_sparse(layer.d_in, layer.d_out, sparse_width(layer.d_in, sparsity), name=layer.name)
            if layer.kind == DENSE_SPARSE else layer
            for layer in self.arch.layers)
        return ZooEntry(self.name, ArchitectureSpec(self.name, layers), sparsity, self.source)


def _conv(name, a, b, q, N, pool=1, dim=2):
    return LayerSpec.conv(a, b, q, N, dim=dim, pool=pool, name=name)


def _dense(name, d_in, d_out, sparsity):
    return LayerSpec.dense_sparse(d_in, d_out, sparse_width(d_in, sparsity), name=name)


def _entry(name, convs, dense_dims, source, sparsity=DEFAULT_SPARSITY):
    dense = [_dense(f'fc{i + 1}', d_in, d_out, sparsity) for i, (d_in, d_out) in enumerate(dense_dims)]
    layers = tuple(convs) + tuple(dense)
    check_composition(layers)
    return ZooEntry(name, ArchitectureSpec(name, layers), sparsity, source)


def _vgg16_convs():
    blocks = [(224, (3, 64, 64)), (112, (64, 128, 128)), (56, (128, 256, 256, 256)),
              (28, (256, 512, 512, 512)), (14, (512, 512, 512, 512))]
    convs = []
    for k, (N, channels) in enumerate(blocks):
        for i, (a, b) in enumerate(zip(channels, channels[1:])):
            pool = 2 if i == len(channels) - 2 else 1
            convs.append(_conv(f'conv{k + 1}_{i + 1}', a, b, 3, N, pool))
    return convs


def _build_zoo():
    entries = [
        _entry('lenet5',
               [_conv('conv1', 1, 6, 5, 28, pool=2), _conv('conv2', 6, 16, 5, 10, pool=2)],
               [(400, 120), (120, 84), (84, 10)],
               'LeNet-5 on 28x28 MNIST: 5x5 filters, 2x2 pooling, dense 400-120-84-10'),
        _entry('alexnet',
               [_conv('conv1', 3, 96, 11, 55, pool=2), _conv('conv2', 96, 256, 5, 27, pool=2),
                _conv('conv3', 256, 384, 3, 13), _conv('conv4', 384, 384, 3, 13),
                _conv('conv5', 384, 256, 3, 13, pool=2)],
               [(9216, 4096), (4096, 4096), (4096, 1000)],
               'AlexNet (single tower): feature maps 55/27/13, dense 9216-4096-4096-1000'),
        _entry('vgg16', _vgg16_convs(),
               [(25088, 4096), (4096, 4096), (4096, 1000)],
               'VGG-16 configuration D: 3x3 filters, maps 224/112/56/28/14, dense 25088-4096-4096-1000'),
        _entry('desk',
               [_conv('conv1', 1, 2, 3, 8, dim=1)],
               [(16, 8), (8, 4)],
               'small 1d network for the validation command', sparsity=0.75),
    ]
    return {e.name: e for e in entries}


ZOO = _build_zoo()
# Entries reported by the table command
TABLE_ENTRIES = ('lenet5', 'alexnet', 'vgg16')


def get_entry(name, sparsity=None):
    """
    Looks up a zoo entry, rebuilding its dense layers when ``sparsity`` differs
    from the entry default.

    Raises:
        ZooLookupError: unknown name.
    """
    key = str(name).lower().replace('-', '').replace('_', '')
    if key not in ZOO:
        raise ZooLookupError(name, ZOO.keys())
    entry = ZOO[key]
    if sparsity is not None and sparsity != entry.sparsity:
        logging.debug(f'[ZOO]: rebuilding {key} at sparsity {sparsity}')
        entry = entry.with_sparsity(sparsity)
    return entry
