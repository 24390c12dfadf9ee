import itertools
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, ResourceError
from .linalg import as_matrix

DENSE_SPARSE = 'dense_sparse'
CONV_LIKE = 'conv_like'
CONV = 'conv'
KINDS = (DENSE_SPARSE, CONV_LIKE, CONV)
CONV_KINDS = (CONV_LIKE, CONV)

# Accepted spellings of the layer kinds
kind_mapper = {
    'dense_sparse': DENSE_SPARSE,
    'densesparse': DENSE_SPARSE,
    'dense': DENSE_SPARSE,
    'sparse': DENSE_SPARSE,
    'conv_like': CONV_LIKE,
    'convlike': CONV_LIKE,
    'conv': CONV,
}

MAX_OPERATOR_CELLS = 10 ** 8


def normalize_kind(kind):
    key = str(kind).replace('-', '_').lower()
    if key not in kind_mapper:
        raise InvalidInputError(f'unknown layer kind {kind!r}; expected one of {", ".join(KINDS)}')
    return kind_mapper[key]


@dataclass(frozen=True)
class LayerSpec:
    """
    Structural description of one layer.

    DenseSparse layers use ``d_in``, ``d_out`` and the row/column cap ``s``. Conv and
    ConvLike layers use ``a`` input channels, ``b`` output channels, filter side ``q``
    and feature-map side ``N`` in ``dim`` spatial dimensions; the operator maps
    ``a * N**dim`` inputs to ``b * N**dim`` outputs with circular padding and stride 1.
    ``pool`` is the downsampling factor applied after the layer; it only matters when
    checking that architecture entries compose.
    """
    kind: str
    d_in: int = None
    d_out: int = None
    s: int = None
    a: int = None
    b: int = None
    q: int = None
    N: int = None
    dim: int = 2
    pool: int = 1
    name: str = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', normalize_kind(self.kind))
        if self.kind == DENSE_SPARSE:
            self._require_positive('d_in', 'd_out', 's')
            if self.s > max(self.d_in, self.d_out):
                raise InvalidInputError(
                    f'{self.label}: s={self.s} exceeds max(d_in, d_out)={max(self.d_in, self.d_out)}')
        else:
            self._require_positive('a', 'b', 'q', 'N')
            if self.dim not in (1, 2):
                raise InvalidInputError(f'{self.label}: dim must be 1 or 2, got {self.dim}')
            if self.q > self.N:
                raise InvalidInputError(f'{self.label}: filter side q={self.q} exceeds feature map side N={self.N}')
        if int(self.pool) < 1:
            raise InvalidInputError(f'{self.label}: pool must be a positive integer, got {self.pool}')

    def _require_positive(self, *fields):
        for f in fields:
            value = getattr(self, f)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise InvalidInputError(f'{self.label}: {f} must be a positive integer, got {value!r}')
            object.__setattr__(self, f, int(value))

    @classmethod
    def dense_sparse(cls, d_in, d_out, s, **kwargs):
        return cls(DENSE_SPARSE, d_in=d_in, d_out=d_out, s=s, **kwargs)

    @classmethod
    def conv_like(cls, a, b, q, N, dim=2, **kwargs):
        return cls(CONV_LIKE, a=a, b=b, q=q, N=N, dim=dim, **kwargs)

    @classmethod
    def conv(cls, a, b, q, N, dim=2, **kwargs):
        return cls(CONV, a=a, b=b, q=q, N=N, dim=dim, **kwargs)

    @property
    def label(self):
        return self.name or self.kind

    @property
    def is_conv(self):
        return self.kind in CONV_KINDS

    @property
    def spatial(self):
        """Number of positions in one feature map (N**dim)."""
        return self.N ** self.dim if self.is_conv else 1

    @property
    def taps(self):
        """Filter support size q**dim."""
        return self.q ** self.dim if self.is_conv else 1

    @property
    def shape(self):
        """(rows, cols) of the materialized operator."""
        if self.is_conv:
            return self.b * self.spatial, self.a * self.spatial
        return self.d_out, self.d_in

    @property
    def cells(self):
        rows, cols = self.shape
        return rows * cols

    @property
    def free_parameter_count(self):
        if self.kind == CONV:
            return self.b * self.a * self.taps
        if self.kind == CONV_LIKE:
            return self.b * self.spatial * self.a * self.taps
        if self.d_out <= self.d_in:
            return self.d_out * min(self.s, self.d_in)
        return self.d_in * min(self.s, self.d_out)

    def with_kind(self, kind):
        return replace(self, kind=kind)


@dataclass(frozen=True, eq=False)
class SupportMask:
    """Boolean support pattern of an operator (psi restricted to {0, 1})."""
    rows: int
    cols: int
    support: np.ndarray

    def __post_init__(self):
        if self.support.shape != (self.rows, self.cols):
            raise InvalidInputError(f'support shape {self.support.shape} does not match {self.rows}x{self.cols}')
        self.support.setflags(write=False)

    @property
    def nnz(self):
        return int(self.support.sum())

    @property
    def row_counts(self):
        return self.support.sum(axis=1)

    @property
    def col_counts(self):
        return self.support.sum(axis=0)

    def pairs(self):
        return set(zip(*(idx.tolist() for idx in np.nonzero(self.support))))

    def satisfies_cap(self, s):
        """True when every row and column has at most ``s`` entries."""
        return bool(self.row_counts.max(initial=0) <= s and self.col_counts.max(initial=0) <= s)

    def __eq__(self, other):
        if not isinstance(other, SupportMask):
            return NotImplemented
        return self.rows == other.rows and self.cols == other.cols and np.array_equal(self.support, other.support)


@dataclass(frozen=True, eq=False)
class StructuredOperator:
    """
    Materialized layer matrix together with its support and structure.

    For Conv layers ``filters`` holds the shared filter tensor of shape
    ``(b, a) + (q,) * dim``; every matrix entry is a copy of one filter value.
    """
    matrix: np.ndarray
    mask: SupportMask
    spec: LayerSpec
    filters: np.ndarray = None

    def __post_init__(self):
        self.matrix.setflags(write=False)
        if self.filters is not None:
            self.filters.setflags(write=False)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def free_parameters(self):
        """Independent parameters: the filter tensor for Conv, support entries otherwise."""
        if self.filters is not None:
            return self.filters.ravel()
        return self.matrix[self.mask.support]

    def scaled(self, factor):
        filters = None if self.filters is None else factor * self.filters
        return StructuredOperator(factor * self.matrix, self.mask, self.spec, filters)

    def __add__(self, other):
        if not isinstance(other, StructuredOperator) or other.shape != self.shape:
            return NotImplemented
        filters = None
        if self.filters is not None and other.filters is not None:
            filters = self.filters + other.filters
        return StructuredOperator(self.matrix + other.matrix, self.mask, self.spec, filters)


def _check_size(spec, max_cells):
    if spec.cells > max_cells:
        rows, cols = spec.shape
        raise ResourceError(f'{spec.label}: operator of {rows}x{cols} = {spec.cells} cells exceeds the cap of {max_cells}')


def lattice(side, dim):
    return np.array(list(itertools.product(range(side), repeat=dim)), dtype=np.int64).reshape(-1, dim)


def conv_column_positions(N, q, dim):
    """
    For every output position p (row-major flat index) the flat input positions
    p + k (mod N) for all filter offsets k, as an array of shape (N**dim, q**dim).
    """
    positions = lattice(N, dim)
    offsets = lattice(q, dim)
    shifted = (positions[:, None, :] + offsets[None, :, :]) % N
    return np.ravel_multi_index(tuple(np.moveaxis(shifted, -1, 0)), (N,) * dim)


def _conv_indices(spec):
    P = spec.spatial
    cols_p = conv_column_positions(spec.N, spec.q, spec.dim)
    j = np.arange(spec.b)[:, None, None, None]
    i = np.arange(spec.a)[None, :, None, None]
    p = np.arange(P)[None, None, :, None]
    shape = (spec.b, spec.a, P, spec.taps)
    rows = np.broadcast_to(j * P + p, shape)
    cols = np.broadcast_to(i * P + cols_p[None, None, :, :], shape)
    return rows, cols


def _dense_sparse_support(spec):
    support = np.zeros(spec.shape, dtype=bool)
    if spec.d_out <= spec.d_in:
        # band along rows: (i, (i + k) mod d_in)
        width = min(spec.s, spec.d_in)
        rows = np.arange(spec.d_out)[:, None]
        support[rows, (rows + np.arange(width)[None, :]) % spec.d_in] = True
    else:
        # more rows than columns, so the band runs along columns to keep both caps
        width = min(spec.s, spec.d_out)
        cols = np.arange(spec.d_in)[None, :]
        support[(cols + np.arange(width)[:, None]) % spec.d_out, cols] = True
    return support


def build_mask(spec, max_cells=MAX_OPERATOR_CELLS):
    """
    Support pattern of the layer.

    DenseSparse layers get a cyclic band of width ``min(s, d_in)`` per row (or per
    column when ``d_out > d_in``). Conv and ConvLike layers get the circular
    convolution support: row (j, p) touches column (i, p + k mod N) for every input
    channel i and every filter offset k.
    """
    _check_size(spec, max_cells)
    rows, cols = spec.shape
    if spec.kind == DENSE_SPARSE:
        support = _dense_sparse_support(spec)
    else:
        support = np.zeros((rows, cols), dtype=bool)
        r, c = _conv_indices(spec)
        support[r, c] = True
    return SupportMask(rows, cols, support)


def materialize(spec, values, mask=None, max_cells=MAX_OPERATOR_CELLS):
    """
    Builds the operator of ``spec`` from its free parameters.

    Args:
        spec (LayerSpec): layer structure.
        values (array-like): for Conv the filter tensor ``(b, a) + (q,) * dim``;
            otherwise one value per support entry in row-major support order.
        mask (SupportMask): support to fill for non-Conv kinds; defaults to
            ``build_mask(spec)``.

    Returns:
        StructuredOperator
    """
    _check_size(spec, max_cells)
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError(f'{spec.label}: parameters contain NaN or Inf')

    if spec.kind == CONV:
        expected = (spec.b, spec.a) + (spec.q,) * spec.dim
        if values.shape != expected:
            raise InvalidInputError(f'{spec.label}: filter tensor shape {values.shape}, expected {expected}')
        mask = mask or build_mask(spec, max_cells)
        matrix = np.zeros(spec.shape)
        r, c = _conv_indices(spec)
        flat = values.reshape(spec.b, spec.a, 1, spec.taps)
        matrix[r, c] = np.broadcast_to(flat, r.shape)
        return StructuredOperator(matrix, mask, spec, values.copy())

    mask = mask or build_mask(spec, max_cells)
    if mask.support.shape != spec.shape:
        raise InvalidInputError(f'{spec.label}: mask shape {mask.support.shape} does not match {spec.shape}')
    values = values.ravel()
    if values.size != mask.nnz:
        raise InvalidInputError(f'{spec.label}: got {values.size} values for {mask.nnz} support entries')
    matrix = np.zeros(spec.shape)
    matrix[mask.support] = values
    return StructuredOperator(matrix, mask, spec)


def perturb_like(op, sigma, rng):
    """
    Gaussian perturbation with the structure of ``op``: N(0, sigma^2) filters for
    Conv layers (weight shared), N(0, sigma^2) on ``op.mask`` otherwise.
    """
    if not sigma > 0:
        raise InvalidInputError(f'sigma must be positive, got {sigma}')
    spec = op.spec
    gen = rng.generator()
    if spec.kind == CONV:
        shape = (spec.b, spec.a) + (spec.q,) * spec.dim
        return materialize(spec, sigma * gen.standard_normal(shape), mask=op.mask)
    return materialize(spec, sigma * gen.standard_normal(op.mask.nnz), mask=op.mask)


def sample_perturbation(spec, sigma, rng, max_cells=MAX_OPERATOR_CELLS):
    """
    Random perturbation operator for the layer structure.

    DenseSparse/ConvLike: i.i.d. N(0, sigma^2) on the mask support. Conv: an i.i.d.
    N(0, sigma^2) filter tensor materialized with weight sharing.
    """
    if not sigma > 0:
        raise InvalidInputError(f'sigma must be positive, got {sigma}')
    mask = build_mask(spec, max_cells)
    gen = rng.generator()
    if spec.kind == CONV:
        shape = (spec.b, spec.a) + (spec.q,) * spec.dim
        return materialize(spec, sigma * gen.standard_normal(shape), mask=mask, max_cells=max_cells)
    return materialize(spec, sigma * gen.standard_normal(mask.nnz), mask=mask, max_cells=max_cells)


def sparsify(weights, s):
    """
    Magnitude sparsification with a row and column cap.

    Entries are visited by decreasing magnitude (ties broken by row, then column);
    an entry is kept if its row and its column both hold fewer than ``s`` kept
    entries. Everything else is zeroed.

    Args:
        weights (array-like): dense layer matrix (d_out x d_in).
        s (int): cap on nonzeros per row and per column, >= 1.

    Returns:
        StructuredOperator of kind DenseSparse.
    """
    w = as_matrix(weights, 'weights')
    if int(s) < 1:
        raise InvalidInputError(f's must be at least 1, got {s}')
    s = int(s)
    rows, cols = w.shape

    r_idx, c_idx = np.nonzero(w)
    order = np.lexsort((c_idx, r_idx, -np.abs(w[r_idx, c_idx])))
    row_load = np.zeros(rows, dtype=np.int64)
    col_load = np.zeros(cols, dtype=np.int64)
    keep = np.zeros((rows, cols), dtype=bool)
    for t in order:
        r, c = r_idx[t], c_idx[t]
        if row_load[r] < s and col_load[c] < s:
            keep[r, c] = True
            row_load[r] += 1
            col_load[c] += 1

    spec = LayerSpec.dense_sparse(d_in=cols, d_out=rows, s=min(s, max(rows, cols)))
    return StructuredOperator(np.where(keep, w, 0.0), SupportMask(rows, cols, keep), spec)


def sparsification_margin(original_outputs, sparse_outputs):
    """
    Smallest gamma for which the sparse network is a (gamma, s)-sparsification on
    the given samples: the largest coordinate-wise output difference.
    """
    if len(original_outputs) != len(sparse_outputs):
        raise InvalidInputError(
            f'got {len(original_outputs)} original outputs and {len(sparse_outputs)} sparse outputs')
    margin = 0.0
    for k, (f, g) in enumerate(zip(original_outputs, sparse_outputs)):
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        if f.shape != g.shape:
            raise InvalidInputError(f'sample {k}: output shapes {f.shape} and {g.shape} differ')
        if f.size:
            margin = max(margin, float(np.max(np.abs(f - g))))
    return margin
