import math
from dataclasses import dataclass

import numpy as np

from .concentration import APPENDIX_CONSTANT
from .errors import InvalidInputError
from .operators import CONV, CONV_KINDS, lattice


@dataclass(frozen=True, eq=False)
class FrequencyBlock:
    """
    b x a matrix of channel-pair DFT coefficients at one frequency.

    ``block[j, i]`` is the DFT of filter g[j, i] (zero padded to N**dim) at
    ``frequency``.
    """
    frequency: tuple
    block: np.ndarray

    @property
    def real(self):
        return self.block.real

    @property
    def imag(self):
        return self.block.imag

    @property
    def norm(self):
        return float(_embedded_norms(self.block[None, ...])[0])


@dataclass(frozen=True, eq=False)
class ReImVariances:
    """Per-frequency standard deviations of the real and imaginary DFT parts."""
    frequencies: np.ndarray
    sigma_re: np.ndarray
    sigma_im: np.ndarray

    @property
    def max_sum(self):
        return float(np.max(self.sigma_re + self.sigma_im))


def _require_conv(op):
    if op.spec.kind != CONV or op.filters is None:
        raise InvalidInputError(f'{op.spec.label}: frequency analysis needs a weight-shared conv operator, '
                                f'got kind {op.spec.kind!r}')


def _block_stack(op):
    """All frequency blocks as a complex array of shape (N**dim, b, a)."""
    _require_conv(op)
    spec = op.spec
    axes = tuple(range(2, 2 + spec.dim))
    lam = np.fft.fftn(op.filters, s=(spec.N,) * spec.dim, axes=axes)
    return lam.reshape(spec.b, spec.a, -1).transpose(2, 0, 1)


def _embedded_norms(blocks):
    # complex singular values through the real embedding [[Re, -Im], [Im, Re]]
    re, im = blocks.real, blocks.imag
    embedded = np.concatenate([np.concatenate([re, -im], axis=-1),
                               np.concatenate([im, re], axis=-1)], axis=-2)
    return np.linalg.svd(embedded, compute_uv=False)[..., 0]


def frequency_blocks(op):
    """
    Block diagonalization of a circular conv operator, one block per frequency
    (row-major order over the N**dim frequencies).
    """
    blocks = _block_stack(op)
    freqs = lattice(op.spec.N, op.spec.dim)
    return [FrequencyBlock(tuple(int(v) for v in n), blocks[k]) for k, n in enumerate(freqs)]


def conv_spectral_norm_fft(op):
    """Spectral norm of a conv operator as the largest frequency-block norm."""
    return float(np.max(_embedded_norms(_block_stack(op))))


def _real_norms(blocks):
    return np.linalg.svd(blocks, compute_uv=False)[..., 0]


def block_split_norms(op):
    """
    Per-frequency ``(||B_n||, ||Re B_n||, ||Im B_n||)`` arrays; the first never
    exceeds the sum of the other two.
    """
    blocks = _block_stack(op)
    return _embedded_norms(blocks), _real_norms(blocks.real), _real_norms(blocks.imag)


def _phases(spec):
    freqs = lattice(spec.N, spec.dim)
    offsets = lattice(spec.q, spec.dim)
    return freqs, 2.0 * np.pi * (freqs @ offsets.T) / spec.N


def reim_variances(spec):
    """
    sigma_re,n = sqrt(sum_k cos^2(theta_nk)) and sigma_im,n = sqrt(sum_k sin^2(theta_nk))
    with theta_nk = 2 pi <k, n> / N over the q**dim filter offsets.
    """
    if spec.kind not in CONV_KINDS:
        raise InvalidInputError(f'{spec.label}: Re/Im variances need a conv layer, got kind {spec.kind!r}')
    freqs, theta = _phases(spec)
    return ReImVariances(freqs, np.sqrt((np.cos(theta) ** 2).sum(axis=1)), np.sqrt((np.sin(theta) ** 2).sum(axis=1)))


def reim_tail_thresholds(spec, t=0.0, sigma=1.0):
    """Per-frequency thresholds sigma (sigma_re,n (sqrt a + sqrt b) + t) and the Im counterpart."""
    var = reim_variances(spec)
    width = math.sqrt(spec.a) + math.sqrt(spec.b)
    return sigma * (var.sigma_re * width + t), sigma * (var.sigma_im * width + t)


def phase_norm_sum(theta):
    """sqrt(sum cos^2 theta) + sqrt(sum sin^2 theta) along the last axis."""
    theta = np.asarray(theta, dtype=float)
    return np.sqrt((np.cos(theta) ** 2).sum(axis=-1)) + np.sqrt((np.sin(theta) ** 2).sum(axis=-1))


def union_bound_threshold(spec, sigma, T):
    """
    Level exceeded with probability at most T after a union bound over the
    frequency events (N**2 in 2d, N in 1d):
    sigma 1.4 q (sqrt a + sqrt b + sqrt(2 ln(2 events / T))).
    """
    if spec.kind not in CONV_KINDS:
        raise InvalidInputError(f'{spec.label}: union bound needs a conv layer, got kind {spec.kind!r}')
    if not 0 < T < 1:
        raise InvalidInputError(f'T must lie in (0, 1), got {T}')
    if not sigma > 0:
        raise InvalidInputError(f'sigma must be positive, got {sigma}')
    events = spec.N ** spec.dim
    return sigma * APPENDIX_CONSTANT * spec.q * (
        math.sqrt(spec.a) + math.sqrt(spec.b) + math.sqrt(2.0 * math.log(2.0 * events / T)))
