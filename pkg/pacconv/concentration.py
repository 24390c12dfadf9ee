import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .operators import CONV, CONV_LIKE, DENSE_SPARSE, SupportMask

# Appendix constant of the convolutional bound, (2 / sqrt 2) q rounded as in the derivation
APPENDIX_CONSTANT = 1.4


@dataclass(frozen=True)
class TailBound:
    """
    Tail statement P(||U||_2 >= threshold(t)) <= tail_prob(t).

    ``tail_prob(t) = min(1, prefactor * exp(-t^2 / (2 tail_scale^2)))`` for every
    bound in this module; ``tail_scale`` is kept so the tail can be inverted.
    """
    threshold: Callable[[float], float]
    tail_prob: Callable[[float], float]
    prefactor: float
    description: str
    tail_scale: float = 1.0

    @property
    def leading(self):
        """Threshold at t = 0."""
        return self.threshold(0.0)

    def level_for_probability(self, T):
        """Smallest t >= 0 with tail_prob(t) <= T."""
        if not 0 < T <= 1:
            raise InvalidInputError(f'target probability must lie in (0, 1], got {T}')
        if T >= self.prefactor:
            return 0.0
        return self.tail_scale * math.sqrt(2.0 * math.log(self.prefactor / T))


def _positive_ints(**values):
    for name, value in values.items():
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise InvalidInputError(f'{name} must be a positive integer, got {value!r}')


def _positive_sigma(sigma):
    if not sigma > 0:
        raise InvalidInputError(f'sigma must be positive, got {sigma}')


def _gaussian_tail(sigma, leading, prefactor, tail_scale, description):
    def threshold(t):
        return sigma * (leading + t)

    def tail_prob(t):
        return min(1.0, prefactor * math.exp(-t * t / (2.0 * tail_scale ** 2)))

    return TailBound(threshold, tail_prob, float(prefactor), description, float(tail_scale))


def bound_sparse(s, sigma=1.0):
    """Row/column s-sparse Gaussian layer: sigma (2 sqrt s + t), tail exp(-t^2/2)."""
    _positive_ints(s=s)
    _positive_sigma(sigma)
    return _gaussian_tail(sigma, 2.0 * math.sqrt(s), 1.0, 1.0, f'sparse(s={s})')


def bound_convlike(a, b, q, sigma=1.0):
    """Banded layer without weight sharing: sigma (q (sqrt a + sqrt b) + t), tail exp(-t^2/2)."""
    _positive_ints(a=a, b=b, q=q)
    _positive_sigma(sigma)
    leading = q * (math.sqrt(a) + math.sqrt(b))
    return _gaussian_tail(sigma, leading, 1.0, 1.0, f'conv_like(a={a}, b={b}, q={q})')


def bound_conv(a, b, q, N, sigma=1.0, use_appendix_constant=True, dim=2):
    """
    Weight-shared circular convolution.

    threshold(t) = sigma (c q (sqrt a + sqrt b) + t) with c = 1.4 (appendix form) or
    c = 1 (main-text form); tail_prob(t) = min(1, 2 N^dim exp(-t^2 / 2q^2)), one
    event per frequency.
    """
    _positive_ints(a=a, b=b, q=q, N=N)
    _positive_sigma(sigma)
    if dim not in (1, 2):
        raise InvalidInputError(f'dim must be 1 or 2, got {dim}')
    c = APPENDIX_CONSTANT if use_appendix_constant else 1.0
    leading = c * q * (math.sqrt(a) + math.sqrt(b))
    form = 'appendix' if use_appendix_constant else 'main'
    return _gaussian_tail(sigma, leading, 2.0 * N ** dim, float(q),
                          f'conv(a={a}, b={b}, q={q}, N={N}, dim={dim}, {form})')


def bvh_sigmas(psi):
    """
    (sigma_1, sigma_2, sigma_*) of a scalar pattern psi: largest row 2-norm, largest
    column 2-norm, largest absolute entry.
    """
    if isinstance(psi, SupportMask):
        psi = psi.support
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2 or psi.size == 0 or not np.any(psi):
        raise InvalidInputError('pattern must be a nonempty 2d array with at least one nonzero entry')
    sq = psi ** 2
    return (float(np.sqrt(sq.sum(axis=1).max())),
            float(np.sqrt(sq.sum(axis=0).max())),
            float(np.abs(psi).max()))


def bound_bvh(mask, epsilon=0.5, sigma=1.0):
    """
    General bound for Gaussian matrices with a prescribed variance pattern.

    threshold(t) = sigma (1 + eps) (sigma_1 + sigma_2 + 5 / sqrt(ln(1 + eps)) sigma_*
    sqrt(ln min(d_1, d_2)) + t), tail exp(-t^2 / 2 sigma_*^2).
    """
    if not 0 < epsilon <= 0.5:
        raise InvalidInputError(f'epsilon must lie in (0, 1/2], got {epsilon}')
    _positive_sigma(sigma)
    s1, s2, s_star = bvh_sigmas(mask)
    rows, cols = (mask.rows, mask.cols) if isinstance(mask, SupportMask) else np.shape(mask)
    log_term = 5.0 / math.sqrt(math.log1p(epsilon)) * s_star * math.sqrt(math.log(min(rows, cols)))

    def threshold(t):
        return sigma * (1.0 + epsilon) * (s1 + s2 + log_term + t)

    def tail_prob(t):
        return min(1.0, math.exp(-t * t / (2.0 * s_star ** 2)))

    return TailBound(threshold, tail_prob, 1.0, f'bvh(eps={epsilon}, {rows}x{cols})', s_star)


def bound_gaussian_dense(rows, cols, sigma=1.0):
    """Dense i.i.d. Gaussian matrix: sigma (sqrt rows + sqrt cols + t), tail exp(-t^2/2)."""
    _positive_ints(rows=rows, cols=cols)
    _positive_sigma(sigma)
    return _gaussian_tail(sigma, math.sqrt(rows) + math.sqrt(cols), 1.0, 1.0, f'dense({rows}x{cols})')


def default_bound(spec, sigma=1.0, use_appendix_constant=True):
    """The closed-form bound matching a layer's structure."""
    if spec.kind == DENSE_SPARSE:
        return bound_sparse(spec.s, sigma)
    if spec.kind == CONV_LIKE:
        return bound_convlike(spec.a, spec.b, spec.q, sigma)
    if spec.kind == CONV:
        return bound_conv(spec.a, spec.b, spec.q, spec.N, sigma, use_appendix_constant, spec.dim)
    raise InvalidInputError(f'unknown layer kind {spec.kind!r}')
