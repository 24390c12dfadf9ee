import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ResourceError

MAX_POWER_ITERATIONS = 10_000
DEFAULT_TOL = 1e-10
# Dense SVD fallback is refused above this side length
SVD_FALLBACK_LIMIT = 2_000
# Stream of the fixed power-iteration start vector
START_VECTOR_SEED = 0


@dataclass(frozen=True)
class RngStream:
    """
    Reproducible random stream identified by ``(master_seed, stream_index)``.

    Streams are counter based: the generator is a Philox bit generator keyed by a
    ``SeedSequence`` built from the master seed and the stream's spawn path, so the
    samples of a stream never depend on which other streams were consumed before it.
    ``lineage`` holds the indices of the parent streams when a stream was spawned.
    """
    master_seed: int
    stream_index: int = 0
    lineage: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise InvalidInputError(f'master_seed must be a 64-bit unsigned integer, got {self.master_seed}')
        if int(self.stream_index) < 0:
            raise InvalidInputError(f'stream_index must be non-negative, got {self.stream_index}')

    @property
    def key(self):
        return tuple(self.lineage) + (int(self.stream_index),)

    def generator(self):
        """Fresh ``numpy.random.Generator`` positioned at the start of the stream."""
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=self.key)
        return np.random.Generator(np.random.Philox(seq))

    def spawn(self, index):
        """Child stream ``index`` of this stream (e.g. one per Monte Carlo trial)."""
        return RngStream(self.master_seed, int(index), self.key)


def as_matrix(m, name='matrix'):
    """
    Validates ``m`` as a finite, nonempty 2d float array.

    Raises:
        InvalidInputError: wrong dimensionality, empty, or non-finite entries.
    """
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2:
        raise InvalidInputError(f'{name} must be 2-dimensional, got shape {arr.shape}')
    if arr.size == 0:
        raise InvalidInputError(f'{name} must be nonempty, got shape {arr.shape}')
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f'{name} contains NaN or Inf entries')
    return arr


def _svd_norm(m):
    if max(m.shape) > SVD_FALLBACK_LIMIT:
        raise ResourceError(
            f'dense SVD fallback refused for a {m.shape[0]}x{m.shape[1]} matrix '
            f'(limit {SVD_FALLBACK_LIMIT}x{SVD_FALLBACK_LIMIT})')
    return float(np.linalg.svd(m, compute_uv=False)[0])


def spectral_norm(m, tol=DEFAULT_TOL, max_iter=MAX_POWER_ITERATIONS):
    """
    Largest singular value of ``m``.

    Power iteration on ``m.T @ m`` from a fixed pseudo-random unit vector, so results
    are bit-stable across runs and circulant operators are not started inside a
    single frequency subspace. The iteration stops once the eigen-residual
    ``|Gx - lx|`` falls below ``tol * l``, which bounds the relative error of ``l``.
    If that does not happen within ``max_iter`` steps the value is taken from a
    dense SVD instead.

    Args:
        m (array-like): 2d real matrix.
        tol (float): relative tolerance, > 0.
        max_iter (int): power iteration cap.

    Returns:
        float: the spectral norm.
    """
    if tol <= 0:
        raise InvalidInputError(f'tol must be positive, got {tol}')
    m = as_matrix(m)
    scale = float(np.abs(m).max())
    if scale == 0.0:
        return 0.0
    # unit max entry keeps m.T @ m finite
    m = m / scale

    x = RngStream(START_VECTOR_SEED).generator().standard_normal(m.shape[1])
    x /= np.linalg.norm(x)
    for _ in range(int(max_iter)):
        y = m.T @ (m @ x)
        lam = float(x @ y)
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            # start vector in the null space
            break
        if np.linalg.norm(y - lam * x) <= tol * lam:
            return scale * float(np.sqrt(lam))
        x = y / y_norm

    logging.warning(f'[LINALG]: power iteration did not converge in {max_iter} steps '
                    f'for a {m.shape[0]}x{m.shape[1]} matrix, using SVD')
    return scale * _svd_norm(m)


def frobenius_norm(m):
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(as_matrix(m)))


def sample_gaussian(rows, cols, sigma, rng):
    """
    Matrix of i.i.d. N(0, sigma^2) entries drawn from ``rng``.

    Args:
        rows, cols (int): positive dimensions.
        sigma (float): standard deviation, > 0.
        rng (RngStream): source stream; the same stream always yields the same matrix.
    """
    if int(rows) < 1 or int(cols) < 1:
        raise InvalidInputError(f'rows and cols must be positive, got {rows}x{cols}')
    if not sigma > 0:
        raise InvalidInputError(f'sigma must be positive, got {sigma}')
    return sigma * rng.generator().standard_normal((int(rows), int(cols)))
