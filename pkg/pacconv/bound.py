import math
import logging
from dataclasses import dataclass, asdict

import numpy as np

from .errors import InvalidInputError
from .linalg import as_matrix, spectral_norm
from .operators import CONV_KINDS, StructuredOperator

# Constant of the sigma selection (4 e^2 < 42)
SIGMA_CONSTANT = 42.0
LN_FORMS = ('km', 'lemma')


@dataclass(frozen=True)
class ArchitectureSpec:
    """
    Ordered layers plus per-layer norms.

    When norms are not supplied every layer is assumed to have spectral norm 1, and
    Frobenius norms default to the spectral norms (stable rank one).
    """
    name: str
    layers: tuple
    spectral_norms: tuple = None
    frobenius_norms: tuple = None

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise InvalidInputError(f'{self.name}: architecture needs at least one layer')
        object.__setattr__(self, 'layers', layers)

        spectral = self.spectral_norms if self.spectral_norms is not None else (1.0,) * len(layers)
        frobenius = self.frobenius_norms if self.frobenius_norms is not None else spectral
        spectral = tuple(float(v) for v in spectral)
        frobenius = tuple(float(v) for v in frobenius)
        for label, norms in (('spectral', spectral), ('frobenius', frobenius)):
            if len(norms) != len(layers):
                raise InvalidInputError(f'{self.name}: {len(norms)} {label} norms for {len(layers)} layers')
            if not all(v > 0 and math.isfinite(v) for v in norms):
                raise InvalidInputError(f'{self.name}: {label} norms must be positive and finite')
        object.__setattr__(self, 'spectral_norms', spectral)
        object.__setattr__(self, 'frobenius_norms', frobenius)

    @property
    def d(self):
        return len(self.layers)

    @property
    def output_dim(self):
        return self.layers[-1].shape[0]


@dataclass(frozen=True)
class BoundInputs:
    """
    Margin ``gamma``, input-norm bound ``B``, sample size ``m`` and confidence ``delta``.

    ``k`` enters the ln(k m / delta) term and defaults to the number of output
    classes; ``ln_form='lemma'`` switches to ln(6 m / delta).
    """
    gamma: float
    B: float
    m: int
    delta: float
    k: int = None
    ln_form: str = 'km'

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidInputError(f'gamma must be positive, got {self.gamma}')
        if not self.B > 0:
            raise InvalidInputError(f'B must be positive, got {self.B}')
        if isinstance(self.m, bool) or int(self.m) != self.m or self.m < 2:
            raise InvalidInputError(f'm must be an integer >= 2, got {self.m}')
        if not 0 < self.delta < 1:
            raise InvalidInputError(f'delta must lie in (0, 1), got {self.delta}')
        if self.k is not None and (int(self.k) != self.k or self.k < 1):
            raise InvalidInputError(f'k must be a positive integer, got {self.k}')
        if self.ln_form not in LN_FORMS:
            raise InvalidInputError(f'ln_form must be one of {LN_FORMS}, got {self.ln_form!r}')


@dataclass(frozen=True)
class BoundBreakdown:
    """All pieces of the generalization bound and of its ambient-dimension baseline."""
    sigma: float
    beta: float
    constants: tuple
    constants_squared: tuple
    C1: float
    kl: float
    bound_argument: float
    ln_term: float
    complexity: float
    empirical_margin_loss: float
    bound_value: float
    kl_bound_value: float
    baseline_constants: tuple
    baseline_C1: float
    baseline_argument: float
    baseline_value: float

    def as_row(self):
        row = asdict(self)
        for key in ('constants', 'constants_squared', 'baseline_constants'):
            row[key] = ';'.join(f'{v:.10g}' for v in row[key])
        row['log10_C1_squared'] = math.log10(self.C1 ** 2)
        row['log10_baseline_C1_squared'] = math.log10(self.baseline_C1 ** 2)
        return row


def normalization_factors(norms):
    """Geometric mean ``beta`` of the norms and the factors ``beta / norm_i``."""
    norms = np.asarray(norms, dtype=float)
    if np.any(norms <= 0):
        raise InvalidInputError('cannot normalize a layer with zero spectral norm')
    beta = float(np.exp(np.mean(np.log(norms))))
    return beta, beta / norms


def normalize_weights(weights):
    """
    Rescales every layer to the common spectral norm beta = (prod ||W_i||_2)^(1/d).

    A ReLU network computes the same function after this rescaling, and the product
    of spectral norms and every ratio ||W_i||_F / ||W_i||_2 are unchanged.

    Returns:
        (list of numpy arrays, beta)
    """
    mats = [as_matrix(w, f'layer {i}') for i, w in enumerate(weights)]
    if not mats:
        raise InvalidInputError('need at least one layer to normalize')
    norms = [spectral_norm(w) for w in mats]
    for i, n in enumerate(norms):
        if n == 0.0:
            raise InvalidInputError(f'layer {i} is identically zero')
    beta, factors = normalization_factors(norms)
    return [f * w for f, w in zip(factors, mats)], beta


def ambient_constant(layer, d=None, with_log_terms=False):
    """Dense-matrix estimate sqrt(d_1) + sqrt(d_2) of the materialized shape."""
    rows, cols = layer.shape
    value = math.sqrt(rows) + math.sqrt(cols)
    if with_log_terms:
        value += math.sqrt(2.0 * math.log(2.0 * _depth(d)))
    return value


def _depth(d):
    if d is None or int(d) < 1:
        raise InvalidInputError(f'depth d must be a positive integer, got {d}')
    return int(d)


def layer_constant(layer, d, with_log_terms=False):
    """
    Capacity constant c_i of one layer.

    Conv/ConvLike: q (sqrt a + sqrt b), plus q sqrt(2 ln(4 N^dim d)) with log terms.
    DenseSparse: 2 sqrt s, plus sqrt(2 ln(2 d)) with log terms.
    """
    d = _depth(d)
    if layer.kind in CONV_KINDS:
        value = layer.q * (math.sqrt(layer.a) + math.sqrt(layer.b))
        if with_log_terms:
            value += layer.q * math.sqrt(2.0 * math.log(4.0 * layer.spatial * d))
        return value
    value = 2.0 * math.sqrt(layer.s)
    if with_log_terms:
        value += math.sqrt(2.0 * math.log(2.0 * d))
    return value


def c1_constant(arch, with_log_terms=True):
    return sum(layer_constant(layer, arch.d, with_log_terms) for layer in arch.layers)


def baseline_c1_constant(arch, with_log_terms=True):
    return sum(ambient_constant(layer, arch.d, with_log_terms) for layer in arch.layers)


def capacity_estimates(layer, sparsity=0.9):
    """
    Squared per-layer constants under the four estimates: ambient dimension,
    sparsity, convolutional-like and convolutional. Dense layers have no conv
    estimates (NaN).
    """
    ambient = ambient_constant(layer) ** 2
    if layer.kind in CONV_KINDS:
        natural = max(layer.a, layer.b) * layer.taps
        budget = max(1, math.ceil(round((1.0 - sparsity) * layer.shape[1], 9)))
        sparse = 4.0 * min(natural, budget)
        conv = (layer.q * (math.sqrt(layer.a) + math.sqrt(layer.b))) ** 2
        return {'ambient': ambient, 'sparse': sparse, 'conv_like': conv, 'conv': conv}
    return {'ambient': ambient, 'sparse': 4.0 * layer.s, 'conv_like': math.nan, 'conv': math.nan}


def compute_sigma(arch, inputs, beta_tilde):
    """
    Perturbation scale that keeps the output change below gamma / 4 with
    probability at least 1/2:

        sigma = gamma / (42 B beta_tilde^(d-1) C1)

    with C1 including its log terms (natural log).
    """
    if not beta_tilde > 0:
        raise InvalidInputError(f'beta_tilde must be positive, got {beta_tilde}')
    C1 = c1_constant(arch, with_log_terms=True)
    return inputs.gamma / (SIGMA_CONSTANT * inputs.B * beta_tilde ** (arch.d - 1) * C1)


def kl_term(weights, sigma):
    """
    |w|^2 / (2 sigma^2) over the free parameters.

    ``weights`` may hold StructuredOperators (Conv layers then count their filter
    tensors only) or plain arrays.
    """
    if not sigma > 0:
        raise InvalidInputError(f'sigma must be positive, got {sigma}')
    total = 0.0
    for w in weights:
        params = w.free_parameters if isinstance(w, StructuredOperator) else np.asarray(w, dtype=float)
        total += float(np.sum(params ** 2))
    return total / (2.0 * sigma ** 2)


def _ln_term(arch, inputs):
    if inputs.ln_form == 'lemma':
        return math.log(6.0 * inputs.m / inputs.delta)
    k = inputs.k if inputs.k is not None else arch.output_dim
    return math.log(k * inputs.m / inputs.delta)


def generalization_bound(arch, inputs, empirical_margin_loss, with_log_terms=True):
    """
    Evaluates the margin generalization bound with the O(.) constant set to 1:

        L_0 <= L_gamma + sqrt((A + ln(k m / delta)) / (m - 1)),
        A = B^2 C1^2 prod ||W_i||_2^2 sum(||W_i||_F^2 / ||W_i||_2^2) / gamma^2

    together with the same bound under ambient-dimension constants.

    Returns:
        BoundBreakdown
    """
    if not 0 <= empirical_margin_loss <= 1:
        raise InvalidInputError(f'empirical margin loss must lie in [0, 1], got {empirical_margin_loss}')

    W = np.asarray(arch.spectral_norms)
    F = np.asarray(arch.frobenius_norms)
    beta, factors = normalization_factors(W)
    sigma = compute_sigma(arch, inputs, beta)

    constants = tuple(layer_constant(layer, arch.d, with_log_terms) for layer in arch.layers)
    baseline = tuple(ambient_constant(layer, arch.d, with_log_terms) for layer in arch.layers)
    C1 = sum(constants)
    baseline_C1 = sum(baseline)

    scale = inputs.B ** 2 * float(np.prod(W ** 2)) * float(np.sum(F ** 2 / W ** 2)) / inputs.gamma ** 2
    argument = C1 ** 2 * scale
    baseline_argument = baseline_C1 ** 2 * scale
    # KL of the normalized network, whose Frobenius norms are F_i beta / W_i
    kl = kl_term([F * factors], sigma)
    ln_term = _ln_term(arch, inputs)

    complexity = math.sqrt((argument + ln_term) / (inputs.m - 1))
    breakdown = BoundBreakdown(
        sigma=sigma,
        beta=beta,
        constants=constants,
        constants_squared=tuple(c ** 2 for c in constants),
        C1=C1,
        kl=kl,
        bound_argument=argument,
        ln_term=ln_term,
        complexity=complexity,
        empirical_margin_loss=float(empirical_margin_loss),
        bound_value=empirical_margin_loss + complexity,
        kl_bound_value=empirical_margin_loss + math.sqrt((kl + ln_term) / (inputs.m - 1)),
        baseline_constants=baseline,
        baseline_C1=baseline_C1,
        baseline_argument=baseline_argument,
        baseline_value=empirical_margin_loss + math.sqrt((baseline_argument + ln_term) / (inputs.m - 1)),
    )
    logging.info(f'[BOUND]: {arch.name}: C1={C1:.4g}, baseline C1={baseline_C1:.4g}, bound={breakdown.bound_value:.4g}')
    return breakdown


def empirical_margin_loss(logits, labels, gamma):
    """
    Fraction of samples whose true-class score does not beat every other class
    by more than ``gamma``.
    """
    scores = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise InvalidInputError(f'logits must be a nonempty (samples x classes) array, got shape {scores.shape}')
    if scores.shape[1] < 2:
        raise InvalidInputError('margin loss needs at least two classes')
    if labels.shape != (scores.shape[0],):
        raise InvalidInputError(f'got {labels.shape} labels for {scores.shape[0]} samples')
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= scores.shape[1]:
        raise InvalidInputError(f'labels must be integers in [0, {scores.shape[1]})')
    if gamma < 0:
        raise InvalidInputError(f'gamma must be non-negative, got {gamma}')

    rows = np.arange(scores.shape[0])
    true_scores = scores[rows, labels]
    others = scores.copy()
    others[rows, labels] = -np.inf
    return float(np.mean(true_scores <= gamma + others.max(axis=1)))


def beta_range(gamma, B, d, m):
    """Range (gamma / 2B)^(1/d) <= beta <= (gamma sqrt(m) / 2B)^(1/d) needing a cover."""
    d = _depth(d)
    return (gamma / (2.0 * B)) ** (1.0 / d), (gamma * math.sqrt(m) / (2.0 * B)) ** (1.0 / d)


def beta_grid_cover(gamma, B, d, m):
    """
    Multiplicative grid with ratio (1 + 1/d) over the beta range; every beta in
    range has a grid point beta_t with |beta - beta_t| <= beta / d.

    Returns:
        (list of grid points, count)
    """
    if not gamma > 0 or not B > 0 or int(m) < 1:
        raise InvalidInputError(f'need gamma > 0, B > 0 and m >= 1, got {gamma}, {B}, {m}')
    d = _depth(d)
    lo, hi = beta_range(gamma, B, d, m)
    ratio = 1.0 + 1.0 / d
    count = int(math.floor(math.log(hi / lo) / math.log(ratio) + 1e-12)) + 1
    grid = [lo * ratio ** j for j in range(count)]
    return grid, count


def beta_trivial_region(beta, gamma, B, d, m):
    """
    'below' when beta^d < gamma / 2B (outputs never reach the margin, margin loss 1),
    'above' when beta^d > gamma sqrt(m) / 2B (the bound exceeds 1), None inside.
    """
    lo, hi = beta_range(gamma, B, d, m)
    if beta < lo:
        return 'below'
    if beta > hi:
        return 'above'
    return None
