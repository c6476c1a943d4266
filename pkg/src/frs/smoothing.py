"""Randomized-smoothing certification with optional low-pass filtering.

The smoothed classifier votes over Gaussian perturbations of the input.
Certification estimates a Clopper-Pearson lower bound p_A on the top
class probability and converts it into an l2 radius sigma * Phi^-1(p_A).
The filter can sit on either side of the noise:

* ``post_filter``: the filter is part of the voted classifier, so the
  certified radius needs no correction;
* ``pre_filter``: the input is filtered once before smoothing, and the
  radius is divided by the filter's Lipschitz constant to hold for
  perturbations of the unfiltered input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DomainError
from .filters import FilterResponse, FilterSpec, apply_batch, design
from .model import ModelParams, forward

#: sentinel class index returned when the vote is statistically unclear
ABSTAIN = -1

FRS_MODES = ("none", "pre_filter", "post_filter")

_VOTE_BATCH = 1024


@dataclass(frozen=True)
class SmoothingConfig:
    """Noise scale, confidence level, vote counts, seed and filter placement."""

    sigma: float = 0.001
    alpha: float = 0.001
    n0: int = 100
    n: int = 10000
    seed: int = 0
    frs_mode: str = "none"
    filter_spec: FilterSpec | None = None

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ConfigurationError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n0 < 1 or self.n < 1:
            raise ConfigurationError("vote counts must be positive")
        if self.n0 > self.n:
            raise ConfigurationError(f"n0 ({self.n0}) must not exceed n ({self.n})")
        if self.frs_mode not in FRS_MODES:
            raise ConfigurationError(f"unknown frs_mode {self.frs_mode!r}")
        if self.frs_mode != "none" and self.filter_spec is None:
            raise ConfigurationError(f"frs_mode {self.frs_mode!r} needs a filter_spec")


@dataclass(frozen=True)
class CertificationResult:
    """Outcome of certifying one input."""

    predicted: int
    p_a_lower: float
    radius: float
    frs_mode: str
    lipschitz_used: float

    @property
    def abstained(self) -> bool:
        return self.predicted == ABSTAIN


# ---------------------------------------------------------------------------
# inverse normal CDF

# Acklam's rational starting approximation, then Newton steps against the
# erfc-based CDF push the result to full double precision.
_ACKLAM_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACKLAM_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
             6.680131188771972e+01, -1.328068155288572e+01)
_ACKLAM_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACKLAM_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
             3.754408661907416e+00)

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _acklam(p: float) -> float:
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    if p < 0.02425:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)


def _normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


def _inverse_lower_half(p: float) -> float:
    """Phi^-1 for p <= 0.5, refined with Newton steps on the erfc form."""
    z = _acklam(p)
    for _ in range(3):
        err = _normal_cdf(z) - p
        pdf = _INV_SQRT_2PI * math.exp(-0.5 * z * z)
        if pdf <= 0.0 or err == 0.0:
            break
        z -= err / pdf
    return z


def inverse_normal_cdf(p: float) -> float:
    """Quantile of the standard normal; |Phi(result) - p| stays within 1e-10."""
    if not isinstance(p, (int, float)) or math.isnan(p):
        raise DomainError(f"probability must be a real number, got {p!r}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie strictly in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -_inverse_lower_half(1.0 - p)
    return _inverse_lower_half(p)


# ---------------------------------------------------------------------------
# binomial tail machinery (log space)

@lru_cache(maxsize=64)
def _log_binom_coeffs(n: int) -> np.ndarray:
    """log C(n, i) for i = 0..n via a cumulative product of ratios."""
    i = np.arange(1, n + 1, dtype=np.float64)
    coeffs = np.concatenate([[0.0], np.cumsum(np.log((n - i + 1.0) / i))])
    coeffs.flags.writeable = False
    return coeffs


def log_binomial_tail(k: int, n: int, p: float) -> float:
    """log P[Binomial(n, p) >= k], exact summation in log space."""
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability must lie in [0, 1], got {p}")
    if k == 0:
        return 0.0
    if p == 0.0:
        return -math.inf
    if p == 1.0:
        return 0.0
    i = np.arange(k, n + 1, dtype=np.float64)
    logs = _log_binom_coeffs(n)[k:] + i * math.log(p) + (n - i) * math.log1p(-p)
    top = float(np.max(logs))
    return top + math.log(float(np.sum(np.exp(logs - top))))


def clopper_pearson_lower(k: int, n: int, alpha: float) -> float:
    """One-sided lower confidence bound for a binomial proportion.

    Returns the largest p with P[Binomial(n, p) >= k] <= alpha, found by
    bisection on the log tail; the bound is exact-coverage by
    construction and equals alpha**(1/n) when k == n.
    """
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if k == 0:
        return 0.0
    log_alpha = math.log(alpha)
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if log_binomial_tail(k, n, mid) <= log_alpha:
            lo = mid
        else:
            hi = mid
    return lo


def two_sided_binomial_pvalue(k: int, n: int) -> float:
    """Exact two-sided p-value for k successes in n trials under p = 1/2."""
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    top = max(k, n - k)
    return min(1.0, 2.0 * math.exp(log_binomial_tail(top, n, 0.5)))


def certified_radius(p_a_lower: float, p_b_upper: float, sigma: float) -> float:
    """Two-sided certified radius (sigma/2)(Phi^-1(p_A) - Phi^-1(p_B)).

    With p_b_upper = 1 - p_a_lower this collapses to sigma * Phi^-1(p_A),
    the one-sided form used by :func:`certify`.
    """
    if sigma <= 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return 0.5 * sigma * (inverse_normal_cdf(p_a_lower) - inverse_normal_cdf(p_b_upper))


# ---------------------------------------------------------------------------
# smoothed prediction and certification

def _pipeline(x, config: SmoothingConfig):
    """Resolve filter placement: returns (base input, response or None, lipschitz)."""
    arr = np.asarray(x, dtype=np.float64)
    if config.frs_mode == "none":
        return arr, None, 1.0
    response = design(config.filter_spec)
    if config.frs_mode == "pre_filter":
        filtered = apply_batch(arr[np.newaxis], response)[0]
        return filtered, None, response.lipschitz
    return arr, response, 1.0


def _vote_counts(params: ModelParams, base: np.ndarray, response: FilterResponse | None,
                 sigma: float, count: int, rng: np.random.Generator) -> np.ndarray:
    counts = np.zeros(params.n_classes, dtype=np.int64)
    remaining = count
    while remaining > 0:
        m = min(_VOTE_BATCH, remaining)
        noisy = base[np.newaxis] + sigma * rng.standard_normal((m,) + base.shape)
        if response is not None:
            noisy = apply_batch(noisy, response)
        preds = np.argmax(forward(params, noisy), axis=1)
        counts += np.bincount(preds, minlength=params.n_classes)
        remaining -= m
    return counts


def _input_rng(config: SmoothingConfig, input_index: int, namespace: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((config.seed, int(input_index), namespace))
    )


def smoothed_predict(params: ModelParams, x, config: SmoothingConfig,
                     input_index: int = 0, rng: np.random.Generator | None = None) -> int:
    """Majority class over n0 noisy votes, or ABSTAIN.

    Abstains when an exact two-sided binomial test on the top two counts
    cannot reject a fair coin at level alpha.
    """
    base, response, _ = _pipeline(x, config)
    if rng is None:
        rng = _input_rng(config, input_index, 1)
    counts = _vote_counts(params, base, response, config.sigma, config.n0, rng)
    order = np.argsort(counts)[::-1]
    top, second = int(order[0]), int(order[1])
    if two_sided_binomial_pvalue(int(counts[top]), int(counts[top] + counts[second])) > config.alpha:
        return ABSTAIN
    return top


def certify(params: ModelParams, x, config: SmoothingConfig,
            input_index: int = 0) -> CertificationResult:
    """Certify one input: select the top class on n0 votes, bound its
    probability on n fresh votes, convert the bound into an l2 radius.

    Noise comes from a stream seeded by (config.seed, input_index), so
    results do not depend on evaluation order across inputs.
    """
    base, response, lipschitz = _pipeline(x, config)
    rng = _input_rng(config, input_index, 0)
    selection = _vote_counts(params, base, response, config.sigma, config.n0, rng)
    c_hat = int(np.argmax(selection))
    estimation = _vote_counts(params, base, response, config.sigma, config.n, rng)
    p_lower = clopper_pearson_lower(int(estimation[c_hat]), config.n, config.alpha)
    if p_lower <= 0.5:
        return CertificationResult(ABSTAIN, p_lower, 0.0, config.frs_mode, lipschitz)
    base_radius = config.sigma * inverse_normal_cdf(p_lower)
    radius = base_radius / lipschitz if config.frs_mode == "pre_filter" else base_radius
    return CertificationResult(c_hat, p_lower, radius, config.frs_mode, lipschitz)


def certify_dataset(params: ModelParams, records, config: SmoothingConfig,
                    indices=None) -> list[CertificationResult]:
    """Certify a sequence of records; input_index defaults to the position."""
    records = list(records)
    if indices is None:
        indices = range(len(records))
    return [certify(params, rec.window, config, input_index=idx)
            for idx, rec in zip(indices, records)]


def certified_accuracy_curve(params: ModelParams, records, config: SmoothingConfig,
                             radii) -> np.ndarray:
    """Fraction of records correctly certified with radius >= r, per r.

    Abstentions never count as correct; at r = 0 the curve equals the
    fraction classified correctly without abstention.
    """
    records = list(records)
    if not records:
        raise ConfigurationError("empty record set")
    radii = np.asarray(list(radii), dtype=np.float64)
    if np.any(radii < 0.0):
        raise DomainError("radii must be non-negative")
    results = certify_dataset(params, records, config)
    return curve_from_results(results, [r.label for r in records], radii)


def curve_from_results(results, labels, radii) -> np.ndarray:
    """Certified-accuracy curve from precomputed certification results."""
    labels = list(labels)
    radii = np.asarray(list(radii), dtype=np.float64)
    hits = np.zeros_like(radii)
    for res, label in zip(results, labels):
        if res.predicted == label and not res.abstained:
            hits += res.radius >= radii
    return hits / max(len(labels), 1)
