"""Spectral utilities for 2xW I/Q windows.

A window is a real array of shape (2, W): row 0 holds the in-phase
samples, row 1 the quadrature samples.  The two rows are viewed as one
complex baseband signal I + jQ for every frequency-domain operation.
Energy is the plain sum of squares over all 2*W entries, so the l2
attack budget and the energy metrics live on the same scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

#: power ratios below this floor are clamped before taking log10 so that
#: dB metrics never return -inf; the clamp is surfaced as DbClampWarning.
DB_CLAMP_FLOOR = 1e-30


class DbClampWarning(UserWarning):
    """A power ratio hit the clamp floor; the dB value is a floor, not a measurement."""


def as_window(x, width: int | None = None) -> np.ndarray:
    """Validate and return ``x`` as a float64 array of shape (2, W)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != 2:
        raise ConfigurationError(f"expected shape (2, W), got {arr.shape}")
    if width is not None and arr.shape[1] != width:
        raise ConfigurationError(f"expected width {width}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("window contains non-finite samples")
    return arr


def iq_to_complex(window) -> np.ndarray:
    """Combine the I and Q rows into one complex vector of length W."""
    w = np.asarray(window, dtype=np.float64)
    return w[..., 0, :] + 1j * w[..., 1, :]


def complex_to_iq(z) -> np.ndarray:
    """Split a complex vector back into a real (2, W) window."""
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-2)


@dataclass(frozen=True)
class Spectrum:
    """DFT of one window: complex bins, unnormalized forward transform."""

    bins: np.ndarray

    @property
    def amplitudes(self) -> np.ndarray:
        return np.abs(self.bins)

    @property
    def width(self) -> int:
        return self.bins.shape[-1]


def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_pow2(z: np.ndarray, sign: float) -> np.ndarray:
    """Iterative radix-2 transform along the last axis (length a power of two)."""
    n = z.shape[-1]
    out = np.asarray(z, dtype=np.complex128)[..., _bit_reversal(n)].copy()
    m = 1
    while m < n:
        tw = np.exp(sign * 2j * np.pi * np.arange(m) / (2 * m))
        blocks = out.reshape(out.shape[:-1] + (n // (2 * m), 2, m))
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * tw
        out = np.stack([even + odd, even - odd], axis=-2).reshape(out.shape[:-1] + (n,))
        m *= 2
    return out


def _require_pow2(n: int) -> None:
    if n < 1 or n & (n - 1):
        raise ConfigurationError(f"transform length must be a power of two, got {n}")


def fft_complex(z) -> np.ndarray:
    """Forward DFT of complex input along the last axis, X_k = sum_n x_n e^{-j2pi kn/N}."""
    z = np.asarray(z, dtype=np.complex128)
    _require_pow2(z.shape[-1])
    return _fft_pow2(z, -1.0)


def ifft_complex(bins) -> np.ndarray:
    """Inverse DFT along the last axis, x_n = (1/N) sum_k X_k e^{+j2pi kn/N}."""
    bins = np.asarray(bins, dtype=np.complex128)
    _require_pow2(bins.shape[-1])
    return _fft_pow2(bins, +1.0) / bins.shape[-1]


def fft(window) -> Spectrum:
    """Transform one (2, W) window into its complex spectrum."""
    w = as_window(window)
    return Spectrum(bins=fft_complex(iq_to_complex(w)))


def ifft(spectrum) -> np.ndarray:
    """Invert :func:`fft`, returning a real (2, W) window."""
    bins = spectrum.bins if isinstance(spectrum, Spectrum) else np.asarray(spectrum)
    return complex_to_iq(ifft_complex(bins))


def energy(window) -> float:
    """Sum of squares over all 2*W entries (equals sum |I+jQ|^2)."""
    w = np.asarray(window, dtype=np.float64)
    return float(np.sum(w * w))


def _ratio_db(numerator: float, denominator: float) -> tuple[float, bool]:
    ratio = numerator / denominator
    clamped = ratio < DB_CLAMP_FLOOR
    if clamped:
        ratio = DB_CLAMP_FLOOR
    return 10.0 * np.log10(ratio), clamped


def eta_db(original, filtered) -> float:
    """Energy ratio of a filtered window to its original, in dB (<= 0 for a lossy filter)."""
    e_orig = energy(original)
    if e_orig <= 0.0:
        raise DomainError("original window has zero energy")
    db, clamped = _ratio_db(energy(filtered), e_orig)
    if clamped:
        warnings.warn("filtered/original energy ratio clamped at floor", DbClampWarning)
    return db


def spr_db(clean, perturbation) -> float:
    """Signal-to-perturbation ratio 10*log10(E(clean)/E(delta)) in dB."""
    e_pert = energy(perturbation)
    if e_pert <= 0.0:
        raise DomainError("perturbation has zero energy")
    e_clean = energy(clean)
    if e_clean <= 0.0:
        raise DomainError("clean window has zero energy")
    db, clamped = _ratio_db(e_clean, e_pert)
    if clamped:
        warnings.warn("clean/perturbation energy ratio clamped at floor", DbClampWarning)
    return db


def average_spectrum(windows, power: bool = False) -> np.ndarray:
    """Mean spectrum over a set of windows.

    By default averages bin amplitudes |X_k|; with ``power=True`` averages
    |X_k|^2 instead, which is the right weighting for energy fractions.
    """
    stack = [np.asarray(w, dtype=np.float64) for w in windows]
    if not stack:
        raise DomainError("average_spectrum needs at least one window")
    batch = np.stack(stack)
    bins = fft_complex(iq_to_complex(batch))
    mags = np.abs(bins)
    if power:
        return np.mean(mags * mags, axis=0)
    return np.mean(mags, axis=0)


def bin_offsets(n: int) -> np.ndarray:
    """Two-sided distance of each DFT bin from DC: min(j, N - j)."""
    j = np.arange(n)
    return np.minimum(j, n - j)


def band_energy_fraction(power_spectrum, max_offset: float) -> float:
    """Fraction of spectral energy in bins with min(j, N-j) < max_offset."""
    p = np.asarray(power_spectrum, dtype=np.float64)
    total = float(p.sum())
    if total <= 0.0:
        raise DomainError("spectrum has zero total energy")
    mask = bin_offsets(p.shape[-1]) < max_offset
    return float(p[mask].sum()) / total


def spectral_flatness(power_spectrum) -> float:
    """Geometric over arithmetic mean of a power spectrum (1.0 for white content)."""
    p = np.asarray(power_spectrum, dtype=np.float64)
    if np.any(p < 0.0):
        raise DomainError("power spectrum must be non-negative")
    mean = p.mean()
    if mean <= 0.0:
        raise DomainError("spectrum has zero total energy")
    return float(np.exp(np.mean(np.log(p + 1e-300))) / mean)
