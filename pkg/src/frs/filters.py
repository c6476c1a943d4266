"""Zero-phase Butterworth low-pass filtering in the DFT domain.

The filter multiplies each DFT bin by a real symmetric gain
G0 / sqrt(1 + (f_j / k_c)^(2m)) with f_j = min(j, N - j), then inverse
transforms.  Because the gain is real and even in frequency the filter
adds no phase, and its exact l2 operator norm is the peak gain G0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .spectral import as_window, complex_to_iq, fft_complex, ifft_complex, iq_to_complex


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth parameters: order, cutoff bin index, DC gain, window width."""

    order: int = 2
    cutoff_index: float = 20.0
    dc_gain: float = 1.0
    window_width: int = 128

    def __post_init__(self):
        if self.order < 1:
            raise ConfigurationError(f"filter order must be >= 1, got {self.order}")
        n = self.window_width
        if n < 2 or n & (n - 1):
            raise ConfigurationError(f"window width must be a power of two, got {n}")
        if not 0.0 < self.cutoff_index <= n / 2:
            raise ConfigurationError(
                f"cutoff index must lie in (0, {n // 2}], got {self.cutoff_index}"
            )
        if self.dc_gain <= 0.0:
            raise ConfigurationError(f"dc gain must be positive, got {self.dc_gain}")

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "cutoff_index": self.cutoff_index,
            "dc_gain": self.dc_gain,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict, window_width: int = 128) -> "FilterSpec":
        return cls(
            order=int(d.get("order", 2)),
            cutoff_index=float(d.get("cutoff_index", 20.0)),
            dc_gain=float(d.get("dc_gain", 1.0)),
            window_width=int(d.get("window_width", window_width)),
        )


@dataclass(frozen=True)
class FilterResponse:
    """Per-bin gains plus the exact l2 Lipschitz constant of the filter."""

    gains: np.ndarray
    lipschitz: float


def design(spec: FilterSpec) -> FilterResponse:
    """Evaluate the Butterworth magnitude response on the DFT grid."""
    n = spec.window_width
    j = np.arange(n)
    offsets = np.minimum(j, n - j).astype(np.float64)
    gains = spec.dc_gain / np.sqrt(1.0 + (offsets / spec.cutoff_index) ** (2 * spec.order))
    gains.flags.writeable = False
    return FilterResponse(gains=gains, lipschitz=float(gains.max()))


def lipschitz_constant(response: FilterResponse) -> float:
    """Exact l2 operator norm of the filter: the peak bin gain."""
    return float(np.max(response.gains))


def apply(window, response: FilterResponse) -> np.ndarray:
    """Filter one (2, W) window; zero-phase, returns a new (2, W) array."""
    w = as_window(window, width=response.gains.shape[0])
    return apply_batch(w[np.newaxis], response)[0]


def apply_batch(windows, response: FilterResponse) -> np.ndarray:
    """Filter a (..., 2, W) stack of windows in one pass."""
    arr = np.asarray(windows, dtype=np.float64)
    if arr.shape[-2] != 2 or arr.shape[-1] != response.gains.shape[0]:
        raise ConfigurationError(
            f"expected (..., 2, {response.gains.shape[0]}) windows, got {arr.shape}"
        )
    z = iq_to_complex(arr)
    filtered = ifft_complex(fft_complex(z) * response.gains)
    return complex_to_iq(filtered)
