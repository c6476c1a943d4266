"""Tests for the Butterworth frequency response and zero-phase application."""

from __future__ import annotations

import numpy as np
import pytest

from frs.errors import ConfigurationError
from frs.filters import FilterSpec, FilterResponse, apply, apply_batch, design, lipschitz_constant
from frs.spectral import energy, eta_db, fft


def gain_oracle(j, n, order, cutoff, dc_gain=1.0):
    """Direct evaluation of the Butterworth magnitude formula."""
    f = min(j, n - j)
    return dc_gain / np.sqrt(1.0 + (f / cutoff) ** (2 * order))


def random_window(rng, width=128):
    return rng.standard_normal((2, width))


def test_design_matches_formula_bin_by_bin():
    spec = FilterSpec(order=2, cutoff_index=20.0, window_width=128)
    gains = design(spec).gains
    for j in (0, 1, 5, 19, 20, 21, 40, 64, 100, 127):
        assert gains[j] == pytest.approx(gain_oracle(j, 128, 2, 20.0), rel=1e-12)


def test_design_top_bin_value_order_two_cutoff_twenty():
    gains = design(FilterSpec(order=2, cutoff_index=20.0, window_width=128)).gains
    # frozen from the direct formula: 1/sqrt(1 + (64/20)^4)
    assert gains[64] == pytest.approx(0.09719389313098818, abs=1e-12)


@pytest.mark.parametrize("order", [1, 2, 4])
def test_gain_at_cutoff_is_minus_three_db(order):
    for cutoff in (5.0, 20.0, 64.0):
        spec = FilterSpec(order=order, cutoff_index=cutoff, window_width=128)
        gains = design(spec).gains
        assert gains[int(cutoff)] == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-9)
        rel_db = 20 * np.log10(gains[int(cutoff)] / spec.dc_gain)
        assert rel_db == pytest.approx(-3.0102999566398125, abs=1e-9)


def test_gain_at_cutoff_scales_with_dc_gain():
    spec = FilterSpec(order=2, cutoff_index=16.0, dc_gain=2.5, window_width=128)
    gains = design(spec).gains
    assert gains[16] == pytest.approx(2.5 / np.sqrt(2.0), abs=1e-9)
    assert gains[0] == pytest.approx(2.5)


def test_gains_are_symmetric():
    for spec in (FilterSpec(), FilterSpec(order=4, cutoff_index=7.5)):
        gains = design(spec).gains
        n = spec.window_width
        assert np.allclose(gains[1:], gains[1:][::-1], atol=0)
        assert gains[n // 2] == np.min(gains)


def test_gains_monotone_decreasing_up_to_nyquist():
    gains = design(FilterSpec(order=3, cutoff_index=10.0)).gains
    half = gains[: 64 + 1]
    assert np.all(np.diff(half) < 0)


def test_lipschitz_equals_dc_gain():
    for g0 in (1.0, 0.5, 3.0):
        resp = design(FilterSpec(dc_gain=g0))
        assert resp.lipschitz == g0
        assert lipschitz_constant(resp) == g0


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        FilterSpec(order=0)
    with pytest.raises(ConfigurationError):
        FilterSpec(cutoff_index=0.0)
    with pytest.raises(ConfigurationError):
        FilterSpec(cutoff_index=65.0, window_width=128)
    with pytest.raises(ConfigurationError):
        FilterSpec(dc_gain=0.0)
    with pytest.raises(ConfigurationError):
        FilterSpec(window_width=100)


def test_spec_json_round_trip():
    spec = FilterSpec(order=4, cutoff_index=12.5, dc_gain=0.8, window_width=64)
    d = spec.to_dict()
    assert set(d) == {"order", "cutoff_index", "dc_gain"}
    again = FilterSpec.from_dict(d, window_width=64)
    assert again == spec


def test_apply_multiplies_bins_by_gains():
    rng = np.random.default_rng(42)
    spec = FilterSpec(order=2, cutoff_index=20.0)
    resp = design(spec)
    w = random_window(rng)
    out = apply(w, resp)
    assert np.allclose(fft(out).bins, fft(w).bins * resp.gains, atol=1e-9)


def test_apply_dc_window_passes_at_dc_gain():
    resp = design(FilterSpec(dc_gain=1.0))
    w = np.zeros((2, 128))
    w[0] = 0.3
    w[1] = -0.1
    out = apply(w, resp)
    assert np.allclose(out, w, atol=1e-12)


def test_apply_is_linear():
    rng = np.random.default_rng(8)
    resp = design(FilterSpec(order=2, cutoff_index=9.0))
    x = random_window(rng)
    y = random_window(rng)
    for a, b in ((1.0, 1.0), (2.5, -0.7), (0.0, 3.0)):
        lhs = apply(a * x + b * y, resp)
        rhs = a * apply(x, resp) + b * apply(y, resp)
        assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_apply_is_zero_phase_for_in_band_tone():
    n = 128
    w = np.zeros((2, n))
    w[0] = np.cos(2 * np.pi * 4 * np.arange(n) / n)
    w[1] = np.sin(2 * np.pi * 4 * np.arange(n) / n)
    resp = design(FilterSpec(order=2, cutoff_index=20.0))
    out = apply(w, resp)
    g = resp.gains[4]
    # a pure tone comes back scaled but not shifted
    assert np.allclose(out, g * w, atol=1e-9)


def test_non_expansive_when_dc_gain_is_one():
    rng = np.random.default_rng(1357)
    resp = design(FilterSpec(order=2, cutoff_index=20.0, dc_gain=1.0))
    for _ in range(200):
        w = random_window(rng)
        assert energy(apply(w, resp)) <= energy(w) + 1e-9


def test_lipschitz_bound_over_random_pairs():
    rng = np.random.default_rng(2468)
    resp = design(FilterSpec(order=2, cutoff_index=11.0, dc_gain=1.5))
    lip = resp.lipschitz
    for _ in range(500):
        x = random_window(rng)
        y = random_window(rng)
        num = np.linalg.norm(apply(x, resp) - apply(y, resp))
        den = np.linalg.norm(x - y)
        assert num <= lip * den + 1e-9


def test_lipschitz_is_tight_on_dc_pair():
    resp = design(FilterSpec(order=2, cutoff_index=20.0, dc_gain=1.25))
    x = np.zeros((2, 128))
    y = x.copy()
    y[0] += 0.5  # the difference is pure DC, where the gain peaks
    num = np.linalg.norm(apply(x, resp) - apply(y, resp))
    den = np.linalg.norm(x - y)
    assert num / den == pytest.approx(resp.lipschitz, abs=1e-9)


def test_eta_monotone_in_cutoff():
    rng = np.random.default_rng(31)
    w = random_window(rng)
    cutoffs = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
    etas = []
    for kc in cutoffs:
        resp = design(FilterSpec(order=2, cutoff_index=kc))
        etas.append(eta_db(w, apply(w, resp)))
    assert all(a <= b + 1e-12 for a, b in zip(etas, etas[1:]))


def test_apply_rejects_width_mismatch():
    resp = design(FilterSpec(window_width=64))
    with pytest.raises(ConfigurationError):
        apply(np.zeros((2, 128)), resp)


def test_apply_batch_matches_per_window_apply():
    rng = np.random.default_rng(77)
    resp = design(FilterSpec(order=2, cutoff_index=14.0))
    batch = rng.standard_normal((5, 2, 128))
    out = apply_batch(batch, resp)
    for i in range(5):
        assert np.allclose(out[i], apply(batch[i], resp), atol=1e-12)


def test_response_fields_consistent():
    resp = design(FilterSpec())
    assert isinstance(resp, FilterResponse)
    assert resp.lipschitz == pytest.approx(np.max(resp.gains))
