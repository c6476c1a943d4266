"""Tests for the window/FFT/energy core."""

from __future__ import annotations

import numpy as np
import pytest

from frs.errors import ConfigurationError, DomainError
from frs.spectral import (
    DbClampWarning,
    as_window,
    average_spectrum,
    band_energy_fraction,
    bin_offsets,
    complex_to_iq,
    energy,
    eta_db,
    fft,
    fft_complex,
    ifft,
    ifft_complex,
    iq_to_complex,
    spr_db,
)


def random_window(rng, width=128):
    return rng.standard_normal((2, width))


def dft_oracle(z):
    """Direct O(N^2) DFT used as the independent reference transform."""
    z = np.asarray(z, dtype=np.complex128)
    n = z.shape[-1]
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return z @ mat.T


def test_fft_matches_direct_dft_on_random_windows():
    rng = np.random.default_rng(1234)
    for _ in range(50):
        w = random_window(rng)
        z = iq_to_complex(w)
        got = fft(w).bins
        want = dft_oracle(z)
        assert np.max(np.abs(got - want)) < 1e-7


@pytest.mark.parametrize("width", [2, 8, 64, 128, 256])
def test_fft_matches_direct_dft_across_widths(width):
    rng = np.random.default_rng(width)
    z = rng.standard_normal(width) + 1j * rng.standard_normal(width)
    assert np.max(np.abs(fft_complex(z) - dft_oracle(z))) < 1e-7


def test_fft_constant_window_concentrates_at_dc():
    w = np.zeros((2, 16))
    w[0] = 1.0
    bins = fft(w).bins
    assert bins[0] == pytest.approx(16.0)
    assert np.max(np.abs(bins[1:])) < 1e-12


def test_fft_pure_tone_hits_single_pair_of_bins():
    n = 8
    w = np.zeros((2, n))
    w[0] = np.cos(2 * np.pi * np.arange(n) / n)
    bins = fft(w).bins
    assert bins[1] == pytest.approx(n / 2, abs=1e-12)
    assert bins[n - 1] == pytest.approx(n / 2, abs=1e-12)
    others = np.delete(bins, [1, n - 1])
    assert np.max(np.abs(others)) < 1e-12


def test_fft_complex_tone_is_one_sided():
    n = 16
    z = np.exp(2j * np.pi * 3 * np.arange(n) / n)
    bins = fft_complex(z)
    assert bins[3] == pytest.approx(n, abs=1e-12)
    assert np.max(np.abs(np.delete(bins, 3))) < 1e-12


def test_ifft_round_trip_is_identity():
    rng = np.random.default_rng(99)
    for _ in range(20):
        w = random_window(rng, 64)
        back = ifft(fft(w))
        assert np.max(np.abs(back - w)) < 1e-9


def test_parseval_energy_identity():
    rng = np.random.default_rng(7)
    for _ in range(20):
        w = random_window(rng)
        bins = fft(w).bins
        spectral = np.sum(np.abs(bins) ** 2) / w.shape[1]
        assert spectral == pytest.approx(energy(w), rel=1e-12)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ConfigurationError):
        fft(np.zeros((2, 12)))
    with pytest.raises(ConfigurationError):
        ifft_complex(np.zeros(10, dtype=complex))


def test_as_window_validation():
    with pytest.raises(ConfigurationError):
        as_window(np.zeros((3, 8)))
    with pytest.raises(ConfigurationError):
        as_window(np.zeros((2, 8)), width=16)
    bad = np.zeros((2, 8))
    bad[1, 3] = np.nan
    with pytest.raises(DomainError):
        as_window(bad)


def test_iq_complex_round_trip():
    rng = np.random.default_rng(3)
    w = random_window(rng, 32)
    assert np.array_equal(complex_to_iq(iq_to_complex(w)), w)


def test_energy_of_unit_impulse():
    w = np.zeros((2, 128))
    w[0, 0] = 1.0
    assert energy(w) == pytest.approx(1.0)


def test_energy_matches_complex_magnitude_sum():
    rng = np.random.default_rng(21)
    w = random_window(rng)
    z = iq_to_complex(w)
    assert energy(w) == pytest.approx(float(np.sum(np.abs(z) ** 2)), rel=1e-12)


def test_eta_db_zero_for_identity_filter():
    rng = np.random.default_rng(5)
    w = random_window(rng)
    assert eta_db(w, w) == pytest.approx(0.0, abs=1e-12)


def test_eta_db_half_energy():
    w = np.zeros((2, 8))
    w[0, 0] = 1.0
    half = w * np.sqrt(0.5)
    assert eta_db(w, half) == pytest.approx(10 * np.log10(0.5), abs=1e-12)


def test_eta_db_rejects_zero_original():
    with pytest.raises(DomainError):
        eta_db(np.zeros((2, 8)), np.zeros((2, 8)))


def test_eta_db_clamps_and_warns_on_tiny_ratio():
    w = np.zeros((2, 8))
    w[0, 0] = 1.0
    with pytest.warns(DbClampWarning):
        db = eta_db(w, w * 1e-200)
    assert db == pytest.approx(-300.0)


def test_spr_db_matches_hand_computation():
    rng = np.random.default_rng(11)
    clean = random_window(rng)
    delta = 0.1 * random_window(rng)
    want = 10 * np.log10(energy(clean) / energy(delta))
    assert spr_db(clean, delta) == pytest.approx(want, rel=1e-12)


def test_spr_db_scaling_shifts_by_20log10():
    rng = np.random.default_rng(13)
    clean = random_window(rng)
    delta = random_window(rng)
    for c in (0.5, 2.0, 7.3):
        got = spr_db(clean, c * delta)
        assert got == pytest.approx(spr_db(clean, delta) - 20 * np.log10(c), abs=1e-9)


def test_spr_db_rejects_zero_perturbation():
    w = np.ones((2, 8))
    with pytest.raises(DomainError):
        spr_db(w, np.zeros((2, 8)))


def test_average_spectrum_single_window_is_its_amplitude():
    rng = np.random.default_rng(17)
    w = random_window(rng, 32)
    avg = average_spectrum([w])
    assert np.allclose(avg, np.abs(fft(w).bins), atol=1e-12)


def test_average_spectrum_rejects_empty():
    with pytest.raises(DomainError):
        average_spectrum([])


def test_average_spectrum_power_toggle():
    rng = np.random.default_rng(19)
    ws = [random_window(rng, 32) for _ in range(4)]
    amp = average_spectrum(ws)
    pow_ = average_spectrum(ws, power=True)
    # power averaging weighs strong windows more, so the two disagree in general
    assert not np.allclose(amp**2, pow_)
    per = np.stack([np.abs(fft(w).bins) ** 2 for w in ws])
    assert np.allclose(pow_, per.mean(axis=0), atol=1e-9)


def test_bin_offsets_symmetry():
    off = bin_offsets(8)
    assert list(off) == [0, 1, 2, 3, 4, 3, 2, 1]


def test_band_energy_fraction_of_dc_signal():
    w = np.zeros((2, 128))
    w[0] = 1.0
    p = np.abs(fft(w).bins) ** 2
    assert band_energy_fraction(p, 1) == pytest.approx(1.0)
