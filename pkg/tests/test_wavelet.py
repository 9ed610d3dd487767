import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurovox import wavelet


class TestFilters:
    def test_scaling_filter_sums_to_sqrt2(self):
        assert wavelet.REC_LO.sum() == pytest.approx(np.sqrt(2.0), abs=1e-12)

    def test_scaling_filter_unit_energy(self):
        assert np.sum(wavelet.REC_LO**2) == pytest.approx(1.0, abs=1e-12)

    def test_highpass_kills_constants(self):
        assert abs(wavelet.DEC_HI.sum()) <= 1e-12


class TestDecompose:
    def test_constant_signal_has_zero_details(self):
        p = wavelet.dwt_decompose(np.full(256, 3.3), 5)
        for detail in p.details:
            assert np.abs(detail).max() <= 1e-9

    def test_linear_ramp_details_vanish_away_from_wrap(self):
        # db4 annihilates linear trends; periodization breaks the trend
        # only where the signal wraps around.
        n = 512
        p = wavelet.dwt_decompose(np.linspace(0.0, 1.0, n), 1)
        detail = p.details[0]
        interior = detail[4:-4]
        assert np.abs(interior).max() <= 1e-9
        assert np.abs(detail).max() > 1e-3  # boundary coefficients are not zero

    def test_energy_conservation_random_4096(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(4096)
        p = wavelet.dwt_decompose(x, 7)
        assert p.energy() == pytest.approx(np.sum(x**2), rel=1e-9)

    def test_too_deep_for_length_rejected(self):
        with pytest.raises(ValueError):
            wavelet.dwt_decompose(np.zeros(64), 7)

    def test_non_dyadic_multiple_rejected(self):
        with pytest.raises(ValueError):
            wavelet.dwt_decompose(np.zeros(100), 3)


class TestReconstruct:
    def test_round_trip_random_1024_depth7(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(1024)
        rec = wavelet.dwt_reconstruct(wavelet.dwt_decompose(x, 7))
        assert np.abs(rec - x).max() <= 1e-6

    def test_round_trip_sine_depth5(self):
        fs = 16000
        x = np.sin(2 * np.pi * 220.0 * np.arange(2048) / fs)
        rec = wavelet.dwt_reconstruct(wavelet.dwt_decompose(x, 5))
        assert np.abs(rec - x).max() <= 1e-6

    def test_zero_pyramid_reconstructs_zero(self):
        p = wavelet.dwt_decompose(np.zeros(256), 4)
        assert np.all(wavelet.dwt_reconstruct(p) == 0)

    def test_inconsistent_pyramid_rejected(self):
        p = wavelet.dwt_decompose(np.random.default_rng(2).standard_normal(256), 3)
        bad = wavelet.WaveletPyramid(approx=p.approx, details=[p.details[0], p.details[0]])
        with pytest.raises(ValueError):
            wavelet.dwt_reconstruct(bad)


class TestLevelBands:
    def test_dyadic_band_edges(self):
        assert wavelet.level_band_hz(1, 1024) == (256.0, 512.0)
        assert wavelet.level_band_hz(7, 1024) == (4.0, 8.0)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=1, max_value=7),
    st.integers(min_value=2, max_value=32),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_perfect_reconstruction_property(levels, multiples, seed):
    n = multiples * 2**levels
    x = np.random.default_rng(seed).standard_normal(n)
    p = wavelet.dwt_decompose(x, levels)
    assert np.abs(wavelet.dwt_reconstruct(p) - x).max() <= 1e-6
    assert p.energy() == pytest.approx(np.sum(x**2), rel=1e-9)
