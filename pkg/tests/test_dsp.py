import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurovox import dsp


def make_wave(samples, fs=16000):
    return dsp.Waveform(samples=np.asarray(samples, dtype=np.float64), sample_rate_hz=fs)


class TestHannWindow:
    def test_len3_endpoints_and_peak(self):
        assert np.allclose(dsp.hann_window(3), [0.0, 1.0, 0.0])

    def test_len4_values(self):
        assert np.allclose(dsp.hann_window(4), [0.0, 0.75, 0.75, 0.0])

    def test_degenerate_length_rejected(self):
        with pytest.raises(ValueError):
            dsp.hann_window(1)


class TestStft:
    def test_zero_signal_gives_zero_spectrogram(self):
        spec = dsp.stft(make_wave(np.zeros(16000)))
        assert np.all(spec.data == 0)

    def test_bin_centered_sine_dominates(self):
        # 500 Hz sits exactly on bin 32 of a 1024-point FFT at 16 kHz.
        fs = 16000
        t = np.arange(fs) / fs
        spec = dsp.stft(make_wave(np.sin(2 * np.pi * 500.0 * t)))
        mag = spec.magnitude[5]
        peak_bin = int(np.argmax(mag))
        assert peak_bin == 32
        others = np.concatenate([mag[: peak_bin - 2], mag[peak_bin + 3 :]])
        assert mag[peak_bin] >= 10 * others.max()

    def test_too_short_signal_rejected(self):
        with pytest.raises(ValueError):
            dsp.stft(make_wave(np.zeros(100)))

    def test_linearity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(8000)
        s1 = dsp.stft(make_wave(x)).data
        s2 = dsp.stft(make_wave(3.7 * x)).data
        assert np.allclose(s2, 3.7 * s1, rtol=1e-9, atol=1e-12)

    def test_parseval_energy_scaling(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(8000)
        e1 = np.sum(dsp.stft(make_wave(x)).magnitude ** 2)
        e2 = np.sum(dsp.stft(make_wave(2 * x)).magnitude ** 2)
        assert e2 == pytest.approx(4 * e1, rel=1e-9)


class TestIstft:
    def test_zero_spectrogram_gives_zero_waveform(self):
        cfg = dsp.StftConfig()
        spec = dsp.ComplexSpectrogram(
            data=np.zeros((10, cfg.n_bins), dtype=complex), config=cfg, sample_rate_hz=16000
        )
        assert np.all(dsp.istft(spec).samples == 0)

    @pytest.mark.parametrize("signal", ["noise", "sine"])
    def test_round_trip_interior(self, signal):
        fs = 16000
        if signal == "noise":
            x = np.random.default_rng(2).standard_normal(fs)
        else:
            x = np.sin(2 * np.pi * 220.0 * np.arange(fs) / fs)
        cfg = dsp.StftConfig()
        y = dsp.istft(dsp.stft(make_wave(x), cfg), length=len(x)).samples
        half = cfg.window_len_samples // 2
        assert np.abs(y[half:-half] - x[half:-half]).max() <= 1e-6

    def test_round_trip_longer_signals(self):
        fs = 16000
        x = np.random.default_rng(3).standard_normal(4 * 800)
        cfg = dsp.StftConfig()
        y = dsp.istft(dsp.stft(make_wave(x), cfg), length=len(x)).samples
        half = cfg.window_len_samples // 2
        assert np.abs(y[half:-half] - x[half:-half]).max() <= 1e-6


class TestStftConfig:
    def test_defaults_give_513_bins(self):
        assert dsp.StftConfig().n_bins == 513

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"hop_samples": 900},
            {"fft_size": 700},
            {"fft_size": 1000},
            {"window_len_samples": 800, "hop_samples": 700},
        ],
    )
    def test_invalid_configs_rejected(self, kwargs):
        with pytest.raises(ValueError):
            dsp.StftConfig(**kwargs)


class TestMelFilterbank:
    def test_mel_scale_anchor_points(self):
        assert dsp.hz_to_mel(0.0) == 0.0
        assert dsp.hz_to_mel(700.0) == pytest.approx(2595.0 * np.log10(2.0), abs=1e-9)
        assert float(np.asarray(dsp.hz_to_mel(700.0))) == pytest.approx(781.17, abs=0.01)

    def test_row_sums_positive(self):
        fb = dsp.mel_filterbank(16000, 1024)
        assert np.all(fb.sum(axis=1) > 0)

    def test_flat_power_spectrum_maps_to_positive_mels(self):
        fb = dsp.mel_filterbank(16000, 1024)
        assert np.all(fb @ np.ones(513) > 0)

    def test_bins_inside_band_are_covered(self):
        fb = dsp.mel_filterbank(16000, 1024, 40, 50.0, 7600.0)
        freqs = np.arange(513) * 16000 / 1024
        inside = (freqs > 50.0) & (freqs < 7600.0)
        assert np.all(fb[:, inside].sum(axis=0) > 0)

    @pytest.mark.parametrize("fmin,fmax", [(-1.0, 100.0), (100.0, 50.0), (0.0, 9000.0)])
    def test_invalid_ranges_rejected(self, fmin, fmax):
        with pytest.raises(ValueError):
            dsp.mel_filterbank(16000, 1024, 40, fmin, fmax)


class TestMelSpectrogram:
    def test_silence_hits_log_floor(self):
        mel = dsp.mel_spectrogram(make_wave(np.zeros(16000)), log_scale=True)
        assert np.allclose(mel.data, np.log(dsp.LOG_MEL_FLOOR))

    def test_amplitude_doubling_quadruples_power(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(16000)
        m1 = dsp.mel_spectrogram(make_wave(x)).data
        m2 = dsp.mel_spectrogram(make_wave(2 * x)).data
        assert np.allclose(m2, 4 * m1, rtol=1e-9, atol=1e-12)

    def test_1khz_sine_peaks_at_nearest_filter(self):
        fs = 16000
        t = np.arange(fs) / fs
        mel = dsp.mel_spectrogram(make_wave(np.sin(2 * np.pi * 1000.0 * t)))
        # oracle: the filter whose center frequency is nearest 1 kHz
        edges = dsp.mel_to_hz(
            np.linspace(dsp.hz_to_mel(50.0), dsp.hz_to_mel(7600.0), 40 + 2)
        )
        centers = np.asarray(edges)[1:-1]
        expected = int(np.argmin(np.abs(centers - 1000.0)))
        assert int(np.argmax(mel.data[5])) == expected


class TestAnalyticSignal:
    def test_cosine_envelope_and_phase_slope(self):
        fs = 1024
        t = np.arange(2 * fs) / fs
        result = dsp.analytic_signal(np.cos(2 * np.pi * 5.0 * t))
        interior = slice(len(t) // 10, -len(t) // 10)
        assert np.abs(result.amplitude_envelope[interior] - 1.0).max() <= 0.01
        slope = np.diff(np.unwrap(result.instantaneous_phase_rad[interior])) * fs
        assert np.mean(slope) == pytest.approx(2 * np.pi * 5.0, rel=0.01)

    def test_amplitude_scales_linearly(self):
        fs = 1024
        t = np.arange(2 * fs) / fs
        result = dsp.analytic_signal(3.0 * np.cos(2 * np.pi * 5.0 * t))
        interior = slice(len(t) // 10, -len(t) // 10)
        assert np.abs(result.amplitude_envelope[interior] - 3.0).max() <= 0.03

    def test_zero_signal_has_zero_envelope(self):
        result = dsp.analytic_signal(np.zeros(64))
        assert np.all(result.amplitude_envelope == 0)

    def test_short_input_rejected(self):
        with pytest.raises(ValueError):
            dsp.analytic_signal(np.zeros(4))

    def test_pure_tone_envelope_flat_on_interior(self):
        fs = 1024
        t = np.arange(4 * fs) / fs
        env = dsp.analytic_signal(np.cos(2 * np.pi * 37.0 * t)).amplitude_envelope
        n = len(env)
        interior = env[n // 10 : -n // 10]
        assert np.abs(interior - 1.0).max() <= 0.01


class TestFrameGrid:
    def test_frame_counts_match_across_sample_rates(self):
        for seconds in (1.0, 2.0, 3.5):
            n_audio = int(seconds * 16000)
            n_neural = int(seconds * 1024)
            assert dsp.frame_count(n_audio, 16000) == dsp.frame_count(n_neural, 1024)

    def test_frame_count_matches_stft_frames(self):
        fs = 16000
        for seconds in (1.0, 2.0):
            x = np.zeros(int(seconds * fs))
            spec = dsp.stft(make_wave(x))
            assert spec.n_frames == dsp.frame_count(len(x), fs)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-100.0, max_value=100.0, allow_nan=False))
def test_wrap_phase_lands_in_half_open_interval(angle):
    wrapped = float(np.asarray(dsp.wrap_phase(angle)))
    assert -np.pi < wrapped <= np.pi
    assert np.cos(wrapped) == pytest.approx(np.cos(angle), abs=1e-9)
    assert np.sin(wrapped) == pytest.approx(np.sin(angle), abs=1e-9)


def test_waveform_rejects_non_finite():
    with pytest.raises(ValueError):
        dsp.Waveform(samples=np.array([0.0, np.nan]), sample_rate_hz=16000)
