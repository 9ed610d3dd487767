import numpy as np
import pytest

from neurovox import preprocess
from neurovox.dsp import Waveform
from neurovox.preprocess import DegenerateSignalError, MultiChannelRecording

FS = 1024


def sine_rec(freq_hz, seconds=8.0, amp=1.0, fs=FS):
    t = np.arange(int(seconds * fs)) / fs
    return MultiChannelRecording(data=(amp * np.sin(2 * np.pi * freq_hz * t))[None, :], sample_rate_hz=fs)


def interior_rms(x, fs=FS, edge_s=1.0):
    edge = int(edge_s * fs)
    return np.sqrt(np.mean(x[edge:-edge] ** 2))


class TestBandpass:
    def test_dc_offset_rejected(self):
        rec = MultiChannelRecording(data=np.full((1, 4 * FS), 5.0), sample_rate_hz=FS)
        out = preprocess.bandpass(rec)
        assert np.abs(out.data[0, FS:-FS]).max() <= 0.05

    def test_60hz_passband_preserves_amplitude(self):
        rec = sine_rec(60.0)
        out = preprocess.bandpass(rec)
        ratio = interior_rms(out.data[0]) / interior_rms(rec.data[0])
        assert abs(ratio - 1.0) <= 0.12

    def test_400hz_stopband_attenuates_20db(self):
        rec = sine_rec(400.0)
        out = preprocess.bandpass(rec)
        attenuation = 20 * np.log10(interior_rms(out.data[0]) / interior_rms(rec.data[0]))
        assert attenuation <= -20.0

    def test_invalid_band_rejected(self):
        rec = sine_rec(10.0, seconds=2.0)
        with pytest.raises(ValueError):
            preprocess.bandpass(rec, lo_hz=100.0, hi_hz=50.0)

    def test_zero_phase_pulse_stays_symmetric(self):
        n = 8 * FS
        pulse = np.zeros((1, n))
        center = n // 2
        pulse[0, center - 20 : center + 21] = np.hanning(41)
        out = preprocess.bandpass(MultiChannelRecording(data=pulse, sample_rate_hz=FS), lo_hz=0.5, hi_hz=170.0)
        assert abs(int(np.argmax(out.data[0])) - center) <= 1


class TestNotch:
    def test_50hz_attenuated_30db(self):
        rec = sine_rec(50.0)
        out = preprocess.notch(rec)
        attenuation = 20 * np.log10(interior_rms(out.data[0]) / interior_rms(rec.data[0]))
        assert attenuation <= -30.0

    def test_30hz_nearly_untouched(self):
        rec = sine_rec(30.0)
        out = preprocess.notch(rec)
        ratio = interior_rms(out.data[0]) / interior_rms(rec.data[0])
        assert abs(ratio - 1.0) <= 0.05

    def test_zero_signal_stays_zero(self):
        rec = MultiChannelRecording(data=np.zeros((2, 4 * FS)), sample_rate_hz=FS)
        out = preprocess.notch(rec)
        assert np.abs(out.data).max() <= 1e-12

    def test_harmonics_below_cutoff_attenuated(self):
        for freq in (100.0, 150.0):
            rec = sine_rec(freq)
            out = preprocess.notch(rec)
            attenuation = 20 * np.log10(interior_rms(out.data[0]) / interior_rms(rec.data[0]))
            assert attenuation <= -30.0


class TestZscore:
    def test_hand_computed_example(self):
        rec = MultiChannelRecording(data=np.array([[1.0, 2.0, 3.0]]), sample_rate_hz=FS)
        out, mu, sigma = preprocess.zscore_channels(rec)
        assert np.allclose(out.data[0], [-1.2247, 0.0, 1.2247], atol=1e-4)
        assert mu[0] == pytest.approx(2.0)
        assert sigma[0] == pytest.approx(np.sqrt(2.0 / 3.0))

    def test_constant_channel_maps_to_zero(self):
        rec = MultiChannelRecording(data=np.full((1, 3), 7.0), sample_rate_hz=FS)
        out, _, _ = preprocess.zscore_channels(rec)
        assert np.all(out.data == 0)

    def test_output_statistics(self):
        rng = np.random.default_rng(0)
        rec = MultiChannelRecording(data=rng.standard_normal((3, 5000)) * 4 + 2, sample_rate_hz=FS)
        out, _, _ = preprocess.zscore_channels(rec)
        assert np.abs(out.data.mean(axis=1)).max() <= 1e-9
        assert np.abs(out.data.std(axis=1) - 1).max() <= 1e-6

    def test_idempotent_up_to_floor(self):
        rng = np.random.default_rng(1)
        rec = MultiChannelRecording(data=rng.standard_normal((2, 1000)), sample_rate_hz=FS)
        once, _, _ = preprocess.zscore_channels(rec)
        twice, _, _ = preprocess.zscore_channels(once)
        assert np.abs(twice.data - once.data).max() <= 1e-6


class TestVad:
    def test_pure_silence_gives_no_segments(self):
        assert len(preprocess.vad(Waveform(samples=np.zeros(16000), sample_rate_hz=16000))) == 0

    def test_silence_tone_silence_boundaries(self):
        fs = 16000
        rng = np.random.default_rng(3)
        x = 0.02 * rng.standard_normal(3 * fs)
        x[fs : 2 * fs] += 0.8 * np.sin(2 * np.pi * 220.0 * np.arange(fs) / fs)
        segments = preprocess.vad(Waveform(samples=x, sample_rate_hz=fs))
        assert len(segments) == 1
        onset, offset = segments.segments[0]
        frame = fs // 100
        assert abs(onset - fs) <= 2 * frame
        assert abs(offset - 2 * fs) <= 3 * frame

    def test_continuous_tone_spans_signal(self):
        fs = 16000
        x = 0.5 * np.sin(2 * np.pi * 220.0 * np.arange(2 * fs) / fs)
        segments = preprocess.vad(Waveform(samples=x, sample_rate_hz=fs))
        assert len(segments) == 1
        onset, offset = segments.segments[0]
        assert (offset - onset) >= 0.9 * len(x)

    def test_amplitude_scale_invariance(self):
        fs = 16000
        rng = np.random.default_rng(4)
        x = 0.02 * rng.standard_normal(3 * fs)
        x[fs : 2 * fs] += 0.5 * np.sin(2 * np.pi * 180.0 * np.arange(fs) / fs)
        a = preprocess.vad(Waveform(samples=x, sample_rate_hz=fs))
        b = preprocess.vad(Waveform(samples=123.4 * x, sample_rate_hz=fs))
        assert a.segments == b.segments


class TestAlign:
    @staticmethod
    def modulated_noise(seed, seconds=6.0, fs=FS, delay_s=0.0):
        t = np.arange(int(seconds * fs)) / fs
        envelope = 1.0 + 0.7 * np.sin(2 * np.pi * 0.7 * (t - delay_s)) + 0.3 * np.sin(
            2 * np.pi * 1.3 * (t - delay_s) + 1.0
        )
        return np.abs(envelope) * np.random.default_rng(seed).standard_normal(len(t))

    def test_identical_envelopes_peak_one_lag_zero(self):
        x = self.modulated_noise(0)
        neural = MultiChannelRecording(data=x[None, :], sample_rate_hz=FS)
        audio = Waveform(samples=x, sample_rate_hz=FS)
        result = preprocess.align(neural, audio)
        assert result.lag_samples_neural == 0
        assert result.correlation_peak == pytest.approx(1.0, abs=1e-6)

    def test_delayed_neural_reports_negative_lag(self):
        audio_sig = self.modulated_noise(1, fs=16000)
        neural_sig = self.modulated_noise(2, fs=FS, delay_s=0.2)
        neural = MultiChannelRecording(data=neural_sig[None, :], sample_rate_hz=FS)
        audio = Waveform(samples=audio_sig, sample_rate_hz=16000)
        result = preprocess.align(neural, audio)
        lag_ms = result.lag_samples_neural / FS * 1000.0
        assert abs(lag_ms - (-200.0)) <= 10.0
        assert result.correlation_peak >= 0.95

    def test_shift_recovery_within_one_hop(self):
        x = self.modulated_noise(5, seconds=8.0)
        for shift_frames in (-20, -7, 13, 30):
            shift = int(shift_frames * FS / 100)
            shifted = np.roll(x, shift)
            neural = MultiChannelRecording(data=shifted[None, :], sample_rate_hz=FS)
            audio = Waveform(samples=x, sample_rate_hz=FS)
            result = preprocess.align(neural, audio)
            lag_frames = result.lag_samples_neural / FS * 100
            assert abs(lag_frames - (-shift_frames)) <= 1.0

    def test_independent_noise_has_low_peak(self):
        for seed in range(5):
            a = np.random.default_rng(seed).standard_normal(60 * FS)
            b = np.random.default_rng(seed + 100).standard_normal(60 * FS)
            neural = MultiChannelRecording(data=a[None, :], sample_rate_hz=FS)
            audio = Waveform(samples=b, sample_rate_hz=FS)
            result = preprocess.align(neural, audio)
            assert abs(result.correlation_peak) <= 0.2

    def test_constant_envelopes_rejected(self):
        neural = MultiChannelRecording(data=np.ones((1, 4 * FS)), sample_rate_hz=FS)
        audio = Waveform(samples=np.ones(4 * FS), sample_rate_hz=FS)
        with pytest.raises(DegenerateSignalError):
            preprocess.align(neural, audio)

    def test_too_short_inputs_rejected(self):
        neural = MultiChannelRecording(data=np.random.default_rng(0).standard_normal((1, FS)), sample_rate_hz=FS)
        audio = Waveform(samples=np.random.default_rng(1).standard_normal(4 * FS), sample_rate_hz=FS)
        with pytest.raises(ValueError):
            preprocess.align(neural, audio)


class TestRecordingValidation:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            MultiChannelRecording(data=np.array([[np.nan, 0.0]]), sample_rate_hz=FS)

    def test_label_count_must_match(self):
        with pytest.raises(ValueError):
            MultiChannelRecording(
                data=np.zeros((2, 10)), sample_rate_hz=FS, channel_labels=("only-one",)
            )
