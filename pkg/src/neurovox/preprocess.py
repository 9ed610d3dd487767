"""Cleaning and alignment of raw multi-channel recordings.

Zero-phase Butterworth bandpass, mains notch filtering, per-channel
z-scoring, energy-based voice activity detection, and envelope
cross-correlation alignment between the neural and audio streams.

All filtering is forward-backward (zero phase): the pipeline is offline
and phase distortion would corrupt downstream phase-coupling features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .dsp import FRAME_RATE_HZ, Waveform, frame_length, frame_signal, frame_starts

SIGMA_FLOOR = 1e-8


class DegenerateSignalError(ValueError):
    """A quantity (alignment, coupling, correlation...) is undefined on this input."""


@dataclass(frozen=True)
class MultiChannelRecording:
    """Channels x samples of neural-style signal."""

    data: np.ndarray
    sample_rate_hz: int
    channel_labels: tuple[str, ...] = ()

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        object.__setattr__(self, "data", data)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if data.shape[0] < 1:
            raise ValueError("need at least one channel")
        if not np.all(np.isfinite(data)):
            raise ValueError("recording contains non-finite samples")
        labels = self.channel_labels or tuple(f"ch{i:02d}" for i in range(data.shape[0]))
        if len(labels) != data.shape[0]:
            raise ValueError("channel_labels length must match channel count")
        object.__setattr__(self, "channel_labels", tuple(labels))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class VadSegments:
    """Sorted, non-overlapping (onset_sample, offset_sample) speech spans."""

    segments: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prev_end = -1
        for onset, offset in self.segments:
            if onset >= offset:
                raise ValueError("segment onset must precede offset")
            if onset <= prev_end:
                raise ValueError("segments must be sorted and non-overlapping")
            prev_end = offset

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def contains(self, sample: int) -> bool:
        return any(onset <= sample < offset for onset, offset in self.segments)


@dataclass(frozen=True)
class AlignmentResult:
    """Lag (neural samples) by which the neural stream leads the audio."""

    lag_samples_neural: int
    correlation_peak: float

    def __post_init__(self):
        if abs(self.correlation_peak) > 1.0 + 1e-9:
            raise ValueError("correlation peak must lie in [-1, 1]")


def bandpass(rec: MultiChannelRecording, lo_hz: float = 0.5, hi_hz: float = 170.0) -> MultiChannelRecording:
    """4th-order Butterworth bandpass, applied forward-backward per channel."""
    nyq = rec.sample_rate_hz / 2.0
    if not (0.0 < lo_hz < hi_hz < nyq):
        raise ValueError(f"band [{lo_hz}, {hi_hz}] must satisfy 0 < lo < hi < {nyq}")
    sos = sps.butter(4, [lo_hz, hi_hz], btype="bandpass", fs=rec.sample_rate_hz, output="sos")
    filtered = sps.sosfiltfilt(sos, rec.data, axis=1)
    return MultiChannelRecording(
        data=filtered, sample_rate_hz=rec.sample_rate_hz, channel_labels=rec.channel_labels
    )


def notch(rec: MultiChannelRecording, mains_hz: float = 50.0, hi_hz: float = 170.0) -> MultiChannelRecording:
    """Second-order IIR notches (Q=30) at mains_hz and its harmonics below hi_hz."""
    nyq = rec.sample_rate_hz / 2.0
    if not (0.0 < mains_hz < nyq):
        raise ValueError("mains frequency must lie below Nyquist")
    data = rec.data
    freq = mains_hz
    while freq < min(hi_hz, nyq):
        b, a = sps.iirnotch(freq, Q=30.0, fs=rec.sample_rate_hz)
        data = sps.filtfilt(b, a, data, axis=1)
        freq += mains_hz
    return MultiChannelRecording(
        data=data, sample_rate_hz=rec.sample_rate_hz, channel_labels=rec.channel_labels
    )


def zscore_channels(
    rec: MultiChannelRecording,
) -> tuple[MultiChannelRecording, np.ndarray, np.ndarray]:
    """Per-channel (x - mean) / max(population std, floor); returns the stats."""
    if rec.n_samples < 2:
        raise ValueError("z-scoring needs at least 2 samples")
    mu = rec.data.mean(axis=1)
    sigma = np.maximum(rec.data.std(axis=1), SIGMA_FLOOR)
    normalized = (rec.data - mu[:, None]) / sigma[:, None]
    out = MultiChannelRecording(
        data=normalized, sample_rate_hz=rec.sample_rate_hz, channel_labels=rec.channel_labels
    )
    return out, mu, sigma


def _frame_rms(x: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    frames = frame_signal(x, sample_rate_hz)
    return np.sqrt(np.mean(frames**2, axis=1))


def vad(
    audio: Waveform,
    threshold_factor: float = 2.0,
    min_frames: int = 3,
) -> VadSegments:
    """Energy VAD on the shared 50 ms / 10 ms frame grid.

    A frame is speech when its RMS exceeds threshold_factor times the
    noise floor (20th percentile of frame RMS) or sits within 2x of the
    loudest frame — the second branch keeps signals that are active
    throughout (no silent floor to calibrate against) detectable. Both
    criteria are scale-invariant. Runs shorter than min_frames are
    dropped; boundaries are reported at frame centers.
    """
    rms = _frame_rms(audio.samples, audio.sample_rate_hz)
    if len(rms) == 0:
        return VadSegments(segments=())
    noise_floor = np.percentile(rms, 20)
    peak = rms.max()
    speech = (rms > threshold_factor * noise_floor) | ((rms >= 0.5 * peak) & (peak > 0))

    starts = frame_starts(len(audio.samples), audio.sample_rate_hz)
    half = frame_length(audio.sample_rate_hz) // 2
    hop = audio.sample_rate_hz / FRAME_RATE_HZ
    segments = []
    run_start = None
    for i, is_speech in enumerate(np.append(speech, False)):
        if is_speech and run_start is None:
            run_start = i
        elif not is_speech and run_start is not None:
            if i - run_start >= min_frames:
                onset = int(starts[run_start]) + half
                offset = int(starts[i - 1]) + half + int(round(hop))
                segments.append((onset, min(offset, len(audio.samples))))
            run_start = None
    return VadSegments(segments=tuple(segments))


def _envelope_100hz(x: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    return _frame_rms(x, sample_rate_hz)


def align(
    neural: MultiChannelRecording, audio: Waveform, max_lag_ms: float = 500.0
) -> AlignmentResult:
    """Cross-correlate broadband RMS envelopes at the common 100 Hz frame rate.

    Positive lag means the neural stream leads the audio.
    """
    if neural.n_samples < 2 * neural.sample_rate_hz or len(audio.samples) < 2 * audio.sample_rate_hz:
        raise ValueError("alignment needs at least 2 s of both streams")
    neural_env = _envelope_100hz(np.abs(neural.data).mean(axis=0), neural.sample_rate_hz)
    audio_env = _envelope_100hz(audio.samples, audio.sample_rate_hz)
    if neural_env.std() < SIGMA_FLOOR or audio_env.std() < SIGMA_FLOOR:
        raise DegenerateSignalError("constant envelope: alignment undefined")

    # corr(lag) pairs neural[t] with audio[t + lag]: a neural stream that
    # trails the audio by d frames peaks at lag = -d.
    max_lag = int(round(max_lag_ms / 1000.0 * FRAME_RATE_HZ))
    best_lag, best_corr = 0, -np.inf
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            a, b = neural_env, audio_env[lag:]
        else:
            a, b = neural_env[-lag:], audio_env
        n = min(len(a), len(b))
        a, b = a[:n], b[:n]
        if n < 4 or a.std() < SIGMA_FLOOR or b.std() < SIGMA_FLOOR:
            continue
        corr = float(np.corrcoef(a, b)[0, 1])
        if corr > best_corr:
            best_corr, best_lag = corr, lag
    if not np.isfinite(best_corr):
        raise DegenerateSignalError("alignment correlation undefined")
    lag_neural = int(round(best_lag * neural.sample_rate_hz / FRAME_RATE_HZ))
    return AlignmentResult(lag_samples_neural=lag_neural, correlation_peak=min(best_corr, 1.0))
