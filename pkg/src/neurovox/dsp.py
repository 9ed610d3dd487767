"""Core signal primitives shared by every pipeline stage.

Windows, STFT/ISTFT with weighted overlap-add reconstruction, mel
filterbanks, analytic-signal (Hilbert) envelopes/phases, and the common
50 ms / 10 ms frame grid that keeps neural features and audio
spectrograms aligned frame-for-frame.

Everything here is a pure function of its inputs; there is no shared
mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import hilbert as _hilbert

FRAME_S = 0.05
HOP_S = 0.01
FRAME_RATE_HZ = 100
LOG_MEL_FLOOR = 1e-10


def wrap_phase(phi: np.ndarray | float) -> np.ndarray | float:
    """Wrap angles into (-pi, pi]."""
    wrapped = np.mod(phi, 2.0 * np.pi)
    return np.where(wrapped > np.pi, wrapped - 2.0 * np.pi, wrapped)


def hann_window(length: int) -> np.ndarray:
    """Symmetric Hann window, w[0] = w[-1] = 0."""
    if length < 2:
        raise ValueError(f"hann window needs length >= 2, got {length}")
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / (length - 1))


def frame_count(n_samples: int, sample_rate_hz: int) -> int:
    """Number of 10 ms frames whose start lies inside an n-sample signal.

    Integer arithmetic so that streams with different sample rates but
    equal duration (e.g. 1024 Hz neural and 16 kHz audio) land on the
    same frame count.
    """
    if n_samples <= 0:
        return 0
    return (n_samples * FRAME_RATE_HZ + sample_rate_hz - 1) // sample_rate_hz


def frame_starts(n_samples: int, sample_rate_hz: int) -> np.ndarray:
    """Start sample of each 10 ms frame (rounded to the stream's grid)."""
    t = np.arange(frame_count(n_samples, sample_rate_hz))
    return np.round(t * sample_rate_hz / FRAME_RATE_HZ).astype(np.int64)


def frame_length(sample_rate_hz: int, frame_s: float = FRAME_S) -> int:
    return int(round(sample_rate_hz * frame_s))


def frame_signal(x: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    """Slice a 1-D signal into the shared 50 ms / 10 ms frame grid.

    Returns a (frames, frame_len) array; the tail is zero-padded.
    """
    x = np.asarray(x, dtype=np.float64)
    flen = frame_length(sample_rate_hz)
    starts = frame_starts(len(x), sample_rate_hz)
    padded = np.concatenate([x, np.zeros(flen, dtype=np.float64)])
    return np.stack([padded[s : s + flen] for s in starts]) if len(starts) else np.zeros((0, flen))


@dataclass(frozen=True)
class Waveform:
    """A mono signal with its sample rate; amplitudes nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if samples.ndim != 1:
            raise ValueError("Waveform samples must be 1-D")
        if not np.all(np.isfinite(samples)):
            raise ValueError("Waveform contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class StftConfig:
    """STFT framing. Defaults give the 50 ms / 10 ms grid at 16 kHz."""

    window_len_samples: int = 800
    hop_samples: int = 160
    fft_size: int = 1024

    def __post_init__(self):
        if self.window_len_samples <= 0 or self.hop_samples <= 0 or self.fft_size <= 0:
            raise ValueError("StftConfig fields must be positive")
        if self.hop_samples > self.window_len_samples:
            raise ValueError("hop must not exceed the window length")
        if self.fft_size < self.window_len_samples:
            raise ValueError("fft_size must be >= window length")
        if self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        if self.window_len_samples % self.hop_samples or self.window_len_samples // self.hop_samples < 2:
            raise ValueError("hop must divide the window into >= 2 parts (overlap-add)")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class ComplexSpectrogram:
    """Frames x bins complex STFT plus the config that produced it."""

    data: np.ndarray
    config: StftConfig
    sample_rate_hz: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        object.__setattr__(self, "data", data)
        if data.ndim != 2 or data.shape[1] != self.config.n_bins:
            raise ValueError(f"spectrogram must be T x {self.config.n_bins}")
        if not np.all(np.isfinite(data)):
            raise ValueError("spectrogram contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)

    @property
    def phase(self) -> np.ndarray:
        return np.asarray(wrap_phase(np.angle(self.data)))


@dataclass(frozen=True)
class MelSpectrogram:
    """Frames x mel-bins spectrogram; `log_scale` flags log(power + eps)."""

    data: np.ndarray
    sample_rate_hz: int
    fmin_hz: float
    fmax_hz: float
    log_scale: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise ValueError("mel spectrogram must be 2-D")
        if not np.all(np.isfinite(data)):
            raise ValueError("mel spectrogram contains non-finite values")
        if not self.log_scale and np.any(data < 0):
            raise ValueError("linear-power mel spectrogram must be nonnegative")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_mels(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class AnalyticSignal:
    """Hilbert envelope and instantaneous phase of a real signal."""

    amplitude_envelope: np.ndarray
    instantaneous_phase_rad: np.ndarray


def stft(x: Waveform, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Windowed real FFT per frame; frame t starts at t*hop.

    The tail is zero-padded so every sample is covered; the frame count
    is ceil(len(x) / hop).
    """
    n = len(x.samples)
    if n < cfg.window_len_samples:
        raise ValueError(
            f"signal of {n} samples is shorter than one {cfg.window_len_samples}-sample window"
        )
    n_frames = -(-n // cfg.hop_samples)
    padded = np.concatenate([x.samples, np.zeros(cfg.window_len_samples, dtype=np.float64)])
    idx = np.arange(cfg.window_len_samples)[None, :] + (
        np.arange(n_frames)[:, None] * cfg.hop_samples
    )
    frames = padded[idx] * hann_window(cfg.window_len_samples)[None, :]
    data = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return ComplexSpectrogram(data=data, config=cfg, sample_rate_hz=x.sample_rate_hz)


def istft(spec: ComplexSpectrogram, length: int | None = None) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`.

    The synthesis window equals the analysis window and the result is
    normalized by the summed squared window, which makes the round trip
    exact on the interior (half a window at each edge is unreliable).
    """
    cfg = spec.config
    win = hann_window(cfg.window_len_samples)
    n_frames = spec.n_frames
    out_len = (n_frames - 1) * cfg.hop_samples + cfg.window_len_samples
    acc = np.zeros(out_len, dtype=np.float64)
    norm = np.zeros(out_len, dtype=np.float64)
    frames = np.fft.irfft(spec.data, n=cfg.fft_size, axis=1)[:, : cfg.window_len_samples]
    frames *= win[None, :]
    win_sq = win * win
    for t in range(n_frames):
        start = t * cfg.hop_samples
        acc[start : start + cfg.window_len_samples] += frames[t]
        norm[start : start + cfg.window_len_samples] += win_sq
    out = acc / np.maximum(norm, 1e-12)
    if length is None:
        length = n_frames * cfg.hop_samples
    if length <= out_len:
        out = out[:length]
    else:
        out = np.concatenate([out, np.zeros(length - out_len)])
    return Waveform(samples=out, sample_rate_hz=spec.sample_rate_hz)


def hz_to_mel(f_hz: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate_hz: int,
    fft_size: int,
    mel_bins: int = 40,
    fmin_hz: float = 50.0,
    fmax_hz: float = 7600.0,
) -> np.ndarray:
    """Triangular filters equally spaced on the mel scale, shape (B, F)."""
    nyquist = sample_rate_hz / 2.0
    if not (0 <= fmin_hz < fmax_hz <= nyquist):
        raise ValueError(f"need 0 <= fmin < fmax <= {nyquist}, got [{fmin_hz}, {fmax_hz}]")
    if mel_bins < 2:
        raise ValueError("mel_bins must be >= 2")
    n_bins = fft_size // 2 + 1
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), mel_bins + 2))
    bin_freqs = np.arange(n_bins) * sample_rate_hz / fft_size
    fb = np.zeros((mel_bins, n_bins), dtype=np.float64)
    for b in range(mel_bins):
        lo, mid, hi = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        rising = (bin_freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - mid, 1e-12)
        fb[b] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


@dataclass(frozen=True)
class MelParams:
    mel_bins: int = 40
    fmin_hz: float = 50.0
    fmax_hz: float = 7600.0


def mel_spectrogram(
    x: Waveform,
    cfg: StftConfig = StftConfig(),
    mel: MelParams = MelParams(),
    log_scale: bool = False,
) -> MelSpectrogram:
    """Mel power spectrogram: filterbank x |STFT|^2, optionally log-compressed."""
    spec = stft(x, cfg)
    fb = mel_filterbank(x.sample_rate_hz, cfg.fft_size, mel.mel_bins, mel.fmin_hz, mel.fmax_hz)
    power = spec.magnitude**2 @ fb.T
    if log_scale:
        power = np.log(power + LOG_MEL_FLOOR)
    return MelSpectrogram(
        data=power,
        sample_rate_hz=x.sample_rate_hz,
        fmin_hz=mel.fmin_hz,
        fmax_hz=mel.fmax_hz,
        log_scale=log_scale,
    )


def analytic_signal(x: np.ndarray) -> AnalyticSignal:
    """FFT-based analytic signal: amplitude envelope and wrapped phase."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) < 8:
        raise ValueError("analytic_signal needs a 1-D signal of length >= 8")
    z = _hilbert(x)
    return AnalyticSignal(
        amplitude_envelope=np.abs(z),
        instantaneous_phase_rad=np.asarray(wrap_phase(np.angle(z))),
    )
