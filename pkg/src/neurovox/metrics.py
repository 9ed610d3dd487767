"""Objective evaluation: spectrogram correlation, mel cepstral distortion,
a simplified per-frame intelligibility score, and harmonic-to-noise ratio.

The intelligibility measure is the simplified per-frame spectral
correlation (named stoi_simple to avoid claiming compliance with the
standard octave-band STOI). HNR splits per-frame spectral power into a
harmonic comb (+-1 bin around each multiple of F0) and a residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .dsp import LOG_MEL_FLOOR, MelSpectrogram, Waveform, frame_signal
from .preprocess import DegenerateSignalError

MCD_SCALE = 10.0 / np.log(10.0)
HNR_CAP_DB = 60.0
HNR_NOISE_EPS = 1e-12


def pearson(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Pearson correlation over all values, flattened."""
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape or y.size < 2:
        raise ValueError("inputs must share a shape with at least 2 elements")
    yc = y - y.mean()
    hc = y_hat - y_hat.mean()
    denom = np.sqrt((yc**2).sum() * (hc**2).sum())
    if denom == 0.0:
        raise DegenerateSignalError("constant input: correlation undefined")
    return float(np.clip((yc * hc).sum() / denom, -1.0, 1.0))


def pearson_per_bin(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Mean over bins of the per-bin correlation across frames."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 2:
        raise ValueError("inputs must be equal-shape 2-D arrays")
    values = []
    for b in range(y.shape[1]):
        try:
            values.append(pearson(y[:, b], y_hat[:, b]))
        except DegenerateSignalError:
            continue
    if not values:
        raise DegenerateSignalError("all bins constant: correlation undefined")
    return float(np.mean(values))


def mel_cepstra(mel: MelSpectrogram, n_coeffs: int = 13) -> np.ndarray:
    """DCT-II cepstra of log-mel frames, coefficients 1..n_coeffs (c0 dropped)."""
    data = mel.data if mel.log_scale else np.log(mel.data + LOG_MEL_FLOOR)
    coeffs = dct(data, type=2, norm="ortho", axis=1)
    return coeffs[:, 1 : n_coeffs + 1]


def mcd(c: np.ndarray, c_hat: np.ndarray) -> float:
    """Mel cepstral distortion in dB: frame mean of (10/ln10)*sqrt(2*sum d^2)."""
    c = np.asarray(c, dtype=np.float64)
    c_hat = np.asarray(c_hat, dtype=np.float64)
    if c.shape != c_hat.shape or c.ndim != 2:
        raise ValueError("cepstra must be equal-shape T x D arrays")
    per_frame = MCD_SCALE * np.sqrt(2.0 * np.sum((c - c_hat) ** 2, axis=1))
    return float(per_frame.mean())


def stoi_simple(clean: np.ndarray, degraded: np.ndarray) -> float:
    """Mean per-frame correlation between clean and degraded spectral vectors.

    Frames where either vector is constant are skipped.
    """
    clean = np.asarray(clean, dtype=np.float64)
    degraded = np.asarray(degraded, dtype=np.float64)
    if clean.shape != degraded.shape or clean.ndim != 2:
        raise ValueError("inputs must be equal-shape T x B arrays")
    scores = []
    for t in range(clean.shape[0]):
        x, x_hat = clean[t], degraded[t]
        xc = x - x.mean()
        hc = x_hat - x_hat.mean()
        denom = np.sqrt((xc**2).sum() * (hc**2).sum())
        if denom == 0.0:
            continue
        scores.append(float((xc * hc).sum() / denom))
    if not scores:
        raise DegenerateSignalError("every frame constant: intelligibility undefined")
    return float(np.clip(np.mean(scores), -1.0, 1.0))


def hnr(x: Waveform, f0_track: np.ndarray) -> float:
    """Harmonic-to-noise ratio in dB, averaged over voiced frames.

    Uses 50 ms periodic-Hann frames with FFT size equal to the window
    length so that bin-centered harmonics concentrate into a 3-bin comb;
    harmonic power is collected within +-1 bin of every multiple of the
    frame's F0 below Nyquist, the remainder counts as noise.
    """
    f0_track = np.asarray(f0_track, dtype=np.float64)
    frames = frame_signal(x.samples, x.sample_rate_hz)
    n_frames, flen = frames.shape
    if len(f0_track) < n_frames:
        n_frames = len(f0_track)
        frames = frames[:n_frames]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(flen) / flen)
    nyquist = x.sample_rate_hz / 2.0
    bin_width = x.sample_rate_hz / flen
    n_bins = flen // 2 + 1

    values = []
    for t in range(n_frames):
        f0 = f0_track[t]
        if f0 <= 0:
            continue
        power = np.abs(np.fft.rfft(frames[t] * window)) ** 2
        total = power.sum()
        if total <= 0:
            continue
        n_harm = int(np.floor((nyquist - 1e-9) / f0))
        if n_harm < 1:
            continue
        centers = np.round(f0 * np.arange(1, n_harm + 1) / bin_width).astype(np.int64)
        comb = np.unique(
            np.concatenate([centers - 1, centers, centers + 1])
        )
        comb = comb[(comb >= 0) & (comb < n_bins)]
        harmonic = power[comb].sum()
        noise = max(total - harmonic, 0.0)
        ratio_db = 10.0 * np.log10(harmonic / max(noise, HNR_NOISE_EPS)) if harmonic > 0 else -np.inf
        values.append(min(ratio_db, HNR_CAP_DB))
    if not values:
        raise DegenerateSignalError("no voiced frames: HNR undefined")
    return float(min(np.mean(values), HNR_CAP_DB))


@dataclass(frozen=True)
class MetricReport:
    """One evaluation row: spectrogram fidelity plus waveform harmonicity."""

    pc: float
    mcd_db: float
    stoi: float
    hnr_db: float
    per_trial: tuple[dict, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not (-1.0 <= self.pc <= 1.0):
            raise ValueError("pc must lie in [-1, 1]")
        if self.mcd_db < 0:
            raise ValueError("mcd must be nonnegative")
        if not (-1.0 <= self.stoi <= 1.0):
            raise ValueError("stoi must lie in [-1, 1]")
        for value in (self.pc, self.mcd_db, self.stoi, self.hnr_db):
            if not np.isfinite(value):
                raise ValueError("report values must be finite")

    @property
    def stoi_clamped(self) -> float:
        return float(np.clip(self.stoi, 0.0, 1.0))
