"""Prosody-aware feature extraction from multi-channel recordings.

Per channel: db4 wavelet band energies on the shared 100 Hz frame grid
and a theta-phase / gamma-amplitude coupling track. From the broadband
channel average: fundamental frequency, RMS energy, shimmer, voiced-run
duration, and theta phase variability. Columns are z-scored with stats
that can be refit or replayed (held-out folds reuse training stats).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .dsp import (
    FRAME_RATE_HZ,
    Waveform,
    analytic_signal,
    frame_count,
    frame_length,
    frame_signal,
    frame_starts,
)
from .preprocess import SIGMA_FLOOR, DegenerateSignalError, MultiChannelRecording, vad
from .wavelet import WaveletPyramid, dwt_decompose, level_band_hz

THETA_HZ = (4.0, 8.0)
BETA_HZ = (15.0, 30.0)
HIGH_GAMMA_HZ = (70.0, 170.0)


@dataclass(frozen=True)
class BandAssignment:
    """Map from named neural band to the wavelet detail levels covering it."""

    theta: tuple[int, ...]
    beta: tuple[int, ...]
    high_gamma: tuple[int, ...]

    def __post_init__(self):
        for name, levels in (("theta", self.theta), ("beta", self.beta), ("high_gamma", self.high_gamma)):
            if len(levels) < 1:
                raise ValueError(f"band {name} must map to at least one level")


def assign_bands(sample_rate_hz: int, levels: int, min_overlap: float = 0.25) -> BandAssignment:
    """Assign each named band the levels whose dyadic range overlaps it.

    A level counts only when at least min_overlap of its own band lies
    inside the named range; sliver overlaps (e.g. the 8-16 Hz level
    grazing beta at 15 Hz) would otherwise pollute the band with leakage
    from neighboring rhythms.
    """

    def overlapping(band: tuple[float, float]) -> tuple[int, ...]:
        hits = []
        for j in range(1, levels + 1):
            lo, hi = level_band_hz(j, sample_rate_hz)
            shared = min(hi, band[1]) - max(lo, band[0])
            if shared > 0 and shared / (hi - lo) >= min_overlap:
                hits.append(j)
        return tuple(hits)

    return BandAssignment(
        theta=overlapping(THETA_HZ),
        beta=overlapping(BETA_HZ),
        high_gamma=overlapping(HIGH_GAMMA_HZ),
    )


def _coeff_frame_stats(
    coeffs: np.ndarray, level: int, n_samples: int, sample_rate_hz: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-frame (energy, mean, std) of level-j coefficients.

    Coefficient n is attributed to sample n * 2**level; a frame collects
    the coefficients whose attributed sample falls inside its window.
    """
    positions = np.arange(len(coeffs)) * (2**level)
    starts = frame_starts(n_samples, sample_rate_hz)
    flen = frame_length(sample_rate_hz)
    lo = np.searchsorted(positions, starts)
    hi = np.searchsorted(positions, starts + flen)
    cs1 = np.concatenate([[0.0], np.cumsum(coeffs)])
    cs2 = np.concatenate([[0.0], np.cumsum(coeffs**2)])
    count = hi - lo
    safe = np.maximum(count, 1)
    energy = cs2[hi] - cs2[lo]
    mean = (cs1[hi] - cs1[lo]) / safe
    var = np.clip(energy / safe - mean**2, 0.0, None)
    std = np.sqrt(var)
    empty = count == 0
    energy[empty] = 0.0
    mean[empty] = 0.0
    std[empty] = 0.0
    return energy, mean, std


def band_energy(
    pyramid: WaveletPyramid, n_samples: int, sample_rate_hz: int
) -> dict[int, np.ndarray]:
    """Per-frame detail energy E_j = sum |c_j(n)|^2 for every level."""
    return {
        j: _coeff_frame_stats(pyramid.details[j - 1], j, n_samples, sample_rate_hz)[0]
        for j in range(1, pyramid.levels + 1)
    }


def bandpass_1d(x: np.ndarray, sample_rate_hz: int, lo_hz: float, hi_hz: float) -> np.ndarray:
    """Zero-phase 4th-order Butterworth bandpass of a 1-D signal."""
    nyq = sample_rate_hz / 2.0
    if not (0.0 < lo_hz < hi_hz < nyq):
        raise ValueError(f"band [{lo_hz}, {hi_hz}] must satisfy 0 < lo < hi < {nyq}")
    sos = sps.butter(4, [lo_hz, hi_hz], btype="bandpass", fs=sample_rate_hz, output="sos")
    return sps.sosfiltfilt(sos, np.asarray(x, dtype=np.float64))


def pac(low_band: np.ndarray, high_band: np.ndarray, sample_rate_hz: int) -> float:
    """Phase-amplitude coupling |mean(A_hi_norm * exp(j*phi_lo))| in [0, 1].

    Inputs must already be band-limited. The high-band Hilbert envelope
    is normalized to unit mean, which bounds the result to [0, 1] and
    makes it invariant to positive rescaling of either input.
    """
    low_band = np.asarray(low_band, dtype=np.float64)
    high_band = np.asarray(high_band, dtype=np.float64)
    if low_band.shape != high_band.shape:
        raise ValueError("band signals must have equal length")
    if len(low_band) < 2 * sample_rate_hz:
        raise ValueError("PAC needs at least 2 s of signal")
    if low_band.std() < SIGMA_FLOOR or high_band.std() < SIGMA_FLOOR:
        raise DegenerateSignalError("constant band signal: PAC undefined")
    env = analytic_signal(high_band).amplitude_envelope
    phase = analytic_signal(low_band).instantaneous_phase_rad
    mean_env = env.mean()
    if mean_env < SIGMA_FLOOR:
        raise DegenerateSignalError("zero envelope: PAC undefined")
    value = float(np.abs(np.mean(env / mean_env * np.exp(1j * phase))))
    return min(value, 1.0)


def pac_track(
    low_band: np.ndarray,
    high_band: np.ndarray,
    sample_rate_hz: int,
    window_s: float = 1.0,
) -> np.ndarray:
    """Per-frame PAC over a centered sliding window (unit-mean per window)."""
    env = analytic_signal(high_band).amplitude_envelope
    phase = analytic_signal(low_band).instantaneous_phase_rad
    z = env * np.exp(1j * phase)
    cz = np.concatenate([[0.0 + 0.0j], np.cumsum(z)])
    ce = np.concatenate([[0.0], np.cumsum(env)])
    n = len(env)
    starts = frame_starts(n, sample_rate_hz)
    centers = starts + frame_length(sample_rate_hz) // 2
    half = int(round(window_s * sample_rate_hz / 2))
    lo = np.clip(centers - half, 0, n)
    hi = np.clip(centers + half, 0, n)
    env_sum = ce[hi] - ce[lo]
    z_sum = cz[hi] - cz[lo]
    out = np.zeros(len(starts), dtype=np.float64)
    ok = env_sum > SIGMA_FLOOR
    out[ok] = np.abs(z_sum[ok]) / env_sum[ok]
    return np.minimum(out, 1.0)


def f0_estimate(
    x: np.ndarray,
    sample_rate_hz: int,
    fmin_hz: float = 60.0,
    fmax_hz: float = 400.0,
    voicing_threshold: float = 0.3,
) -> np.ndarray:
    """Per-frame F0 via normalized autocorrelation; 0 marks unvoiced frames.

    The smallest lag among near-maximal autocorrelation peaks is taken
    to avoid octave-down errors, then refined by parabolic interpolation.
    """
    if sample_rate_hz < 2 * fmax_hz:
        raise ValueError("sample rate must be at least twice fmax")
    frames = frame_signal(np.asarray(x, dtype=np.float64), sample_rate_hz)
    n_frames, flen = frames.shape
    lag_min = max(2, int(np.floor(sample_rate_hz / fmax_hz)))
    lag_max = min(flen - 2, int(np.ceil(sample_rate_hz / fmin_hz)))
    if lag_max <= lag_min:
        return np.zeros(n_frames)

    frames = frames - frames.mean(axis=1, keepdims=True)
    nfft = 1 << int(np.ceil(np.log2(2 * flen)))
    spec = np.fft.rfft(frames, n=nfft, axis=1)
    raw_ac = np.fft.irfft(spec * np.conj(spec), n=nfft, axis=1)[:, :flen]
    sq = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(frames**2, axis=1)], axis=1)
    total = sq[:, -1]

    f0 = np.zeros(n_frames)
    lags = np.arange(lag_min, lag_max + 1)
    # norm(tau) = sqrt(sum x[0:n-tau]^2 * sum x[tau:n]^2)
    head = np.stack([sq[:, flen - tau] for tau in lags], axis=1)
    tail = np.stack([total - sq[:, tau] for tau in lags], axis=1)
    denom = np.sqrt(np.maximum(head * tail, 1e-300))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = raw_ac[:, lag_min : lag_max + 1] / denom
    r[~np.isfinite(r)] = 0.0

    for i in range(n_frames):
        if total[i] < SIGMA_FLOOR**2:
            continue
        ri = r[i]
        peak_val = ri.max()
        if peak_val < voicing_threshold:
            continue
        interior = np.flatnonzero(
            (ri[1:-1] >= ri[:-2]) & (ri[1:-1] >= ri[2:]) & (ri[1:-1] >= 0.9 * peak_val)
        )
        if len(interior) == 0:
            k = int(np.argmax(ri))
        else:
            k = int(interior[0]) + 1
        tau = float(lags[k])
        if 0 < k < len(ri) - 1:
            denom_p = ri[k - 1] - 2 * ri[k] + ri[k + 1]
            if abs(denom_p) > 1e-12:
                delta = 0.5 * (ri[k - 1] - ri[k + 1]) / denom_p
                tau += float(np.clip(delta, -0.5, 0.5))
        f0[i] = sample_rate_hz / tau
    return f0


@dataclass(frozen=True)
class ProsodyFrame:
    f0_hz: float
    energy_rms: float
    shimmer: float
    duration_ms: float
    phase_variability: float

    def __post_init__(self):
        for name in ("f0_hz", "energy_rms", "shimmer", "duration_ms", "phase_variability"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")


PROSODY_COLUMNS = ("f0_hz", "energy_rms", "shimmer", "duration_ms", "phase_variability")


class ProsodyTrack:
    """Array-backed sequence of :class:`ProsodyFrame`."""

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != len(PROSODY_COLUMNS):
            raise ValueError(f"prosody track must be T x {len(PROSODY_COLUMNS)}")
        self.data = data

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, t: int) -> ProsodyFrame:
        return ProsodyFrame(*self.data[t])

    def __iter__(self):
        for t in range(len(self)):
            yield self[t]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, PROSODY_COLUMNS.index(name)]


def prosody_track(x: np.ndarray, sample_rate_hz: int) -> ProsodyTrack:
    """F0, RMS energy, shimmer, voiced-run duration, and theta phase jitter per frame."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    n_frames = frame_count(n, sample_rate_hz)
    if n_frames == 0:
        return ProsodyTrack(np.zeros((0, len(PROSODY_COLUMNS))))
    frames = frame_signal(x, sample_rate_hz)
    flen = frames.shape[1]

    f0 = f0_estimate(x, sample_rate_hz)

    energy = np.sqrt(np.mean(frames**2, axis=1))

    # Shimmer from peak amplitudes of 10 ms sub-frames.
    sub_len = max(1, int(round(0.01 * sample_rate_hz)))
    n_sub = flen // sub_len
    peaks = np.abs(frames[:, : n_sub * sub_len]).reshape(n_frames, n_sub, sub_len).max(axis=2)
    mean_peak = peaks.mean(axis=1)
    diffs = np.abs(np.diff(peaks, axis=1)).mean(axis=1) if n_sub > 1 else np.zeros(n_frames)
    shimmer = np.where(mean_peak >= SIGMA_FLOOR, diffs / np.maximum(mean_peak, SIGMA_FLOOR), 0.0)

    # Duration of the voiced run (VAD segment) containing each frame.
    segments = vad(Waveform(samples=x, sample_rate_hz=sample_rate_hz))
    starts = frame_starts(n, sample_rate_hz)
    centers = starts + frame_length(sample_rate_hz) // 2
    duration = np.zeros(n_frames)
    for onset, offset in segments:
        inside = (centers >= onset) & (centers < offset)
        duration[inside] = (offset - onset) / sample_rate_hz * 1000.0

    # Theta-band instantaneous-phase jitter.
    theta = bandpass_1d(x, sample_rate_hz, *THETA_HZ)
    phase = np.unwrap(np.angle(sps.hilbert(theta)))
    dphase = np.diff(phase, prepend=phase[:1])
    dframes = frame_signal(dphase, sample_rate_hz)
    phase_var = dframes.std(axis=1)

    data = np.column_stack([f0, energy, shimmer, duration, phase_var])
    return ProsodyTrack(np.clip(data, 0.0, None))


@dataclass(frozen=True)
class FeatureMatrix:
    """Frames x named-columns feature block at the 100 Hz frame rate."""

    data: np.ndarray
    columns: tuple[str, ...]
    frame_rate_hz: int = FRAME_RATE_HZ

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2 or data.shape[1] != len(self.columns):
            raise ValueError("data width must match column count")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("column names must be unique")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature matrix contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_columns(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class NormalizationStats:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64))
        sigma = np.maximum(np.asarray(self.sigma, dtype=np.float64), SIGMA_FLOOR)
        object.__setattr__(self, "sigma", sigma)


def normalize_features(
    m: FeatureMatrix, stats: NormalizationStats | None = None
) -> tuple[FeatureMatrix, NormalizationStats]:
    """Column z-scoring; pass stats from the training folds to replay them."""
    if stats is None:
        if m.n_frames < 2:
            raise ValueError("need at least 2 frames to fit normalization stats")
        stats = NormalizationStats(
            mu=m.data.mean(axis=0), sigma=np.maximum(m.data.std(axis=0), SIGMA_FLOOR)
        )
    if len(stats.mu) != m.n_columns:
        raise ValueError("stats dimensionality does not match the feature matrix")
    normalized = (m.data - stats.mu) / stats.sigma
    return FeatureMatrix(data=normalized, columns=m.columns), stats


@dataclass(frozen=True)
class ProsodyEmbeddingInputs:
    """Framed theta/beta coefficient statistics feeding the prosody embedding."""

    c_theta: np.ndarray
    c_beta: np.ndarray
    theta_columns: tuple[str, ...]
    beta_columns: tuple[str, ...]


def prosody_embedding_inputs(
    pyramids: list[WaveletPyramid],
    bands: BandAssignment,
    n_samples: int,
    sample_rate_hz: int,
    channel_labels: tuple[str, ...] | None = None,
) -> ProsodyEmbeddingInputs:
    """Per-frame (mean, std) of theta- and beta-level coefficients per channel."""
    if channel_labels is None:
        channel_labels = tuple(f"ch{i:02d}" for i in range(len(pyramids)))

    def stats_block(levels: tuple[int, ...]) -> tuple[np.ndarray, tuple[str, ...]]:
        cols, names = [], []
        for ch, pyr in enumerate(pyramids):
            for j in levels:
                if j > pyr.levels:
                    raise ValueError(f"band level {j} missing from pyramid with {pyr.levels} levels")
                _, mean, std = _coeff_frame_stats(
                    pyr.details[j - 1], j, n_samples, sample_rate_hz
                )
                cols.extend([mean, std])
                names.extend(
                    [f"{channel_labels[ch]}.lvl{j}.coef_mean", f"{channel_labels[ch]}.lvl{j}.coef_std"]
                )
        return np.column_stack(cols), tuple(names)

    c_theta, theta_names = stats_block(bands.theta)
    c_beta, beta_names = stats_block(bands.beta)
    return ProsodyEmbeddingInputs(
        c_theta=c_theta, c_beta=c_beta, theta_columns=theta_names, beta_columns=beta_names
    )


@dataclass(frozen=True)
class ChannelFeatures:
    """Everything the model consumes for one trial."""

    matrix: FeatureMatrix
    prosody_inputs: ProsodyEmbeddingInputs


def extract_features(
    rec: MultiChannelRecording, levels: int = 7, bands: BandAssignment | None = None
) -> ChannelFeatures:
    """Full per-trial feature extraction on the shared 100 Hz frame grid."""
    if bands is None:
        bands = assign_bands(rec.sample_rate_hz, levels)
    n = rec.n_samples
    block = 2**levels
    pad = (-n) % block
    columns: list[np.ndarray] = []
    names: list[str] = []
    pyramids: list[WaveletPyramid] = []
    nyq = rec.sample_rate_hz / 2.0
    gamma_hi = min(HIGH_GAMMA_HZ[1], 0.95 * nyq)
    for ch in range(rec.n_channels):
        x = rec.data[ch]
        padded = np.concatenate([x, np.zeros(pad)]) if pad else x
        pyr = dwt_decompose(padded, levels)
        pyramids.append(pyr)
        energies = band_energy(pyr, n, rec.sample_rate_hz)
        for j in range(1, levels + 1):
            columns.append(energies[j])
            names.append(f"{rec.channel_labels[ch]}.lvl{j}.energy")
        theta = bandpass_1d(x, rec.sample_rate_hz, *THETA_HZ)
        gamma = bandpass_1d(x, rec.sample_rate_hz, HIGH_GAMMA_HZ[0], gamma_hi)
        columns.append(pac_track(theta, gamma, rec.sample_rate_hz))
        names.append(f"{rec.channel_labels[ch]}.pac")
    broadband = rec.data.mean(axis=0)
    prosody = prosody_track(broadband, rec.sample_rate_hz)
    for i, col in enumerate(PROSODY_COLUMNS):
        columns.append(prosody.data[:, i])
        names.append(f"prosody.{col}")
    matrix = FeatureMatrix(data=np.column_stack(columns), columns=tuple(names))
    inputs = prosody_embedding_inputs(
        pyramids, bands, n, rec.sample_rate_hz, rec.channel_labels
    )
    return ChannelFeatures(matrix=matrix, prosody_inputs=inputs)
