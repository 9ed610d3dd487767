"""Waveform synthesis from predicted mel spectrograms.

Mel inversion to linear magnitude, the Griffin-Lim baseline, and an
iterative harmonic phase reconstruction (IHPR) loop that augments each
Griffin-Lim projection with two phase refinements: per-frame circular-
mean anchoring of the harmonic-bin phases, and a derivative-based
smoothing step across frequency. A weighted spectral + phase-stability
loss tracks convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import ComplexSpectrogram, MelSpectrogram, StftConfig, Waveform, istft, stft, wrap_phase
from .dsp import LOG_MEL_FLOOR

MAG_FLOOR = 1e-8


@dataclass(frozen=True)
class VocoderConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    sample_rate_hz: int = 16000
    gl_iterations: int = 60
    ihpr_iterations: int = 32
    warmup_gl_iterations: int = 8
    max_harmonics: int = 20
    smoothing_lambda: float = 0.1
    phase_gamma: float = 0.01
    harmonic_coherence: float = 1.0
    mainlobe_halfwidth: int = 2
    convergence_tol: float = 1e-4

    def __post_init__(self):
        if min(self.gl_iterations, self.ihpr_iterations, self.max_harmonics) < 1:
            raise ValueError("iteration and harmonic counts must be positive")
        if self.smoothing_lambda < 0 or self.phase_gamma < 0 or self.convergence_tol < 0:
            raise ValueError("lambda, gamma, and tolerance must be nonnegative")
        if not (0.0 <= self.harmonic_coherence <= 1.0):
            raise ValueError("harmonic_coherence must lie in [0, 1]")
        if self.mainlobe_halfwidth < 0:
            raise ValueError("mainlobe_halfwidth must be nonnegative")


@dataclass
class PhaseState:
    """Working phase matrix of the IHPR loop, wrapped to (-pi, pi]."""

    phase: np.ndarray
    iteration: int = 0
    loss: float = 0.0

    def __post_init__(self):
        self.phase = np.asarray(wrap_phase(np.asarray(self.phase, dtype=np.float64)))
        if self.loss < 0:
            raise ValueError("loss must be nonnegative")


@dataclass(frozen=True)
class HarmonicGrid:
    """Per-frame harmonic FFT-bin indices derived from an F0 track."""

    f0_hz: np.ndarray
    bins: tuple[np.ndarray, ...]

    @property
    def n_frames(self) -> int:
        return len(self.bins)

    def voiced(self, t: int) -> bool:
        return len(self.bins[t]) > 0


def build_harmonic_grid(
    f0_track: np.ndarray, cfg: VocoderConfig, n_bins: int
) -> HarmonicGrid:
    """Bins of f_h = h * f0 for h = 1..H, H capped and kept below Nyquist.

    Bins are clipped to [1, n_bins - 2] so the smoothing step always has
    both frequency neighbors; duplicates after rounding are dropped.
    """
    f0_track = np.asarray(f0_track, dtype=np.float64)
    bin_width = cfg.sample_rate_hz / cfg.stft.fft_size
    nyquist = cfg.sample_rate_hz / 2.0
    per_frame: list[np.ndarray] = []
    for f0 in f0_track:
        if f0 <= 0:
            per_frame.append(np.empty(0, dtype=np.int64))
            continue
        n_harm = min(cfg.max_harmonics, int(np.floor((nyquist - 1e-9) / f0)))
        if n_harm < 1:
            per_frame.append(np.empty(0, dtype=np.int64))
            continue
        harmonics = f0 * np.arange(1, n_harm + 1)
        bins = np.round(harmonics / bin_width).astype(np.int64)
        bins = np.unique(bins[(bins >= 1) & (bins <= n_bins - 2)])
        per_frame.append(bins)
    return HarmonicGrid(f0_hz=f0_track, bins=tuple(per_frame))


def frequency_weights(sample_rate_hz: int, fft_size: int) -> np.ndarray:
    """Raised-cosine emphasis: 1 on 300-3400 Hz, tapering to 0.5 at DC/Nyquist."""
    freqs = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    nyquist = sample_rate_hz / 2.0
    w = np.ones_like(freqs)
    low = freqs < 300.0
    w[low] = 0.75 - 0.25 * np.cos(np.pi * freqs[low] / 300.0)
    if nyquist > 3400.0:
        high = freqs > 3400.0
        w[high] = 0.75 + 0.25 * np.cos(np.pi * (freqs[high] - 3400.0) / (nyquist - 3400.0))
    return w


def mel_to_magnitude(mel: MelSpectrogram, filterbank: np.ndarray) -> np.ndarray:
    """Recover linear magnitude via the filterbank pseudo-inverse, clamped at 0."""
    filterbank = np.asarray(filterbank, dtype=np.float64)
    power = mel.data
    if mel.log_scale:
        power = np.clip(np.exp(power) - LOG_MEL_FLOOR, 0.0, None)
    if filterbank.shape[0] != power.shape[1]:
        raise ValueError(
            f"filterbank rows {filterbank.shape[0]} != mel bins {power.shape[1]}"
        )
    recovered = np.clip(power @ np.linalg.pinv(filterbank).T, 0.0, None)
    return np.sqrt(recovered)


def _synthesize(magnitude: np.ndarray, phase: np.ndarray, cfg: VocoderConfig) -> Waveform:
    spec = ComplexSpectrogram(
        data=magnitude * np.exp(1j * phase), config=cfg.stft, sample_rate_hz=cfg.sample_rate_hz
    )
    return istft(spec)


def _spectral_convergence(current_mag: np.ndarray, target_mag: np.ndarray) -> float:
    denom = np.linalg.norm(target_mag)
    if denom < 1e-300:
        return 0.0
    return float(np.linalg.norm(current_mag - target_mag) / denom)


def griffin_lim(
    magnitude: np.ndarray, cfg: VocoderConfig = VocoderConfig(), iterations: int | None = None
) -> tuple[Waveform, np.ndarray]:
    """Alternating-projection phase retrieval from STFT magnitude.

    Returns the waveform and the per-iteration spectral convergence
    ||  |STFT(x_k)| - magnitude ||_F / ||magnitude||_F, which is
    non-increasing up to numerical slack.
    """
    magnitude = np.asarray(magnitude, dtype=np.float64)
    if np.any(magnitude < 0):
        raise ValueError("magnitude must be nonnegative")
    if iterations is None:
        iterations = cfg.gl_iterations
    x = _synthesize(magnitude, np.zeros_like(magnitude), cfg)
    sc = np.zeros(iterations)
    for k in range(iterations):
        spec = stft(x, cfg.stft)
        sc[k] = _spectral_convergence(spec.magnitude, magnitude)
        x = _synthesize(magnitude, spec.phase, cfg)
    return x, sc


def ihpr_harmonic_update(
    state: PhaseState, grid: HarmonicGrid, spec: ComplexSpectrogram, gamma: float = 0.01
) -> PhaseState:
    """Re-anchor each voiced frame's harmonic phases to their circular mean.

    The anchor phi* = arg(sum_h exp(j*theta_h)) maximizes
    sum_h cos(phi - theta_h); each harmonic keeps (1 - gamma) of its
    deviation from the anchor. Unvoiced frames and non-harmonic bins are
    untouched.
    """
    phase = state.phase.copy()
    spec_phase = spec.phase
    for t in range(min(grid.n_frames, phase.shape[0])):
        bins = grid.bins[t]
        if len(bins) == 0:
            continue
        theta = spec_phase[t, bins]
        resultant = np.exp(1j * theta).sum()
        if np.abs(resultant) < 1e-12:
            continue
        anchor = np.angle(resultant)
        deviation = wrap_phase(theta - anchor)
        phase[t, bins] = wrap_phase(anchor + (1.0 - gamma) * deviation)
    return PhaseState(phase=phase, iteration=state.iteration, loss=state.loss)


def ihpr_smooth(
    state: PhaseState, magnitude: np.ndarray, grid: HarmonicGrid, smoothing_lambda: float = 0.1
) -> PhaseState:
    """Derivative-based phase correction at harmonic bins.

    With Z = M * exp(j*phi), each harmonic bin moves by
    -lambda * Im[(Z[b+1] - Z[b-1]) / 2] / max(M[b], 1e-8).
    """
    if smoothing_lambda == 0.0:
        return PhaseState(phase=state.phase.copy(), iteration=state.iteration, loss=state.loss)
    phase = state.phase.copy()
    z = magnitude * np.exp(1j * phase)
    for t in range(min(grid.n_frames, phase.shape[0])):
        bins = grid.bins[t]
        if len(bins) == 0:
            continue
        derivative = (z[t, bins + 1] - z[t, bins - 1]) / 2.0
        step = smoothing_lambda * derivative.imag / np.maximum(magnitude[t, bins], MAG_FLOOR)
        phase[t, bins] = wrap_phase(phase[t, bins] - step)
    return PhaseState(phase=phase, iteration=state.iteration, loss=state.loss)


def ihpr_time_align(
    state: PhaseState,
    magnitude: np.ndarray,
    grid: HarmonicGrid,
    cfg: VocoderConfig,
) -> PhaseState:
    """Align each harmonic's phase trajectory across voiced frames.

    Per harmonic h, the working phases at h*f0 are demodulated by the
    accumulated frame-to-frame phase advance (and the analysis window's
    group delay); their magnitude-weighted circular mean gives the
    harmonic's source phase, from which a temporally coherent phase
    model is rebuilt over the harmonic's spectral mainlobe. Deviations
    from the model keep a (1 - harmonic_coherence) fraction. Without
    this step the per-frame anchoring alone leaves overlapping frames
    free to cancel each other's harmonic energy in the overlap-add.
    """
    coherence = cfg.harmonic_coherence
    if coherence <= 0.0:
        return PhaseState(phase=state.phase.copy(), iteration=state.iteration, loss=state.loss)
    phase = state.phase.copy()
    n_frames, n_bins = phase.shape
    f0 = grid.f0_hz[:n_frames]
    fs = cfg.sample_rate_hz
    fft_size = cfg.stft.fft_size
    hop = cfg.stft.hop_samples
    group_delay = (cfg.stft.window_len_samples - 1) / 2.0
    bin_width = fs / fft_size
    nyquist = fs / 2.0
    # accumulated fundamental cycles up to each frame start
    cum_f0 = np.concatenate([[0.0], np.cumsum(f0)])[:n_frames]
    for h in range(1, cfg.max_harmonics + 1):
        centers = np.round(h * f0 / bin_width).astype(np.int64)
        usable = (f0 > 0) & (h * f0 < nyquist - 1e-9) & (centers >= 1) & (centers <= n_bins - 2)
        frames = np.flatnonzero(usable)
        if len(frames) < 2:
            continue
        omega = 2.0 * np.pi * h * f0[frames] / fs
        advance = 2.0 * np.pi * h * cum_f0[frames] * hop / fs
        cb = centers[frames]
        ramp = (2.0 * np.pi * cb / fft_size - omega) * group_delay
        demod = wrap_phase(phase[frames, cb] - advance + ramp)
        resultant = (magnitude[frames, cb] * np.exp(1j * demod)).sum()
        if np.abs(resultant) < 1e-12:
            continue
        source_phase = float(np.angle(resultant))
        for offset in range(-cfg.mainlobe_halfwidth, cfg.mainlobe_halfwidth + 1):
            bins = cb + offset
            ok = (bins >= 0) & (bins < n_bins)
            if not np.any(ok):
                continue
            theta = 2.0 * np.pi * bins[ok] / fft_size
            model = source_phase + advance[ok] - (theta - omega[ok]) * group_delay
            deviation = wrap_phase(phase[frames[ok], bins[ok]] - model)
            phase[frames[ok], bins[ok]] = wrap_phase(model + (1.0 - coherence) * deviation)
    return PhaseState(phase=phase, iteration=state.iteration, loss=state.loss)


def perceptual_loss(
    target_mag: np.ndarray,
    current: ComplexSpectrogram,
    prev_phase: np.ndarray,
    weights: np.ndarray,
    gamma: float,
    grid: HarmonicGrid | None = None,
) -> float:
    """Weighted magnitude mismatch plus a phase-stability penalty.

    The reconstruction magnitude is measured after a synthesis round
    trip |STFT(ISTFT(current))|; the phase term sums the wrapped
    per-iteration phase change over harmonic bins, scaled by gamma.
    """
    target_mag = np.asarray(target_mag, dtype=np.float64)
    if current.data.shape != target_mag.shape or prev_phase.shape != target_mag.shape:
        raise ValueError("loss inputs must share the spectrogram shape")
    reconst = stft(istft(current), current.config).magnitude
    if reconst.shape[0] != target_mag.shape[0]:
        reconst = reconst[: target_mag.shape[0]]
    mag_term = float(np.sum(weights[None, :] * (target_mag - reconst) ** 2))
    phase_term = 0.0
    if gamma > 0 and grid is not None:
        cur_phase = current.phase
        for t in range(min(grid.n_frames, cur_phase.shape[0])):
            bins = grid.bins[t]
            if len(bins) == 0:
                continue
            delta = wrap_phase(cur_phase[t, bins] - prev_phase[t, bins])
            phase_term += float(np.sum(np.asarray(delta) ** 2))
    return mag_term + gamma * phase_term


@dataclass(frozen=True)
class VocodeResult:
    waveform: Waveform
    losses: np.ndarray
    spectral_convergence: np.ndarray


def ihpr_vocode(
    magnitude: np.ndarray, f0_track: np.ndarray, cfg: VocoderConfig = VocoderConfig()
) -> VocodeResult:
    """Iterative harmonic phase reconstruction.

    A short Griffin-Lim warm start, then per iteration: magnitude
    projection, harmonic circular-mean anchoring, per-harmonic
    trajectory alignment, derivative smoothing, and a loss evaluation;
    stops early when the relative loss change drops below the
    configured tolerance. With an empty harmonic grid every refinement
    is a no-op and the loop is exactly Griffin-Lim.
    """
    magnitude = np.asarray(magnitude, dtype=np.float64)
    if np.any(magnitude < 0):
        raise ValueError("magnitude must be nonnegative")
    if len(f0_track) != magnitude.shape[0]:
        raise ValueError("f0 track length must equal the frame count")
    grid = build_harmonic_grid(f0_track, cfg, magnitude.shape[1])
    weights = frequency_weights(cfg.sample_rate_hz, cfg.stft.fft_size)

    x = _synthesize(magnitude, np.zeros_like(magnitude), cfg)
    for _ in range(cfg.warmup_gl_iterations):
        x = _synthesize(magnitude, stft(x, cfg.stft).phase, cfg)

    prev_phase = np.zeros_like(magnitude)
    losses: list[float] = []
    sc: list[float] = []
    state = PhaseState(phase=np.zeros_like(magnitude))
    for k in range(cfg.ihpr_iterations):
        spec = stft(x, cfg.stft)
        sc.append(_spectral_convergence(spec.magnitude, magnitude))
        state = PhaseState(phase=spec.phase, iteration=k)
        state = ihpr_harmonic_update(state, grid, spec, cfg.phase_gamma)
        state = ihpr_time_align(state, magnitude, grid, cfg)
        state = ihpr_smooth(state, magnitude, grid, cfg.smoothing_lambda)
        current = ComplexSpectrogram(
            data=magnitude * np.exp(1j * state.phase),
            config=cfg.stft,
            sample_rate_hz=cfg.sample_rate_hz,
        )
        loss = perceptual_loss(magnitude, current, prev_phase, weights, cfg.phase_gamma, grid)
        losses.append(loss)
        prev_phase = state.phase
        x = istft(current)
        if k >= 1 and cfg.convergence_tol > 0:
            prev_loss = losses[-2]
            if prev_loss > 0 and abs(prev_loss - loss) / prev_loss < cfg.convergence_tol:
                break
    return VocodeResult(
        waveform=x, losses=np.asarray(losses), spectral_convergence=np.asarray(sc)
    )
