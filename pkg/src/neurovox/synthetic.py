"""Synthetic paired neural/audio trials with known ground truth.

Each trial is driven by a smooth latent articulation trajectory:
  * audio: a harmonic source (vibrato F0 contour, voiced/unvoiced gate)
    shaped by two articulation-driven formant resonances, plus noise;
  * neural channels: half carry a theta rhythm whose phase modulates a
    gamma carrier's envelope with the configured coupling strength, half
    carry beta/broadband activity tracking articulation and voicing;
    mains interference is added so the notch stage has work to do.

The recorded metadata (true F0 contour, voiced mask, articulation,
coupling) provides oracles for feature extraction, alignment, and
evaluation tests. Generation is deterministic for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .autodiff import named_rng
from .dsp import FRAME_RATE_HZ, Waveform
from .preprocess import MultiChannelRecording


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    n_trials: int = 10
    trial_seconds: float = 4.0
    channels: int = 16
    neural_fs: int = 1024
    audio_fs: int = 16000
    coupling_strength: float = 0.8
    f0_base_hz: float = 120.0
    f0_vibrato_depth_hz: float = 6.0
    f0_vibrato_rate_hz: float = 2.5
    harmonics: int = 10
    noise_level: float = 0.03

    def __post_init__(self):
        if min(self.n_trials, self.channels, self.neural_fs, self.audio_fs, self.harmonics) < 1:
            raise ValueError("counts and rates must be positive")
        if self.trial_seconds <= 0 or self.noise_level < 0:
            raise ValueError("trial_seconds must be positive, noise_level nonnegative")
        if not (0.0 <= self.coupling_strength <= 1.0):
            raise ValueError("coupling_strength must lie in [0, 1]")
        if self.f0_base_hz - self.f0_vibrato_depth_hz <= 0:
            raise ValueError("vibrato depth must stay below the base F0")


@dataclass(frozen=True)
class TrialTruth:
    """Generator-side ground truth for one trial."""

    coupling_strength: float
    f0_track_hz: np.ndarray
    voiced: np.ndarray
    articulation: np.ndarray
    coupled_channels: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "coupling_strength": self.coupling_strength,
            "f0_track_hz": [round(float(v), 6) for v in self.f0_track_hz],
            "voiced": [bool(v) for v in self.voiced],
            "articulation": [round(float(v), 6) for v in self.articulation],
            "coupled_channels": list(self.coupled_channels),
        }


@dataclass(frozen=True)
class SyntheticTrial:
    neural: MultiChannelRecording
    audio: Waveform
    truth: TrialTruth


def _smooth_trajectory(rng: np.random.Generator, n_frames: int, cutoff_hz: float = 0.8) -> np.ndarray:
    """Slow random trajectory in [0, 1] at the 100 Hz frame rate."""
    raw = rng.standard_normal(n_frames + 200)
    sos = sps.butter(2, cutoff_hz, btype="lowpass", fs=FRAME_RATE_HZ, output="sos")
    smooth = sps.sosfiltfilt(sos, raw)[100:-100]
    span = smooth.max() - smooth.min()
    if span < 1e-12:
        return np.full(n_frames, 0.5)
    return (smooth - smooth.min()) / span


def _resonance_gain(freq_hz: np.ndarray, center_hz: np.ndarray, bandwidth_hz: float) -> np.ndarray:
    return 1.0 / (1.0 + ((freq_hz - center_hz) / bandwidth_hz) ** 2)


def _upsample(frames: np.ndarray, n_samples: int, fs: int) -> np.ndarray:
    t_frames = np.arange(len(frames)) / FRAME_RATE_HZ
    t = np.arange(n_samples) / fs
    return np.interp(t, t_frames, frames)


def generate_trial(spec: SyntheticSpec, trial_index: int) -> SyntheticTrial:
    rng = named_rng(spec.seed, f"trial-{trial_index}")
    n_frames = int(round(spec.trial_seconds * FRAME_RATE_HZ))
    n_audio = int(round(spec.trial_seconds * spec.audio_fs))
    n_neural = int(round(spec.trial_seconds * spec.neural_fs))

    articulation = _smooth_trajectory(rng, n_frames)

    # Voicing gate: slow oscillation with per-trial phase; ~2/3 duty.
    t_frames = np.arange(n_frames) / FRAME_RATE_HZ
    gate_phase = rng.uniform(0, 2 * np.pi)
    voiced = np.sin(2 * np.pi * 0.4 * t_frames + gate_phase) > -0.45

    f0_track = np.where(
        voiced,
        spec.f0_base_hz
        + spec.f0_vibrato_depth_hz
        * np.sin(2 * np.pi * spec.f0_vibrato_rate_hz * t_frames + rng.uniform(0, 2 * np.pi)),
        0.0,
    )

    # ---- audio -----------------------------------------------------------
    t_audio = np.arange(n_audio) / spec.audio_fs
    f0_audio = _upsample(np.where(voiced, f0_track, spec.f0_base_hz), n_audio, spec.audio_fs)
    phase0 = 2 * np.pi * np.cumsum(f0_audio) / spec.audio_fs
    art_audio = _upsample(articulation, n_audio, spec.audio_fs)
    gate_audio = _upsample(voiced.astype(np.float64), n_audio, spec.audio_fs)
    # 20 ms raised-cosine edges avoid clicks at voicing boundaries
    edge = sps.windows.hann(int(0.04 * spec.audio_fs) | 1)
    gate_audio = np.convolve(gate_audio, edge / edge.sum(), mode="same")

    formant1 = 300.0 + 600.0 * art_audio
    formant2 = 1200.0 + 1400.0 * art_audio
    source = np.zeros(n_audio)
    for h in range(1, spec.harmonics + 1):
        freq_h = h * f0_audio
        gain = 0.75**h * (
            _resonance_gain(freq_h, formant1, 150.0) + 0.7 * _resonance_gain(freq_h, formant2, 250.0)
        )
        source += gain * np.sin(h * phase0 + rng.uniform(0, 2 * np.pi))
    audio = gate_audio * source
    peak = np.abs(audio).max()
    if peak > 0:
        audio = 0.6 * audio / peak
    audio = audio + spec.noise_level * 0.1 * rng.standard_normal(n_audio)

    # ---- neural ----------------------------------------------------------
    t_neural = np.arange(n_neural) / spec.neural_fs
    art_neural = _upsample(articulation, n_neural, spec.neural_fs)
    gate_neural = _upsample(voiced.astype(np.float64), n_neural, spec.neural_fs)
    theta_phase = 2 * np.pi * 6.0 * t_neural + rng.uniform(0, 2 * np.pi)
    coupled = tuple(range(spec.channels // 2))
    data = np.zeros((spec.channels, n_neural))
    for ch in range(spec.channels):
        mains = 0.15 * np.sin(2 * np.pi * 50.0 * t_neural + rng.uniform(0, 2 * np.pi))
        if ch in coupled:
            # Background kept small here: broadband noise in the gamma band
            # dilutes the measured coupling below its constructed value.
            background = 0.06 * rng.standard_normal(n_neural)
            carrier_hz = 110.0 + 5.0 * ch
            carrier = np.sin(2 * np.pi * carrier_hz * t_neural + rng.uniform(0, 2 * np.pi))
            envelope = 0.5 * (1.0 + spec.coupling_strength * np.cos(theta_phase))
            envelope = envelope * (0.6 + 0.4 * art_neural)
            data[ch] = 0.6 * np.sin(theta_phase) + envelope * carrier + background + mains
        else:
            background = 0.25 * rng.standard_normal(n_neural)
            beta = (0.3 + 0.7 * (1.0 - art_neural)) * np.sin(
                2 * np.pi * 21.0 * t_neural + rng.uniform(0, 2 * np.pi)
            )
            hg_noise = rng.standard_normal(n_neural)
            sos = sps.butter(4, [70.0, 170.0], btype="bandpass", fs=spec.neural_fs, output="sos")
            high_gamma = sps.sosfiltfilt(sos, hg_noise) * (0.3 + 0.9 * art_neural * gate_neural)
            data[ch] = beta + 1.5 * high_gamma + background + mains

    neural = MultiChannelRecording(data=data, sample_rate_hz=spec.neural_fs)
    truth = TrialTruth(
        coupling_strength=spec.coupling_strength,
        f0_track_hz=f0_track,
        voiced=voiced,
        articulation=articulation,
        coupled_channels=coupled,
    )
    return SyntheticTrial(
        neural=neural, audio=Waveform(samples=audio, sample_rate_hz=spec.audio_fs), truth=truth
    )


def generate_synthetic(spec: SyntheticSpec) -> list[SyntheticTrial]:
    """All trials for a spec; deterministic per (seed, trial index)."""
    return [generate_trial(spec, i) for i in range(spec.n_trials)]
