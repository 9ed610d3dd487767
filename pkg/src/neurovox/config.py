"""Pipeline configuration: a flat `key = value` text format.

Every key has a documented default below; unknown keys are hard errors
so configs cannot drift silently. Cross-field consistency (the 100 Hz
frame-rate contract between the neural feature grid and the audio STFT
grid, fold counts, band limits) is validated before any compute runs.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .dsp import FRAME_RATE_HZ, MelParams, StftConfig
from .model import TrainingConfig, TransformerConfig
from .synthetic import SyntheticSpec
from .vocoder import VocoderConfig


class ConfigError(ValueError):
    """Invalid or inconsistent pipeline configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    folds: int = 10

    # synthetic data
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

    # features
    wavelet_levels: int = 7

    # spectrogram framing / mel axis
    stft_window: int = 800
    stft_hop: int = 160
    stft_fft: int = 1024
    mel_bins: int = 40
    fmin_hz: float = 50.0
    fmax_hz: float = 7600.0

    # model
    ae_hidden: int = 128
    ae_latent: int = 64
    ae_epochs: int = 60
    epochs: int = 60
    batch_size: int = 4
    lr: float = 0.001
    d_model: int = 64
    heads: int = 4
    layers: int = 2
    ffn_dim: int = 256
    dropout: float = 0.1
    max_seq_len: int = 512
    embed_dim: int = 16

    # vocoder
    gl_iterations: int = 60
    ihpr_iterations: int = 32
    warmup_gl_iterations: int = 8
    max_harmonics: int = 20
    smoothing_lambda: float = 0.1
    phase_gamma: float = 0.01
    harmonic_coherence: float = 1.0
    convergence_tol: float = 1e-4

    def validate(self) -> None:
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.n_trials < self.folds:
            raise ConfigError(f"n_trials ({self.n_trials}) must be >= folds ({self.folds})")
        if self.audio_fs % self.stft_hop:
            raise ConfigError("stft_hop must divide the audio sample rate")
        if self.audio_fs // self.stft_hop != FRAME_RATE_HZ:
            raise ConfigError(
                f"frame-rate mismatch: audio_fs/stft_hop = {self.audio_fs / self.stft_hop:g} Hz, "
                f"features run at {FRAME_RATE_HZ} Hz"
            )
        if not (0 <= self.fmin_hz < self.fmax_hz <= self.audio_fs / 2):
            raise ConfigError("mel band must satisfy 0 <= fmin < fmax <= Nyquist")
        if self.trial_seconds * self.neural_fs < 2**self.wavelet_levels:
            raise ConfigError("trials too short for the configured wavelet depth")
        # constructor validation of the sub-configs
        self.stft_config()
        self.training_config()
        self.transformer_config()
        self.vocoder_config()
        self.synthetic_spec()

    def stft_config(self) -> StftConfig:
        return StftConfig(
            window_len_samples=self.stft_window,
            hop_samples=self.stft_hop,
            fft_size=self.stft_fft,
        )

    def mel_params(self) -> MelParams:
        return MelParams(mel_bins=self.mel_bins, fmin_hz=self.fmin_hz, fmax_hz=self.fmax_hz)

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            seed=self.seed,
            n_trials=self.n_trials,
            trial_seconds=self.trial_seconds,
            channels=self.channels,
            neural_fs=self.neural_fs,
            audio_fs=self.audio_fs,
            coupling_strength=self.coupling_strength,
            f0_base_hz=self.f0_base_hz,
            f0_vibrato_depth_hz=self.f0_vibrato_depth_hz,
            f0_vibrato_rate_hz=self.f0_vibrato_rate_hz,
            harmonics=self.harmonics,
            noise_level=self.noise_level,
        )

    def training_config(self, seed_offset: int = 0) -> TrainingConfig:
        return TrainingConfig(
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed + seed_offset,
            folds=self.folds,
        )

    def transformer_config(self, seed_offset: int = 0) -> TransformerConfig:
        return TransformerConfig(
            d_model=self.d_model,
            heads=self.heads,
            layers=self.layers,
            ffn_dim=self.ffn_dim,
            dropout=self.dropout,
            max_seq_len=self.max_seq_len,
            seed=self.seed + seed_offset,
        )

    def vocoder_config(self) -> VocoderConfig:
        return VocoderConfig(
            stft=self.stft_config(),
            sample_rate_hz=self.audio_fs,
            gl_iterations=self.gl_iterations,
            ihpr_iterations=self.ihpr_iterations,
            warmup_gl_iterations=self.warmup_gl_iterations,
            max_harmonics=self.max_harmonics,
            smoothing_lambda=self.smoothing_lambda,
            phase_gamma=self.phase_gamma,
            harmonic_coherence=self.harmonic_coherence,
            convergence_tol=self.convergence_tol,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str) -> PipelineConfig:
    """Parse `key = value` lines; '#' starts a comment; unknown keys fail."""
    overrides: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in overrides:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        overrides[key] = _convert(key, raw)
    cfg = PipelineConfig(**overrides)
    cfg.validate()
    return cfg


def load_config(path: str | Path | None, seed: int | None = None, out_dir: str | None = None) -> PipelineConfig:
    """Load a config file (or defaults) with optional CLI overrides."""
    cfg = parse_config(Path(path).read_text()) if path else PipelineConfig()
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=out_dir)
    cfg.validate()
    return cfg
