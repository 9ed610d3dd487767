"""End-to-end orchestration: staged artifacts plus tenfold cross-validation.

Each stage reads the previous stage's files and writes its own under the
run directory:

    data/         synthetic trials (neural tensor, audio wav+tensor, truth json)
    proc/         filtered, z-scored, aligned neural tensors
    features/     feature matrices, prosody inputs, target log-mels
    models/       per-fold checkpoints, normalization stats, loss curves
    predictions/  out-of-fold mel predictions (transformer and linreg)
    audio_out/    vocoded waveforms (griffin_lim and ihpr) + loss curves
    eval/         Table-shaped report CSV and per-trial JSON lines

Normalization stats are always fit on the training folds only and
replayed on the held-out trials; every file read during fold training is
recorded so tests can audit the split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .autodiff import Tensor, named_rng
from .config import PipelineConfig
from .dsp import MelSpectrogram, Waveform, mel_filterbank, mel_spectrogram
from .features import (
    FeatureMatrix,
    NormalizationStats,
    extract_features,
    f0_estimate,
    normalize_features,
)
from .metrics import hnr, mcd, mel_cepstra, pearson, stoi_simple
from .model import (
    AutoencoderParams,
    LinregParams,
    ProsodyEmbedParams,
    TransformerParams,
    TrialData,
    ae_train,
    linreg_baseline_fit,
    linreg_baseline_predict,
    predict_mel,
    train_predictor,
)
from .preprocess import MultiChannelRecording, align, bandpass, notch, zscore_channels
from .synthetic import generate_synthetic
from .vocoder import griffin_lim, ihpr_vocode, mel_to_magnitude

MODELS = ("transformer", "linreg")
VOCODERS = ("griffin_lim", "ihpr")


def assign_folds(seed: int, n_trials: int, folds: int) -> np.ndarray:
    """Deterministic fold id per trial; fold sizes differ by at most 1."""
    perm = named_rng(seed, "folds").permutation(n_trials)
    fold_of = np.zeros(n_trials, dtype=np.int64)
    for position, trial in enumerate(perm):
        fold_of[trial] = position % folds
    return fold_of


def _trial_name(index: int) -> str:
    return f"trial{index:03d}"


# ---------------------------------------------------------------------------
# Stages


def stage_synth_data(cfg: PipelineConfig, root: Path) -> list[Path]:
    out = root / "data"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, trial in enumerate(generate_synthetic(cfg.synthetic_spec())):
        base = out / _trial_name(i)
        io.write_tensor(f"{base}.neural.nvtf", trial.neural.data)
        io.write_tensor(f"{base}.audio.nvtf", trial.audio.samples)
        io.write_wav(f"{base}.audio.wav", trial.audio)
        Path(f"{base}.truth.json").write_text(
            json.dumps(trial.truth.as_dict(), sort_keys=True, indent=0)
        )
        written.append(base)
    return written


def stage_preprocess(cfg: PipelineConfig, root: Path) -> None:
    data_dir = root / "data"
    out = root / "proc"
    out.mkdir(parents=True, exist_ok=True)
    for i in range(cfg.n_trials):
        name = _trial_name(i)
        neural_path = data_dir / f"{name}.neural.nvtf"
        if not neural_path.exists():
            raise FileNotFoundError(f"missing stage input: {neural_path} (run synth-data first)")
        rec = MultiChannelRecording(
            data=io.read_tensor(neural_path), sample_rate_hz=cfg.neural_fs
        )
        audio = Waveform(
            samples=io.read_tensor(data_dir / f"{name}.audio.nvtf"), sample_rate_hz=cfg.audio_fs
        )
        rec = bandpass(rec)
        rec = notch(rec, mains_hz=50.0)
        rec, mu, sigma = zscore_channels(rec)
        alignment = align(rec, audio)
        data = rec.data
        lag = alignment.lag_samples_neural
        if lag > 0:
            data = np.concatenate([data[:, lag:], np.zeros((rec.n_channels, lag))], axis=1)
        elif lag < 0:
            data = np.concatenate([np.zeros((rec.n_channels, -lag)), data[:, :lag]], axis=1)
        io.write_tensor(out / f"{name}.neural.nvtf", data)
        stats = {
            "mu": [float(v) for v in mu],
            "sigma": [float(v) for v in sigma],
            "lag_samples_neural": int(lag),
            "correlation_peak": round(float(alignment.correlation_peak), 6),
        }
        (out / f"{name}.stats.json").write_text(json.dumps(stats, sort_keys=True))


def stage_features(cfg: PipelineConfig, root: Path) -> None:
    proc_dir = root / "proc"
    data_dir = root / "data"
    out = root / "features"
    out.mkdir(parents=True, exist_ok=True)
    stft_cfg = cfg.stft_config()
    mel_params = cfg.mel_params()
    for i in range(cfg.n_trials):
        name = _trial_name(i)
        proc_path = proc_dir / f"{name}.neural.nvtf"
        if not proc_path.exists():
            raise FileNotFoundError(f"missing stage input: {proc_path} (run preprocess first)")
        rec = MultiChannelRecording(data=io.read_tensor(proc_path), sample_rate_hz=cfg.neural_fs)
        extracted = extract_features(rec, levels=cfg.wavelet_levels)
        io.write_tensor(out / f"{name}.features.nvtf", extracted.matrix.data)
        io.write_columns(out / f"{name}.features.columns.txt", extracted.matrix.columns)
        io.write_tensor(out / f"{name}.ctheta.nvtf", extracted.prosody_inputs.c_theta)
        io.write_tensor(out / f"{name}.cbeta.nvtf", extracted.prosody_inputs.c_beta)

        audio = Waveform(
            samples=io.read_tensor(data_dir / f"{name}.audio.nvtf"), sample_rate_hz=cfg.audio_fs
        )
        mel = mel_spectrogram(audio, stft_cfg, mel_params, log_scale=True)
        n_frames = extracted.matrix.n_frames
        if abs(mel.n_frames - n_frames) > 1:
            raise RuntimeError(
                f"{name}: feature frames {n_frames} and mel frames {mel.n_frames} diverged"
            )
        io.write_tensor(out / f"{name}.mel.nvtf", mel.data[:n_frames])


@dataclass
class FoldModels:
    ae: AutoencoderParams
    prosody: ProsodyEmbedParams
    transformer: TransformerParams
    linreg: LinregParams
    feature_stats: NormalizationStats
    ctheta_stats: NormalizationStats
    cbeta_stats: NormalizationStats


def _normalize_block(data: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    return (data - stats.mu) / stats.sigma


def _fit_stats(blocks: list[np.ndarray]) -> NormalizationStats:
    stacked = np.concatenate(blocks, axis=0)
    return NormalizationStats(
        mu=stacked.mean(axis=0), sigma=np.maximum(stacked.std(axis=0), 1e-8)
    )


def _save_params(fold_dir: Path, prefix: str, arrays: dict[str, np.ndarray]) -> list[str]:
    lines = []
    for key, arr in arrays.items():
        io.write_tensor(fold_dir / f"{prefix}.{key}.nvtf", arr)
        lines.append(f"{prefix}.{key} {'x'.join(map(str, arr.shape))}")
    return lines


def _load_params(fold_dir: Path, prefix: str, keys: list[str]) -> dict[str, np.ndarray]:
    return {key: io.read_tensor(fold_dir / f"{prefix}.{key}.nvtf") for key in keys}


def stage_train(cfg: PipelineConfig, root: Path) -> dict[int, list[str]]:
    """Train per-fold models; returns the file paths read per fold (audit)."""
    feat_dir = root / "features"
    out = root / "models"
    out.mkdir(parents=True, exist_ok=True)
    fold_of = assign_folds(cfg.seed, cfg.n_trials, cfg.folds)
    reads: dict[int, list[str]] = {}
    for fold in range(cfg.folds):
        fold_dir = out / f"fold{fold}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        train_trials = [i for i in range(cfg.n_trials) if fold_of[i] != fold]
        read_paths: list[str] = []

        def load(name: str, i: int) -> np.ndarray:
            path = feat_dir / f"{_trial_name(i)}.{name}.nvtf"
            if not path.exists():
                raise FileNotFoundError(f"missing stage input: {path} (run features first)")
            read_paths.append(str(path.relative_to(root)))
            return io.read_tensor(path)

        features_raw = [load("features", i) for i in train_trials]
        ctheta_raw = [load("ctheta", i) for i in train_trials]
        cbeta_raw = [load("cbeta", i) for i in train_trials]
        mels = [load("mel", i) for i in train_trials]

        feature_stats = _fit_stats(features_raw)
        ctheta_stats = _fit_stats(ctheta_raw)
        cbeta_stats = _fit_stats(cbeta_raw)
        features_norm = [_normalize_block(b, feature_stats) for b in features_raw]
        ctheta_norm = [_normalize_block(b, ctheta_stats) for b in ctheta_raw]
        cbeta_norm = [_normalize_block(b, cbeta_stats) for b in cbeta_raw]

        train_cfg = cfg.training_config(seed_offset=fold)
        ae, ae_losses = ae_train(
            features_norm,
            train_cfg,
            hidden_dim=cfg.ae_hidden,
            latent_dim=cfg.ae_latent,
        )
        trials = [
            TrialData(features=f, c_theta=ct, c_beta=cb, mel=m)
            for f, ct, cb, m in zip(features_norm, ctheta_norm, cbeta_norm, mels)
        ]
        prosody, transformer, losses = train_predictor(
            trials, ae, train_cfg, cfg.transformer_config(seed_offset=fold), cfg.embed_dim
        )
        linreg = linreg_baseline_fit(features_norm, mels)

        manifest = [f"seed {train_cfg.seed}", f"fold {fold}", f"trials {train_trials}"]
        manifest += _save_params(fold_dir, "ae", ae.as_arrays())
        manifest += _save_params(fold_dir, "prosody", {k: t.data for k, t in prosody.tensors.items()})
        manifest += _save_params(fold_dir, "transformer", transformer.as_arrays())
        manifest += _save_params(
            fold_dir, "linreg", {"weights": linreg.weights, "intercept": linreg.intercept}
        )
        manifest += _save_params(
            fold_dir,
            "norm",
            {
                "features.mu": feature_stats.mu,
                "features.sigma": feature_stats.sigma,
                "ctheta.mu": ctheta_stats.mu,
                "ctheta.sigma": ctheta_stats.sigma,
                "cbeta.mu": cbeta_stats.mu,
                "cbeta.sigma": cbeta_stats.sigma,
            },
        )
        (fold_dir / "manifest.txt").write_text("\n".join(manifest) + "\n")
        io.write_csv(
            fold_dir / "losses.csv",
            ["step", "predictor_mse"],
            [[s, float(v)] for s, v in enumerate(losses)],
        )
        io.write_csv(
            fold_dir / "ae_losses.csv",
            ["step", "reconstruction_mse"],
            [[s, float(v)] for s, v in enumerate(ae_losses)],
        )
        (fold_dir / "reads.txt").write_text("\n".join(read_paths) + "\n")
        reads[fold] = read_paths
    return reads


def load_fold_models(cfg: PipelineConfig, fold_dir: Path) -> FoldModels:
    ae_keys = ["enc_w1", "enc_b1", "enc_w2", "enc_b2", "dec_w1", "dec_b1", "dec_w2", "dec_b2"]
    ae_arrays = _load_params(fold_dir, "ae", ae_keys)
    ae = AutoencoderParams(
        tensors={k: Tensor(v, requires_grad=False) for k, v in ae_arrays.items()},
        input_dim=ae_arrays["enc_w1"].shape[0],
        hidden_dim=ae_arrays["enc_w1"].shape[1],
        latent_dim=ae_arrays["enc_w2"].shape[1],
        seed=cfg.seed,
    )
    pe_arrays = _load_params(fold_dir, "prosody", ["w1", "b1", "w2", "b2"])
    prosody = ProsodyEmbedParams(
        tensors={k: Tensor(v, requires_grad=False) for k, v in pe_arrays.items()},
        input_dim=pe_arrays["w1"].shape[0],
        hidden_dim=pe_arrays["w1"].shape[1],
        embed_dim=pe_arrays["w2"].shape[1],
    )
    t_cfg = cfg.transformer_config()
    t_keys = ["in_w", "in_b", "out_w", "out_b"]
    for layer in range(t_cfg.layers):
        for name in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                     "ln1_g", "ln1_b", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
                     "ln2_g", "ln2_b"):
            t_keys.append(f"l{layer}.{name}")
    t_arrays = _load_params(fold_dir, "transformer", t_keys)
    transformer = TransformerParams(
        tensors={k: Tensor(v, requires_grad=False) for k, v in t_arrays.items()},
        config=t_cfg,
        input_dim=t_arrays["in_w"].shape[0],
        mel_bins=t_arrays["out_w"].shape[1],
    )
    lin_arrays = _load_params(fold_dir, "linreg", ["weights", "intercept"])
    linreg = LinregParams(weights=lin_arrays["weights"], intercept=lin_arrays["intercept"])
    norm = _load_params(
        fold_dir,
        "norm",
        ["features.mu", "features.sigma", "ctheta.mu", "ctheta.sigma", "cbeta.mu", "cbeta.sigma"],
    )
    return FoldModels(
        ae=ae,
        prosody=prosody,
        transformer=transformer,
        linreg=linreg,
        feature_stats=NormalizationStats(norm["features.mu"], norm["features.sigma"]),
        ctheta_stats=NormalizationStats(norm["ctheta.mu"], norm["ctheta.sigma"]),
        cbeta_stats=NormalizationStats(norm["cbeta.mu"], norm["cbeta.sigma"]),
    )


def stage_predict(cfg: PipelineConfig, root: Path) -> None:
    feat_dir = root / "features"
    model_dir = root / "models"
    out = root / "predictions"
    out.mkdir(parents=True, exist_ok=True)
    fold_of = assign_folds(cfg.seed, cfg.n_trials, cfg.folds)
    models = {}
    for i in range(cfg.n_trials):
        fold = int(fold_of[i])
        if fold not in models:
            fold_dir = model_dir / f"fold{fold}"
            if not fold_dir.exists():
                raise FileNotFoundError(f"missing stage input: {fold_dir} (run train first)")
            models[fold] = load_fold_models(cfg, fold_dir)
        m = models[fold]
        name = _trial_name(i)
        features_raw = io.read_tensor(feat_dir / f"{name}.features.nvtf")
        ctheta_raw = io.read_tensor(feat_dir / f"{name}.ctheta.nvtf")
        cbeta_raw = io.read_tensor(feat_dir / f"{name}.cbeta.nvtf")
        features_n = _normalize_block(features_raw, m.feature_stats)
        ctheta_n = _normalize_block(ctheta_raw, m.ctheta_stats)
        cbeta_n = _normalize_block(cbeta_raw, m.cbeta_stats)
        pred_tf = predict_mel(m.prosody, m.transformer, m.ae, features_n, ctheta_n, cbeta_n)
        pred_lin = linreg_baseline_predict(m.linreg, features_n)
        io.write_tensor(out / f"{name}.transformer.mel.nvtf", pred_tf)
        io.write_tensor(out / f"{name}.linreg.mel.nvtf", pred_lin)


def stage_vocode(cfg: PipelineConfig, root: Path) -> None:
    pred_dir = root / "predictions"
    out = root / "audio_out"
    out.mkdir(parents=True, exist_ok=True)
    vcfg = cfg.vocoder_config()
    fb = mel_filterbank(cfg.audio_fs, cfg.stft_fft, cfg.mel_bins, cfg.fmin_hz, cfg.fmax_hz)
    for i in range(cfg.n_trials):
        name = _trial_name(i)
        for model in MODELS:
            pred_path = pred_dir / f"{name}.{model}.mel.nvtf"
            if not pred_path.exists():
                raise FileNotFoundError(f"missing stage input: {pred_path} (run predict first)")
            mel = MelSpectrogram(
                data=io.read_tensor(pred_path),
                sample_rate_hz=cfg.audio_fs,
                fmin_hz=cfg.fmin_hz,
                fmax_hz=cfg.fmax_hz,
                log_scale=True,
            )
            magnitude = mel_to_magnitude(mel, fb)
            wave_gl, _ = griffin_lim(magnitude, vcfg)
            io.write_wav(out / f"{name}.{model}.griffin_lim.wav", wave_gl)
            draft, _ = griffin_lim(magnitude, vcfg, iterations=vcfg.warmup_gl_iterations)
            f0_track = f0_estimate(draft.samples, cfg.audio_fs)[: magnitude.shape[0]]
            if len(f0_track) < magnitude.shape[0]:
                f0_track = np.pad(f0_track, (0, magnitude.shape[0] - len(f0_track)))
            result = ihpr_vocode(magnitude, f0_track, vcfg)
            io.write_wav(out / f"{name}.{model}.ihpr.wav", result.waveform)
            io.write_csv(
                out / f"{name}.{model}.ihpr.loss.csv",
                ["iteration", "l_perceptual", "sc"],
                [
                    [k, float(l), float(s)]
                    for k, (l, s) in enumerate(zip(result.losses, result.spectral_convergence))
                ],
            )


def stage_evaluate(cfg: PipelineConfig, root: Path) -> Path:
    feat_dir = root / "features"
    pred_dir = root / "predictions"
    audio_dir = root / "audio_out"
    data_dir = root / "data"
    out = root / "eval"
    out.mkdir(parents=True, exist_ok=True)

    records = []
    for i in range(cfg.n_trials):
        name = _trial_name(i)
        target = io.read_tensor(feat_dir / f"{name}.mel.nvtf")
        reference = Waveform(
            samples=io.read_tensor(data_dir / f"{name}.audio.nvtf"), sample_rate_hz=cfg.audio_fs
        )
        f0_ref = f0_estimate(reference.samples, cfg.audio_fs)
        target_mel = MelSpectrogram(
            data=target, sample_rate_hz=cfg.audio_fs,
            fmin_hz=cfg.fmin_hz, fmax_hz=cfg.fmax_hz, log_scale=True,
        )
        for model in MODELS:
            pred = io.read_tensor(pred_dir / f"{name}.{model}.mel.nvtf")
            pred_mel = MelSpectrogram(
                data=pred, sample_rate_hz=cfg.audio_fs,
                fmin_hz=cfg.fmin_hz, fmax_hz=cfg.fmax_hz, log_scale=True,
            )
            pc = pearson(target, pred)
            pc_linear = pearson(np.exp(target), np.exp(pred))
            distortion = mcd(mel_cepstra(target_mel), mel_cepstra(pred_mel))
            intelligibility = stoi_simple(target, pred)
            for voc in VOCODERS:
                wav = io.read_wav(audio_dir / f"{name}.{model}.{voc}.wav")
                harmonicity = hnr(wav, f0_ref)
                records.append(
                    {
                        "trial": i,
                        "model": model,
                        "vocoder": voc,
                        "pc": round(pc, 6),
                        "pc_linear": round(pc_linear, 6),
                        "mcd": round(distortion, 6),
                        "stoi": round(intelligibility, 6),
                        "hnr": round(harmonicity, 6),
                    }
                )

    io.write_jsonl(out / "trials.jsonl", records)
    rows = []
    for model in MODELS:
        for voc in VOCODERS:
            subset = [r for r in records if r["model"] == model and r["vocoder"] == voc]
            rows.append(
                [
                    f"{model}+{voc}",
                    float(np.mean([r["pc"] for r in subset])),
                    float(np.mean([r["mcd"] for r in subset])),
                    float(np.mean([r["stoi"] for r in subset])),
                    float(np.mean([r["hnr"] for r in subset])),
                ]
            )
    report = out / "report.csv"
    io.write_csv(report, ["model", "pc", "mcd", "stoi", "hnr"], rows)
    return report


STAGES = {
    "synth-data": stage_synth_data,
    "preprocess": stage_preprocess,
    "features": stage_features,
    "train": stage_train,
    "predict": stage_predict,
    "vocode": stage_vocode,
    "evaluate": stage_evaluate,
}


def run_pipeline(cfg: PipelineConfig) -> Path:
    """Run every stage in order; returns the report path."""
    root = Path(cfg.out_dir)
    stage_synth_data(cfg, root)
    stage_preprocess(cfg, root)
    stage_features(cfg, root)
    stage_train(cfg, root)
    stage_predict(cfg, root)
    stage_vocode(cfg, root)
    return stage_evaluate(cfg, root)
