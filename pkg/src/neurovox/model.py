"""Learned mapping from feature matrices to mel spectrograms.

A staged predictor: an autoencoder compresses the per-frame feature
vector into a latent code, a small MLP embeds the theta/beta prosody
statistics, and a transformer encoder maps the concatenated sequence to
mel frames. Training is MSE + Adam, fully deterministic for a given
seed, with analytic gradients validated against finite differences by
:func:`grad_check`. A ridge-regression baseline mirrors the classic
direct linear mapping.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, Tensor, concat, dropout, glorot, layer_norm, mse, named_rng, softmax


@dataclass(frozen=True)
class TrainingConfig:
    """Adam + MSE training schedule. lr may be 0 (no-op training)."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 60
    batch_size: int = 4
    seed: int = 0
    folds: int = 10

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


# ---------------------------------------------------------------------------
# Autoencoder


@dataclass
class AutoencoderParams:
    """D -> hidden -> latent encoder with a mirrored decoder."""

    tensors: dict[str, Tensor]
    input_dim: int
    hidden_dim: int
    latent_dim: int
    seed: int

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}


_AE_KEYS = ("enc_w1", "enc_b1", "enc_w2", "enc_b2", "dec_w1", "dec_b1", "dec_w2", "dec_b2")


def init_autoencoder(
    input_dim: int, hidden_dim: int = 256, latent_dim: int = 64, seed: int = 0
) -> AutoencoderParams:
    rng = named_rng(seed, "ae-init")
    dims = [
        (input_dim, hidden_dim),
        (hidden_dim, latent_dim),
        (latent_dim, hidden_dim),
        (hidden_dim, input_dim),
    ]
    tensors: dict[str, Tensor] = {}
    for (fan_in, fan_out), w_key, b_key in zip(dims, _AE_KEYS[::2], _AE_KEYS[1::2]):
        tensors[w_key] = Tensor(glorot(rng, fan_in, fan_out), requires_grad=True)
        tensors[b_key] = Tensor(np.zeros(fan_out), requires_grad=True)
    return AutoencoderParams(
        tensors=tensors,
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        latent_dim=latent_dim,
        seed=seed,
    )


def _ae_encode_t(params: AutoencoderParams, x: Tensor) -> Tensor:
    t = params.tensors
    hidden = (x @ t["enc_w1"] + t["enc_b1"]).relu()
    return hidden @ t["enc_w2"] + t["enc_b2"]


def _ae_decode_t(params: AutoencoderParams, z: Tensor) -> Tensor:
    t = params.tensors
    hidden = (z @ t["dec_w1"] + t["dec_b1"]).relu()
    return hidden @ t["dec_w2"] + t["dec_b2"]


def ae_encode(params: AutoencoderParams, features: np.ndarray) -> np.ndarray:
    """Deterministic forward pass through the encoder (T x latent_dim)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.input_dim:
        raise ValueError(f"expected T x {params.input_dim} features, got {features.shape}")
    return _ae_encode_t(params, Tensor(features)).data


def ae_reconstruct(params: AutoencoderParams, features: np.ndarray) -> np.ndarray:
    return _ae_decode_t(params, Tensor(ae_encode(params, features))).data


def ae_train(
    feature_blocks: list[np.ndarray],
    cfg: TrainingConfig,
    hidden_dim: int = 256,
    latent_dim: int = 64,
    batch_frames: int = 256,
) -> tuple[AutoencoderParams, list[float]]:
    """Train the reconstruction autoencoder on stacked feature frames."""
    if not feature_blocks:
        raise ValueError("need at least one feature block")
    blocks = [np.asarray(b, dtype=np.float64) for b in feature_blocks]
    width = blocks[0].shape[1]
    if any(b.ndim != 2 or b.shape[1] != width for b in blocks):
        raise ValueError("all feature blocks must share the same column count")
    frames = np.concatenate(blocks, axis=0)

    params = init_autoencoder(width, hidden_dim, latent_dim, cfg.seed)
    opt = Adam(params.tensors, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    losses: list[float] = []
    n = frames.shape[0]
    for epoch in range(cfg.epochs):
        order = named_rng(cfg.seed, f"ae-shuffle-{epoch}").permutation(n)
        for start in range(0, n, batch_frames):
            batch = frames[order[start : start + batch_frames]]
            x = Tensor(batch)
            loss = mse(_ae_decode_t(params, _ae_encode_t(params, x)), batch)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
    return params, losses


# ---------------------------------------------------------------------------
# Prosody embedding


@dataclass
class ProsodyEmbedParams:
    """Two-layer MLP from (c_theta, c_beta) statistics to a per-frame embedding."""

    tensors: dict[str, Tensor]
    input_dim: int
    hidden_dim: int
    embed_dim: int


def init_prosody_embed(
    input_dim: int, hidden_dim: int = 32, embed_dim: int = 16, seed: int = 0
) -> ProsodyEmbedParams:
    rng = named_rng(seed, "prosody-init")
    tensors = {
        "w1": Tensor(glorot(rng, input_dim, hidden_dim), requires_grad=True),
        "b1": Tensor(np.zeros(hidden_dim), requires_grad=True),
        "w2": Tensor(glorot(rng, hidden_dim, embed_dim), requires_grad=True),
        "b2": Tensor(np.zeros(embed_dim), requires_grad=True),
    }
    return ProsodyEmbedParams(
        tensors=tensors, input_dim=input_dim, hidden_dim=hidden_dim, embed_dim=embed_dim
    )


def _prosody_forward(params: ProsodyEmbedParams, c_theta: Tensor, c_beta: Tensor) -> Tensor:
    t = params.tensors
    x = concat([c_theta, c_beta], axis=1)
    if x.shape[1] != params.input_dim:
        raise ValueError(f"prosody input width {x.shape[1]} != {params.input_dim}")
    return ((x @ t["w1"] + t["b1"]).relu()) @ t["w2"] + t["b2"]


def prosody_embed(
    params: ProsodyEmbedParams, c_theta: np.ndarray, c_beta: np.ndarray
) -> np.ndarray:
    """P = f(c_theta, c_beta), shape T x embed_dim."""
    return _prosody_forward(params, Tensor(c_theta), Tensor(c_beta)).data


# ---------------------------------------------------------------------------
# Transformer


@dataclass(frozen=True)
class TransformerConfig:
    d_model: int = 64
    heads: int = 4
    layers: int = 2
    ffn_dim: int = 256
    dropout: float = 0.1
    max_seq_len: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by the head count")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must lie in [0, 1)")
        if min(self.d_model, self.heads, self.layers, self.ffn_dim, self.max_seq_len) < 1:
            raise ValueError("transformer dimensions must be positive")


@dataclass
class TransformerParams:
    tensors: dict[str, Tensor]
    config: TransformerConfig
    input_dim: int
    mel_bins: int

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}


def init_transformer(input_dim: int, mel_bins: int, cfg: TransformerConfig) -> TransformerParams:
    rng = named_rng(cfg.seed, "transformer-init")
    d = cfg.d_model
    tensors: dict[str, Tensor] = {
        "in_w": Tensor(glorot(rng, input_dim, d), requires_grad=True),
        "in_b": Tensor(np.zeros(d), requires_grad=True),
    }
    for layer in range(cfg.layers):
        p = f"l{layer}."
        for name in ("wq", "wk", "wv", "wo"):
            tensors[p + name] = Tensor(glorot(rng, d, d), requires_grad=True)
        for name in ("bq", "bk", "bv", "bo"):
            tensors[p + name] = Tensor(np.zeros(d), requires_grad=True)
        tensors[p + "ln1_g"] = Tensor(np.ones(d), requires_grad=True)
        tensors[p + "ln1_b"] = Tensor(np.zeros(d), requires_grad=True)
        tensors[p + "ffn_w1"] = Tensor(glorot(rng, d, cfg.ffn_dim), requires_grad=True)
        tensors[p + "ffn_b1"] = Tensor(np.zeros(cfg.ffn_dim), requires_grad=True)
        tensors[p + "ffn_w2"] = Tensor(glorot(rng, cfg.ffn_dim, d), requires_grad=True)
        tensors[p + "ffn_b2"] = Tensor(np.zeros(d), requires_grad=True)
        tensors[p + "ln2_g"] = Tensor(np.ones(d), requires_grad=True)
        tensors[p + "ln2_b"] = Tensor(np.zeros(d), requires_grad=True)
    tensors["out_w"] = Tensor(glorot(rng, d, mel_bins), requires_grad=True)
    tensors["out_b"] = Tensor(np.zeros(mel_bins), requires_grad=True)
    return TransformerParams(tensors=tensors, config=cfg, input_dim=input_dim, mel_bins=mel_bins)


def positional_encoding(n_frames: int, d_model: int) -> np.ndarray:
    """Interleaved sin/cos positional code, entries in [-1, 1]."""
    if d_model % 2:
        raise ValueError("d_model must be even for sin/cos positional encoding")
    t = np.arange(n_frames, dtype=np.float64)[:, None]
    i = np.arange(d_model // 2, dtype=np.float64)[None, :]
    angle = t / np.power(10000.0, 2.0 * i / d_model)
    pe = np.zeros((n_frames, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def _mha_t(
    x: Tensor, tensors: dict[str, Tensor], prefix: str, heads: int
) -> tuple[Tensor, np.ndarray]:
    n_frames, d = x.shape
    dk = d // heads

    def split(projected: Tensor) -> Tensor:
        return projected.reshape(n_frames, heads, dk).transpose(1, 0, 2)

    q = split(x @ tensors[prefix + "wq"] + tensors[prefix + "bq"])
    k = split(x @ tensors[prefix + "wk"] + tensors[prefix + "bk"])
    v = split(x @ tensors[prefix + "wv"] + tensors[prefix + "bv"])
    scores = (q @ k.transpose(0, 2, 1)) * (1.0 / np.sqrt(dk))
    weights = softmax(scores, axis=-1)
    merged = (weights @ v).transpose(1, 0, 2).reshape(n_frames, d)
    out = merged @ tensors[prefix + "wo"] + tensors[prefix + "bo"]
    return out, weights.data


def multi_head_attention(
    x: np.ndarray, params: TransformerParams, layer: int = 0, return_weights: bool = False
):
    """Scaled dot-product multi-head self-attention over a T x d_model input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.config.d_model:
        raise ValueError(f"expected T x {params.config.d_model} input, got {x.shape}")
    out, weights = _mha_t(Tensor(x), params.tensors, f"l{layer}.", params.config.heads)
    return (out.data, weights) if return_weights else out.data


def _transformer_forward_t(
    params: TransformerParams,
    latent: Tensor,
    prosody: Tensor,
    dropout_rng: np.random.Generator | None = None,
    bypass_mixer: bool = False,
) -> Tensor:
    cfg = params.config
    n_frames = latent.shape[0]
    if n_frames > cfg.max_seq_len:
        raise ValueError(f"sequence of {n_frames} frames exceeds max_seq_len {cfg.max_seq_len}")
    t = params.tensors
    x = concat([latent, prosody], axis=1)
    if x.shape[1] != params.input_dim:
        raise ValueError(f"input width {x.shape[1]} != {params.input_dim}")
    x = x @ t["in_w"] + t["in_b"]
    x = x + Tensor(positional_encoding(n_frames, cfg.d_model))
    if not bypass_mixer:
        for layer in range(cfg.layers):
            p = f"l{layer}."
            attended, _ = _mha_t(x, t, p, cfg.heads)
            attended = dropout(attended, cfg.dropout, dropout_rng)
            x = layer_norm(x + attended, t[p + "ln1_g"], t[p + "ln1_b"])
            ffn = ((x @ t[p + "ffn_w1"] + t[p + "ffn_b1"]).relu()) @ t[p + "ffn_w2"] + t[p + "ffn_b2"]
            ffn = dropout(ffn, cfg.dropout, dropout_rng)
            x = layer_norm(x + ffn, t[p + "ln2_g"], t[p + "ln2_b"])
    return x @ t["out_w"] + t["out_b"]


def transformer_forward(
    params: TransformerParams,
    latent: np.ndarray,
    prosody: np.ndarray,
    train_mode: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Predict T x mel_bins; dropout is active only in train mode."""
    rng = dropout_rng if train_mode else None
    if train_mode and rng is None:
        raise ValueError("train_mode requires a seeded dropout rng")
    return _transformer_forward_t(params, Tensor(latent), Tensor(prosody), rng).data


# ---------------------------------------------------------------------------
# Joint predictor training


@dataclass(frozen=True)
class TrialData:
    """One trial's aligned inputs and target."""

    features: np.ndarray
    c_theta: np.ndarray
    c_beta: np.ndarray
    mel: np.ndarray

    def __post_init__(self):
        for name in ("features", "c_theta", "c_beta", "mel"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        lengths = {self.features.shape[0], self.c_theta.shape[0], self.c_beta.shape[0], self.mel.shape[0]}
        if len(lengths) != 1:
            raise ValueError(f"trial streams disagree on frame count: {sorted(lengths)}")

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.features, self.c_theta, self.c_beta, self.mel):
            h.update(arr.tobytes())
        return h.hexdigest()


def _chunks(arrays: tuple[np.ndarray, ...], max_len: int):
    n = arrays[0].shape[0]
    for start in range(0, n, max_len):
        yield tuple(a[start : start + max_len] for a in arrays)


def train_predictor(
    trials: list[TrialData],
    ae: AutoencoderParams,
    cfg: TrainingConfig,
    transformer_cfg: TransformerConfig | None = None,
    embed_dim: int = 16,
) -> tuple[ProsodyEmbedParams, TransformerParams, list[float]]:
    """Jointly train the prosody embedding and the transformer (AE frozen).

    Trials are re-ordered by content digest before the seed-derived
    epoch shuffle, so results are bit-identical under any permutation of
    the input list.
    """
    if not trials:
        raise ValueError("need at least one trial")
    trials = sorted(trials, key=lambda t: t.digest())
    mel_bins = trials[0].mel.shape[1]
    prosody_dim = trials[0].c_theta.shape[1] + trials[0].c_beta.shape[1]
    for t in trials:
        if t.features.shape[1] != ae.input_dim:
            raise ValueError("trial feature width does not match the autoencoder")
        if t.mel.shape[1] != mel_bins or t.c_theta.shape[1] + t.c_beta.shape[1] != prosody_dim:
            raise ValueError("trials disagree on target or prosody dimensions")

    if transformer_cfg is None:
        transformer_cfg = TransformerConfig(seed=cfg.seed)
    pe_params = init_prosody_embed(prosody_dim, embed_dim=embed_dim, seed=cfg.seed)
    t_params = init_transformer(ae.latent_dim + embed_dim, mel_bins, transformer_cfg)

    chunk_list = []
    for trial in trials:
        latent = ae_encode(ae, trial.features)
        for chunk in _chunks(
            (latent, trial.c_theta, trial.c_beta, trial.mel), transformer_cfg.max_seq_len
        ):
            chunk_list.append(chunk)

    joint = dict(
        {f"pe.{k}": v for k, v in pe_params.tensors.items()},
        **{f"tf.{k}": v for k, v in t_params.tensors.items()},
    )
    opt = Adam(joint, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    drop_rng = named_rng(cfg.seed, "dropout")
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = named_rng(cfg.seed, f"shuffle-{epoch}").permutation(len(chunk_list))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            total: Tensor | None = None
            for idx in batch:
                latent, cth, cbe, mel = chunk_list[idx]
                prosody = _prosody_forward(pe_params, Tensor(cth), Tensor(cbe))
                pred = _transformer_forward_t(t_params, Tensor(latent), prosody, drop_rng)
                loss = mse(pred, mel)
                total = loss if total is None else total + loss
            total = total * (1.0 / len(batch))
            opt.zero_grad()
            total.backward()
            if cfg.lr > 0:
                opt.step()
            losses.append(float(total.data))
    return pe_params, t_params, losses


def predict_mel(
    pe_params: ProsodyEmbedParams,
    t_params: TransformerParams,
    ae: AutoencoderParams,
    features: np.ndarray,
    c_theta: np.ndarray,
    c_beta: np.ndarray,
) -> np.ndarray:
    """Deterministic inference over arbitrarily long trials (chunked)."""
    latent = ae_encode(ae, features)
    outputs = []
    for chunk in _chunks((latent, c_theta, c_beta), t_params.config.max_seq_len):
        lat, cth, cbe = chunk
        prosody = prosody_embed(pe_params, cth, cbe)
        outputs.append(transformer_forward(t_params, lat, prosody))
    return np.concatenate(outputs, axis=0)


# ---------------------------------------------------------------------------
# Gradient verification


def _max_rel_error(
    loss_fn, tensors: dict[str, Tensor], step: float = 1e-4
) -> float:
    loss = loss_fn()
    for t in tensors.values():
        t.grad = None
    loss.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}
    worst = 0.0
    for key, t in tensors.items():
        flat = t.data.reshape(-1)
        grad_flat = analytic[key].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            up = float(loss_fn().data)
            flat[i] = original - step
            down = float(loss_fn().data)
            flat[i] = original
            fd = (up - down) / (2.0 * step)
            # 1e-6 floor: below it the FD value is dominated by roundoff
            # (loss ~ O(1), so (up - down) carries ~1e-12 of noise).
            denom = max(abs(fd), abs(grad_flat[i]), 1e-6)
            worst = max(worst, abs(fd - grad_flat[i]) / denom)
    return worst


def grad_check(seed: int = 0, linear_only: bool = False) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Exercises the autoencoder reconstruction loss and the joint
    prosody-embedding + transformer MSE loss on a tiny double-precision
    instance with dropout off.
    """
    rng = named_rng(seed, "grad-check")
    n_frames, feat_dim, mel_bins = 3, 10, 4
    ae = init_autoencoder(feat_dim, hidden_dim=8, latent_dim=6, seed=seed)
    features = rng.standard_normal((n_frames, feat_dim))
    targets = rng.standard_normal((n_frames, mel_bins))
    cth = rng.standard_normal((n_frames, 2))
    cbe = rng.standard_normal((n_frames, 2))
    pe = init_prosody_embed(4, hidden_dim=6, embed_dim=4, seed=seed)
    t_cfg = TransformerConfig(d_model=8, heads=2, layers=1, ffn_dim=16, dropout=0.0, seed=seed)
    tp = init_transformer(ae.latent_dim + 4, mel_bins, t_cfg)

    def ae_loss() -> Tensor:
        x = Tensor(features)
        return mse(_ae_decode_t(ae, _ae_encode_t(ae, x)), features)

    latent = ae_encode(ae, features)

    def predictor_loss() -> Tensor:
        prosody = _prosody_forward(pe, Tensor(cth), Tensor(cbe))
        pred = _transformer_forward_t(
            tp, Tensor(latent), prosody, dropout_rng=None, bypass_mixer=linear_only
        )
        return mse(pred, targets)

    joint = dict(
        {f"pe.{k}": v for k, v in pe.tensors.items()},
        **{f"tf.{k}": v for k, v in tp.tensors.items()},
    )
    if linear_only:
        joint = {
            k: v
            for k, v in joint.items()
            if k in ("tf.in_w", "tf.in_b", "tf.out_w", "tf.out_b") or k.startswith("pe.")
        }
        return _max_rel_error(predictor_loss, joint)
    return max(_max_rel_error(ae_loss, ae.tensors), _max_rel_error(predictor_loss, joint))


# ---------------------------------------------------------------------------
# Linear-regression baseline


@dataclass(frozen=True)
class LinregParams:
    weights: np.ndarray
    intercept: np.ndarray


def linreg_baseline_fit(
    feature_blocks: list[np.ndarray], mel_blocks: list[np.ndarray], ridge: float = 1e-3
) -> LinregParams:
    """Ridge-regularized least squares per mel bin (closed form)."""
    x = np.concatenate([np.asarray(b, dtype=np.float64) for b in feature_blocks], axis=0)
    y = np.concatenate([np.asarray(b, dtype=np.float64) for b in mel_blocks], axis=0)
    if x.shape[0] != y.shape[0]:
        raise ValueError("feature and target frame counts differ")
    x_mean = x.mean(axis=0)
    y_mean = y.mean(axis=0)
    xc = x - x_mean
    yc = y - y_mean
    gram = xc.T @ xc + ridge * np.eye(x.shape[1])
    weights = np.linalg.solve(gram, xc.T @ yc)
    intercept = y_mean - x_mean @ weights
    return LinregParams(weights=weights, intercept=intercept)


def linreg_baseline_predict(params: LinregParams, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    return features @ params.weights + params.intercept
