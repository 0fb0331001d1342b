"""Learned limited-feedback pipeline: encoder, scalar quantizer, decoder.

Three variants share one model class. Variant "S" decodes a feedback message
into channel statistics (mean plus structured covariance) for robust
precoding; variant "I" decodes a plain channel reconstruction (identity
covariance); variant "AE" drops quantization entirely and ships raw
single-precision latents, serving as an unquantized reference.

The quantizer is a scalar nearest-neighbor lookup into a shared embedding;
its gradient uses the straight-through copy f = z + sg(f - z), so the
reconstruction gradient at the decoder input reaches the encoder unchanged,
while the embedding is pulled toward encoder outputs by the dictionary term
and the encoder toward the embedding by the commitment term.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import nn
from .channels import ChannelDataset
from .pilots import (Observation, PilotMatrix, QTransform, UraGeometry,
                     build_q_transform, complex_unstack, observe_batch,
                     preprocess, real_stack, snr_to_noise_var)

VARIANTS = ("S", "I", "AE")
_VARIANT_CODES = {name: i for i, name in enumerate(VARIANTS)}

_MODEL_MAGIC = b"FDVQ"
_MODEL_VERSION = 1

# spec'd MLP widths; the head sizes are derived from the geometry
_ENCODER_HIDDEN = (256, 128)
_DECODER_HIDDEN = (128, 256)


class ModelFormatError(ValueError):
    pass


def feedback_bits(latent_dim: int, codebook_size: int) -> int:
    """Feedback budget B = latent_dim * log2(codebook_size)."""
    if codebook_size < 2 or codebook_size & (codebook_size - 1):
        raise ValueError("codebook size must be a power of two, at least 2")
    return latent_dim * (codebook_size.bit_length() - 1)


@dataclass
class FeedbackMessage:
    """Either quantizer indices (variants S/I) or raw float32 latents (AE)."""

    indices: np.ndarray = None
    codebook_size: int = 0
    latents: np.ndarray = None

    def __post_init__(self):
        if (self.indices is None) == (self.latents is None):
            raise ValueError("message carries either indices or latents")
        if self.indices is not None:
            self.indices = np.asarray(self.indices, dtype=np.int64)
            if self.codebook_size < 2:
                raise ValueError("index messages need the codebook size")
            if np.any(self.indices < 0) or \
                    np.any(self.indices >= self.codebook_size):
                raise ValueError("indices out of range for the codebook")
        else:
            self.latents = np.asarray(self.latents, dtype=np.float32)

    @property
    def bits(self) -> int:
        if self.indices is not None:
            return feedback_bits(self.indices.size, self.codebook_size)
        return 32 * self.latents.size


@dataclass
class ChannelStatistics:
    """BS-side decoded statistics: mean, covariance spectrum, covariance."""

    mu: np.ndarray
    c: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class TrainingConfig:
    beta: float = 0.25
    snr_range_db: tuple = (0.0, 20.0)
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    jitter: float = 1e-6
    learning_rate: float = 1e-3
    warmup_epochs: int = 10
    nll_learning_rate: float = 1e-4

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        lo, hi = self.snr_range_db
        if hi < lo:
            raise ValueError("empty SNR range")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be non-negative")
        if self.learning_rate <= 0 or self.nll_learning_rate <= 0:
            raise ValueError("learning rates must be positive")


@dataclass
class VqvaeModel:
    variant: str
    geometry: UraGeometry
    latent_dim: int
    encoder: nn.Network
    decoder: nn.Network
    embedding: np.ndarray = None
    jitter: float = 1e-6

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        n = self.geometry.n
        if self.encoder.input_dim != 8 * n:
            raise ValueError("encoder input must be 8n (stacked Q P^H y)")
        if self.encoder.output_dim != self.latent_dim:
            raise ValueError("encoder output must equal latent_dim")
        if self.decoder.input_dim != self.latent_dim:
            raise ValueError("decoder input must equal latent_dim")
        head = 6 * n if self.variant == "S" else 2 * n
        if self.decoder.output_dim != head:
            raise ValueError(f"decoder output must be {head} for variant "
                             f"{self.variant}")
        if self.variant == "AE":
            if self.embedding is not None:
                raise ValueError("variant AE carries no embedding")
        else:
            self.embedding = np.asarray(self.embedding, dtype=np.float64)
            c = self.embedding.size
            if c < 2 or c & (c - 1):
                raise ValueError("embedding size must be a power of two ≥ 2")

    @property
    def codebook_size(self) -> int:
        return 0 if self.embedding is None else self.embedding.size

    @property
    def feedback_bits(self) -> int:
        if self.variant == "AE":
            return 32 * self.latent_dim
        return feedback_bits(self.latent_dim, self.codebook_size)

    @property
    def q(self) -> QTransform:
        q = self.__dict__.get("_q")
        if q is None or q.n != self.geometry.n:
            q = build_q_transform(self.geometry)
            self.__dict__["_q"] = q
        return q


def build_model(geom: UraGeometry, variant: str, latent_dim: int = 8,
                codebook_size: int = 32, seed: int = 0,
                jitter: float = 1e-6) -> VqvaeModel:
    """Fresh model with Glorot-initialized MLPs and a uniform [-1, 1]
    embedding."""
    rng = np.random.default_rng(seed)
    n = geom.n
    head = 6 * n if variant == "S" else 2 * n
    encoder = nn.init_network((8 * n,) + _ENCODER_HIDDEN + (latent_dim,),
                              ("relu", "relu", "identity"), rng)
    decoder = nn.init_network((latent_dim,) + _DECODER_HIDDEN + (head,),
                              ("relu", "relu", "identity"), rng)
    embedding = None
    if variant != "AE":
        feedback_bits(latent_dim, codebook_size)  # validates power of two
        embedding = rng.uniform(-1.0, 1.0, size=codebook_size)
    return VqvaeModel(variant=variant, geometry=geom, latent_dim=latent_dim,
                      encoder=encoder, decoder=decoder, embedding=embedding,
                      jitter=jitter)


def _nearest(z: np.ndarray, embedding: np.ndarray):
    idx = np.argmin(np.abs(z[..., None] - embedding), axis=-1)
    return embedding[idx], idx


def quantize_latent(z: np.ndarray, embedding: np.ndarray):
    """Per-entry nearest embedding value (ties take the lowest index).

    For a single latent vector returns (f, FeedbackMessage); for a batch
    returns (f, index array).
    """
    z = np.asarray(z, dtype=np.float64)
    embedding = np.asarray(embedding, dtype=np.float64)
    f, idx = _nearest(z, embedding)
    if z.ndim == 1:
        return f, FeedbackMessage(indices=idx, codebook_size=embedding.size)
    return f, idx


def structured_cov(c: np.ndarray, q: QTransform,
                   jitter: float = 0.0) -> np.ndarray:
    """Q^H diag(c) Q + jitter*I: Hermitian, PSD, block-Toeplitz with
    Toeplitz blocks."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (4 * q.n,):
        raise ValueError(f"c must have length {4 * q.n}")
    if np.any(c < 0):
        raise ValueError("c entries must be nonnegative")
    qmat = q.entries
    cov = (qmat.conj().T * c) @ qmat
    if jitter:
        cov = cov + jitter * np.eye(q.n)
    return cov


def _structured_cov_batch(c: np.ndarray, q: QTransform,
                          jitter: float) -> np.ndarray:
    qmat = q.entries
    covs = (qmat.conj().T[None, :, :] * c[:, None, :]) @ qmat
    covs += jitter * np.eye(q.n)
    return covs


def _softplus_floor(raw: np.ndarray, jitter: float) -> np.ndarray:
    return nn._apply_activation("softplus", raw) + jitter


@dataclass
class ForwardResult:
    z: np.ndarray
    f: np.ndarray
    indices: np.ndarray  # None for variant AE
    mu: np.ndarray
    c: np.ndarray  # None for variants I/AE


def vqvae_forward(model: VqvaeModel, x: np.ndarray) -> ForwardResult:
    """Encoder -> quantizer -> decoder heads on x of shape (8n,) or
    (batch, 8n)."""
    z = nn.forward(model.encoder, x)
    if model.variant == "AE":
        f, idx = z, None
    else:
        f, idx = _nearest(z, model.embedding)
    out = nn.forward(model.decoder, f)
    n = model.geometry.n
    mu = complex_unstack(out[..., :2 * n])
    c = None
    if model.variant == "S":
        c = _softplus_floor(out[..., 2 * n:], model.jitter)
    return ForwardResult(z=z, f=f, indices=idx, mu=mu, c=c)


def nll_loss(h: np.ndarray, mu: np.ndarray, cov: np.ndarray) -> float:
    """Complex-Gaussian negative log-likelihood
    log det(pi*C) + (h-mu)^H C^{-1} (h-mu), via Cholesky."""
    h = np.asarray(h, dtype=np.complex128)
    mu = np.asarray(mu, dtype=np.complex128)
    n = h.size
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "covariance factorization failed; increase the jitter") from exc
    from scipy.linalg import solve_triangular

    t = solve_triangular(chol, h - mu, lower=True)
    logdet = 2.0 * np.sum(np.log(np.real(np.diag(chol))))
    return float(n * np.log(np.pi) + logdet + np.sum(np.abs(t) ** 2))


@dataclass
class VqvaeGradients:
    encoder_tape: nn.GradientTape
    decoder_tape: nn.GradientTape
    embedding_grad: np.ndarray  # None for variant AE
    used_entries: np.ndarray = field(default=None, repr=False)

    def param_grads(self) -> list:
        grads = self.encoder_tape.param_grads() + \
            self.decoder_tape.param_grads()
        if self.embedding_grad is not None:
            grads.append(self.embedding_grad)
        return grads


def _reconstruction_grads(model: VqvaeModel, out: np.ndarray,
                          h: np.ndarray, mse_only: bool = False):
    """Mean reconstruction loss over the batch and its gradient w.r.t. the
    raw decoder output.

    mse_only switches variant S to the plain squared error on the mean head
    (covariance head untouched); used for the warm-up phase of training.
    """
    n = model.geometry.n
    batch = out.shape[0]
    mu = complex_unstack(out[:, :2 * n])
    diff = h - mu
    if model.variant != "S" or mse_only:
        loss = float(np.mean(np.sum(np.abs(diff) ** 2, axis=1)))
        d_mu = np.concatenate([-2.0 * diff.real, -2.0 * diff.imag],
                              axis=1) / batch
        if model.variant == "S":
            d_mu = np.concatenate([d_mu, np.zeros_like(out[:, 2 * n:])],
                                  axis=1)
        return loss, d_mu
    raw = out[:, 2 * n:]
    c = _softplus_floor(raw, model.jitter)
    covs = _structured_cov_batch(c, model.q, model.jitter)
    try:
        chols = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "covariance factorization failed; increase the jitter") from exc
    logdets = 2.0 * np.sum(np.log(np.diagonal(chols, axis1=1,
                                              axis2=2).real), axis=1)
    g = np.linalg.solve(covs, diff[:, :, None])[:, :, 0]
    quad = np.sum(np.conj(diff) * g, axis=1).real
    loss = float(np.mean(n * np.log(np.pi) + logdets + quad))
    qmat = model.q.entries
    qh = qmat.conj().T
    # dL/dc_k = [Q C^{-1} Q^H]_kk - |(Q g)_k|^2, chained through softplus
    x_solve = np.linalg.solve(covs, np.broadcast_to(qh, covs.shape[:1]
                                                    + qh.shape))
    diag_qciq = np.einsum("ki,bik->bk", qmat, x_solve).real
    qg = g @ qmat.T
    d_c = diag_qciq - np.abs(qg) ** 2
    d_raw = d_c * expit(raw)
    d_mu = np.concatenate([-2.0 * g.real, -2.0 * g.imag], axis=1)
    return loss, np.concatenate([d_mu, d_raw], axis=1) / batch


def vqvae_total_loss(model: VqvaeModel, x: np.ndarray, h: np.ndarray,
                     cfg: TrainingConfig, mse_only: bool = False):
    """Batch-mean composite loss and its gradients.

    Loss = L_rec + ||sg(z) - f||^2 + beta ||z - sg(f)||^2 (the two quantizer
    terms vanish for variant AE). Stop-gradient semantics: the dictionary
    term moves only selected embedding entries, the commitment term only the
    encoder, and L_rec reaches the encoder through the straight-through
    copy.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
    batch = x.shape[0]
    z = nn.forward(model.encoder, x)
    if model.variant == "AE":
        f, idx = z, None
    else:
        f, idx = _nearest(z, model.embedding)
    out = nn.forward(model.decoder, f)
    loss, d_out = _reconstruction_grads(model, out, h, mse_only=mse_only)
    decoder_tape = nn.backward(model.decoder, f, d_out)
    dz = decoder_tape.input_grad.copy()
    embedding_grad = None
    used = None
    if model.variant != "AE":
        qdiff = z - f
        loss += (1.0 + cfg.beta) * float(np.mean(np.sum(qdiff ** 2, axis=1)))
        dz += (2.0 * cfg.beta / batch) * qdiff
        embedding_grad = np.zeros_like(model.embedding)
        np.add.at(embedding_grad, idx.ravel(),
                  (-2.0 / batch) * qdiff.ravel())
        used = np.zeros(model.embedding.size, dtype=bool)
        used[np.unique(idx)] = True
    encoder_tape = nn.backward(model.encoder, x, dz)
    return loss, VqvaeGradients(encoder_tape=encoder_tape,
                                decoder_tape=decoder_tape,
                                embedding_grad=embedding_grad,
                                used_entries=used)


@dataclass
class TrainHistory:
    train_loss: list
    val_loss: list


def _observation_inputs(samples: np.ndarray, pilots: PilotMatrix,
                        q: QTransform, snr_range_db, rng):
    """Draw per-sample SNRs, observe, and preprocess to encoder inputs."""
    snr_db = rng.uniform(snr_range_db[0], snr_range_db[1],
                         size=samples.shape[0])
    noise_vars = snr_to_noise_var(snr_db, pilots.rho)
    y = observe_batch(samples, pilots, noise_vars, rng)
    return real_stack(preprocess(y, pilots, q))


def _mean_loss(model, x, h, cfg, mse_only=False, chunk=256) -> float:
    total = 0.0
    for start in range(0, x.shape[0], chunk):
        sl = slice(start, start + chunk)
        loss, _ = vqvae_total_loss(model, x[sl], h[sl], cfg,
                                   mse_only=mse_only)
        total += loss * (min(x.shape[0], sl.stop) - start)
    return total / x.shape[0]


def train(model: VqvaeModel, train_ds: ChannelDataset,
          val_ds: ChannelDataset, pilots: PilotMatrix, q: QTransform,
          cfg: TrainingConfig):
    """Minibatch Adam on the composite loss; per-sample SNR drawn uniformly
    from cfg.snr_range_db. Validation observations are drawn once so the
    per-epoch validation losses are comparable. Returns (model, history).

    For variant S the first cfg.warmup_epochs epochs use the squared error
    on the mean head instead of the likelihood loss. Learning the mean
    first keeps the covariance head from absorbing the channel power while
    the mean is still uninformative, which otherwise strands training at
    the prior. History entries from warm-up epochs are in squared-error
    units. The likelihood phase restarts Adam at cfg.nll_learning_rate:
    the tightening covariance amplifies the mean-head gradients, and the
    full rate walks the mean back to the prior.

    The returned parameters are the snapshot with the lowest validation
    loss over the final phase (the covariance head overfits long before
    the mean does).
    """
    if train_ds.count == 0 or val_ds.count == 0:
        raise ValueError("empty dataset")
    if train_ds.geometry != model.geometry:
        raise ValueError("dataset geometry does not match the model")
    params = nn.network_params(model.encoder) + \
        nn.network_params(model.decoder)
    if model.variant != "AE":
        params.append(model.embedding)
    state = nn.adam_init(params, learning_rate=cfg.learning_rate)
    master = np.random.default_rng(cfg.seed)
    shuffle_rng, noise_rng, val_rng, reseed_rng = master.spawn(4)

    x_val = _observation_inputs(val_ds.samples, pilots, q, cfg.snr_range_db,
                                val_rng)
    h_val = val_ds.samples
    history = TrainHistory(train_loss=[], val_loss=[])
    count = train_ds.count
    n_batches = (count + cfg.batch_size - 1) // cfg.batch_size
    best_val, best_params, best_phase = np.inf, None, -1
    for epoch in range(cfg.epochs):
        mse_only = model.variant == "S" and epoch < cfg.warmup_epochs
        phase = 1 if model.variant == "S" and not mse_only else 0
        if model.variant == "S" and epoch == cfg.warmup_epochs:
            state = nn.adam_init(params,
                                 learning_rate=cfg.nll_learning_rate)
        perm = shuffle_rng.permutation(count)
        stash_batch = int(reseed_rng.integers(n_batches))
        stash = None
        usage = None if model.variant == "AE" else \
            np.zeros(model.embedding.size, dtype=bool)
        epoch_loss = 0.0
        for b in range(n_batches):
            sel = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            h_b = train_ds.samples[sel]
            x_b = _observation_inputs(h_b, pilots, q, cfg.snr_range_db,
                                      noise_rng)
            loss, grads = vqvae_total_loss(model, x_b, h_b, cfg,
                                           mse_only=mse_only)
            nn.adam_step(params, grads.param_grads(), state)
            epoch_loss += loss * sel.size
            if usage is not None:
                usage |= grads.used_entries
                if b == stash_batch:
                    stash = nn.forward(model.encoder, x_b).ravel().copy()
        if usage is not None and not usage.all() and stash is not None:
            # codebook-collapse mitigation: re-seed entries unused for a
            # full epoch to random encoder outputs and reset their moments
            dead = np.flatnonzero(~usage)
            picks = reseed_rng.integers(stash.size, size=dead.size)
            model.embedding[dead] = stash[picks]
            state.first_moment[-1][dead] = 0.0
            state.second_moment[-1][dead] = 0.0
        history.train_loss.append(epoch_loss / count)
        val_loss = _mean_loss(model, x_val, h_val, cfg, mse_only=mse_only)
        history.val_loss.append(val_loss)
        if phase > best_phase or val_loss < best_val:
            best_phase, best_val = phase, val_loss
            best_params = [p.copy() for p in params]
    for p, kept in zip(params, best_params):
        p[...] = kept
    return model, history


def infer_feedback(model: VqvaeModel, y, pilots: PilotMatrix,
                   q: QTransform) -> FeedbackMessage:
    """MT-side inference: preprocess -> encoder -> quantizer -> message."""
    x = real_stack(preprocess(y, pilots, q))
    result = vqvae_forward(model, x)
    if model.variant == "AE":
        return FeedbackMessage(latents=result.z.astype(np.float32))
    return FeedbackMessage(indices=result.indices,
                           codebook_size=model.codebook_size)


def decode_feedback(model: VqvaeModel,
                    msg: FeedbackMessage) -> ChannelStatistics:
    """BS-side decoding of a feedback message into channel statistics.

    Variant S returns the structured covariance; variants I and AE return
    the reconstruction with the identity-covariance convention.
    """
    n = model.geometry.n
    if model.variant == "AE":
        if msg.latents is None:
            raise ValueError("variant AE expects latent messages")
        f = msg.latents.astype(np.float64)
    else:
        if msg.indices is None:
            raise ValueError("variants S/I expect index messages")
        if np.any(msg.indices >= model.codebook_size):
            raise ValueError("message index out of range for the embedding")
        f = model.embedding[msg.indices]
    out = nn.forward(model.decoder, f)
    mu = complex_unstack(out[:2 * n])
    if model.variant == "S":
        c = _softplus_floor(out[2 * n:], model.jitter)
        cov = structured_cov(c, model.q, model.jitter)
        return ChannelStatistics(mu=mu, c=c, cov=cov)
    return ChannelStatistics(mu=mu, c=np.ones(4 * n), cov=np.eye(n))


def pack_message(msg: FeedbackMessage) -> bytes:
    """Wire format: big-endian bit-packed indices (log2(C) bits each,
    zero-padded to a byte) or, for AE messages, big-endian float32 latents."""
    if msg.latents is not None:
        return np.ascontiguousarray(msg.latents, dtype=">f4").tobytes()
    bits_per = msg.codebook_size.bit_length() - 1
    total_bits = bits_per * msg.indices.size
    acc = 0
    for idx in msg.indices:
        acc = (acc << bits_per) | int(idx)
    pad = (-total_bits) % 8
    acc <<= pad
    return int(acc).to_bytes((total_bits + pad) // 8, "big")


def unpack_message(data: bytes, latent_dim: int,
                   codebook_size: int = 0) -> FeedbackMessage:
    """Inverse of pack_message; codebook_size 0 means an AE latent
    message."""
    if codebook_size == 0:
        if len(data) != 4 * latent_dim:
            raise ValueError(f"expected {4 * latent_dim} bytes, "
                             f"got {len(data)}")
        latents = np.frombuffer(data, dtype=">f4")
        return FeedbackMessage(latents=latents)
    bits_per = codebook_size.bit_length() - 1
    total_bits = bits_per * latent_dim
    n_bytes = (total_bits + 7) // 8
    if len(data) != n_bytes:
        raise ValueError(f"expected {n_bytes} bytes, got {len(data)}")
    acc = int.from_bytes(data, "big") >> ((-total_bits) % 8)
    mask = codebook_size - 1
    indices = np.empty(latent_dim, dtype=np.int64)
    for i in range(latent_dim - 1, -1, -1):
        indices[i] = acc & mask
        acc >>= bits_per
    return FeedbackMessage(indices=indices, codebook_size=codebook_size)


def save_model(path, model: VqvaeModel) -> None:
    """Versioned container: header, encoder/decoder checkpoints, embedding."""
    enc = nn.network_bytes(model.encoder)
    dec = nn.network_bytes(model.decoder)
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<IBIIIId", _MODEL_VERSION,
                             _VARIANT_CODES[model.variant],
                             model.geometry.n_v, model.geometry.n_h,
                             model.latent_dim, model.codebook_size,
                             model.jitter))
        fh.write(struct.pack("<Q", len(enc)))
        fh.write(enc)
        fh.write(struct.pack("<Q", len(dec)))
        fh.write(dec)
        if model.embedding is not None:
            fh.write(np.ascontiguousarray(model.embedding,
                                          dtype="<f8").tobytes())


def load_model(path) -> VqvaeModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MODEL_MAGIC:
        raise ModelFormatError(f"{path}: bad magic, not a model checkpoint")
    header = struct.calcsize("<IBIIIId")
    version, vcode, n_v, n_h, latent_dim, csize, jitter = \
        struct.unpack("<IBIIIId", data[4:4 + header])
    if version != _MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    if vcode >= len(VARIANTS):
        raise ModelFormatError(f"{path}: unknown variant code {vcode}")
    off = 4 + header
    (enc_len,) = struct.unpack("<Q", data[off:off + 8])
    off += 8
    encoder = nn.network_from_bytes(data[off:off + enc_len], path)
    off += enc_len
    (dec_len,) = struct.unpack("<Q", data[off:off + 8])
    off += 8
    decoder = nn.network_from_bytes(data[off:off + dec_len], path)
    off += dec_len
    embedding = None
    if csize:
        need = 8 * csize
        if len(data) - off != need:
            raise ModelFormatError(
                f"{path}: expected {need} embedding bytes, "
                f"got {len(data) - off}")
        embedding = np.frombuffer(data[off:], dtype="<f8").copy()
    elif len(data) != off:
        raise ModelFormatError(f"{path}: trailing bytes after decoder")
    return VqvaeModel(variant=VARIANTS[vcode],
                      geometry=UraGeometry(n_v=n_v, n_h=n_h),
                      latent_dim=latent_dim, encoder=encoder,
                      decoder=decoder, embedding=embedding, jitter=jitter)
