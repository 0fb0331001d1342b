"""Classical feedback baselines: LS / GMM channel estimation and the
direction-magnitude DFT codebook.

The GMM prior uses zero-mean components whose covariances share the
Q-structure of the learned pipeline (C_k = Q^H diag(c_k) Q + jitter I), so
its M-step reduces to responsibility-weighted averages of Q-domain power
vectors. The DFT codebook is the Kronecker product of two oversampled DFT
frames; feedback is the argmax codeword index plus a float32 magnitude.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .channels import ChannelDataset
from .pilots import (Observation, PilotMatrix, QTransform, UraGeometry,
                     build_q_transform)
from .vqvae import structured_cov


def _as_observation_vector(y) -> np.ndarray:
    return y.y if isinstance(y, Observation) else np.asarray(y)


def ls_estimate(y, pilots: PilotMatrix) -> np.ndarray:
    """Minimum-norm least squares P^+ y."""
    vec = _as_observation_vector(y)
    sol, _, _, _ = np.linalg.lstsq(pilots.entries, vec, rcond=None)
    return sol


@dataclass
class GmmPrior:
    """Zero-mean structured-covariance Gaussian mixture over channels."""

    weights: np.ndarray            # (K,)
    means: np.ndarray              # (K, n), fixed at zero
    spectra: np.ndarray            # (K, 4n) positive
    geometry: UraGeometry
    jitter: float
    fitted: bool = False
    log_likelihoods: np.ndarray = field(default=None, repr=False)
    covariances: np.ndarray = field(default=None, repr=False)  # (K, n, n)

    @property
    def components(self) -> int:
        return self.weights.size


def _component_loglik(channels: np.ndarray, covariances: np.ndarray):
    """log CN(h; 0, C_k) for every sample/component pair -> (m, K)."""
    m, n = channels.shape
    k_comp = covariances.shape[0]
    out = np.empty((m, k_comp))
    for k in range(k_comp):
        chol = np.linalg.cholesky(covariances[k])
        logdet = 2.0 * np.sum(np.log(np.diag(chol).real))
        # one triangular solve with all samples as right-hand sides
        t = solve_triangular(chol, channels.T, lower=True)
        quad = np.sum(np.abs(t) ** 2, axis=0)
        out[:, k] = -n * np.log(np.pi) - logdet - quad
    return out


def responsibilities(prior: GmmPrior, channels: np.ndarray) -> np.ndarray:
    """Posterior p(k | h) for rows of channels."""
    logp = _component_loglik(channels, prior.covariances)
    with np.errstate(divide="ignore"):
        logp = logp + np.log(prior.weights)[None, :]
    return np.exp(logp - logsumexp(logp, axis=1, keepdims=True))


def _kmeans_pp_seed(points: np.ndarray, k_comp: int, rng) -> np.ndarray:
    """k-means++ center selection followed by one hard assignment."""
    m = points.shape[0]
    centers = np.empty((k_comp, points.shape[1]))
    centers[0] = points[rng.integers(m)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for k in range(1, k_comp):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(m, 1.0 / m)
        centers[k] = points[rng.choice(m, p=probs)]
        d2 = np.minimum(d2, np.sum((points - centers[k]) ** 2, axis=1))
    dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(dists, axis=1)


def gmm_fit(ds: ChannelDataset, components: int, q: QTransform, seed: int = 0,
            max_iters: int = 100, tol: float = 1e-8,
            jitter: float = 1e-6) -> GmmPrior:
    """EM fit of the structured mixture; deterministic under seed.

    The M-step is the structure-constrained update
    c_k = real(diag(Q S_k Q^H)) clipped at the jitter floor, with S_k the
    responsibility-weighted sample covariance, which in the Q power domain
    is a responsibility-weighted mean.
    """
    channels = ds.samples
    m, n = channels.shape
    if components > m:
        raise ValueError("more mixture components than samples")
    qmat = q.entries
    power = np.abs(channels @ qmat.T) ** 2  # (m, 4n) Q-domain power
    rng = np.random.default_rng(seed)
    labels = _kmeans_pp_seed(power, components, rng)
    resp = np.zeros((m, components))
    resp[np.arange(m), labels] = 1.0

    weights = spectra = covariances = None
    loglik_trace = []
    last = -np.inf
    for _ in range(max_iters + 1):
        # M-step from the current responsibilities
        counts = resp.sum(axis=0)
        new_weights = counts / m
        new_spectra = np.full((components, 4 * n), jitter)
        new_covs = np.empty((components, n, n), dtype=np.complex128)
        for k in range(components):
            if counts[k] > 0:
                new_spectra[k] = np.maximum(resp[:, k] @ power / counts[k],
                                            jitter)
            elif spectra is not None:
                new_spectra[k] = spectra[k]
            new_covs[k] = structured_cov(new_spectra[k], q, jitter)
        # E-step
        logp = _component_loglik(channels, new_covs)
        with np.errstate(divide="ignore"):
            logp += np.log(new_weights)[None, :]
        norm = logsumexp(logp, axis=1)
        loglik = float(np.sum(norm))
        if loglik < last:
            # the structure-constrained update can oscillate once it is
            # essentially converged; keep the better previous parameters
            break
        weights, spectra, covariances = new_weights, new_spectra, new_covs
        loglik_trace.append(loglik)
        resp = np.exp(logp - norm[:, None])
        if loglik - last < tol * max(1.0, abs(loglik)):
            break
        last = loglik
    return GmmPrior(weights=weights, means=np.zeros((components, n),
                                                    dtype=np.complex128),
                    spectra=spectra, geometry=ds.geometry, jitter=jitter,
                    fitted=True, log_likelihoods=np.asarray(loglik_trace),
                    covariances=covariances)


def gmm_estimate(prior: GmmPrior, y, pilots: PilotMatrix,
                 noise_var: float = None) -> np.ndarray:
    """Posterior-weighted LMMSE estimate
    ĥ = Σ_k p(k|y) C_k P^H (P C_k P^H + σ²I)^{-1} y.

    noise_var is taken from y when y is an Observation."""
    if not prior.fitted:
        raise ValueError("prior has not been fitted")
    vec = _as_observation_vector(y)
    if isinstance(y, Observation):
        noise_var = y.noise_var
    if noise_var is None or noise_var <= 0:
        raise ValueError("a positive noise_var is required")
    p_mat = pilots.entries
    n_p = p_mat.shape[0]
    k_comp = prior.components
    log_post = np.empty(k_comp)
    estimates = np.empty((k_comp, prior.geometry.n), dtype=np.complex128)
    for k in range(k_comp):
        cp = prior.covariances[k] @ p_mat.conj().T  # C_k P^H
        s_mat = p_mat @ cp + noise_var * np.eye(n_p)
        chol = np.linalg.cholesky(s_mat)
        t = solve_triangular(chol, vec, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(chol).real))
        with np.errstate(divide="ignore"):
            log_post[k] = np.log(prior.weights[k]) - logdet - \
                np.sum(np.abs(t) ** 2)
        estimates[k] = cp @ solve_triangular(chol.conj().T, t, lower=False)
    post = np.exp(log_post - logsumexp(log_post))
    return post @ estimates


def save_prior(prior: GmmPrior, path) -> None:
    """Persist a fitted mixture prior as an npz archive."""
    if not prior.fitted:
        raise ValueError("prior has not been fitted")
    np.savez(path, weights=prior.weights, spectra=prior.spectra,
             n_v=prior.geometry.n_v, n_h=prior.geometry.n_h,
             jitter=prior.jitter, log_likelihoods=prior.log_likelihoods)


def load_prior(path) -> GmmPrior:
    """Load a mixture prior saved by save_prior, rebuilding covariances."""
    with np.load(path) as data:
        try:
            weights = data["weights"]
            spectra = data["spectra"]
            geom = UraGeometry(n_v=int(data["n_v"]), n_h=int(data["n_h"]))
            jitter = float(data["jitter"])
            loglik = data["log_likelihoods"]
        except KeyError as exc:
            raise ValueError(f"{path} is not a saved mixture prior: "
                             f"missing array {exc}") from exc
    q = build_q_transform(geom)
    covariances = np.stack([structured_cov(c, q, jitter) for c in spectra])
    return GmmPrior(weights=weights,
                    means=np.zeros((weights.size, geom.n),
                                   dtype=np.complex128),
                    spectra=spectra, geometry=geom, jitter=jitter,
                    fitted=True, log_likelihoods=loglik,
                    covariances=covariances)


@dataclass(frozen=True)
class DftCodebook:
    codewords: np.ndarray  # (n, K_dir), unit-norm columns
    bits_dir: int
    oversampling: tuple

    @property
    def size(self) -> int:
        return self.codewords.shape[1]


def _oversampled_dft(t: int, factor: int) -> np.ndarray:
    """t × (t*factor) frame with columns exp(-i2π t k/(t*factor))/sqrt(t)."""
    rows = np.arange(t)[:, None]
    cols = np.arange(t * factor)[None, :]
    return np.exp(-2j * np.pi * rows * cols / (t * factor)) / np.sqrt(t)


def build_dft_codebook(geom: UraGeometry, bits_dir: int) -> DftCodebook:
    """Kronecker 2D-DFT codebook with 2^bits_dir codewords.

    The total oversampling 2^bits_dir / n is split into (O_v, O_h) with
    O_h ≥ O_v as balanced as possible, keeping the oversampled grid's
    aspect ratio at the antenna aspect ratio.
    """
    k_dir = 2 ** bits_dir
    if k_dir % geom.n:
        raise ValueError(
            f"infeasible factorization: 2^{bits_dir} codewords do not "
            f"split over {geom.n} antennas")
    total = k_dir // geom.n
    o_v = 1
    for cand in range(1, int(np.sqrt(total)) + 1):
        if total % cand == 0:
            o_v = cand
    o_h = total // o_v
    codewords = np.kron(_oversampled_dft(geom.n_v, o_v),
                        _oversampled_dft(geom.n_h, o_h))
    return DftCodebook(codewords=codewords, bits_dir=bits_dir,
                       oversampling=(o_v, o_h))


def select_codeword(h_hat: np.ndarray, cb: DftCodebook) -> int:
    """argmax_k |c_k^H ĥ|, ties resolved to the lowest index."""
    scores = np.abs(cb.codewords.conj().T @ np.asarray(h_hat))
    return int(np.argmax(scores))


@dataclass(frozen=True)
class DirMagFeedback:
    index: int
    magnitude: float

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("index must be nonnegative")
        if self.magnitude < 0:
            raise ValueError("magnitude must be nonnegative")


def dft_feedback(h_hat: np.ndarray, cb: DftCodebook) -> DirMagFeedback:
    """Full MT-side codebook feedback: index of the best codeword plus the
    estimate's norm as a float32 magnitude."""
    idx = select_codeword(h_hat, cb)
    mag = np.float32(np.linalg.norm(h_hat))
    return DirMagFeedback(index=idx, magnitude=float(mag))


def reconstruct_dft(fb: DirMagFeedback, cb: DftCodebook) -> np.ndarray:
    if fb.index >= cb.size:
        raise ValueError("codeword index out of range")
    return fb.magnitude * cb.codewords[:, fb.index]


def pack_dirmag(fb: DirMagFeedback, bits_dir: int) -> bytes:
    """Wire format: bits_dir-bit big-endian index (zero-padded to whole
    bytes) followed by the IEEE-754 big-endian float32 magnitude."""
    if fb.index >= 2 ** bits_dir:
        raise ValueError("index does not fit in bits_dir bits")
    n_bytes = (bits_dir + 7) // 8
    return fb.index.to_bytes(n_bytes, "big") + \
        struct.pack(">f", fb.magnitude)


def unpack_dirmag(data: bytes, bits_dir: int) -> DirMagFeedback:
    n_bytes = (bits_dir + 7) // 8
    if len(data) != n_bytes + 4:
        raise ValueError(f"expected {n_bytes + 4} bytes, got {len(data)}")
    index = int.from_bytes(data[:n_bytes], "big")
    if index >= 2 ** bits_dir:
        raise ValueError("index does not fit in bits_dir bits")
    (magnitude,) = struct.unpack(">f", data[n_bytes:])
    return DirMagFeedback(index=index, magnitude=magnitude)
