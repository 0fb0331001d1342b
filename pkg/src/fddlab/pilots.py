"""Pilot observation front end for a uniform rectangular array.

Holds the DFT-derived constants (pilot matrix P, tall structure transform Q)
and the observation/preprocessing pipeline y = P h + n -> Q P^H y. All DFTs
use the unitary convention so orthogonality invariants are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class UraGeometry:
    """Antenna counts of the rectangular array (n_v vertical, n_h horizontal)."""

    n_v: int
    n_h: int

    def __post_init__(self):
        if self.n_v < 1 or self.n_h < 1:
            raise ValueError("antenna counts must be at least 1")

    @property
    def n(self) -> int:
        return self.n_v * self.n_h


def dft_matrix(size: int) -> np.ndarray:
    """Unitary DFT matrix: F[j, k] = exp(-2πi jk/size)/sqrt(size)."""
    idx = np.arange(size)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / size) / np.sqrt(size)


@dataclass(frozen=True)
class PilotMatrix:
    """n_p rows of the 2D-DFT, each rescaled to squared norm rho."""

    entries: np.ndarray
    rho: float
    row_indices: np.ndarray = field(repr=False, default=None)

    @property
    def n_pilots(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class QTransform:
    """Tall 4n×n transform Kron(Q_{n_v}, Q_{n_h}) with Q^H Q = I."""

    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[1]


def build_pilot_matrix(geom: UraGeometry, n_p: int, rho: float = 1.0,
                       selection_seed=None) -> PilotMatrix:
    """Evenly spaced rows floor(k·n/n_p) of the n-point 2D-DFT, row norms rho.

    selection_seed is reserved for a future randomized row selection and is
    currently ignored.
    """
    if n_p < 1:
        raise ValueError("need at least one pilot")
    if n_p > geom.n:
        raise ValueError("more pilots than antennas unsupported")
    if rho <= 0:
        raise ValueError("rho must be positive")
    dft2d = np.kron(dft_matrix(geom.n_v), dft_matrix(geom.n_h))
    rows = (np.arange(n_p) * geom.n) // n_p
    sub = dft2d[rows]
    # unitary rows have unit norm already; rescale to hit rho exactly
    norms = np.linalg.norm(sub, axis=1, keepdims=True)
    entries = sub * (np.sqrt(rho) / norms)
    return PilotMatrix(entries=entries, rho=float(rho), row_indices=rows)


def _half_dft(t: int) -> np.ndarray:
    """First t columns of the unitary 2t×2t DFT."""
    return dft_matrix(2 * t)[:, :t]


def build_q_transform(geom: UraGeometry) -> QTransform:
    return QTransform(np.kron(_half_dft(geom.n_v), _half_dft(geom.n_h)))


@dataclass(frozen=True)
class Observation:
    y: np.ndarray
    noise_var: float


def observe(h: np.ndarray, pilots: PilotMatrix, noise_var: float,
            rng) -> Observation:
    """y = P h + n with circularly-symmetric complex Gaussian noise.

    The noise covariance is noise_var·I (variance noise_var/2 per real and
    imaginary part). rng is a seeded numpy Generator; the same seed gives a
    bit-identical observation.
    """
    h = np.asarray(h)
    if h.shape != (pilots.n,):
        raise ValueError(f"channel length {h.shape} != antennas {pilots.n}")
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    parts = rng.standard_normal((pilots.n_pilots, 2))
    noise = (parts[:, 0] + 1j * parts[:, 1]) * np.sqrt(noise_var / 2.0)
    return Observation(y=pilots.entries @ h + noise, noise_var=float(noise_var))


def observe_batch(channels: np.ndarray, pilots: PilotMatrix, noise_vars,
                  rng) -> np.ndarray:
    """Vectorized observe over rows of channels (m, n) -> (m, n_p).

    noise_vars is a scalar or per-sample vector (m,). One rng draw of shape
    (m, n_p, 2) keeps the stream layout independent of the noise levels.
    """
    channels = np.asarray(channels)
    m = channels.shape[0]
    nv = np.broadcast_to(np.asarray(noise_vars, dtype=np.float64),
                         (m,)).reshape(m, 1)
    if np.any(nv <= 0):
        raise ValueError("noise_var must be positive")
    parts = rng.standard_normal((m, pilots.n_pilots, 2))
    noise = (parts[..., 0] + 1j * parts[..., 1]) * np.sqrt(nv / 2.0)
    return channels @ pilots.entries.T + noise


def preprocess(obs, pilots: PilotMatrix, q: QTransform) -> np.ndarray:
    """Q · P^H · y, the complex feature vector fed to the encoder.

    Accepts an Observation or a bare y vector. The real stacking
    [Re; Im] of the result (see real_stack) is the actual encoder input.
    """
    y = obs.y if isinstance(obs, Observation) else np.asarray(obs)
    if y.shape[-1] != pilots.n_pilots:
        raise ValueError(
            f"observation length {y.shape[-1]} != pilot count {pilots.n_pilots}")
    return y @ pilots.entries.conj() @ q.entries.T


def real_stack(v: np.ndarray) -> np.ndarray:
    """Complex (..., d) -> real (..., 2d) as [Re; Im]."""
    return np.concatenate([np.real(v), np.imag(v)], axis=-1)


def complex_unstack(v: np.ndarray) -> np.ndarray:
    """Inverse of real_stack."""
    d = v.shape[-1] // 2
    return v[..., :d] + 1j * v[..., d:]


def snr_to_noise_var(snr_db: float, rho: float = 1.0) -> float:
    """σ² = rho / 10^(snr_db/10); with rho = 1 the SNR is simply 1/σ²."""
    return rho / (10.0 ** (snr_db / 10.0))
