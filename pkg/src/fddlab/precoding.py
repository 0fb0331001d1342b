"""Sum-rate evaluation and the WMMSE-family downlink precoders.

The channel/precoder pairing is h^T v (plain transpose, no conjugate)
throughout, which places conj(h) inside the precoder updates. Two backends
implement the iteration loops: a compiled Cython core and a numpy fallback;
selection happens at import time and can be forced with the environment
variable FDDLAB_BACKEND in {auto, compiled, python}.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _precoder_numpy

try:
    from . import _precoder_core
except ImportError:
    _precoder_core = None


def _select_backend():
    choice = os.environ.get("FDDLAB_BACKEND", "auto")
    if choice not in ("auto", "compiled", "python"):
        raise ValueError(f"FDDLAB_BACKEND must be auto/compiled/python, "
                         f"got {choice!r}")
    if choice == "python":
        return _precoder_numpy
    if _precoder_core is None:
        if choice == "compiled":
            raise ImportError("compiled precoder core is not available")
        return _precoder_numpy
    return _precoder_core


_BACKEND = _select_backend()


def backend_name() -> str:
    return "compiled" if _BACKEND is _precoder_core else "python"


def get_backend(name=None):
    """Resolve a backend module by name ('compiled', 'python', or None for
    the import-time default)."""
    if name is None:
        return _BACKEND
    if name == "python":
        return _precoder_numpy
    if name == "compiled":
        if _precoder_core is None:
            raise ImportError("compiled precoder core is not available")
        return _precoder_core
    raise ValueError(f"unknown backend {name!r}")


@dataclass(frozen=True)
class PrecoderSet:
    """Stacked precoding vectors, one row per user; Σ_j ||v_j||² = rho."""

    vectors: np.ndarray  # complex (J, n)
    rho: float

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.vectors) ** 2))


@dataclass(frozen=True)
class PrecoderConfig:
    max_iters: int = 300
    rho: float = 1.0
    tol: float = 1e-6
    tol_window: int = 5
    bisect_steps: int = 64
    samples_per_iter: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.samples_per_iter != 1:
            raise ValueError("only one sample per user per iteration is "
                             "supported")


def _as_matrix(channels) -> np.ndarray:
    mat = np.asarray(channels, dtype=np.complex128)
    if mat.ndim != 2:
        raise ValueError("channels must be a (J, n) stack of row vectors")
    return mat


def sum_rate(channels, precoders, noise_var: float) -> float:
    """Σ_j log2(1 + |h_j^T v_j|² / (Σ_{i≠j} |h_j^T v_i|² + σ²))."""
    mat = _as_matrix(channels)
    vecs = precoders.vectors if isinstance(precoders, PrecoderSet) \
        else np.asarray(precoders, dtype=np.complex128)
    if vecs.shape != mat.shape:
        raise ValueError("precoder stack shape must match channels")
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    return _precoder_numpy._sum_rate(mat, vecs, noise_var)


def wmmse(channels, noise_var: float, cfg: PrecoderConfig = None,
          backend=None):
    """Iterative WMMSE from matched-filter initialization.

    Returns (PrecoderSet, sum-rate trace). The trace is the objective after
    each precoder update; it is nondecreasing up to numerical slack.
    """
    mat = _as_matrix(channels)
    if not np.any(np.abs(mat) > 0):
        raise ValueError("all channels are zero")
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    cfg = cfg or PrecoderConfig()
    impl = get_backend(backend)
    vecs, trace = impl.wmmse_core(mat, float(noise_var), cfg.rho,
                                  cfg.max_iters, cfg.tol, cfg.tol_window,
                                  cfg.bisect_steps)
    return PrecoderSet(vectors=vecs, rho=cfg.rho), np.asarray(trace)


def _hermitian_factor(cov: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root; raises if cov is materially indefinite."""
    cov = np.asarray(cov, dtype=np.complex128)
    evals, evecs = np.linalg.eigh(cov)
    scale = max(evals[-1], 0.0)
    if evals[0] < -1e-8 * max(scale, 1.0):
        raise ValueError("covariance is not positive semidefinite")
    evals = np.maximum(evals, 0.0)
    return (evecs * np.sqrt(evals)) @ evecs.conj().T


def sample_channels(stats, count: int, rng) -> np.ndarray:
    """Draw count samples h = mu + L w, w standard circular complex
    Gaussian, L the Hermitian factor of stats.cov."""
    mu = np.asarray(stats.mu, dtype=np.complex128)
    factor = _hermitian_factor(stats.cov)
    parts = rng.standard_normal((count, mu.size, 2))
    w = (parts[..., 0] + 1j * parts[..., 1]) / np.sqrt(2.0)
    return mu[None, :] + w @ factor.T


def swmmse(stats_list, noise_var: float, cfg: PrecoderConfig = None, rng=None,
           backend=None) -> PrecoderSet:
    """Stochastic WMMSE on per-user channel statistics (mu, cov).

    Each iteration draws one fresh sample per user from CN(mu_j, cov_j),
    updates the running averages with step 1/r, and solves the precoder
    subproblem; runs the full iteration budget (no early stop).
    """
    if rng is None:
        raise ValueError("swmmse needs an explicit rng")
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    cfg = cfg or PrecoderConfig()
    mu = np.stack([np.asarray(s.mu, dtype=np.complex128) for s in stats_list])
    if not np.any(np.abs(mu) > 0):
        raise ValueError("all channel means are zero")
    factors = np.stack([_hermitian_factor(s.cov) for s in stats_list])
    j_users, n = mu.shape
    parts = rng.standard_normal((cfg.max_iters, j_users, n, 2))
    noise = (parts[..., 0] + 1j * parts[..., 1]) / np.sqrt(2.0)
    impl = get_backend(backend)
    vecs, powers = impl.swmmse_core(mu, factors, noise, float(noise_var),
                                    cfg.rho, cfg.max_iters, cfg.bisect_steps)
    set_ = PrecoderSet(vectors=vecs, rho=cfg.rho)
    # bisection plus exact rescale keeps every iterate on the constraint
    assert np.all(np.abs(powers - cfg.rho) <= 1e-6 * cfg.rho)
    return set_
