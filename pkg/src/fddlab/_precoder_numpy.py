"""Pure-numpy implementation of the WMMSE / stochastic-WMMSE inner loops.

This is the fallback backend; fddlab._precoder_core is the compiled twin
with the same two entry points and semantics. Keep the numerics of both in
lockstep: the precoder update solves v_j = (A + λI)^{-1} b_j in the
eigenbasis of A, bisecting λ ≥ 0 to meet the total power ρ, then rescales
exactly onto the power constraint.
"""

from __future__ import annotations

import numpy as np

# relative eigenvalue cutoff: components of b in the numerical null space of
# A are discarded (b lies in range(A) analytically)
_EIG_CUT = 1e-12


def _sum_rate(channels: np.ndarray, precoders: np.ndarray,
              noise_var: float) -> float:
    cross = channels @ precoders.T  # cross[j, i] = h_j^T v_i
    powers = np.abs(cross) ** 2
    signal = np.diag(powers)
    interference = powers.sum(axis=1) - signal + noise_var
    return float(np.sum(np.log2(1.0 + signal / interference)))


def _matched_filter_init(channels: np.ndarray, rho: float) -> np.ndarray:
    """v_j = conj(h_j)/||h_j|| * sqrt(rho/J); all-zero rows get a flat
    direction so no user starts permanently silent."""
    j_users, n = channels.shape
    norms = np.linalg.norm(channels, axis=1)
    directions = np.empty_like(channels)
    for j in range(j_users):
        if norms[j] > 0:
            directions[j] = np.conj(channels[j]) / norms[j]
        else:
            directions[j] = np.ones(n) / np.sqrt(n)
    return directions * np.sqrt(rho / j_users)


def _mmse_weights(cross: np.ndarray, noise_var: float):
    """Receiver u_j and MMSE weight w_j for cross[j, i] = h_j^T v_i."""
    powers = np.abs(cross) ** 2
    total = powers.sum(axis=1) + noise_var
    diag = np.diagonal(cross)
    u = diag / total
    # 1 - u_j^* h_j^T v_j = 1 - |diag|^2/total, real in (0, 1]
    mse = 1.0 - np.abs(diag) ** 2 / total
    w = 1.0 / mse
    return u, w


def _precoder_update(a_mat: np.ndarray, b_rows: np.ndarray, rho: float,
                     bisect_steps: int) -> np.ndarray:
    """Solve v_j = (A + λI)^{-1} b_j with λ ≥ 0 chosen by bisection so that
    Σ_j ||v_j||² = ρ, then rescale exactly onto the constraint."""
    evals, evecs = np.linalg.eigh(a_mat)
    evals = np.maximum(evals, 0.0)
    top = evals[-1]
    if top <= 0.0:
        raise ValueError("degenerate precoder update: A has no signal space")
    keep = evals > top * _EIG_CUT
    lam_k = evals[keep]
    coords = evecs[:, keep].conj().T @ b_rows.T  # (kept, J)
    weights = np.abs(coords) ** 2

    def power(lam: float) -> float:
        return float(np.sum(weights / (lam_k[:, None] + lam) ** 2))

    hi = 1.0
    for _ in range(200):
        if power(hi) <= rho:
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        if power(mid) > rho:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    precoders = (evecs[:, keep] @ (coords / (lam_k[:, None] + lam))).T
    total = np.sum(np.abs(precoders) ** 2)
    if total <= 0.0:
        raise ValueError("degenerate precoder update: zero precoder power")
    return precoders * np.sqrt(rho / total)


def wmmse_core(channels: np.ndarray, noise_var: float, rho: float,
               max_iters: int, tol: float, tol_window: int,
               bisect_steps: int):
    """Alternating WMMSE updates from the matched-filter start.

    Returns (precoders (J, n), sum-rate trace). Stops early once the
    sum-rate moved less than tol over the last tol_window iterations.
    """
    precoders = _matched_filter_init(channels, rho)
    trace = []
    conj_channels = np.conj(channels)
    for _ in range(max_iters):
        cross = channels @ precoders.T
        u, w = _mmse_weights(cross, noise_var)
        coef = w * np.abs(u) ** 2
        a_mat = (conj_channels.T * coef) @ channels
        b_rows = (w * np.conj(u))[:, None] * conj_channels
        precoders = _precoder_update(a_mat, b_rows, rho, bisect_steps)
        trace.append(_sum_rate(channels, precoders, noise_var))
        if len(trace) > tol_window and \
                abs(trace[-1] - trace[-1 - tol_window]) < tol:
            break
    return precoders, np.asarray(trace)


def swmmse_core(mu: np.ndarray, factors: np.ndarray, noise: np.ndarray,
                noise_var: float, rho: float, i_max: int, bisect_steps: int):
    """Stochastic WMMSE with running averages A, b and step size 1/r.

    mu: (J, n) channel means; factors: (J, n, n) Hermitian covariance
    factors; noise: (i_max, J, n) pregenerated standard circular complex
    Gaussians, so both backends consume the identical sample stream.
    Returns (precoders, per-iteration total power).
    """
    j_users, n = mu.shape
    precoders = _matched_filter_init(mu, rho)
    a_avg = np.zeros((n, n), dtype=np.complex128)
    b_avg = np.zeros((j_users, n), dtype=np.complex128)
    powers = np.empty(i_max)
    for r in range(1, i_max + 1):
        sampled = mu + np.einsum("jab,jb->ja", factors, noise[r - 1])
        cross = sampled @ precoders.T
        u, w = _mmse_weights(cross, noise_var)
        coef = w * np.abs(u) ** 2
        conj_sampled = np.conj(sampled)
        a_new = (conj_sampled.T * coef) @ sampled
        b_new = (w * np.conj(u))[:, None] * conj_sampled
        alpha = 1.0 / r
        a_avg = (1.0 - alpha) * a_avg + alpha * a_new
        b_avg = (1.0 - alpha) * b_avg + alpha * b_new
        precoders = _precoder_update(a_avg, b_avg, rho, bisect_steps)
        powers[r - 1] = np.sum(np.abs(precoders) ** 2)
    return precoders, powers
