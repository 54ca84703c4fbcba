"""WMMSE solver for the active beamformer under a sum-power constraint.

The quadratic subproblem in W is solved in closed form through its
stationarity system, with the power multiplier found by bisection, instead
of calling a generic convex solver; the program solved is identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)


@dataclass
class WmmseState:
    weights: np.ndarray       # (K,) MSE weights, >= rate weights
    scalars: np.ndarray       # (K,) complex receive scalars
    channels: np.ndarray      # (K, M) effective row channels h_k^H
    mse: np.ndarray           # (K,) per-user MSE at the optimal scalar


def update_weights_and_scalars(channels: np.ndarray, w: np.ndarray,
                               noise: float, rate_weights: np.ndarray
                               ) -> WmmseState:
    """Closed-form MSE-weight and receive-scalar updates."""
    gains = channels @ w                       # (K, K): h_k^H w_j
    powers = np.abs(gains) ** 2
    own = np.diag(powers)
    total = powers.sum(axis=1) + noise
    sinr = own / (total - own)
    mse_weights = rate_weights * (1.0 + sinr)
    scalars = np.diag(gains) / total
    mse = 1.0 - own / total
    return WmmseState(weights=mse_weights, scalars=scalars,
                      channels=channels, mse=mse)


def solve_beamformer(state: WmmseState, p_max: float,
                     mu_tol: float = 1e-10) -> np.ndarray:
    """Minimize the weighted MSE subject to the sum-power constraint.

    w_j = varpi_j v_j^* (sum_k varpi_k |v_k|^2 h_k h_k^H + mu I)^{-1} h_j,
    with mu >= 0 set by bisection for complementary slackness.
    """
    h = state.channels                          # (K, M)
    varpi = state.weights
    v = state.scalars
    m = h.shape[1]
    coef = varpi * np.abs(v) ** 2               # (K,)
    gram = (h.conj().T * coef) @ h              # (M, M)
    rhs = h.conj().T * (varpi * np.conj(v))     # (M, K)

    if not np.any(np.abs(rhs) > 0):
        return np.zeros((m, h.shape[0]), dtype=complex)

    # diagonalize once; the shifted solves and the power curve
    # ||w(mu)||^2 = sum_i r2_i / (d_i + mu)^2 then cost O(M) per mu
    d, umat = np.linalg.eigh(gram)
    d = np.maximum(d, 0.0)
    proj = umat.conj().T @ rhs                  # (M, K)
    r2 = np.sum(np.abs(proj) ** 2, axis=1)      # (M,)

    def power(mu):
        denom = d + mu
        safe = np.where(denom > 0, denom, 1.0)
        terms = np.where(denom > 0, r2 / safe ** 2,
                         np.where(r2 > 0, np.inf, 0.0))
        return terms.sum()

    def w_of(mu):
        denom = d + mu
        scale = np.where(denom > 0, 1.0 / np.where(denom > 0, denom, 1.0), 0.0)
        return umat @ (proj * scale[:, None])

    # mu = 0 gives the minimum-norm stationary point; keep it if feasible
    if power(0.0) <= p_max * (1 + 1e-12):
        return w_of(0.0)

    mu_lo, mu_hi = 0.0, 1.0
    while power(mu_hi) > p_max:
        mu_hi *= 2.0
        if mu_hi > 1e30:
            return np.zeros((m, h.shape[0]), dtype=complex)
    # Newton on p(mu)^{-1/2}, which is close to affine in mu, with the
    # bracket as a safeguard; a handful of steps reaches machine accuracy
    mu = 0.5 * (mu_lo + mu_hi)
    target = 1.0 / np.sqrt(p_max)
    for _ in range(60):
        denom = d + mu
        terms = r2 / denom ** 2
        p = terms.sum()
        if abs(p - p_max) <= 1e-12 * p_max:
            break
        if p > p_max:
            mu_lo = mu
        else:
            mu_hi = mu
        dp = -2.0 * (terms / denom).sum()
        phi = 1.0 / np.sqrt(p)
        step = (target - phi) / (-0.5 * p ** -1.5 * dp)
        mu_new = mu + step
        if not mu_lo < mu_new < mu_hi:
            mu_new = 0.5 * (mu_lo + mu_hi)
        if mu_hi - mu_lo <= mu_tol * max(1.0, mu_hi):
            mu = mu_new
            break
        mu = mu_new
    w = w_of(mu)
    # land exactly on the power budget (constraint active)
    norm2 = np.linalg.norm(w) ** 2
    if norm2 > 0:
        w *= np.sqrt(p_max / norm2)
    return w


def wsr_of(channels: np.ndarray, w: np.ndarray, noise: float,
           rate_weights: np.ndarray) -> float:
    gains = np.abs(channels @ w) ** 2
    own = np.diag(gains)
    interf = gains.sum(axis=1) - own
    return float(np.dot(rate_weights, np.log2(1.0 + own / (interf + noise))))


def wmmse_loop(channels: np.ndarray, noise: float, rate_weights: np.ndarray,
               p_max: float, w_init: np.ndarray, tol: float,
               max_iter: int = 200) -> np.ndarray:
    """Alternate weight/scalar updates and beamformer solves until the
    weighted sum rate stops improving."""
    w = w_init
    best = wsr_of(channels, w, noise, rate_weights)
    for _ in range(max_iter):
        state = update_weights_and_scalars(channels, w, noise, rate_weights)
        w_new = solve_beamformer(state, p_max)
        val = wsr_of(channels, w_new, noise, rate_weights)
        if val >= best:
            w = w_new
        if val - best < tol:
            break
        best = max(best, val)
    return w


def matched_filter_init(channels: np.ndarray, p_max: float) -> np.ndarray:
    """Equal-power matched filters, the standard warm start."""
    k = channels.shape[0]
    w = channels.conj().T.astype(complex).copy()
    norms = np.linalg.norm(w, axis=0)
    norms[norms == 0] = 1.0
    return w / norms * np.sqrt(p_max / k)
