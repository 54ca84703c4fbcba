"""SINR, per-user rate, and weighted sum-rate evaluation for ES/MS/TS."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import CascadeBundle, TRANSMISSION, REFLECTION

ES, MS, TS = "ES", "MS", "TS"


@dataclass
class PassiveCoefficients:
    """Transmission/reflection amplitudes and phase shifts of the surface."""

    beta_t: np.ndarray   # (N,) in [0,1]
    beta_r: np.ndarray   # (N,) in [0,1]
    theta_t: np.ndarray  # (N,) in [0, 2pi)
    theta_r: np.ndarray  # (N,) in [0, 2pi)
    protocol: str = ES

    def q(self, side: str) -> np.ndarray:
        """Conjugated coefficient vector q_kappa[n] = sqrt(beta) e^{-j theta}."""
        beta = self.beta_t if side == TRANSMISSION else self.beta_r
        theta = self.theta_t if side == TRANSMISSION else self.theta_r
        return np.sqrt(beta) * np.exp(-1j * theta)

    def copy(self) -> "PassiveCoefficients":
        return PassiveCoefficients(self.beta_t.copy(), self.beta_r.copy(),
                                   self.theta_t.copy(), self.theta_r.copy(),
                                   self.protocol)

    def feasible(self, atol: float = 1e-9) -> bool:
        if self.protocol == TS:
            return (np.allclose(self.beta_t, 1.0, atol=atol)
                    and np.allclose(self.beta_r, 1.0, atol=atol))
        ok = np.all(self.beta_t > -atol) and np.all(self.beta_r > -atol)
        ok = ok and np.allclose(self.beta_t + self.beta_r, 1.0, atol=atol)
        if self.protocol == MS:
            ok = ok and np.all(np.minimum(self.beta_t, 1 - self.beta_t) < atol)
        return bool(ok)


def unit_coefficients(n: int, protocol: str = TS) -> PassiveCoefficients:
    return PassiveCoefficients(np.ones(n), np.ones(n),
                               np.zeros(n), np.zeros(n), protocol)


@dataclass
class BeamformingState:
    """Active beamformers plus TS time shares."""

    w: np.ndarray | None = None      # (M, J) for ES/MS
    w_t: np.ndarray | None = None    # (M, |J_t|) for TS
    w_r: np.ndarray | None = None    # (M, |J_r|) for TS
    tau_t: float = 0.5
    tau_r: float = 0.5


def effective_channels(bundle: CascadeBundle,
                       coeffs: PassiveCoefficients) -> np.ndarray:
    """Stack of q_{kappa(j)}^H V_j rows, shape (J, M)."""
    sides = np.asarray(bundle.realization.user_side)
    out = np.empty((bundle.g.shape[0], bundle.h.shape[1]), dtype=complex)
    for side in (TRANSMISSION, REFLECTION):
        idx = np.flatnonzero(sides == side)
        if idx.size:
            q = coeffs.q(side)
            out[idx] = (np.conj(q)[None, :] * bundle.g[idx]) @ bundle.h
    return out


def sinr_es_ms(j: int, bundle: CascadeBundle, w: np.ndarray,
               coeffs: PassiveCoefficients) -> float:
    """ES/MS SINR: interference counts every other user's stream."""
    side = bundle.realization.user_side[j]
    eff = bundle.effective_channel(j, coeffs.q(side))
    powers = np.abs(eff @ w) ** 2
    noise = bundle.cfg.noise_power
    interference = powers.sum() - powers[j]
    return float(powers[j] / (interference + noise))


def rate_ts(j: int, bundle: CascadeBundle, w_side: np.ndarray,
            q_side: np.ndarray, tau_side: float) -> float:
    """TS rate: interference runs over same-side users only, scaled by tau."""
    sides = np.asarray(bundle.realization.user_side)
    side = bundle.realization.user_side[j]
    members = np.flatnonzero(sides == side)
    col = int(np.flatnonzero(members == j)[0])
    eff = bundle.effective_channel(j, q_side)
    powers = np.abs(eff @ w_side) ** 2
    interference = powers.sum() - powers[col]
    sinr = powers[col] / (interference + bundle.cfg.noise_power)
    return float(tau_side * np.log2(1.0 + sinr))


def user_rates(protocol: str, bundle: CascadeBundle, state: BeamformingState,
               coeffs: PassiveCoefficients) -> np.ndarray:
    J = bundle.g.shape[0]
    rates = np.zeros(J)
    if protocol in (ES, MS):
        for j in range(J):
            rates[j] = np.log2(1.0 + sinr_es_ms(j, bundle, state.w, coeffs))
    else:
        for side, w_side, tau in ((TRANSMISSION, state.w_t, state.tau_t),
                                  (REFLECTION, state.w_r, state.tau_r)):
            members = bundle.realization.side_users(side)
            if members.size == 0:
                continue
            q = coeffs.q(side)
            for j in members:
                rates[j] = rate_ts(int(j), bundle, w_side, q, tau)
    return rates


def wsr(protocol: str, bundle: CascadeBundle, state: BeamformingState,
        coeffs: PassiveCoefficients, weights: np.ndarray) -> float:
    return float(np.dot(weights, user_rates(protocol, bundle, state, coeffs)))
