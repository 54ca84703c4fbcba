"""Movable-element position optimization.

Penalty-transformed, log-sum-exp-smoothed, tanh-reparameterized gradient
ascent over the element position matrix, with analytic rate gradients.

The per-element rate derivative is evaluated exactly: writing the cascaded
signal seen around element n as a sum of per-path phasors plus the constant
contribution of the other elements, the derivative couples every phasor
with the *total* phasor sum (the constant-term interaction is the dominant
part; the intra-element cross-path terms are kept as well so that the
gradient matches finite differences for any number of paths).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import (CascadeBundle, ChannelRealization, TRANSMISSION,
                      REFLECTION, assemble_cascade, bs_antenna_positions,
                      build_frm, min_pairwise_distance, positions_from_tilde,
                      tilde_from_positions, ElementPositions)
from .config import AlgorithmConfig, SystemConfig
from .rates import PassiveCoefficients, BeamformingState

LN2 = np.log(2.0)


# --------------------------------------------------------------------------
# reparameterization
# --------------------------------------------------------------------------

def reparam(u_tilde: np.ndarray, region_side: float) -> np.ndarray:
    """U = (A/2) tanh(U~), elementwise; keeps positions strictly inside C."""
    return positions_from_tilde(u_tilde, region_side)


def chain_factor(u_tilde: np.ndarray, region_side: float) -> np.ndarray:
    """dU/dU~ = (A/2)(1 - tanh^2(U~)), elementwise."""
    t = np.tanh(u_tilde)
    return (region_side / 2.0) * (1.0 - t * t)


# --------------------------------------------------------------------------
# distance penalty (evaluated in the unconstrained space)
# --------------------------------------------------------------------------

def penalty_value_and_grad(u_tilde: np.ndarray, eta1: float, rho: float,
                           d0: float, region_side: float):
    """Smoothed minimum-distance penalty and its gradient w.r.t. U~.

    The pairwise constraint is the scaled form 2*D0/A <= ||tanh u~_n -
    tanh u~_n'||; each violation is smoothed by rho*log(1+exp(g/rho)).
    Returns (value, gradient) of the penalty term itself (the ascent
    objective subtracts it).
    """
    n = u_tilde.shape[1]
    if n < 2:
        return 0.0, np.zeros_like(u_tilde)
    t = np.tanh(u_tilde)                     # (2, N)
    diff = t[:, :, None] - t[:, None, :]     # (2, N, N)
    dist = np.sqrt((diff ** 2).sum(axis=0))
    np.fill_diagonal(dist, np.inf)
    g = 2.0 * d0 / region_side - dist        # (N, N), -inf on the diagonal

    iu = np.triu_indices(n, k=1)
    # softplus via logaddexp is overflow-safe in both directions
    value = eta1 * rho * np.logaddexp(0.0, g[iu] / rho).sum()

    # logistic via tanh is overflow-safe; -inf diagonal maps to exactly 0
    sig = 0.5 * (1.0 + np.tanh(g / (2.0 * rho)))
    np.fill_diagonal(sig, 0.0)
    safe = np.where(dist > 0, dist, 1.0)     # coincident pairs get zero pull
    unit = diff / safe[None, :, :]
    # d g / d u~_n = -(unit diff) * (1 - tanh^2 u~_n), summed over partners
    grad_t = -(sig[None, :, :] * unit).sum(axis=2)   # (2, N) w.r.t. tanh
    grad = eta1 * grad_t * (1.0 - t * t)
    return float(value), grad


# --------------------------------------------------------------------------
# weighted sum-rate objective and analytic position gradient
# --------------------------------------------------------------------------

@dataclass
class _Group:
    """Users sharing one active beamformer and one interference set."""

    users: np.ndarray        # user indices, aligned with columns below
    w: np.ndarray            # (M, K) active beamformer for this group
    own_col: np.ndarray      # column of w carrying each user's own stream
    q_rows: np.ndarray       # (len(users), N) per-user surface coefficients
    tau: float               # time share multiplying the rates


class PositionObjective:
    """Weighted sum rate as a function of the element positions.

    For ES/MS there is one group holding every user (full interference);
    for TS one group per side with same-side interference and tau scaling.
    """

    def __init__(self, cfg: SystemConfig, realization: ChannelRealization,
                 groups: list[_Group], weights: np.ndarray):
        self.cfg = cfg
        self.real = realization
        self.groups = groups
        self.weights = np.asarray(weights, dtype=float)
        self.k0 = 2.0 * np.pi / cfg.wavelength

        e_bs = build_frm(bs_antenna_positions(cfg), realization.bs_theta,
                         realization.bs_phi, cfg.wavelength)
        self._bmats = [realization.bs_path_gains[:, None] * (e_bs @ g.w)
                       for g in groups]                     # (L, K) each
        self.cx_inc = np.cos(realization.inc_theta) * np.sin(realization.inc_phi)
        self.sy_inc = np.sin(realization.inc_theta)
        cxu = np.cos(realization.user_theta) * np.sin(realization.user_phi)
        syu = np.sin(realization.user_theta)
        sg = realization.user_path_gains
        self._sig = sg                                       # (J, L)
        self._sigx = sg * cxu
        self._sigy = sg * syu

    def _user_fields(self, u: np.ndarray, users: np.ndarray):
        """Per-user g rows and their direction-weighted variants, (len, N)."""
        th = self.real.user_theta[users]
        ph = self.real.user_phi[users]
        cx = np.cos(th) * np.sin(ph)
        sy = np.sin(th)
        rho = cx[:, :, None] * u[0][None, None, :] + sy[:, :, None] * u[1][None, None, :]
        f = np.exp(1j * self.k0 * rho)                        # (len, L, N)
        sig = self._sig[users]
        g = np.einsum("ul,uln->un", sig, f)
        gx = np.einsum("ul,uln->un", self._sigx[users], f)
        gy = np.einsum("ul,uln->un", self._sigy[users], f)
        return g, gx, gy

    def _incident(self, u: np.ndarray):
        f_in = build_frm(u, self.real.inc_theta, self.real.inc_phi,
                         self.cfg.wavelength)                 # (L, N)
        return f_in

    def value(self, u: np.ndarray) -> float:
        return self._evaluate(u, with_grad=False)[0]

    def value_and_grad(self, u: np.ndarray):
        return self._evaluate(u, with_grad=True)

    def _evaluate(self, u: np.ndarray, with_grad: bool):
        noise = self.cfg.noise_power
        f_in = self._incident(u)
        f_in_c = f_in.conj()
        total = 0.0
        grad = np.zeros_like(u) if with_grad else None

        for group, bmat in zip(self.groups, self._bmats):
            if group.users.size == 0:
                continue
            g, gx, gy = self._user_fields(u, group.users)
            hw = f_in_c.T @ bmat                              # (N, K)
            gq = group.q_rows.conj() * g                      # (len, N)
            tmat = gq @ hw                                    # (len, K)
            powers = np.abs(tmat) ** 2
            own = powers[np.arange(len(group.users)), group.own_col]
            interf = powers.sum(axis=1) - own
            sinr = own / (interf + noise)
            rates = group.tau * np.log2(1.0 + sinr)
            w_users = self.weights[group.users]
            total += float(np.dot(w_users, rates))

            if not with_grad:
                continue
            hwx = f_in_c.T @ (self.cx_inc[:, None] * bmat)
            hwy = f_in_c.T @ (self.sy_inc[:, None] * bmat)
            denom = LN2 * (1.0 + sinr) * (interf + noise) ** 2
            coef_own = (interf + noise) / denom
            coef_int = -own / denom
            scale = group.tau * w_users
            s = (coef_int[:, None] * np.conj(tmat)) * scale[:, None]
            s[np.arange(len(group.users)), group.own_col] = \
                scale * coef_own * np.conj(tmat[np.arange(len(group.users)),
                                                group.own_col])
            sh = hw @ s.T                                     # (N, len)
            shx = hwx @ s.T
            shy = hwy @ s.T
            qc = group.q_rows.conj().T                        # (N, len)
            gx_t, gy_t, g_t = gx.T, gy.T, g.T
            gradx = 2.0 * np.real(1j * self.k0 * qc * (gx_t * sh - g_t * shx))
            grady = 2.0 * np.real(1j * self.k0 * qc * (gy_t * sh - g_t * shy))
            grad[0] += gradx.sum(axis=1)
            grad[1] += grady.sum(axis=1)

        return total, grad


def es_objective(cfg, realization, w, coeffs: PassiveCoefficients,
                 weights) -> PositionObjective:
    sides = np.asarray(realization.user_side)
    n = cfg.num_elements
    q_rows = np.empty((len(sides), n), dtype=complex)
    for side in (TRANSMISSION, REFLECTION):
        idx = np.flatnonzero(sides == side)
        if idx.size:
            q_rows[idx] = coeffs.q(side)[None, :]
    users = np.arange(len(sides))
    group = _Group(users=users, w=w, own_col=users.copy(),
                   q_rows=q_rows, tau=1.0)
    return PositionObjective(cfg, realization, [group], weights)


def ts_objective(cfg, realization, state: BeamformingState,
                 coeffs: PassiveCoefficients, weights) -> PositionObjective:
    groups = []
    for side, w_side, tau in ((TRANSMISSION, state.w_t, state.tau_t),
                              (REFLECTION, state.w_r, state.tau_r)):
        members = realization.side_users(side)
        if members.size == 0:
            continue
        q = coeffs.q(side)
        q_rows = np.tile(q, (members.size, 1))
        groups.append(_Group(users=members, w=w_side,
                             own_col=np.arange(members.size),
                             q_rows=q_rows, tau=tau))
    return PositionObjective(cfg, realization, groups, weights)


# --------------------------------------------------------------------------
# reference (non-vectorized) workspace for gradient audits
# --------------------------------------------------------------------------

@dataclass
class GradientWorkspace:
    """Per-(element, user) phasor decomposition of the cascaded signal.

    Holds the constant terms c_{n,j} / i_{n,j}^{j'}, the per-path amplitude
    products, and the angle-difference coefficients, so the amplitude/phase
    expansion of |q^H V_j w|^2 can be rebuilt and checked term by term.
    """

    a: np.ndarray        # (J, N, L) per-element user-side phasors
    b: np.ndarray        # (L, J) BS-side phasors per beamformer column
    c: np.ndarray        # (N, J) constant term for the own stream
    i_cross: np.ndarray  # (N, J, J) constant term per interfering stream
    zeta: np.ndarray     # (J, L, L) x-direction angle differences
    mu: np.ndarray       # (J, L, L) y-direction angle differences
    t: np.ndarray        # (J, J) full cascaded scalars q^H V_j w_k
    k0: float

    def upsilon_from_expansion(self, n: int, j: int, u_n: np.ndarray) -> float:
        """Rebuild |q^H V_j w_j|^2 around element n from the expansion."""
        phases = (self.k0 * (self.zeta[j] * u_n[0] + self.mu[j] * u_n[1])
                  + np.angle(self.b[:, j])[None, :]
                  + np.angle(self.a[j, n])[:, None])
        amp = np.abs(self.a[j, n])[:, None] * np.abs(self.b[:, j])[None, :]
        re = (amp * np.cos(phases)).sum() + np.abs(self.c[n, j]) * np.cos(np.angle(self.c[n, j]))
        im = (amp * np.sin(phases)).sum() + np.abs(self.c[n, j]) * np.sin(np.angle(self.c[n, j]))
        return float(re ** 2 + im ** 2)


def build_workspace(bundle: CascadeBundle, w: np.ndarray,
                    coeffs: PassiveCoefficients) -> GradientWorkspace:
    cfg, real = bundle.cfg, bundle.realization
    sides = np.asarray(real.user_side)
    J = real.num_users
    N = cfg.num_elements
    L = cfg.num_paths
    k0 = 2.0 * np.pi / cfg.wavelength

    b = real.bs_path_gains[:, None] * (bundle.e_bs @ w)       # (L, J)
    a = np.empty((J, N, L), dtype=complex)
    t = np.empty((J, J), dtype=complex)
    for j in range(J):
        q = coeffs.q(sides[j])
        a[j] = np.conj(q)[:, None] * real.user_path_gains[j][None, :]
        t[j] = (np.conj(q) * bundle.g[j]) @ (bundle.h @ w)

    # per-element contributions and the complementary constants
    c = np.empty((N, J), dtype=complex)
    i_cross = np.empty((N, J, J), dtype=complex)
    for j in range(J):
        for n in range(N):
            f_jn = np.outer(bundle.f_users[j, :, n],
                            np.conj(bundle.f_in[:, n]))       # (L, L)
            for k in range(J):
                term = a[j, n] @ f_jn @ b[:, k]
                i_cross[n, j, k] = t[j, k] - term
            c[n, j] = i_cross[n, j, j]

    cxu = np.cos(real.user_theta) * np.sin(real.user_phi)     # (J, L)
    syu = np.sin(real.user_theta)
    cxi = np.cos(real.inc_theta) * np.sin(real.inc_phi)       # (L,)
    syi = np.sin(real.inc_theta)
    zeta = cxu[:, :, None] - cxi[None, None, :]
    mu = syu[:, :, None] - syi[None, None, :]
    return GradientWorkspace(a=a, b=b, c=c, i_cross=i_cross,
                             zeta=zeta, mu=mu, t=t, k0=k0)


# --------------------------------------------------------------------------
# backtracking line search and the outer penalty loop
# --------------------------------------------------------------------------

def backtracking_step(p_fn, u_tilde: np.ndarray, grad_tilde: np.ndarray,
                      p_current: float, tau_init: float, omega_tau: float,
                      delta: float, max_halvings: int = 60):
    """Armijo backtracking along the ascent direction in the free space.

    Returns (tau, next point, next value); tau == 0 signals stagnation
    (no acceptable step within the halving budget).
    """
    gnorm2 = float((grad_tilde ** 2).sum())
    if gnorm2 == 0.0:
        return 0.0, u_tilde, p_current
    tau = tau_init
    for _ in range(max_halvings + 1):
        cand = u_tilde + tau * grad_tilde
        p_new = p_fn(cand)
        if p_new >= p_current + delta * tau * gnorm2:
            return tau, cand, p_new
        tau *= omega_tau
    return 0.0, u_tilde, p_current


def _candidate_scan(objective: PositionObjective, cfg: SystemConfig,
                    pts_per_side: int = 41) -> np.ndarray:
    """Coarse grid scan used to seed the single-element case."""
    half = cfg.region_side / 2.0 * 0.999
    axis = np.linspace(-half, half, pts_per_side)
    best_val, best_u = -np.inf, None
    for x in axis:
        for y in axis:
            u = np.array([[x], [y]])
            val = objective.value(u)
            if val > best_val:
                best_val, best_u = val, u
    return best_u


def optimize_positions(objective: PositionObjective, u_init: np.ndarray,
                       cfg: SystemConfig, alg: AlgorithmConfig,
                       max_outer: int = 20, trace: list | None = None):
    """Nested penalty/gradient-ascent loop over element positions.

    Inner loop: Armijo gradient ascent on the smoothed penalized objective
    until the increment drops below the inner tolerance or the iteration
    cap.  Outer loop: grow the penalty factor and sharpen the smoothing
    until the pairwise-distance constraint holds.  Returns the best
    distance-feasible iterate by true objective value.
    """
    a_side = cfg.region_side
    d0 = cfg.min_distance
    n = u_init.shape[1]

    if n == 1:
        seeded = _candidate_scan(objective, cfg)
        if objective.value(seeded) > objective.value(u_init):
            u_init = seeded

    u_tilde = tilde_from_positions(u_init, a_side)
    eta1 = alg.initial_penalty
    rho = alg.initial_smoothing

    def p_value(ut):
        val = objective.value(reparam(ut, a_side))
        pen, _ = penalty_value_and_grad(ut, eta1, rho, d0, a_side)
        return val - pen

    best_u = None
    best_wsr = -np.inf
    init_u = reparam(u_tilde, a_side)
    if min_pairwise_distance(init_u) >= d0 - 1e-9:
        best_u = init_u
        best_wsr = objective.value(init_u)

    converged = False
    tau_start = alg.initial_step
    for outer in range(max_outer):
        p_cur = p_value(u_tilde)
        for inner in range(alg.max_inner):
            u = reparam(u_tilde, a_side)
            wsr_val, grad_u = objective.value_and_grad(u)
            _, pen_grad = penalty_value_and_grad(u_tilde, eta1, rho, d0, a_side)
            grad_tilde = grad_u * chain_factor(u_tilde, a_side) - pen_grad
            tau, u_tilde_next, p_next = backtracking_step(
                p_value, u_tilde, grad_tilde, p_cur,
                tau_start, alg.step_shrink, alg.armijo_delta)
            if tau > 0.0:
                # reopen the step one notch so the search stays two-sided
                tau_start = min(alg.initial_step, tau / alg.step_shrink)
            if trace is not None:
                trace.append((outer, inner, p_cur, wsr_val,
                              min_pairwise_distance(u), eta1, rho, tau))
            if tau == 0.0:
                break
            increment = p_next - p_cur
            u_tilde, p_cur = u_tilde_next, p_next
            u_new = reparam(u_tilde, a_side)
            if min_pairwise_distance(u_new) >= d0 - 1e-9:
                wsr_new = objective.value(u_new)
                if wsr_new > best_wsr:
                    best_wsr, best_u = wsr_new, u_new
            if increment <= alg.inner_tol:
                break
        u = reparam(u_tilde, a_side)
        if min_pairwise_distance(u) >= d0 - 1e-9:
            converged = True
            wsr_final = objective.value(u)
            if wsr_final > best_wsr:
                best_wsr, best_u = wsr_final, u
            break
        eta1 *= alg.penalty_growth
        rho *= alg.smoothing_decay

    if best_u is None:
        # never distance-feasible: hand back the final point, flagged
        best_u = reparam(u_tilde, a_side)
        best_wsr = objective.value(best_u)
        converged = False

    result = ElementPositions(u=best_u,
                              u_tilde=tilde_from_positions(best_u, a_side))
    return result, {"converged": converged, "wsr": best_wsr}
