"""Alternating-optimization drivers for every protocol and baseline.

Each driver cycles block updates (element positions, active beamformers,
passive coefficients, and for time switching the time shares) until the
weighted sum rate stops improving.  Every block is run keep-best, so the
recorded WSR trace is nondecreasing up to solver tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .active_bf import matched_filter_init, wmmse_loop
from .channel import (CascadeBundle, ChannelRealization, REFLECTION,
                      TRANSMISSION, assemble_cascade, min_pairwise_distance)
from .config import AlgorithmConfig, SystemConfig
from .passive_bf import (joint_split_update, joint_ts_update,
                         optimize_support_phases, resolve_weights)
from .position_opt import es_objective, optimize_positions, ts_objective
from .rates import (ES, MS, TS, BeamformingState, PassiveCoefficients,
                    effective_channels, unit_coefficients, user_rates, wsr)
from .rng import GENERATOR_ID

MAX_AO_ROUNDS = 30

# Per-round pass budgets for the joint passive/active block.  While the
# element positions are still moving, a short budget per round is enough;
# once the geometry freezes, the block runs to its joint fixed point so
# the outer trace can actually stabilize.
SCA_ROUND_CAP = 12
JOINT_TAIL_CAP = 400

# The element-position ascent is first order and keeps trickling tiny
# gains indefinitely; the geometry is frozen after a fixed number of
# rounds (or once its round gain drops below the threshold) so the
# beamforming blocks can settle to a fixed point.
POS_MOVE_ROUNDS = 5
POS_FREEZE_TOL = 1e-3

# Round gain below which a converged joint tail ends the outer loop; the
# penalty-schedule restart keeps trickling gains of this order forever.
JOINT_STOP_TOL = 1e-3

# Tail rounds that restart the penalty schedule from its initial value
# before the grown penalty is carried across rounds.
EXPLORE_TAILS = 2

SCHEMES = ("ES", "MS", "TS", "FPE-ES", "FPE-MS", "FPE-TS", "ME-RIS")


@dataclass
class SolveResult:
    """Converged state of one alternating-optimization run."""

    protocol: str
    wsr: float
    rates: np.ndarray
    positions: np.ndarray              # (2, N) meters
    coeffs: PassiveCoefficients
    state: BeamformingState
    trace: list = field(default_factory=list)   # per-round WSR
    converged: bool = False
    seconds: float = 0.0
    seed: int | None = None
    # worst trace-minus-spectral-norm gap of the lifted coefficient
    # matrices at the last passive update (0 when phases are exact)
    rank_residual: float = 0.0


# --------------------------------------------------------------------------
# initialization helpers
# --------------------------------------------------------------------------

def _most_square_grid(n: int) -> tuple:
    r = int(np.floor(np.sqrt(n)))
    while n % r:
        r -= 1
    return r, n // r


def fpe_grid(cfg: SystemConfig) -> np.ndarray:
    """Centered half-wavelength grid of all N elements; errors if it does
    not fit inside the region."""
    rows, cols = _most_square_grid(cfg.num_elements)
    s = cfg.wavelength / 2.0
    if (cols - 1) * s > cfg.region_side or (rows - 1) * s > cfg.region_side:
        raise ValueError("half-wavelength grid does not fit inside the region")
    x = (np.arange(cols) - (cols - 1) / 2.0) * s
    y = (np.arange(rows) - (rows - 1) / 2.0) * s
    xx, yy = np.meshgrid(x, y)
    return np.vstack([xx.ravel(), yy.ravel()])


def initial_positions(cfg: SystemConfig) -> np.ndarray:
    """Grid start for movable runs: half-wavelength spacing when it fits,
    otherwise compressed just enough to stay inside the region."""
    rows, cols = _most_square_grid(cfg.num_elements)
    sx = cfg.wavelength / 2.0
    sy = cfg.wavelength / 2.0
    if cols > 1:
        sx = min(sx, cfg.region_side / (cols - 1))
    if rows > 1:
        sy = min(sy, cfg.region_side / (rows - 1))
    x = (np.arange(cols) - (cols - 1) / 2.0) * sx
    y = (np.arange(rows) - (rows - 1) / 2.0) * sy
    xx, yy = np.meshgrid(x, y)
    return np.vstack([xx.ravel(), yy.ravel()])


def _aligned_phases(bundle: CascadeBundle, w: np.ndarray,
                    weights: np.ndarray, side: str) -> np.ndarray:
    """Phases co-phasing the cascaded channel of the side's strongest user."""
    members = bundle.realization.side_users(side)
    n = bundle.g.shape[1]
    if members.size == 0:
        return np.zeros(n)
    hw = bundle.h @ w                       # (N, J)
    best, theta = -1.0, np.zeros(n)
    for j in members:
        a = bundle.g[j] * hw[:, j]
        score = weights[j] * float(np.linalg.norm(a))
        if score > best:
            best = score
            theta = np.mod(-np.angle(a), 2.0 * np.pi)
    return theta


def _initial_split_coeffs(bundle: CascadeBundle, protocol: str,
                          weights: np.ndarray):
    """beta and matched-filter W start for the amplitude-split protocols."""
    n = bundle.g.shape[1]
    if protocol == MS:
        beta = (np.arange(n) % 2 == 0).astype(float)   # alternate assignment
    else:
        beta = np.full(n, 0.5)
    coeffs = PassiveCoefficients(beta, 1.0 - beta, np.zeros(n), np.zeros(n),
                                 protocol)
    channels = effective_channels(bundle, coeffs)
    w = matched_filter_init(channels, bundle.cfg.max_power)
    coeffs.theta_t = _aligned_phases(bundle, w, weights, TRANSMISSION)
    coeffs.theta_r = _aligned_phases(bundle, w, weights, REFLECTION)
    channels = effective_channels(bundle, coeffs)
    w = matched_filter_init(channels, bundle.cfg.max_power)
    return coeffs, w


# --------------------------------------------------------------------------
# ES / MS (and their fixed-position and frozen-assignment variants)
# --------------------------------------------------------------------------

def _run_split(realization: ChannelRealization, cfg: SystemConfig,
               alg: AlgorithmConfig, protocol: str, move: bool,
               frozen_support: tuple | None = None) -> SolveResult:
    """Shared AO loop for ES, MS, FPE-ES/MS, and the two-surface baseline.

    ``frozen_support`` pins the amplitude split: (transmission indices,
    reflection indices); the passive block then only rotates phases.
    """
    start = time.perf_counter()
    u = initial_positions(cfg) if move else fpe_grid(cfg)
    bundle = assemble_cascade(cfg, realization, u)
    weights = resolve_weights(bundle)
    noise, p_max = cfg.noise_power, cfg.max_power

    if frozen_support is None:
        coeffs, w = _initial_split_coeffs(bundle, protocol, weights)
    else:
        sup_t, sup_r = frozen_support
        beta = np.zeros(cfg.num_elements)
        beta[np.asarray(sup_t, dtype=int)] = 1.0
        coeffs = PassiveCoefficients(beta, 1.0 - beta,
                                     np.zeros_like(beta), np.zeros_like(beta),
                                     MS)
        channels = effective_channels(bundle, coeffs)
        w = matched_filter_init(channels, p_max)
        coeffs.theta_t = _aligned_phases(bundle, w, weights, TRANSMISSION)
        coeffs.theta_r = _aligned_phases(bundle, w, weights, REFLECTION)
        channels = effective_channels(bundle, coeffs)
        w = matched_filter_init(channels, p_max)

    state = BeamformingState(w=w)
    cur = wsr(protocol, bundle, state, coeffs, weights)
    trace = [cur]
    converged = False
    passive_ok = True
    eta_carry = None
    last_residual = 0.0
    tails_done = 0
    moves_left = POS_MOVE_ROUNDS if move else 0
    for _ in range(MAX_AO_ROUNDS):
        prev = cur
        if moves_left:
            objective = es_objective(cfg, realization, state.w, coeffs, weights)
            pos, pos_info = optimize_positions(objective, u, cfg, alg)
            u = pos.u
            bundle = assemble_cascade(cfg, realization, u)
            moves_left -= 1
            if pos_info["wsr"] - prev < POS_FREEZE_TOL:
                moves_left = 0
        channels = effective_channels(bundle, coeffs)
        state.w = wmmse_loop(channels, noise, weights, p_max, state.w,
                             alg.ao_tol)
        tail_fixed = False
        round_locked = True
        if frozen_support is None:
            report: dict = {}
            cap = SCA_ROUND_CAP if moves_left else JOINT_TAIL_CAP
            coeffs, state.w = joint_split_update(bundle, state.w, coeffs,
                                                 alg, protocol, cap,
                                                 report=report,
                                                 eta_init=eta_carry)
            last_residual = report.get("residual", 0.0)
            round_locked = report.get("converged", True)
            if not moves_left:
                passive_ok = report.get("converged", True)
                tail_fixed = passive_ok
                # the first couple of tail rounds restart the penalty
                # schedule from scratch (cheap exploration); afterwards the
                # locked penalty is carried over so rounds re-lock quickly
                # instead of re-crawling the whole schedule
                tails_done += 1
                if passive_ok and tails_done >= EXPLORE_TAILS:
                    eta_carry = report["eta2"]
        else:
            # the phase-only block is exactly rank one, so a settled trace
            # is already a fixed point once the geometry stops moving
            tail_fixed = not moves_left
            for side, sup in ((TRANSMISSION, sup_t), (REFLECTION, sup_r)):
                sup = np.asarray(sup, dtype=int)
                if sup.size == 0:
                    continue
                th_full = (coeffs.theta_t if side == TRANSMISSION
                           else coeffs.theta_r)
                th_new = optimize_support_phases(bundle, state.w, sup, side,
                                                 th_full[sup], alg,
                                                 inner_cap=SCA_ROUND_CAP)
                th_full[sup] = th_new
            # phase change shifts the best response; refresh W once more
            channels = effective_channels(bundle, coeffs)
            state.w = wmmse_loop(channels, noise, weights, p_max, state.w,
                                 alg.ao_tol)
        cur = wsr(protocol, bundle, state, coeffs, weights)
        trace.append(cur)
        if cur - prev < alg.ao_tol:
            converged = round_locked
            break
        # a converged joint tail is already a (W, q) fixed point; residual
        # round gains come only from the penalty-schedule restart
        if tail_fixed and cur - prev < JOINT_STOP_TOL:
            converged = True
            break

    rates = user_rates(protocol, bundle, state, coeffs)
    return SolveResult(protocol=protocol, wsr=trace[-1], rates=rates,
                       positions=u, coeffs=coeffs, state=state, trace=trace,
                       converged=converged and passive_ok,
                       seconds=time.perf_counter() - start,
                       rank_residual=last_residual)


def run_es(realization, cfg, alg) -> SolveResult:
    """Amplitude-splitting protocol with movable elements."""
    return _run_split(realization, cfg, alg, ES, move=True)


def run_ms(realization, cfg, alg) -> SolveResult:
    """Mode-switching protocol with movable elements; final beta binary."""
    return _run_split(realization, cfg, alg, MS, move=True)


def run_me_ris_baseline(realization, cfg, alg) -> SolveResult:
    """Two co-located single-function surfaces, N/2 movable elements each."""
    n = cfg.num_elements
    if n % 2:
        raise ValueError("the two-surface baseline needs an even N")
    support = (np.arange(n // 2), np.arange(n // 2, n))
    return _run_split(realization, cfg, alg, MS, move=True,
                      frozen_support=support)


# --------------------------------------------------------------------------
# TS
# --------------------------------------------------------------------------

def allocate_time(s_t: float, s_r: float, tie_tol: float = 1e-12) -> tuple:
    """Corner solution of the linear time-share problem; ties split evenly."""
    if abs(s_t - s_r) <= tie_tol:
        return 0.5, 0.5
    return (1.0, 0.0) if s_t > s_r else (0.0, 1.0)


def _side_channels(bundle: CascadeBundle, members: np.ndarray,
                   theta: np.ndarray) -> np.ndarray:
    q = np.exp(-1j * theta)
    return np.array([(np.conj(q) * bundle.g[j]) @ bundle.h for j in members])


def _run_ts(realization: ChannelRealization, cfg: SystemConfig,
            alg: AlgorithmConfig, move: bool) -> SolveResult:
    start = time.perf_counter()
    u = initial_positions(cfg) if move else fpe_grid(cfg)
    bundle = assemble_cascade(cfg, realization, u)
    weights = resolve_weights(bundle)
    noise, p_max = cfg.noise_power, cfg.max_power

    coeffs = unit_coefficients(cfg.num_elements, TS)
    members_t = realization.side_users(TRANSMISSION)
    members_r = realization.side_users(REFLECTION)
    state = BeamformingState(tau_t=0.5, tau_r=0.5)
    for side, members in ((TRANSMISSION, members_t), (REFLECTION, members_r)):
        theta = coeffs.theta_t if side == TRANSMISSION else coeffs.theta_r
        ch = _side_channels(bundle, members, theta)
        w_side = matched_filter_init(ch, p_max) if members.size else \
            np.zeros((cfg.num_bs_antennas, 0), dtype=complex)
        theta_new = _aligned_phases(bundle, _embed(w_side, members,
                                                   realization.num_users),
                                    weights, side)
        if side == TRANSMISSION:
            state.w_t, coeffs.theta_t = w_side, theta_new
        else:
            state.w_r, coeffs.theta_r = w_side, theta_new

    cur = wsr(TS, bundle, state, coeffs, weights)
    trace = [cur]
    converged = False
    eta_carry = {TRANSMISSION: None, REFLECTION: None}
    last_residual = {TRANSMISSION: 0.0, REFLECTION: 0.0}
    tails_done = {TRANSMISSION: 0, REFLECTION: 0}
    moves_left = POS_MOVE_ROUNDS if move else 0
    for _ in range(MAX_AO_ROUNDS):
        prev = cur
        if moves_left:
            objective = ts_objective(cfg, realization, state, coeffs, weights)
            pos, pos_info = optimize_positions(objective, u, cfg, alg)
            u = pos.u
            bundle = assemble_cascade(cfg, realization, u)
            moves_left -= 1
            if pos_info["wsr"] - prev < POS_FREEZE_TOL:
                moves_left = 0
        side_sums = {}
        tail_fixed = not moves_left
        for side, members in ((TRANSMISSION, members_t),
                              (REFLECTION, members_r)):
            theta = coeffs.theta_t if side == TRANSMISSION else coeffs.theta_r
            w_side = state.w_t if side == TRANSMISSION else state.w_r
            if members.size:
                ch = _side_channels(bundle, members, theta)
                w_side = wmmse_loop(ch, noise, weights[members], p_max,
                                    w_side, alg.ao_tol)
                cap = SCA_ROUND_CAP if moves_left else JOINT_TAIL_CAP
                report: dict = {}
                theta, w_side = joint_ts_update(bundle, w_side, side, theta,
                                                alg, cap, report=report,
                                                eta_init=eta_carry[side])
                last_residual[side] = report.get("residual", 0.0)
                tail_fixed = tail_fixed and report.get("converged", True)
                if not moves_left:
                    tails_done[side] += 1
                    if (report.get("converged", True)
                            and tails_done[side] >= EXPLORE_TAILS):
                        eta_carry[side] = report["eta2"]
                ch = _side_channels(bundle, members, theta)
                gains = np.abs(ch @ w_side) ** 2
                own = np.diag(gains)
                sinr = own / (gains.sum(axis=1) - own + noise)
                side_sums[side] = float(np.dot(weights[members],
                                               np.log2(1.0 + sinr)))
            else:
                side_sums[side] = 0.0
            if side == TRANSMISSION:
                state.w_t, coeffs.theta_t = w_side, theta
            else:
                state.w_r, coeffs.theta_r = w_side, theta
        state.tau_t, state.tau_r = allocate_time(side_sums[TRANSMISSION],
                                                 side_sums[REFLECTION])
        cur = wsr(TS, bundle, state, coeffs, weights)
        trace.append(cur)
        if cur - prev < alg.ao_tol:
            converged = tail_fixed
            break
        if tail_fixed and cur - prev < JOINT_STOP_TOL:
            converged = True
            break

    rates = user_rates(TS, bundle, state, coeffs)
    return SolveResult(protocol=TS, wsr=trace[-1], rates=rates, positions=u,
                       coeffs=coeffs, state=state, trace=trace,
                       converged=converged,
                       seconds=time.perf_counter() - start,
                       rank_residual=max(last_residual.values()))


def _embed(w_side: np.ndarray, members: np.ndarray, j: int) -> np.ndarray:
    """Spread per-side beamformer columns into a (M, J) matrix for reuse of
    helpers that expect one column per user."""
    m = w_side.shape[0]
    out = np.zeros((m, j), dtype=complex)
    for col, user in enumerate(members):
        out[:, user] = w_side[:, col]
    return out


def run_ts(realization, cfg, alg) -> SolveResult:
    """Time-switching protocol with movable elements (shared positions)."""
    return _run_ts(realization, cfg, alg, move=True)


def run_fpe_baseline(realization, cfg, alg, protocol: str) -> SolveResult:
    """Fixed half-wavelength element grid; only beamforming is optimized."""
    if protocol == TS:
        return _run_ts(realization, cfg, alg, move=False)
    return _run_split(realization, cfg, alg, protocol, move=False)


def run_scheme(scheme: str, realization, cfg, alg) -> SolveResult:
    """Dispatch by sweep scheme name (see SCHEMES)."""
    scheme = scheme.upper()
    if scheme == "ES":
        return run_es(realization, cfg, alg)
    if scheme == "MS":
        return run_ms(realization, cfg, alg)
    if scheme == "TS":
        return run_ts(realization, cfg, alg)
    if scheme.startswith("FPE-"):
        return run_fpe_baseline(realization, cfg, alg, scheme[4:])
    if scheme == "ME-RIS":
        return run_me_ris_baseline(realization, cfg, alg)
    raise ValueError(f"unknown scheme '{scheme}'")


# --------------------------------------------------------------------------
# result record (plain key/value text)
# --------------------------------------------------------------------------

def format_result(result: SolveResult, seed: int | None = None) -> str:
    """Serialize a SolveResult to key/value lines for logs and CLI output."""
    if seed is None:
        seed = result.seed
    lines = [
        f"protocol = {result.protocol}",
        f"generator = {GENERATOR_ID}",
        f"seed = {seed if seed is not None else 'none'}",
        f"wsr = {result.wsr!r}",
        "rates = " + " ".join(repr(float(r)) for r in result.rates),
        f"converged = {int(result.converged)}",
        f"rank_residual = {float(result.rank_residual)!r}",
        f"seconds = {result.seconds!r}",
        f"min_distance = {min_pairwise_distance(result.positions)!r}",
        "trace = " + " ".join(repr(float(v)) for v in result.trace),
        "u_x = " + " ".join(repr(float(v)) for v in result.positions[0]),
        "u_y = " + " ".join(repr(float(v)) for v in result.positions[1]),
        "beta_t = " + " ".join(repr(float(v)) for v in result.coeffs.beta_t),
        "theta_t = " + " ".join(repr(float(v)) for v in result.coeffs.theta_t),
        "theta_r = " + " ".join(repr(float(v)) for v in result.coeffs.theta_r),
        f"tau_t = {result.state.tau_t!r}",
        f"tau_r = {result.state.tau_r!r}",
    ]
    return "\n".join(lines) + "\n"
