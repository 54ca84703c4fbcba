"""SCA passive beamforming over lifted surface coefficients.

The coefficient vector q is lifted to Q = q q^H; the rate constraints are
linearized through slack variables and first-order Taylor bounds, the
rank-one requirement is enforced with a DC penalty, and the resulting
convex subproblems go to the in-repo cone solver.  The amplitude-splitting
protocol works on (Q_t, Q_r) with coupled diagonals; the time-switching
and frozen-assignment variants reduce to unit-amplitude problems over an
element support.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .active_bf import wmmse_loop
from .channel import CascadeBundle, REFLECTION, TRANSMISSION
from .config import AlgorithmConfig, default_weights
from .convex_solver import ConeProblem, HyperBlocks, PSDBlock, solve_cone
from .rates import (ES, MS, TS, BeamformingState, PassiveCoefficients,
                    effective_channels, rate_ts, wsr)

LN2 = np.log(2.0)
_MAX_OUTER = 20          # hard cap on penalty-growth rounds
_BETA_FLOOR = 1e-3       # interior clip for amplitude initialization


def resolve_weights(bundle: CascadeBundle) -> np.ndarray:
    """Config-supplied rate weights, or inverse expected-gain fairness."""
    if bundle.cfg.user_weights is not None:
        return np.asarray(bundle.cfg.user_weights, dtype=float)
    return default_weights(bundle.realization.beta_users)


def build_coupling(bundle: CascadeBundle, w: np.ndarray) -> np.ndarray:
    """Rank-one coupling matrices, shape (J, K, N, N).

    Entry [j, k] is (V_j w_k)(V_j w_k)^H, so Tr(q q^H [j, k]) equals the
    power user j receives from stream k under surface coefficients q.
    """
    a = bundle.g[:, None, :] * (bundle.h @ w).T[None, :, :]   # (J, K, N)
    return a[..., :, None] * np.conj(a)[..., None, :]


def taylor_rate_constraint(a_anchor: float, b_anchor: float):
    """Linearized lower bound of log2(1 + 1/(A B)) around the anchor.

    Returns (const, coef_a, coef_b) with
    bound(A, B) = const - coef_a (A - A^i) - coef_b (B - B^i).
    """
    if a_anchor <= 0 or b_anchor <= 0:
        raise ValueError("Taylor anchors must be positive")
    prod = a_anchor * b_anchor
    const = float(np.log2(1.0 + 1.0 / prod))
    coef_a = 1.0 / (LN2 * a_anchor * (1.0 + prod))
    coef_b = 1.0 / (LN2 * b_anchor * (1.0 + prod))
    return const, coef_a, coef_b


def principal_eigvec(q: np.ndarray):
    vals, vecs = np.linalg.eigh(q)
    return vecs[:, -1], float(vals[-1])


def rank_residual(q: np.ndarray) -> float:
    """Tr(Q) minus the spectral norm; zero iff Q is rank-one PSD."""
    vals = np.linalg.eigvalsh(q)
    return float(np.real(np.trace(q)) - vals[-1])


def rank_one_surrogate(q: np.ndarray, anchor: np.ndarray) -> float:
    """Linear DC upper bound of the rank residual, tight at the anchor.

    Equals Tr(Q (I - x x^H)) with x the anchor's principal eigenvector;
    the constant parts of the expansion cancel for PSD anchors.
    """
    x, _ = principal_eigvec(anchor)
    return float(np.real(np.trace(q)) - np.real(x.conj() @ q @ x))


@dataclass
class LiftedCoefficients:
    """Lifted SCA state: both matrices, amplitudes, and rate slacks."""

    q_t: np.ndarray
    q_r: np.ndarray
    beta_t: np.ndarray
    beta_r: np.ndarray
    slack_a: np.ndarray
    slack_b: np.ndarray

    def rank_residuals(self) -> tuple:
        return rank_residual(self.q_t), rank_residual(self.q_r)


# --- variable-layout helpers -------------------------------------------------

def _pair_indices(n: int) -> tuple:
    """Upper-triangle index arrays (row-major order)."""
    return np.triu_indices(n, k=1)


def _offdiag_coeffs(c: np.ndarray, pairs: tuple) -> np.ndarray:
    """Trace coefficients of the off-diagonal (re, im) parameters."""
    pa, pb = pairs
    vals = c[pa, pb]
    out = np.empty(2 * pa.size)
    out[0::2] = 2.0 * vals.real
    out[1::2] = 2.0 * vals.imag
    return out


def _offdiag_basis(n: int, pairs: tuple) -> np.ndarray:
    pa, pb = pairs
    m = pa.size
    basis = np.zeros((2 * m, n, n), dtype=complex)
    r = np.arange(m)
    basis[2 * r, pa, pb] = 1.0
    basis[2 * r, pb, pa] = 1.0
    basis[2 * r + 1, pa, pb] = 1j
    basis[2 * r + 1, pb, pa] = -1j
    return basis


def _q_from_params(diag: np.ndarray, off: np.ndarray, pairs: tuple) -> np.ndarray:
    pa, pb = pairs
    q = np.diag(diag.astype(complex))
    vals = off[0::2] + 1j * off[1::2]
    q[pa, pb] = vals
    q[pb, pa] = vals.conj()
    return q


def _params_from_q(q: np.ndarray, pairs: tuple) -> np.ndarray:
    pa, pb = pairs
    vals = q[pa, pb]
    out = np.empty(2 * pa.size)
    out[0::2] = vals.real
    out[1::2] = vals.imag
    return out


@lru_cache(maxsize=8)
def _split_static_blocks(n: int) -> tuple:
    """The two coupled-diagonal PSD blocks of the split problem; they only
    depend on the element count, so they are shared across rebuilds."""
    pairs = _pair_indices(n)
    off = 2 * pairs[0].size
    i_beta = np.arange(n)
    i_qt = n + np.arange(off)
    i_qr = n + off + np.arange(off)
    diag_basis = np.zeros((n, n, n), dtype=complex)
    diag_basis[np.arange(n), np.arange(n), np.arange(n)] = 1.0
    off_basis = _offdiag_basis(n, pairs)
    return (
        PSDBlock(f0=np.zeros((n, n), dtype=complex),
                 idx=np.concatenate([i_beta, i_qt]),
                 basis=np.concatenate([diag_basis, off_basis])),
        PSDBlock(f0=np.eye(n, dtype=complex),
                 idx=np.concatenate([i_beta, i_qr]),
                 basis=np.concatenate([-diag_basis, off_basis])),
    )


@lru_cache(maxsize=8)
def _unit_static_block(n: int) -> PSDBlock:
    """Unit-diagonal PSD block of the support problems, cached by size."""
    pairs = _pair_indices(n)
    off = 2 * pairs[0].size
    return PSDBlock(f0=np.eye(n, dtype=complex), idx=np.arange(off),
                    basis=_offdiag_basis(n, pairs))


@dataclass
class _UserTerm:
    index: int            # slack index within the problem
    weight: float
    side: str
    c_own: np.ndarray     # noise-normalized own coupling
    c_sum: np.ndarray     # noise-normalized summed interference coupling


# --- coupled-amplitude problem (ES and MS) -----------------------------------

class _SplitProblem:
    """Relaxed lifted problem with free amplitude split beta_t + beta_r = 1.

    Variables: beta_t | offdiag(Q_t) | offdiag(Q_r) | A_j | B_j, with
    diag(Q_t) = beta_t and diag(Q_r) = 1 - beta_t by construction, so the
    amplitude coupling never appears as an explicit constraint.
    """

    def __init__(self, bundle: CascadeBundle, w: np.ndarray,
                 weights: np.ndarray):
        n = bundle.g.shape[1]
        coup = build_coupling(bundle, w) / bundle.cfg.noise_power
        sides = bundle.realization.user_side
        self.n = n
        self.pairs = _pair_indices(n)
        off = 2 * self.pairs[0].size
        j = len(weights)
        tr_own = np.array([float(np.real(np.trace(coup[u, u])))
                           for u in range(j)])
        floor = 1e-15 * max(1.0, float(tr_own.max())) if j else 0.0
        self.users = []
        active = []
        for u in range(j):
            if tr_own[u] <= floor:
                continue        # stream nulled by the beamformer; rate is zero
            c_sum = coup[u].sum(axis=0) - coup[u, u]
            self.users.append(_UserTerm(len(self.users), float(weights[u]),
                                        sides[u], coup[u, u], c_sum))
            active.append(u)
        self.active = tuple(active)
        k = len(self.users)
        self.i_beta = np.arange(n)
        self.i_qt = n + np.arange(off)
        self.i_qr = n + off + np.arange(off)
        self.i_a = n + 2 * off + np.arange(k)
        self.i_b = n + 2 * off + k + np.arange(k)
        self.dim = n + 2 * off + 2 * k
        self._build_static()

    def _build_static(self):
        n, pairs = self.n, self.pairs
        blocks = list(_split_static_blocks(n))
        g_rows, h_vals = [], []
        lin_rows, fixed_vals, idx_a = [], [], []
        for u in self.users:
            iq = self.i_qt if u.side == TRANSMISSION else self.i_qr
            sgn = 1.0 if u.side == TRANSMISSION else -1.0
            # hyperbolic block: Tr(Q C_j) * A_j >= 1
            lin = np.zeros(self.dim)
            lin[self.i_beta] = sgn * np.real(np.diag(u.c_own))
            lin[iq] = _offdiag_coeffs(u.c_own, pairs)
            lin_rows.append(lin)
            fixed_vals.append(np.real(np.trace(u.c_own)) if sgn < 0 else 0.0)
            idx_a.append(self.i_a[u.index])
            # interference slack: Tr(Q D_j) + 1 <= B_j
            row = np.zeros(self.dim)
            row[self.i_beta] = sgn * np.real(np.diag(u.c_sum))
            row[iq] = _offdiag_coeffs(u.c_sum, pairs)
            row[self.i_b[u.index]] = -1.0
            int_fixed = np.real(np.trace(u.c_sum)) if sgn < 0 else 0.0
            g_rows.append(row)
            h_vals.append(-1.0 - int_fixed)
        self.blocks = blocks
        if self.users:
            self.hyper = HyperBlocks(lin=np.array(lin_rows),
                                     fixed=np.array(fixed_vals),
                                     idx_a=np.array(idx_a, dtype=int))
            self.g_ineq = np.array(g_rows)
            self.h_ineq = np.array(h_vals)
        else:
            self.hyper = None
            self.g_ineq = None
            self.h_ineq = None

    def matrices(self, x: np.ndarray):
        beta = x[self.i_beta]
        qt = _q_from_params(beta, x[self.i_qt], self.pairs)
        qr = _q_from_params(1.0 - beta, x[self.i_qr], self.pairs)
        return beta, qt, qr

    def _signal_interference(self, qt, qr):
        s = np.empty(len(self.users))
        i = np.empty(len(self.users))
        for k, u in enumerate(self.users):
            q = qt if u.side == TRANSMISSION else qr
            s[k] = max(np.real(np.sum(q * u.c_own.T)), 1e-30)
            i[k] = np.real(np.sum(q * u.c_sum.T)) + 1.0
        return s, i

    def relaxed_wsr(self, x: np.ndarray) -> float:
        _, qt, qr = self.matrices(x)
        s, i = self._signal_interference(qt, qr)
        w = np.array([u.weight for u in self.users])
        return float(np.dot(w, np.log2(1.0 + s / i)))

    def penalized_objective(self, x, eta2, eta3) -> float:
        beta, qt, qr = self.matrices(x)
        s, i = self._signal_interference(qt, qr)
        w = np.array([u.weight for u in self.users])
        val = float(np.dot(w, np.log2(1.0 + s / i)))
        val -= eta2 * (rank_residual(qt) + rank_residual(qr))
        if eta3:
            val -= eta3 * 2.0 * float(np.sum(beta * (1.0 - beta)))
        return val

    def objective_vector(self, x, eta2, eta3) -> np.ndarray:
        """Linear minimization coefficients of the SCA surrogate at x."""
        beta, qt, qr = self.matrices(x)
        s, i = self._signal_interference(qt, qr)
        c = np.zeros(self.dim)
        for u, sj, ij in zip(self.users, s, i):
            _, coef_a, coef_b = taylor_rate_constraint(1.0 / sj, ij)
            c[self.i_a[u.index]] = u.weight * coef_a
            c[self.i_b[u.index]] = u.weight * coef_b
        for q, iq, sgn in ((qt, self.i_qt, 1.0), (qr, self.i_qr, -1.0)):
            xbar, _ = principal_eigvec(q)
            m = np.eye(self.n) - np.outer(xbar, xbar.conj())
            c[self.i_beta] += eta2 * sgn * np.real(np.diag(m))
            c[iq] += eta2 * _offdiag_coeffs(m, self.pairs)
        if eta3:
            c[self.i_beta] += 2.0 * eta3 * (1.0 - 2.0 * beta)
        return c

    def initial_point(self, coeffs: PassiveCoefficients) -> np.ndarray:
        """Strictly feasible start: damped lift of the current coefficients."""
        beta = np.clip(coeffs.beta_t, _BETA_FLOOR, 1.0 - _BETA_FLOOR)
        q_t = np.sqrt(beta) * np.exp(-1j * coeffs.theta_t)
        q_r = np.sqrt(1.0 - beta) * np.exp(-1j * coeffs.theta_r)
        x = np.zeros(self.dim)
        x[self.i_beta] = beta
        damp = 0.95
        x[self.i_qt] = damp * _params_from_q(np.outer(q_t, q_t.conj()), self.pairs)
        x[self.i_qr] = damp * _params_from_q(np.outer(q_r, q_r.conj()), self.pairs)
        _, qt, qr = self.matrices(x)
        s, i = self._signal_interference(qt, qr)
        x[self.i_a] = (1.0 + 1e-3) / s
        x[self.i_b] = (1.0 + 1e-3) * i
        return x

    def recenter(self, x: np.ndarray, shrink: float = 0.05) -> np.ndarray:
        """Pull a near-boundary iterate into the interior for warm restarts:
        shrink the off-diagonals toward the (PSD) diagonal and refresh the
        rate slacks with a small margin."""
        x = x.copy()
        x[self.i_qt] *= 1.0 - shrink
        x[self.i_qr] *= 1.0 - shrink
        x[self.i_beta] = np.clip(x[self.i_beta], _BETA_FLOOR, 1 - _BETA_FLOOR)
        _, qt, qr = self.matrices(x)
        s, i = self._signal_interference(qt, qr)
        x[self.i_a] = (1.0 + 1e-3) / s
        x[self.i_b] = (1.0 + 1e-3) * i
        return x

    def lifted(self, x: np.ndarray) -> LiftedCoefficients:
        beta, qt, qr = self.matrices(x)
        return LiftedCoefficients(q_t=qt, q_r=qr, beta_t=beta,
                                  beta_r=1.0 - beta,
                                  slack_a=x[self.i_a].copy(),
                                  slack_b=x[self.i_b].copy())

    def extract(self, x: np.ndarray, protocol: str) -> PassiveCoefficients:
        beta, qt, qr = self.matrices(x)
        beta = np.clip(beta, 0.0, 1.0)
        ut, _ = principal_eigvec(qt)
        ur, _ = principal_eigvec(qr)
        theta_t = np.mod(-np.angle(ut), 2 * np.pi)
        theta_r = np.mod(-np.angle(ur), 2 * np.pi)
        return PassiveCoefficients(beta, 1.0 - beta, theta_t, theta_r, protocol)


# warm-restart constants for the cone solves inside the SCA loops; the
# iterate is pulled slightly off the boundary and path-following restarts
# at a barrier weight already past nu/tol, so the warm solve is a single
# centering stage
_WARM_SHRINK = 0.01
_WARM_T0 = 6e4
_WARM_T_MULT = 50.0
_WARM_CTOL = 1e-5        # final centering for the low-accuracy warm solves
_STALL_PASSES = 2        # stalled passes before a residual check / growth
_STALL_TOL = 1e-4        # per-pass WSR gain below this counts as a stall
_FORCE_GROW = 30         # grow penalties at least every this many passes


def _sca_split(bundle, w, init, alg, protocol, trace=None, solver_tol=1e-3,
               report=None, inner_cap=None):
    weights = resolve_weights(bundle)
    problem = _SplitProblem(bundle, w, weights)
    ms = protocol == MS
    if not problem.users:
        # every stream is off; the coefficients cannot change the rate
        out = init.copy()
        out.protocol = protocol
        if report is not None:
            report["converged"] = True
        return out
    x = problem.initial_point(init)
    eta2 = alg.sca_penalty
    eta3 = alg.ms_penalty if ms else 0.0
    max_inner = alg.max_inner if inner_cap is None else min(alg.max_inner,
                                                            inner_cap)
    first = True
    converged = False
    for outer in range(_MAX_OUTER):
        prev = problem.penalized_objective(x, eta2, eta3)
        for inner in range(max_inner):
            cone = ConeProblem(c=problem.objective_vector(x, eta2, eta3),
                               blocks=problem.blocks, hyper=problem.hyper,
                               g_ineq=problem.g_ineq, h_ineq=problem.h_ineq)
            if first:
                info = solve_cone(cone, x, tol=solver_tol,
                                  t_mult=_WARM_T_MULT,
                                  center_tol=_WARM_CTOL)
                first = False
            else:
                info = solve_cone(cone,
                                  problem.recenter(x, shrink=_WARM_SHRINK),
                                  tol=solver_tol, t0=_WARM_T0,
                                  t_mult=_WARM_T_MULT,
                                  center_tol=_WARM_CTOL)
            x = info.x
            cur = problem.penalized_objective(x, eta2, eta3)
            if trace is not None:
                beta_i, qt_i, qr_i = problem.matrices(x)
                trace.append({"outer": outer, "inner": inner,
                              "wsr": problem.relaxed_wsr(x),
                              "rank_residual_t": rank_residual(qt_i),
                              "rank_residual_r": rank_residual(qr_i),
                              "eta2": eta2})
            gain = cur - prev
            prev = cur
            if gain < alg.ao_tol:
                break
        beta, qt, qr = problem.matrices(x)
        res = max(rank_residual(qt), rank_residual(qr))
        if ms:
            res = max(res, float(np.max(beta * (1.0 - beta))))
        if res < alg.rank_tol:
            converged = True
            break
        eta2 *= alg.penalty_growth
        eta3 *= alg.penalty_growth
    out = problem.extract(x, protocol)
    if ms:
        b = np.where(out.beta_t > 0.5, 1.0, 0.0)
        out = PassiveCoefficients(b, 1.0 - b, out.theta_t, out.theta_r, MS)
    # never return something worse than a feasible starting point
    state = BeamformingState(w=w)
    cand = init.copy()
    cand.protocol = protocol
    if (cand.feasible()
            and wsr(protocol, bundle, state, cand, weights)
            > wsr(protocol, bundle, state, out, weights)):
        out = cand
    if report is not None:
        report["converged"] = converged
        report["lifted"] = problem.lifted(x)
    return out


def sca_es(bundle: CascadeBundle, w: np.ndarray, init: PassiveCoefficients,
           alg: AlgorithmConfig, trace=None, solver_tol: float = 1e-3,
           report=None, inner_cap=None) -> PassiveCoefficients:
    """Amplitude-splitting passive update: penalized SCA over (Q_t, Q_r)."""
    return _sca_split(bundle, w, init, alg, ES, trace, solver_tol, report,
                      inner_cap)


def sca_ms(bundle: CascadeBundle, w: np.ndarray, init: PassiveCoefficients,
           alg: AlgorithmConfig, trace=None, solver_tol: float = 1e-3,
           report=None, inner_cap=None) -> PassiveCoefficients:
    """Mode-switching passive update: adds the binary-amplitude penalty and
    rounds the converged amplitudes to {0, 1}."""
    return _sca_split(bundle, w, init, alg, MS, trace, solver_tol, report,
                      inner_cap)


# --- joint passive/active alternation ---------------------------------------

def joint_split_update(bundle: CascadeBundle, w: np.ndarray,
                       init: PassiveCoefficients, alg: AlgorithmConfig,
                       protocol: str, pass_cap: int, report=None,
                       eta_init: float | None = None):
    """Alternate one SCA surrogate solve with a WMMSE beamformer refresh.

    The lifted iterate is kept across passes and the couplings are rebuilt
    around each refreshed beamformer, so the pair (W, q) is driven to a
    joint fixed point instead of the slow block-by-block crawl.  Returns
    the best (coefficients, beamformer) pair seen, by true WSR.
    """
    weights = resolve_weights(bundle)
    cfg = bundle.cfg
    ms = protocol == MS
    state = BeamformingState(w=w)
    best = init.copy()
    best.protocol = protocol
    best_w = w
    best_val = (wsr(protocol, bundle, state, best, weights)
                if best.feasible() else -np.inf)
    problem = _SplitProblem(bundle, w, weights)
    if not problem.users:
        if report is not None:
            report["converged"] = True
        return best, w
    x = problem.initial_point(init)
    eta2 = alg.sca_penalty if eta_init is None else eta_init
    eta3 = (alg.ms_penalty * eta2 / alg.sca_penalty) if ms else 0.0
    growths = 0
    converged = False
    first = True
    stall = 0
    passes = 0
    last_grow = 0
    last_res = np.inf
    for _ in range(pass_cap):
        cone = ConeProblem(c=problem.objective_vector(x, eta2, eta3),
                           blocks=problem.blocks, hyper=problem.hyper,
                           g_ineq=problem.g_ineq, h_ineq=problem.h_ineq)
        if first:
            info = solve_cone(cone, x, tol=1e-3, t_mult=_WARM_T_MULT,
                              center_tol=_WARM_CTOL)
            first = False
        else:
            info = solve_cone(cone, problem.recenter(x, shrink=_WARM_SHRINK),
                              tol=1e-3, t0=_WARM_T0, t_mult=_WARM_T_MULT,
                              center_tol=_WARM_CTOL)
        x = info.x
        out = problem.extract(x, protocol)
        if ms:
            b = np.where(out.beta_t > 0.5, 1.0, 0.0)
            out = PassiveCoefficients(b, 1.0 - b, out.theta_t, out.theta_r,
                                      MS)
        channels = effective_channels(bundle, out)
        w = wmmse_loop(channels, cfg.noise_power, weights, cfg.max_power,
                       w, alg.ao_tol)
        state.w = w
        val = wsr(protocol, bundle, state, out, weights)
        if val > best_val + _STALL_TOL:
            stall = 0
        else:
            stall += 1
        if val > best_val:
            best_val, best, best_w = val, out, w
        new_problem = _SplitProblem(bundle, w, weights)
        if not new_problem.users:
            break
        if new_problem.active != problem.active:
            x = new_problem.initial_point(out)
        problem = new_problem
        passes += 1
        if stall >= _STALL_PASSES or passes - last_grow >= _FORCE_GROW:
            stall = 0
            beta, qt, qr = problem.matrices(x)
            res = max(rank_residual(qt), rank_residual(qr))
            if ms:
                res = max(res, float(np.max(beta * (1.0 - beta))))
            last_res = res
            if res < alg.rank_tol:
                converged = True
                break
            if growths >= _MAX_OUTER:
                break
            eta2 *= alg.penalty_growth
            eta3 *= alg.penalty_growth
            growths += 1
            last_grow = passes
    if report is not None:
        report["converged"] = converged
        report["passes"] = passes
        report["growths"] = growths
        report["residual"] = last_res
        report["eta2"] = eta2
    return best, best_w


# --- unit-amplitude problem over a support (TS sides and frozen splits) ------

class _UnitProblem:
    """Lifted problem with diag(Q) = 1 fixed over a support of elements.

    Variables: offdiag(Q) | A_k | B_k for the listed victims.
    """

    def __init__(self, c_own: list, c_sum: list, weights: np.ndarray):
        self.n = c_own[0].shape[0]
        self.pairs = _pair_indices(self.n)
        off = 2 * self.pairs[0].size
        weights = np.asarray(weights, dtype=float)
        tr_own = np.array([float(np.real(np.trace(c))) for c in c_own])
        floor = 1e-15 * max(1.0, float(tr_own.max())) if len(c_own) else 0.0
        keep = [k for k in range(len(c_own)) if tr_own[k] > floor]
        k = len(keep)
        self.active = tuple(keep)
        self.weights = weights[keep]
        self.c_own = [c_own[i] for i in keep]
        self.c_sum = [c_sum[i] for i in keep]
        self.i_q = np.arange(off)
        self.i_a = off + np.arange(k)
        self.i_b = off + k + np.arange(k)
        self.dim = off + 2 * k
        self._build_static()

    def _build_static(self):
        n, pairs = self.n, self.pairs
        blocks = [_unit_static_block(n)]
        g_rows, h_vals = [], []
        lin_rows, fixed_vals, idx_a = [], [], []
        for k, (own, sm) in enumerate(zip(self.c_own, self.c_sum)):
            lin = np.zeros(self.dim)
            lin[self.i_q] = _offdiag_coeffs(own, pairs)
            lin_rows.append(lin)
            fixed_vals.append(np.real(np.trace(own)))
            idx_a.append(self.i_a[k])
            row = np.zeros(self.dim)
            row[self.i_q] = _offdiag_coeffs(sm, pairs)
            row[self.i_b[k]] = -1.0
            g_rows.append(row)
            h_vals.append(-1.0 - np.real(np.trace(sm)))
        self.blocks = blocks
        if len(self.weights):
            self.hyper = HyperBlocks(lin=np.array(lin_rows),
                                     fixed=np.array(fixed_vals),
                                     idx_a=np.array(idx_a, dtype=int))
            self.g_ineq = np.array(g_rows)
            self.h_ineq = np.array(h_vals)
        else:
            self.hyper = None
            self.g_ineq = None
            self.h_ineq = None

    def matrix(self, x: np.ndarray) -> np.ndarray:
        return _q_from_params(np.ones(self.n), x[self.i_q], self.pairs)

    def _signal_interference(self, q):
        qt = q.T
        s = np.array([max(np.real(np.sum(qt * c)), 1e-30) for c in self.c_own])
        i = np.array([np.real(np.sum(qt * c)) + 1.0 for c in self.c_sum])
        return s, i

    def relaxed_wsr(self, x: np.ndarray) -> float:
        s, i = self._signal_interference(self.matrix(x))
        return float(np.dot(self.weights, np.log2(1.0 + s / i)))

    def penalized_objective(self, x, eta2) -> float:
        return self.relaxed_wsr(x) - eta2 * rank_residual(self.matrix(x))

    def objective_vector(self, x, eta2) -> np.ndarray:
        q = self.matrix(x)
        s, i = self._signal_interference(q)
        c = np.zeros(self.dim)
        for k, wk in enumerate(self.weights):
            _, coef_a, coef_b = taylor_rate_constraint(1.0 / s[k], i[k])
            c[self.i_a[k]] = wk * coef_a
            c[self.i_b[k]] = wk * coef_b
        xbar, _ = principal_eigvec(q)
        m = np.eye(self.n) - np.outer(xbar, xbar.conj())
        c[self.i_q] += eta2 * _offdiag_coeffs(m, self.pairs)
        return c

    def initial_point(self, q_vec: np.ndarray) -> np.ndarray:
        x = np.zeros(self.dim)
        x[self.i_q] = 0.95 * _params_from_q(np.outer(q_vec, q_vec.conj()),
                                            self.pairs)
        s, i = self._signal_interference(self.matrix(x))
        x[self.i_a] = (1.0 + 1e-3) / s
        x[self.i_b] = (1.0 + 1e-3) * i
        return x

    def recenter(self, x: np.ndarray, shrink: float = 0.05) -> np.ndarray:
        x = x.copy()
        x[self.i_q] *= 1.0 - shrink
        s, i = self._signal_interference(self.matrix(x))
        x[self.i_a] = (1.0 + 1e-3) / s
        x[self.i_b] = (1.0 + 1e-3) * i
        return x

    def extract(self, x: np.ndarray) -> np.ndarray:
        """Unit-modulus coefficient phases from the principal eigenvector."""
        u, _ = principal_eigvec(self.matrix(x))
        return np.mod(-np.angle(u), 2 * np.pi)


def _sca_unit(problem: _UnitProblem, theta_init: np.ndarray,
              alg: AlgorithmConfig, trace=None, solver_tol=1e-3,
              report=None, inner_cap=None) -> np.ndarray:
    if problem.n < 2 or not len(problem.weights):
        # a single element carries only a global phase, and with every
        # stream off the phases cannot change the rate
        if report is not None:
            report["converged"] = True
        return np.asarray(theta_init, dtype=float).copy()
    x = problem.initial_point(np.exp(-1j * np.asarray(theta_init)))
    eta2 = alg.sca_penalty
    max_inner = alg.max_inner if inner_cap is None else min(alg.max_inner,
                                                            inner_cap)
    first = True
    converged = False
    for outer in range(_MAX_OUTER):
        prev = problem.penalized_objective(x, eta2)
        for inner in range(max_inner):
            cone = ConeProblem(c=problem.objective_vector(x, eta2),
                               blocks=problem.blocks, hyper=problem.hyper,
                               g_ineq=problem.g_ineq, h_ineq=problem.h_ineq)
            if first:
                info = solve_cone(cone, x, tol=solver_tol,
                                  t_mult=_WARM_T_MULT,
                                  center_tol=_WARM_CTOL)
                first = False
            else:
                info = solve_cone(cone,
                                  problem.recenter(x, shrink=_WARM_SHRINK),
                                  tol=solver_tol, t0=_WARM_T0,
                                  t_mult=_WARM_T_MULT,
                                  center_tol=_WARM_CTOL)
            x = info.x
            cur = problem.penalized_objective(x, eta2)
            if trace is not None:
                trace.append({"outer": outer, "inner": inner,
                              "wsr": problem.relaxed_wsr(x),
                              "rank_residual_t": rank_residual(problem.matrix(x)),
                              "rank_residual_r": 0.0, "eta2": eta2})
            gain = cur - prev
            prev = cur
            if gain < alg.ao_tol:
                break
        if rank_residual(problem.matrix(x)) < alg.rank_tol:
            converged = True
            break
        eta2 *= alg.penalty_growth
    if report is not None:
        report["converged"] = converged
    theta = problem.extract(x)
    # keep the better endpoint under the true (rank-one) objective
    def true_obj(th):
        q = np.outer(np.exp(-1j * th), np.exp(1j * th))
        s, i = problem._signal_interference(q)
        return float(np.dot(problem.weights, np.log2(1.0 + s / i)))
    if true_obj(np.asarray(theta_init)) > true_obj(theta):
        theta = np.asarray(theta_init, dtype=float).copy()
    return theta


def optimize_ts_phases(bundle: CascadeBundle, w_side: np.ndarray, side: str,
                       theta_init: np.ndarray, alg: AlgorithmConfig,
                       trace=None, solver_tol: float = 1e-3,
                       report=None, inner_cap=None) -> np.ndarray:
    """Unit-modulus phase optimization for one time-switching side.

    Only the side's users and beamformers enter; interference is restricted
    to same-side streams and the time share scales out of the argmax.
    """
    members = bundle.realization.side_users(side)
    if members.size == 0:
        return np.asarray(theta_init, dtype=float).copy()
    weights = resolve_weights(bundle)[members]
    coup = build_coupling(bundle, w_side) / bundle.cfg.noise_power
    c_own, c_sum = [], []
    for col, j in enumerate(members):
        c_own.append(coup[j, col])
        c_sum.append(coup[j].sum(axis=0) - coup[j, col])
    problem = _UnitProblem(c_own, c_sum, weights)
    return _sca_unit(problem, theta_init, alg, trace, solver_tol, report,
                     inner_cap)


def joint_ts_update(bundle: CascadeBundle, w_side: np.ndarray, side: str,
                    theta: np.ndarray, alg: AlgorithmConfig, pass_cap: int,
                    report=None, eta_init: float | None = None):
    """Joint phase/beamformer alternation for one time-switching side.

    Same pattern as :func:`joint_split_update` on the unit-amplitude
    problem; interference is same-side only, so each side closes on its
    own fixed point independently of the time shares.
    """
    members = bundle.realization.side_users(side)
    theta = np.asarray(theta, dtype=float).copy()
    if members.size == 0 or theta.size < 2:
        if report is not None:
            report["converged"] = True
        return theta, w_side
    weights = resolve_weights(bundle)[members]
    cfg = bundle.cfg
    noise, p_max = cfg.noise_power, cfg.max_power

    def side_channels(th):
        q = np.exp(-1j * th)
        return np.array([(np.conj(q) * bundle.g[j]) @ bundle.h
                         for j in members])

    def side_rate(th, ws):
        gains = np.abs(side_channels(th) @ ws) ** 2
        own = np.diag(gains)
        sinr = own / (gains.sum(axis=1) - own + noise)
        return float(np.dot(weights, np.log2(1.0 + sinr)))

    def build(ws):
        coup = build_coupling(bundle, ws) / noise
        c_own, c_sum = [], []
        for col, j in enumerate(members):
            c_own.append(coup[j, col])
            c_sum.append(coup[j].sum(axis=0) - coup[j, col])
        return _UnitProblem(c_own, c_sum, weights)

    best_theta, best_w = theta.copy(), w_side
    best_val = side_rate(theta, w_side)
    problem = build(w_side)
    if not len(problem.weights):
        if report is not None:
            report["converged"] = True
        return theta, w_side
    x = problem.initial_point(np.exp(-1j * theta))
    eta2 = alg.sca_penalty if eta_init is None else eta_init
    growths = 0
    converged = False
    first = True
    stall = 0
    passes = 0
    last_grow = 0
    last_res = np.inf
    for _ in range(pass_cap):
        cone = ConeProblem(c=problem.objective_vector(x, eta2),
                           blocks=problem.blocks, hyper=problem.hyper,
                           g_ineq=problem.g_ineq, h_ineq=problem.h_ineq)
        if first:
            info = solve_cone(cone, x, tol=1e-3, t_mult=_WARM_T_MULT,
                              center_tol=_WARM_CTOL)
            first = False
        else:
            info = solve_cone(cone, problem.recenter(x, shrink=_WARM_SHRINK),
                              tol=1e-3, t0=_WARM_T0, t_mult=_WARM_T_MULT,
                              center_tol=_WARM_CTOL)
        x = info.x
        th = problem.extract(x)
        w_side = wmmse_loop(side_channels(th), noise, weights, p_max,
                            w_side, alg.ao_tol)
        val = side_rate(th, w_side)
        if val > best_val + _STALL_TOL:
            stall = 0
        else:
            stall += 1
        if val > best_val:
            best_val, best_theta, best_w = val, th, w_side
        new_problem = build(w_side)
        if not len(new_problem.weights):
            break
        if new_problem.active != problem.active:
            x = new_problem.initial_point(np.exp(-1j * th))
        problem = new_problem
        passes += 1
        if stall >= _STALL_PASSES or passes - last_grow >= _FORCE_GROW:
            stall = 0
            last_res = rank_residual(problem.matrix(x))
            if last_res < alg.rank_tol:
                converged = True
                break
            if growths >= _MAX_OUTER:
                break
            eta2 *= alg.penalty_growth
            growths += 1
            last_grow = passes
    if report is not None:
        report["converged"] = converged
        report["passes"] = passes
        report["growths"] = growths
        report["residual"] = last_res
        report["eta2"] = eta2
    return best_theta, best_w


def optimize_support_phases(bundle: CascadeBundle, w: np.ndarray,
                            support: np.ndarray, side: str,
                            theta_init: np.ndarray, alg: AlgorithmConfig,
                            solver_tol: float = 1e-3,
                            inner_cap=None) -> np.ndarray:
    """Phase optimization over a frozen element support for one side.

    Used by the frozen-assignment baseline: the side's users see signal and
    interference from every stream, all through the support submatrices.
    Returns phases for the support elements only.
    """
    support = np.asarray(support, dtype=int)
    members = bundle.realization.side_users(side)
    theta_init = np.asarray(theta_init, dtype=float)
    if members.size == 0 or support.size == 0:
        return theta_init.copy()
    weights = resolve_weights(bundle)[members]
    coup = build_coupling(bundle, w) / bundle.cfg.noise_power
    sub = np.ix_(support, support)
    c_own, c_sum = [], []
    for j in members:
        c_own.append(coup[j, j][sub])
        c_sum.append((coup[j].sum(axis=0) - coup[j, j])[sub])
    problem = _UnitProblem(c_own, c_sum, weights)
    return _sca_unit(problem, theta_init, alg, solver_tol=solver_tol,
                     inner_cap=inner_cap)
