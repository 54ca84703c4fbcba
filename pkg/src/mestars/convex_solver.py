"""Small dense cone-program solver.

Log-barrier interior-point method for problems with a linear objective,
Hermitian-PSD block constraints that are affine in the variables, 2x2
hyperbolic blocks [[s, 1], [1, a]] >= 0 handled in closed form, linear
inequalities, and optional linear equalities (eliminated through a
null-space parameterization).  Problem sizes are desk-scale (blocks up to
a few dozen rows), so dense factorizations are used throughout.

Path following uses loose centering (Newton decrement below a constant)
on intermediate stages and tight centering only on the final stage, where
the KKT certificate is produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SolverFailure(RuntimeError):
    """Persistent Newton failure; carries diagnostics in args."""


@dataclass
class PSDBlock:
    """Affine Hermitian-valued map x -> f0 + sum_i x[idx[i]] * basis[i]."""

    f0: np.ndarray       # (n, n)
    idx: np.ndarray      # (p,) variable indices
    basis: np.ndarray    # (p, n, n) Hermitian basis matrices

    def __post_init__(self):
        self._spec = _two_sparse_spec(self.basis)
        if self._spec is not None:
            aa, bb, ww = self._spec
            # x-independent pieces of the closed-form barrier derivatives
            self._w1 = np.outer(ww, ww)
            self._w2 = np.outer(ww, ww.conj())
            self._rows_b, self._cols_a = bb[:, None], aa[None, :]
            self._cols_b = bb[None, :]
            self._rows_a = aa[:, None]

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.f0 + np.tensordot(x[self.idx], self.basis, axes=(0, 0))


def _two_sparse_spec(basis: np.ndarray):
    """Decompose each basis matrix as w e_a e_b^H + conj(w) e_b e_a^H.

    Returns (a, b, w) index/weight arrays when every matrix has that shape
    (diagonal units count with w = 1/2), else None.  The sparse form gives
    closed-form barrier derivatives from gathered entries of S^{-1}.
    """
    p, n, _ = basis.shape
    aa = np.empty(p, dtype=int)
    bb = np.empty(p, dtype=int)
    ww = np.empty(p, dtype=complex)
    for i in range(p):
        rows, cols = np.nonzero(basis[i])
        if rows.size == 0 or rows.size > 2:
            return None
        if rows.size == 1:
            if rows[0] != cols[0]:
                return None
            aa[i] = bb[i] = rows[0]
            ww[i] = basis[i, rows[0], cols[0]] / 2.0
        else:
            a, b = (rows[0], cols[0]) if rows[0] < cols[0] else (rows[1],
                                                                 cols[1])
            if {(rows[0], cols[0]), (rows[1], cols[1])} != {(a, b), (b, a)}:
                return None
            aa[i], bb[i] = a, b
            ww[i] = basis[i, a, b]
    return aa, bb, ww


@dataclass
class HyperBlocks:
    """Batch of 2x2 blocks [[s_k(x), 1], [1, x[idx_a[k]]]] >= 0.

    s_k(x) = fixed[k] + lin[k] @ x; equivalent to s_k * a_k >= 1 with both
    positive, the hypograph form of a reciprocal bound.
    """

    lin: np.ndarray      # (k, d) coefficients of the (0, 0) entries
    fixed: np.ndarray    # (k,)
    idx_a: np.ndarray    # (k,) variable index on each (1, 1) entry

    def entries(self, x: np.ndarray):
        return self.fixed + self.lin @ x, x[self.idx_a]


@dataclass
class ConeProblem:
    c: np.ndarray                      # minimize c @ x
    blocks: list = field(default_factory=list)   # list[PSDBlock]
    hyper: HyperBlocks | None = None
    g_ineq: np.ndarray | None = None   # rows g @ x <= h
    h_ineq: np.ndarray | None = None
    a_eq: np.ndarray | None = None     # a_eq @ x == b_eq
    b_eq: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    def barrier_complexity(self) -> float:
        nu = sum(b.f0.shape[0] for b in self.blocks)
        if self.hyper is not None:
            nu += 2 * self.hyper.lin.shape[0]
        if self.g_ineq is not None:
            nu += self.g_ineq.shape[0]
        return float(nu)


@dataclass
class SolveInfo:
    x: np.ndarray
    objective: float
    gap: float              # complementarity measure nu / t
    stationarity: float     # scaled KKT stationarity residual
    dual_bound: float       # objective - gap (weak-duality certificate)
    t: float                # final barrier parameter
    newton_steps: int


def psd_project(x: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped)."""
    xh = 0.5 * (x + x.conj().T)
    vals, vecs = np.linalg.eigh(xh)
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals) @ vecs.conj().T


def _nullspace(problem: ConeProblem, x0: np.ndarray):
    a, b = problem.a_eq, problem.b_eq
    if a is None or np.size(a) == 0:
        return None
    a = np.atleast_2d(np.asarray(a, dtype=float))
    res = a @ x0 - b
    if np.max(np.abs(res)) > 1e-8 * max(1.0, float(np.max(np.abs(b)))):
        raise ValueError("x0 does not satisfy the equality constraints")
    _, s, vt = np.linalg.svd(a)
    rank = int((s > s[0] * 1e-12).sum()) if s.size else 0
    return vt[rank:].T                  # (d, d-rank) null-space basis


class _Barrier:
    """Barrier value/gradient/Hessian of one problem, cached per point."""

    def __init__(self, problem: ConeProblem):
        self.blocks = problem.blocks
        self.hyper = problem.hyper
        self.g_ineq = problem.g_ineq
        self.h_ineq = problem.h_ineq
        self.dim = problem.dim

    def state(self, x: np.ndarray):
        """Factorizations and slacks at x, or None if infeasible."""
        chols = []
        for blk in self.blocks:
            s = blk.value(x)
            try:
                chols.append(np.linalg.cholesky(s))
            except np.linalg.LinAlgError:
                return None
        dets = None
        if self.hyper is not None:
            s, a = self.hyper.entries(x)
            dets = s * a - 1.0
            if np.any(s <= 0) or np.any(dets <= 0):
                return None
        slacks = None
        if self.g_ineq is not None:
            slacks = self.h_ineq - self.g_ineq @ x
            if np.any(slacks <= 0):
                return None
        return chols, dets, slacks

    def value(self, state) -> float:
        chols, dets, slacks = state
        val = 0.0
        for l in chols:
            val -= 2.0 * np.sum(np.log(np.real(np.diag(l))))
        if dets is not None:
            val -= np.sum(np.log(dets))
        if slacks is not None:
            val -= np.sum(np.log(slacks))
        return float(val)

    def grad_hess(self, x, state):
        chols, dets, slacks = state
        grad = np.zeros(self.dim)
        hess = np.zeros((self.dim, self.dim))
        for blk, l in zip(self.blocks, chols):
            linv = np.linalg.inv(l)
            sinv = linv.conj().T @ linv
            if blk._spec is not None:
                aa, bb, ww = blk._spec
                grad[blk.idx] -= 2.0 * np.real(ww * sinv[bb, aa])
                pba = sinv[blk._rows_b, blk._cols_a]
                pbb = sinv[blk._rows_b, blk._cols_b]
                paa = sinv[blk._rows_a, blk._cols_a]
                hblk = 2.0 * np.real(blk._w1 * pba * pba.T
                                     + blk._w2 * pbb * paa.conj())
                hess[np.ix_(blk.idx, blk.idx)] += hblk
            else:
                w = np.einsum("ab,pbc->pac", sinv, blk.basis)
                grad[blk.idx] -= np.real(np.einsum("paa->p", w))
                p, n, _ = w.shape
                wf = w.reshape(p, n * n)
                wt = w.transpose(0, 2, 1).reshape(p, n * n)
                hess[np.ix_(blk.idx, blk.idx)] += np.real(wf @ wt.T)
        if dets is not None:
            s, a = self.hyper.entries(x)
            lin, ia = self.hyper.lin, self.hyper.idx_a
            grad += lin.T @ (-a / dets)
            grad[ia] += -s / dets
            scaled = lin * (a / dets)[:, None]
            hess += scaled.T @ scaled
            cross = lin / (dets ** 2)[:, None]
            hess[ia] += cross
            hess[:, ia] += cross.T
            hess[ia, ia] += (s / dets) ** 2
        if slacks is not None:
            inv = 1.0 / slacks
            grad += self.g_ineq.T @ inv
            hess += (self.g_ineq.T * inv ** 2) @ self.g_ineq
        return grad, hess

    def grad(self, x, state):
        chols, dets, slacks = state
        grad = np.zeros(self.dim)
        for blk, l in zip(self.blocks, chols):
            linv = np.linalg.inv(l)
            sinv = linv.conj().T @ linv
            if blk._spec is not None:
                aa, bb, ww = blk._spec
                grad[blk.idx] -= 2.0 * np.real(ww * sinv[bb, aa])
            else:
                w = np.einsum("ab,pbc->pac", sinv, blk.basis)
                grad[blk.idx] -= np.real(np.einsum("paa->p", w))
        if dets is not None:
            s, a = self.hyper.entries(x)
            grad += self.hyper.lin.T @ (-a / dets)
            grad[self.hyper.idx_a] += -s / dets
        if slacks is not None:
            grad += self.g_ineq.T @ (1.0 / slacks)
        return grad


def solve_cone(problem: ConeProblem, x0: np.ndarray, tol: float = 1e-7,
               t0: float | None = None, t_mult: float = 20.0,
               center_tol: float = 1e-9, max_newton: int = 200) -> SolveInfo:
    """Barrier path-following from a strictly feasible start.

    Stops once the complementarity measure nu/t is below ``tol`` and the
    final centering has converged; raises :class:`SolverFailure` on
    persistent Newton breakdown.
    """
    x = np.asarray(x0, dtype=float).copy()
    barrier = _Barrier(problem)
    z = _nullspace(problem, x)
    c = problem.c
    nu = problem.barrier_complexity()

    state = barrier.state(x)
    if state is None:
        raise ValueError("x0 is not strictly feasible")

    t = t0 if t0 is not None else max(1.0, nu / (abs(float(c @ x)) + 1.0))
    steps = 0

    while True:
        final = nu / t < tol
        ctol = center_tol if final else 0.25
        for _ in range(max_newton):
            grad_phi, hess = barrier.grad_hess(x, state)
            grad = t * c + grad_phi
            if z is not None:
                grad_r = z.T @ grad
                hess_r = z.T @ hess @ z
            else:
                grad_r, hess_r = grad, hess
            try:
                dy = np.linalg.solve(
                    hess_r + 1e-12 * np.eye(hess_r.shape[0]), -grad_r)
            except np.linalg.LinAlgError as exc:
                raise SolverFailure("singular Newton system", steps) from exc
            lam2 = float(-grad_r @ dy)
            if lam2 < 0:
                if -lam2 < 1e-8:
                    break       # decrement at roundoff level; centered
                dy = -np.linalg.lstsq(hess_r, grad_r, rcond=None)[0]
                lam2 = float(-grad_r @ dy)
                if lam2 < 0:
                    raise SolverFailure("indefinite Newton system", steps)
            if lam2 / 2.0 < ctol:
                break
            dx = z @ dy if z is not None else dy

            if lam2 < 0.09:
                # quadratically convergent region: merit differences can be
                # below float64 resolution at large t, so take the full
                # step on feasibility alone
                cand_state = barrier.state(x + dx)
                if cand_state is not None:
                    x, state = x + dx, cand_state
                    steps += 1
                    continue

            merit = t * float(c @ x) + barrier.value(state)
            lam = np.sqrt(lam2)
            alpha = 1.0 if lam < 0.5 else 1.0 / (1.0 + lam)
            accepted = False
            for _ in range(60):
                cand = x + alpha * dx
                cand_state = barrier.state(cand)
                if cand_state is not None:
                    cand_merit = t * float(c @ cand) + barrier.value(cand_state)
                    if cand_merit <= merit - 1e-4 * alpha * lam2:
                        x, state = cand, cand_state
                        accepted = True
                        break
                alpha *= 0.5
            steps += 1
            if not accepted:
                break  # numerically centered as far as float64 allows

        if final:
            break
        t *= t_mult

    grad_phi = barrier.grad(x, state)
    residual = c + grad_phi / t
    if z is not None:
        residual = z.T @ residual
    scale = max(1.0, float(np.linalg.norm(c)))
    obj = float(c @ x)
    gap = nu / t
    return SolveInfo(x=x, objective=obj, gap=gap,
                     stationarity=float(np.linalg.norm(residual)) / scale,
                     dual_bound=obj - gap, t=t, newton_steps=steps)
