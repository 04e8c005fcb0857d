"""Primal-dual interior-point solver for block SDPs, plus SDPA sparse import/export.

The solver works on :class:`~witsenhausen.sdp.StandardForm` and uses the HKM
search direction with a Mehrotra predictor-corrector.  Free variables are
handled through the augmented Schur system rather than by splitting.  All
linear algebra runs in binary64; the ``precision`` setting is carried along
for the certification stage, which re-evaluates every quantity that matters
in exact or multiprecision arithmetic.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .sdp import DIAG, PSD, SdpProblem, SdpSolution, StandardForm, apply_A, apply_At, standard_form


class SolverError(RuntimeError):
    """Base class for solver failures."""

    exit_code = 20


class MaxIterationsError(SolverError):
    exit_code = 21

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class NumericalError(SolverError):
    exit_code = 22


class InfeasibleError(SolverError):
    exit_code = 23

    def __init__(self, message, which: str):
        super().__init__(message)
        self.which = which


class SdpaFormatError(ValueError):
    def __init__(self, message, line: int, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class SolverConfig:
    precision: int = 128
    gap_tol: float = 1e-9
    feas_tol: float = 1e-9
    max_iter: int = 120
    step_damping: float = 0.95
    refine_steps: int = 3
    stall_iters: int = 6
    accept_tol: float = 1e-6
    schur: str = "qr"
    project: bool = True
    verbose: bool = False

    def __post_init__(self):
        if self.precision < 128:
            raise ValueError("precision must be at least 128 bits")
        if self.gap_tol <= 0 or self.feas_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.step_damping < 1:
            raise ValueError("step damping must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.schur not in ("qr", "cholesky"):
            raise ValueError("schur must be 'qr' or 'cholesky'")


# -- cone helpers -----------------------------------------------------------------------------


def _inner(kinds, U, V) -> float:
    return float(sum(np.sum(u * v) for u, v in zip(U, V)))


def _max_step(kind, X, dX) -> float:
    """Largest ``a`` with ``X + a dX`` in the cone (``inf`` if unbounded)."""
    if kind == DIAG:
        neg = dX < 0
        if not np.any(neg):
            return math.inf
        return float(np.min(-X[neg] / dX[neg]))
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(len(X)), lower=True)
    W = Li @ dX @ Li.T
    lam = np.linalg.eigvalsh(0.5 * (W + W.T))[0]
    return math.inf if lam >= 0 else float(-1.0 / lam)


class _Workspace:
    """Row-scaled copy of the standard form with cached dense views of the constraint matrices."""

    def __init__(self, std: StandardForm):
        self.std = std
        m = std.m
        norms = np.zeros(m)
        for Ak in std.A:
            if Ak.nnz:
                norms = np.maximum(norms, abs(Ak).max(axis=1).toarray().ravel())
        if std.B.nnz:
            norms = np.maximum(norms, abs(std.B).max(axis=1).toarray().ravel())
        norms[norms == 0] = 1.0
        self.row_scale = 1.0 / norms
        D = sp.diags(self.row_scale)
        self.A = [sp.csr_matrix(D @ Ak) for Ak in std.A]
        self.B = sp.csr_matrix(D @ std.B)
        self.b = std.b * self.row_scale
        self.C = [np.array(c, dtype=float) for c in std.C]
        self.c_free = std.c_free.copy()
        self.kinds = std.kinds
        self.sizes = std.sizes
        self.m = m
        self.p = std.B.shape[1]
        self.rows_of = []
        for Ak, kind in zip(self.A, self.kinds):
            touched = np.unique(Ak.nonzero()[0])
            self.rows_of.append(touched)
        self.Ar = [Ak[rows] for Ak, rows in zip(self.A, self.rows_of)]
        # rows that touch only free variables make the Schur complement singular
        touched = np.zeros(m, dtype=bool)
        for rows in self.rows_of:
            touched[rows] = True
        self.augment = bool(self.p) and not touched.all()

    def A_op(self, X, xf):
        out = self.B @ xf if self.p else np.zeros(self.m)
        for Ak, Xk in zip(self.A, X):
            out = out + Ak @ np.ravel(Xk)
        return out

    def At_op(self, y):
        out = []
        for Ak, kind, n in zip(self.A, self.kinds, self.sizes):
            v = Ak.T @ y
            if kind == PSD:
                v = v.reshape(n, n)
                v = 0.5 * (v + v.T)
            out.append(v)
        return out

    def schur(self, X, Sinv, chunk: int = 64):
        """``M_ij = sum_blocks <A_i, X A_j S^{-1}>``."""
        M = np.zeros((self.m, self.m))
        for k, kind in enumerate(self.kinds):
            rows = self.rows_of[k]
            if not len(rows):
                continue
            Ar = self.Ar[k]
            if kind == DIAG:
                d = X[k] * Sinv[k]
                Mk = (Ar @ sp.diags(d) @ Ar.T).toarray()
                M[np.ix_(rows, rows)] += Mk
                continue
            n = self.sizes[k]
            Xk, Sk = X[k], Sinv[k]
            for start in range(0, len(rows), chunk):
                sub = Ar[start : start + chunk]
                dense = sub.toarray().reshape(-1, n, n)
                G = np.matmul(np.matmul(Xk, dense), Sk).reshape(len(dense), -1)
                M[np.ix_(rows[start : start + chunk], rows)] += (Ar @ G.T).T
        return 0.5 * (M + M.T)


    def schur_factor_rows(self, X, Lx, Li, chunk: int = 64):
        """``W`` with ``M = W W^T``; row ``i`` is ``vec(Lx^T A_i L^{-T})`` over all blocks."""
        cols = []
        for k, kind in enumerate(self.kinds):
            rows = self.rows_of[k]
            n = self.sizes[k]
            width = n * n if kind == PSD else n
            Wk = np.zeros((self.m, width))
            if len(rows):
                Ar = self.Ar[k]
                if kind == DIAG:
                    Wk[rows] = (Ar @ sp.diags(np.sqrt(X[k] * Li[k]))).toarray()
                else:
                    for start in range(0, len(rows), chunk):
                        dense = Ar[start : start + chunk].toarray().reshape(-1, n, n)
                        G = np.matmul(np.matmul(Lx[k].T, dense), Li[k].T)
                        Wk[rows[start : start + chunk]] = G.reshape(len(dense), -1)
            cols.append(Wk)
        return np.hstack(cols)


class _Factor:
    """Solves ``M v = r`` from a Cholesky factor of ``M`` or a triangular ``R`` with ``M = R^T R``."""

    def __init__(self, cho=None, R=None):
        self.cho, self.R = cho, R

    def solve(self, rhs):
        if self.cho is not None:
            return sla.cho_solve(self.cho, rhs)
        t = sla.solve_triangular(self.R, rhs, trans="T")
        return sla.solve_triangular(self.R, t)


def _initial_point(ws: _Workspace):
    X, S = [], []
    for k, (kind, n) in enumerate(zip(ws.kinds, ws.sizes)):
        Ak = ws.A[k]
        col_norm = np.sqrt(np.asarray(Ak.multiply(Ak).sum(axis=1)).ravel())
        ratio = np.max((1 + np.abs(ws.b)) / (1 + col_norm)) if ws.m else 1.0
        c_norm = np.linalg.norm(ws.C[k])
        a_norm = np.max(col_norm) if ws.m else 0.0
        xi = max(10.0, math.sqrt(n), n * ratio)
        eta = max(10.0, math.sqrt(n), c_norm, a_norm)
        if kind == PSD:
            X.append(xi * np.eye(n))
            S.append(eta * np.eye(n))
        else:
            X.append(xi * np.ones(n))
            S.append(eta * np.ones(n))
    return X, S, np.zeros(ws.m), np.zeros(ws.p)


def _solve_augmented(Mfac, B, h, rf, p, rho=0.0):
    """Solve ``M dy + B dx = h, B^T dy = rf`` where ``Mfac`` factors ``M + rho B B^T``.

    With ``rho > 0`` the shifted system is solved for ``dx - rho rf`` and
    ``dx`` is recovered afterwards.
    """
    if not p:
        return Mfac.solve(h), np.zeros(0)
    MiB = Mfac.solve(B)
    Mih = Mfac.solve(h)
    K = B.T @ MiB
    try:
        dx = np.linalg.solve(K, B.T @ Mih - rf)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("free-variable system is singular") from exc
    dy = Mih - MiB @ dx
    return dy, dx + rho * rf


def solve_standard(std: StandardForm, cfg: SolverConfig = SolverConfig()):
    """Run the interior-point method; returns ``(X, x_free, y, S, info)`` in unscaled units."""
    ws = _Workspace(std)
    kinds = ws.kinds
    X, S, y, xf = _initial_point(ws)
    nu = sum(ws.sizes)
    Bd = ws.B.toarray()
    b_norm = 1 + np.linalg.norm(ws.b)
    c_norm = 1 + math.sqrt(sum(np.sum(c * c) for c in ws.C) + float(ws.c_free @ ws.c_free))
    log = []
    status = None
    best = None
    for it in range(cfg.max_iter + 1):
        AX = ws.A_op(X, xf)
        rp = ws.b - AX
        AtY = ws.At_op(y)
        Rd = [c - a - s for c, a, s in zip(ws.C, AtY, S)]
        rf = ws.c_free - ws.B.T @ y
        pobj = _inner(kinds, ws.C, X) + float(ws.c_free @ xf)
        dobj = float(ws.b @ y)
        mu = _inner(kinds, X, S) / nu
        pinf = np.linalg.norm(rp) / b_norm
        dinf = math.sqrt(sum(np.sum(r * r) for r in Rd) + float(rf @ rf)) / c_norm
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        log.append((it, pobj, dobj, gap, pinf, dinf, mu))
        if cfg.verbose:
            print(f"{it:3d} {pobj:+.10e} {dobj:+.10e} gap={gap:.2e} pinf={pinf:.2e} dinf={dinf:.2e} mu={mu:.2e}")
        if gap <= cfg.gap_tol and pinf <= cfg.feas_tol and dinf <= cfg.feas_tol:
            status = "optimal"
            break
        merit = max(gap, pinf, dinf)
        if best is None or merit < best[0]:
            best = (merit, it, [x.copy() for x in X], xf.copy(), y.copy(), [s_.copy() for s_ in S])
        if it == cfg.max_iter or it - best[1] >= cfg.stall_iters:
            break
        x_norm = math.sqrt(sum(np.sum(x * x) for x in X))
        y_norm = np.linalg.norm(y)
        if x_norm > 1e12 * (1 + abs(dobj)) and dinf < 1e-6:
            raise InfeasibleError("primal iterates diverge; the dual looks infeasible", "dual")
        if y_norm > 1e12 * (1 + abs(pobj)) and pinf < 1e-6:
            raise InfeasibleError("dual iterates diverge; the primal looks infeasible", "primal")
        try:
            X, xf, y, S = _step(ws, cfg, X, xf, y, S, rp, Rd, rf, mu, nu, Bd)
        except NumericalError:
            if best is not None and best[0] <= cfg.accept_tol:
                break
            raise
    if status is None and best is not None and best[0] <= cfg.accept_tol:
        status = "near-optimal"
        _, best_it, X, xf, y, S = best
        log.append(log[best_it])
    y_unscaled = y * ws.row_scale
    info = dict(log=log, iterations=len(log) - 1, gap=log[-1][3], pinf=log[-1][4], dinf=log[-1][5], status=status)
    if status is None:
        raise MaxIterationsError(f"no convergence after {cfg.max_iter} iterations", (X, xf, y_unscaled, S, info))
    return X, xf, y_unscaled, S, info


def _step(ws, cfg, X, xf, y, S, rp, Rd, rf, mu, nu, Bd):
    """One Mehrotra predictor-corrector step with the HKM direction."""
    kinds = ws.kinds
    Sinv, Lx, Li = [], [], []
    for x, s, kind in zip(X, S, kinds):
        if kind == PSD:
            try:
                L = np.linalg.cholesky(s)
                Lx.append(np.linalg.cholesky(x))
            except np.linalg.LinAlgError as exc:
                raise NumericalError("iterate lost definiteness") from exc
            inv = sla.solve_triangular(L, np.eye(len(s)), lower=True)
            Li.append(inv)
            Sinv.append(inv.T @ inv)
        else:
            Sinv.append(1.0 / s)
            Lx.append(None)
            Li.append(1.0 / s)
    rho = 0.0
    if cfg.schur == "qr":
        # QR of W^T avoids squaring the condition number of M = W W^T
        W = ws.schur_factor_rows(X, Lx, Li)
        if ws.augment:
            rho = float(np.sum(W * W) / np.sum(Bd * Bd))
            W = np.hstack([W, math.sqrt(rho) * Bd])
        R = sla.qr(W.T, mode="r", overwrite_a=True, check_finite=False)[0][: ws.m]
        if np.min(np.abs(np.diag(R))) <= 1e-300:
            raise NumericalError("Schur complement is singular")
        Mfac = _Factor(R=R)
    else:
        M = ws.schur(X, Sinv)
        if ws.augment:
            rho = float(np.trace(M) / np.sum(Bd * Bd))
            M = M + rho * (Bd @ Bd.T)
        try:
            Mfac = _Factor(cho=sla.cho_factor(M))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("Schur complement is not positive definite") from exc

    def direction(sigma, corr=None):
        # dX = base - sym(X dS S^-1) with dS = Rd - A^T dy
        base, target = [], []
        for k, kind in enumerate(kinds):
            if kind == PSD:
                t = sigma * mu * Sinv[k] - X[k]
                if corr is not None:
                    c = corr[0][k] @ corr[1][k] @ Sinv[k]
                    t = t - 0.5 * (c + c.T)
                r = X[k] @ Rd[k] @ Sinv[k]
                base.append(t)
                target.append(t - 0.5 * (r + r.T))
            else:
                t = sigma * mu * Sinv[k] - X[k]
                if corr is not None:
                    t = t - corr[0][k] * corr[1][k] * Sinv[k]
                base.append(t)
                target.append(t - X[k] * Rd[k] * Sinv[k])
        h = rp - ws.A_op(target, np.zeros(ws.p))
        dy, dx = _solve_augmented(Mfac, Bd, h, rf, ws.p, rho)

        def recover(dy):
            AtdY = ws.At_op(dy)
            dS = [r - a for r, a in zip(Rd, AtdY)]
            dX = []
            for k, kind in enumerate(kinds):
                if kind == PSD:
                    t = X[k] @ dS[k] @ Sinv[k]
                    dX.append(base[k] - 0.5 * (t + t.T))
                else:
                    dX.append(base[k] - X[k] * dS[k] * Sinv[k])
            return dX, dS

        dX, dS = recover(dy)
        for _ in range(cfg.refine_steps):
            # the Schur system is ill-conditioned near the optimum; refine against the true residuals
            err = rp - ws.A_op(dX, dx)
            ferr = rf - Bd.T @ dy if ws.p else np.zeros(0)
            if np.linalg.norm(err) <= 1e-15 * (1 + np.linalg.norm(rp) + np.linalg.norm(h)) and np.linalg.norm(ferr) <= 1e-15 * (1 + np.linalg.norm(rf)):
                break
            ey, ex = _solve_augmented(Mfac, Bd, err, ferr, ws.p, rho)
            dy, dx = dy + ey, dx + ex
            dX, dS = recover(dy)
        return dX, dx, dy, dS

    def steps(dX, dS):
        ap = min((_max_step(k, x, d) for k, x, d in zip(kinds, X, dX)), default=math.inf)
        ad = min((_max_step(k, s, d) for k, s, d in zip(kinds, S, dS)), default=math.inf)
        return ap, ad

    dXa, dxa, dya, dSa = direction(0.0)
    ap, ad = steps(dXa, dSa)
    ap, ad = min(1.0, ap), min(1.0, ad)
    mu_aff = _inner(kinds, [x + ap * d for x, d in zip(X, dXa)], [s + ad * d for s, d in zip(S, dSa)]) / nu
    sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
    dX, dx, dy, dS = direction(sigma, (dXa, dSa))
    ap, ad = steps(dX, dS)
    gamma = cfg.step_damping
    ap = min(1.0, gamma * ap)
    ad = min(1.0, gamma * ad)
    X = [x + ap * d for x, d in zip(X, dX)]
    xf = xf + ap * dx
    y = y + ad * dy
    S = [s + ad * d for s, d in zip(S, dS)]
    X = [0.5 * (x + x.T) if k == PSD else x for k, x in zip(kinds, X)]
    S = [0.5 * (s + s.T) if k == PSD else s for k, s in zip(kinds, S)]
    return X, xf, y, S


def project_equalities(std: StandardForm, X: list, xf: np.ndarray, rounds: int = 2):
    """Least-norm correction of ``(X, x_free)`` so the equality rows hold to rounding level.

    Only rows that were equalities in the user problem are corrected; the
    surplus block of converted inequality rows is left untouched.
    """
    eq = np.setdiff1d(np.arange(std.m), std.slack_rows)
    if not len(eq):
        return X, xf
    nb = std.num_user_blocks
    G = sp.hstack([std.A[k][eq] for k in range(nb)] + [std.B[eq]]).tocsr()
    GGt = (G @ G.T).toarray()
    try:
        fac = sla.cho_factor(GGt)
    except np.linalg.LinAlgError:
        fac = None
    widths = [std.A[k].shape[1] for k in range(nb)]
    X = [x.copy() for x in X]
    xf = xf.copy()
    for _ in range(rounds):
        r = (std.b - apply_A(std, X, xf))[eq]
        w = sla.cho_solve(fac, r) if fac is not None else np.linalg.lstsq(GGt, r, rcond=None)[0]
        delta = G.T @ w
        pos = 0
        for k in range(nb):
            piece = delta[pos : pos + widths[k]]
            pos += widths[k]
            X[k] = X[k] + (piece.reshape(X[k].shape) if std.kinds[k] == PSD else piece)
        xf = xf + delta[pos:]
    return X, xf


def _post_project(kind, X):
    """Symmetrize and clip tiny negative eigenvalues produced by round-off."""
    if kind == DIAG:
        return np.maximum(X, 0.0)
    X = 0.5 * (X + X.T)
    w, V = np.linalg.eigh(X)
    if w[0] < 0:
        X = (V * np.maximum(w, 0.0)) @ V.T
        X = 0.5 * (X + X.T)
    return X


def _to_solution(problem: SdpProblem, std: StandardForm, X, xf, y, S, info) -> SdpSolution:
    blocks, dual_blocks = {}, {}
    for k, blk in enumerate(problem.blocks):
        Xk = _post_project(std.kinds[k], X[k])
        if blk.floor:
            Xk = Xk + blk.floor * (np.eye(blk.size) if blk.kind == PSD else np.ones(blk.size))
        blocks[blk.name] = Xk
        dual_blocks[blk.name] = S[k]
    free = {name: float(v) for name, v in zip(problem.free_names, xf)}
    sign = std.sign
    pobj = sign * (_inner(std.kinds, std.C, X) + float(std.c_free @ xf) + std.constant)
    dobj = sign * (float(std.b @ y) + std.constant)
    return SdpSolution(
        blocks=blocks,
        free=free,
        row_duals=sign * y,
        primal_objective=pobj,
        dual_objective=dobj,
        status=info.get("status") or "optimal",
        iterations=info["iterations"],
        # the projection moves X after the last iterate, so the gap is re-measured on what is returned
        gap=max(info["gap"], abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))),
        primal_infeasibility=info["pinf"],
        dual_infeasibility=info["dinf"],
        log=info["log"],
        dual_blocks=dual_blocks,
    )


def solve(problem: SdpProblem, cfg: SolverConfig = SolverConfig()) -> SdpSolution:
    """Solve ``problem``; the returned objective is in the problem's own sense."""
    std = standard_form(problem)
    if std.m == 0:
        raise ValueError("problem has no constraints")
    X, xf, y, S, info = solve_standard(std, cfg)
    if cfg.project:
        X, xf = project_equalities(std, X, xf)
    return _to_solution(problem, std, X, xf, y, S, info)


def kkt_residuals(problem: SdpProblem, sol: SdpSolution) -> dict:
    """Unscaled primal/dual feasibility and complementarity of a returned solution."""
    std = standard_form(problem)
    X = []
    for k, blk in enumerate(problem.blocks):
        Xk = np.asarray(sol.blocks[blk.name], dtype=float)
        if blk.floor:
            Xk = Xk - blk.floor * (np.eye(blk.size) if blk.kind == PSD else np.ones(blk.size))
        X.append(Xk)
    xf = np.array([sol.free[name] for name in problem.free_names])
    y = std.sign * sol.row_duals
    if std.slack_rows:
        base = apply_A(std, X + [np.zeros(len(std.slack_rows))], xf)
        X.append(base[std.slack_rows] - std.b[std.slack_rows])
    rp = std.b - apply_A(std, X, xf)
    At = apply_At(std, y)
    S = [c - a for c, a in zip(std.C, At)]
    rf = std.c_free - std.B.T @ y
    neg = 0.0
    for k, s in zip(std.kinds, S):
        lo = np.linalg.eigvalsh(s)[0] if k == PSD else (s.min() if len(s) else 0.0)
        neg = max(neg, -float(lo))
    comp = abs(_inner(std.kinds, X, S))
    return dict(
        primal=float(np.linalg.norm(rp) / (1 + np.linalg.norm(std.b))),
        dual=float(max(neg, np.linalg.norm(rf) if len(rf) else 0.0)),
        complementarity=float(comp),
    )


# -- SDPA sparse format -------------------------------------------------------------------------

SIG_DIGITS = 30


def _fmt(x: float) -> str:
    """Decimal rendering with ``SIG_DIGITS`` significant digits (exact round trip for binary64)."""
    x = float(x)
    return "0" if x == 0 else f"{x:.{SIG_DIGITS - 1}e}"


@dataclass
class SdpaData:
    """Raw content of an SDPA sparse file: ``min c^T x  s.t.  sum_i x_i F_i - F_0 >= 0``.

    ``entries`` holds ``(matno, blkno, i, j, value)`` with 1-based block and
    index numbering and ``i <= j``; ``block_sizes`` are negative for diagonal blocks.
    """

    m: int
    block_sizes: list
    c: np.ndarray
    entries: list
    comments: list = field(default_factory=list)

    def matrix(self, matno: int) -> list:
        """Dense per-block matrices of ``F_matno``."""
        out = [np.zeros((abs(s), abs(s))) for s in self.block_sizes]
        for mat, blk, i, j, v in self.entries:
            if mat == matno:
                out[blk - 1][i - 1, j - 1] = v
                out[blk - 1][j - 1, i - 1] = v
        return out


def to_sdpa(problem: SdpProblem) -> tuple[SdpaData, dict]:
    """Map a problem onto SDPA's dual side: ``max <F_0, Y>  s.t.  <F_i, Y> = c_i, Y psd``.

    Rows become constraint matrices ``F_i`` with ``c_i`` their right-hand
    sides, ``F_0 = -C``; free variables are split into two nonnegative parts
    in a trailing diagonal block.  The SDPA optimal value ``v`` relates to the
    problem's objective by ``objective = sign * (constant - v)``.
    """
    std = standard_form(problem)
    sizes = list(std.sizes)
    kinds = list(std.kinds)
    p = std.B.shape[1]
    if p:
        sizes.append(2 * p)
        kinds.append(DIAG)
    block_sizes = [s if k == PSD else -s for s, k in zip(sizes, kinds)]
    entries = []
    for k, kind in enumerate(std.kinds):
        C = std.C[k]
        n = std.sizes[k]
        if kind == PSD:
            for i in range(n):
                for j in range(i, n):
                    if C[i, j]:
                        entries.append((0, k + 1, i + 1, j + 1, -float(C[i, j])))
        else:
            for i in range(n):
                if C[i]:
                    entries.append((0, k + 1, i + 1, i + 1, -float(C[i])))
    for i, c in enumerate(std.c_free):
        if c:
            entries.append((0, len(sizes), i + 1, i + 1, -float(c)))
            entries.append((0, len(sizes), p + i + 1, p + i + 1, float(c)))
    for k, kind in enumerate(std.kinds):
        Ak = std.A[k].tocoo()
        n = std.sizes[k]
        for r, col, v in sorted(zip(Ak.row, Ak.col, Ak.data)):
            if kind == PSD:
                i, j = divmod(int(col), n)
                if i > j:
                    continue
                entries.append((int(r) + 1, k + 1, i + 1, j + 1, float(v)))
            else:
                entries.append((int(r) + 1, k + 1, int(col) + 1, int(col) + 1, float(v)))
    Bc = std.B.tocoo()
    for r, col, v in zip(Bc.row, Bc.col, Bc.data):
        entries.append((int(r) + 1, len(sizes), int(col) + 1, int(col) + 1, float(v)))
        entries.append((int(r) + 1, len(sizes), p + int(col) + 1, p + int(col) + 1, -float(v)))
    entries.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    meta = dict(sign=std.sign, constant=std.constant, floors=std.floors, free=p)
    comments = [
        f"\"witsenhausen SDPA export: objective = {std.sign:+.0f} * ({std.constant!r} - sdpa_optimum)\"",
    ]
    return SdpaData(std.m, block_sizes, std.b.copy(), entries, comments), meta


def write_sdpa(data: SdpaData, destination) -> None:
    buf = io.StringIO()
    for c in data.comments:
        buf.write(c if c.startswith(("*", '"')) else "* " + c)
        buf.write("\n")
    buf.write(f"{data.m} = mDIM\n")
    buf.write(f"{len(data.block_sizes)} = nBLOCK\n")
    buf.write(" ".join(str(s) for s in data.block_sizes) + " = bLOCKsTRUCT\n")
    if data.m:
        buf.write(" ".join(_fmt(v) for v in data.c) + "\n")
    for mat, blk, i, j, v in data.entries:
        buf.write(f"{mat} {blk} {i} {j} {_fmt(v)}\n")
    text = buf.getvalue()
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w") as fh:
            fh.write(text)


def export_sdpa(problem: SdpProblem, destination) -> dict:
    """Write ``problem`` as SDPA sparse (``*.dat-s``); returns the objective mapping metadata."""
    data, meta = to_sdpa(problem)
    write_sdpa(data, destination)
    return meta


_NUM = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eEdD][-+]?\d+)?")


def _numbers(line: str, lineno: int, expect: int | None = None, ints: bool = False):
    cleaned = re.sub(r"[{}(),=]", " ", line)
    out = []
    col = 0
    for tok in cleaned.split():
        col = line.find(tok, col) + 1
        if not _NUM.fullmatch(tok):
            break
        try:
            out.append(int(tok) if ints else float(tok.replace("d", "e").replace("D", "e")))
        except ValueError as exc:
            raise SdpaFormatError(f"expected an integer, got {tok!r}", lineno, col) from exc
        if expect is not None and len(out) == expect:
            break
    if expect is not None and len(out) < expect:
        raise SdpaFormatError(f"expected {expect} numbers, got {len(out)}", lineno, col)
    return out


def read_sdpa(source) -> SdpaData:
    """Parse an SDPA sparse file (path or text stream)."""
    text = source.read() if hasattr(source, "read") else open(source).read()
    lines = text.splitlines()
    comments, body = [], []
    for no, line in enumerate(lines, start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith(("*", '"')):
            comments.append(s)
            continue
        body.append((no, line))
    if len(body) < 3:
        raise SdpaFormatError("truncated header", body[-1][0] if body else len(lines))
    (l1, s1), (l2, s2), (l3, s3) = body[:3]
    m = _numbers(s1, l1, 1, ints=True)[0]
    nblock = _numbers(s2, l2, 1, ints=True)[0]
    sizes = _numbers(s3, l3, nblock, ints=True)
    start = 3
    c = np.zeros(0)
    if m:
        if len(body) < 4:
            raise SdpaFormatError("missing objective vector", body[-1][0])
        l4, s4 = body[3]
        c = np.array(_numbers(s4, l4, m), dtype=float)
        start = 4
    entries = []
    for no, line in body[start:]:
        vals = _numbers(line, no, 5)
        mat, blk, i, j = (int(v) for v in vals[:4])
        if any(int(v) != v for v in vals[:4]):
            raise SdpaFormatError("indices must be integers", no, 1)
        if not 0 <= mat <= m:
            raise SdpaFormatError(f"matrix number {mat} out of range", no, 1)
        if not 1 <= blk <= nblock:
            raise SdpaFormatError(f"block number {blk} out of range", no, 3)
        size = abs(sizes[blk - 1])
        if not (1 <= i <= size and 1 <= j <= size):
            raise SdpaFormatError("entry index outside its block", no, 5)
        if sizes[blk - 1] < 0 and i != j:
            raise SdpaFormatError("off-diagonal entry in a diagonal block", no, 5)
        if i > j:
            i, j = j, i
        entries.append((mat, blk, i, j, float(vals[4])))
    return SdpaData(m, sizes, c, entries, comments)


def _render_matrix(blocks: Sequence, sizes: Sequence) -> str:
    parts = []
    for B, s in zip(blocks, sizes):
        B = np.asarray(B, dtype=float)
        if s < 0:
            diag = np.diag(B) if B.ndim == 2 else B
            parts.append("{" + ",".join(_fmt(v) for v in diag) + "}")
        else:
            rows = ["{" + ",".join(_fmt(v) for v in row) + "}" for row in B]
            parts.append("{\n" + ",\n".join(rows) + "\n}")
    return "{\n" + "\n".join(parts) + "\n}\n"


def write_sdpa_solution(destination, sizes, x_vec, x_mat, y_mat, primal_value, dual_value, phase="pdOPT"):
    """Write a solution in the SDPA ``.out`` layout (``xVec``, ``xMat``, ``yMat``)."""
    text = (
        f"phase.value  = {phase}\n"
        f"objValPrimal = {_fmt(primal_value)}\n"
        f"objValDual   = {_fmt(dual_value)}\n"
        "xVec = \n{" + ",".join(_fmt(v) for v in x_vec) + "}\n"
        "xMat = \n" + _render_matrix(x_mat, sizes) + "yMat = \n" + _render_matrix(y_mat, sizes)
    )
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w") as fh:
            fh.write(text)


@dataclass
class SdpaSolution:
    phase: str
    primal_value: float
    dual_value: float
    x_vec: np.ndarray
    x_mat: list
    y_mat: list


def _parse_braced(text: str, start: int):
    """Parse a nested ``{...}`` literal of numbers starting at ``text[start] == '{'``."""
    depth = 0
    i = start
    stack = [[]]
    tok = ""
    while i < len(text):
        ch = text[i]
        if ch == "{":
            depth += 1
            stack.append([])
        elif ch in ",}" or ch.isspace():
            if tok:
                stack[-1].append(float(tok))
                tok = ""
            if ch == "}":
                depth -= 1
                done = stack.pop()
                stack[-1].append(done)
                if depth == 0:
                    return stack[-1][0], i + 1
        else:
            tok += ch
        i += 1
    raise ValueError("unbalanced braces")


def import_sdpa_solution(source, sizes: Sequence | None = None) -> SdpaSolution:
    """Read an SDPA ``.out`` style solution (``xVec``/``xMat``/``yMat`` sections)."""
    text = source.read() if hasattr(source, "read") else open(source).read()

    def lineno(pos):
        return text.count("\n", 0, pos) + 1

    def value(key):
        mt = re.search(rf"{key}\s*=\s*(\S+)", text)
        if not mt:
            raise SdpaFormatError(f"missing {key}", lineno(len(text)))
        return mt.group(1)

    def section(key):
        mt = re.search(rf"{key}\s*=\s*", text)
        if not mt:
            raise SdpaFormatError(f"missing section {key}", lineno(len(text)))
        pos = text.index("{", mt.end())
        try:
            return _parse_braced(text, pos)[0]
        except ValueError as exc:
            raise SdpaFormatError(f"malformed section {key}: {exc}", lineno(pos)) from exc

    phase = value("phase.value")
    try:
        pv = float(value("objValPrimal"))
        dv = float(value("objValDual"))
    except ValueError as exc:
        raise SdpaFormatError("objective value is not a number", 1) from exc
    x_vec = np.array(section("xVec"), dtype=float)

    def blocks(raw):
        out = []
        for k, b in enumerate(raw):
            if b and isinstance(b[0], list):
                out.append(np.array(b, dtype=float))
            else:
                v = np.array(b, dtype=float)
                out.append(np.diag(v) if sizes is None or sizes[k] < 0 else v.reshape(1, -1))
        return out

    return SdpaSolution(phase, pv, dv, x_vec, blocks(section("xMat")), blocks(section("yMat")))


def sdpa_objective(meta: dict, sdpa_value: float) -> float:
    """Translate an SDPA optimal value back into the exported problem's objective."""
    return meta["sign"] * (meta["constant"] - sdpa_value)
