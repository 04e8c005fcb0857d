"""Rigorous certification of a floating-point dual solution.

The pipeline takes a :class:`~witsenhausen.model.DualPoint` produced by the
solver and either proves that a slightly adjusted point is feasible for the
dual program, returning its objective as a certified upper bound, or reports
why it could not.

1. The SOS identity is re-assembled in exact rational arithmetic from the
   binary64 values; its largest coefficient is ``eta``.
2. Each ``F_k`` and ``Q_i`` block is proven positive semidefinite, and
   ``Q_0`` is proven to have ``lambda_min >= kappa * eta * B`` so that the
   residual can be absorbed into it.  Proofs use an exact integer congruence
   followed by a Gershgorin test.
3. The ``z`` block is repaired so the limit row has slack ``eta' = 10 eps``,
   a tail cutoff ``k0`` is found from the integral bound on ``|P_k^n|``, and
   every row ``k <= k0`` is evaluated at 512 bits with a 1024-bit spot audit.
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from . import polysym
from .bqpcuts import BqpInequality, r_sequence, r_tail_error, r_values_mp
from .model import DualPoint
from .special import family, jacobi_eval, jacobi_sequence, jacobi_tail_bound, sphere_surface

KAPPA = 10
SWEEP_PRECISION = 512
AUDIT_PRECISION = 1024
AUDIT_FRACTION = 0.01
K0_CAP = 10**7
DEFAULT_EPSILON = 1e-2
MARGIN_FACTOR = 10
# rows must clear 1 by this much at sweep precision; z12 repairs overshoot by it
ROW_GUARD = Fraction(1, 2**200)


class CertificationError(RuntimeError):
    exit_code = 30


@dataclass(frozen=True)
class CertifyConfig:
    epsilon: float = DEFAULT_EPSILON
    margin_factor: float = MARGIN_FACTOR
    kappa: float = KAPPA
    sweep_precision: int = SWEEP_PRECISION
    audit_precision: int = AUDIT_PRECISION
    audit_fraction: float = AUDIT_FRACTION
    k0_cap: int = K0_CAP
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.margin_factor > 1:
            raise ValueError("the limit margin must exceed epsilon")
        if self.sweep_precision < 64 or self.audit_precision <= self.sweep_precision:
            raise ValueError("audit precision must exceed sweep precision")


# -- exact helpers ---------------------------------------------------------------------------------


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, mpmath.mpf):
        p, q = mpmath.libmp.to_rational(x._mpf_)
        return Fraction(int(p), int(q))
    return Fraction(float(x))


def _float_up(q: Fraction) -> float:
    x = float(q)
    return math.nextafter(x, math.inf) if Fraction(x) < q else x


def _float_down(q: Fraction) -> float:
    x = float(q)
    return math.nextafter(x, -math.inf) if Fraction(x) > q else x


def _symmetric(mat) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    return mat if np.array_equal(mat, mat.T) else 0.5 * (mat + mat.T)


def _clean_point(point: DualPoint) -> DualPoint:
    """Symmetrize blocks and clip the cut multipliers at zero; all later checks use these exact values."""
    out = point.copy()
    out.F = [_symmetric(F) for F in out.F]
    out.Q = {i: _symmetric(Q) for i, Q in out.Q.items()}
    out.y = np.maximum(np.asarray(out.y, dtype=float), 0.0)
    return out


# -- eta ---------------------------------------------------------------------------------------------


def residual_polynomial(n: int, d: int, point: DualPoint) -> polysym.TriPoly:
    if point.n != n or point.d != d:
        raise ValueError(f"dual point is for (n, d) = ({point.n}, {point.d}), expected ({n}, {d})")
    return polysym.sos_residual(n, d, point.f, point.F, point.Q)


def residual_eta_exact(n: int, d: int, point: DualPoint) -> Fraction:
    return residual_polynomial(n, d, point).max_abs_coeff()


def residual_eta(n: int, d: int, point: DualPoint) -> float:
    """Largest absolute coefficient of the exact SOS residual, rounded up to binary64."""
    return _float_up(residual_eta_exact(n, d, point))


# -- eigenvalue margins ---------------------------------------------------------------------------


def _integer_matrix(A: np.ndarray) -> tuple[list, int]:
    """Exact ``A = M / 2**s`` with integer ``M`` for a binary64 matrix."""
    fr = [[Fraction(float(x)) for x in row] for row in A]
    s = 0
    for row in fr:
        for q in row:
            if q:
                s = max(s, q.denominator.bit_length() - 1)
    scale = 1 << s
    return [[int(q * scale) for q in row] for row in fr], s


def _matmul(A, B):
    n, m, p = len(A), len(B), len(B[0])
    Bt = [[B[k][j] for k in range(m)] for j in range(p)]
    return [[sum(a * b for a, b in zip(A[i], Bt[j])) for j in range(p)] for i in range(n)]


def proves_lower_bound(A, c) -> bool:
    """True only if ``lambda_min(A) > c`` has been proven exactly.

    A floating-point eigenbasis ``V`` is rounded to integers, ``M = V^T (A - c I) V``
    is formed in exact integer arithmetic and tested for strict diagonal
    dominance with a positive diagonal.  That makes ``M`` positive definite, so
    ``V`` is nonsingular and ``A - c I`` is positive definite by congruence.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[0] != A.shape[1] or not np.array_equal(A, A.T):
        raise ValueError("expected an exactly symmetric square matrix")
    m = A.shape[0]
    c = _frac(c)
    Aint, s = _integer_matrix(A)
    # clear the denominator of c as well
    den = c.denominator
    shifted = [[Aint[i][j] * den - (c.numerator << s if i == j else 0) for j in range(m)] for i in range(m)]
    _, vecs = np.linalg.eigh(A)
    Vint = [[int(round(math.ldexp(float(x), 52))) for x in row] for row in vecs]
    Vt = [list(col) for col in zip(*Vint)]
    M = _matmul(_matmul(Vt, shifted), Vint)
    for i in range(m):
        off = sum(abs(M[i][j]) for j in range(m) if j != i)
        if not M[i][i] > off:
            return False
    return True


@dataclass
class BlockMargin:
    name: str
    size: int
    lambda_min: float  # binary64 estimate
    certified_lower: float  # proven lower bound (nan if none)
    required: float
    passed: bool


def certified_lambda_min(A, required: float = 0.0) -> tuple[float, bool]:
    """Best proven lower bound on ``lambda_min(A)`` among a few trial shifts; ``(bound, bound >= required)``."""
    A = np.asarray(A, dtype=float)
    if not A.any():
        return 0.0, required <= 0
    lam = float(np.linalg.eigvalsh(A)[0])
    trials = [lam * f for f in (1 - 2.0**-10, 0.5, 0.1)] + [required]
    for c in trials:
        if c < required or (c <= 0 < lam and c != required):
            continue
        if c >= lam:
            continue
        if proves_lower_bound(A, c):
            return c, True
    return math.nan, False


def eigen_margin_check(point: DualPoint, eta: float, kappa: float = KAPPA) -> list[BlockMargin]:
    """Prove ``Q_0 >= kappa * eta * B`` (``B`` the ``V_2d`` basis size) and every other block psd."""
    B = polysym.VGram(2 * point.d).size
    blocks = [(f"F{k}", F, 0.0) for k, F in enumerate(point.F)]
    blocks += [(f"Q{i}", Q, kappa * eta * B if i == 0 else 0.0) for i, Q in sorted(point.Q.items())]
    out = []
    for name, A, req in blocks:
        A = _symmetric(A)
        lam = float(np.linalg.eigvalsh(A)[0]) if A.size else 0.0
        lower, ok = certified_lambda_min(A, req)
        out.append(BlockMargin(name, A.shape[0], lam, lower, req, ok))
    return out


# -- rows ---------------------------------------------------------------------------------------------


def _cut_check(point: DualPoint, cuts: Sequence[BqpInequality]):
    if len(point.y) != len(cuts):
        raise ValueError(f"{len(cuts)} cuts but {len(point.y)} multipliers")
    for c in cuts:
        if c.n != point.n:
            raise ValueError("cut dimension does not match the dual point")


def _lhs_from_parts(point: DualPoint, k: int, pk0, rk, omega, z12=None, z22=None):
    z12 = point.z12 if z12 is None else z12
    z22 = point.z22 if z22 is None else z22
    val = -omega * mpmath.mpf(z12) + mpmath.mpf(point.lam) * pk0
    for yi, r in zip(point.y, rk):
        val += mpmath.mpf(float(yi)) * r
    if k == 0:
        val -= omega**2 * mpmath.mpf(z22)
    if k <= 2 * point.d:
        val -= mpmath.mpf(float(point.f[k]))
    return val


def _as_mpf(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def lhs_eval(point: DualPoint, cuts: Sequence[BqpInequality], k: int, precision: int = SWEEP_PRECISION, z12=None, z22=None):
    """Left-hand side of the degree-``k`` dual row at ``precision`` bits."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    _cut_check(point, cuts)
    with mpmath.workprec(precision):
        omega = sphere_surface(point.n, precision)
        pk0 = jacobi_eval(point.n, k, 0, precision)
        rk = [r_sequence(c, k, precision) for c in cuts]
        return _lhs_from_parts(point, k, pk0, rk, omega, _opt_mpf(z12), _opt_mpf(z22))


def _opt_mpf(x):
    return None if x is None else _as_mpf(x)


def lhs_table(point: DualPoint, cuts: Sequence[BqpInequality], kmax: int, precision: int = SWEEP_PRECISION, z12=None, z22=None) -> list:
    """``[lhs(0), ..., lhs(kmax)]`` at ``precision`` bits."""
    _cut_check(point, cuts)
    with mpmath.workprec(precision):
        omega = sphere_surface(point.n, precision)
        p0 = jacobi_sequence(family(point.n), kmax, 0, precision)
        rs = [r_values_mp(c, kmax, precision) for c in cuts]
        z12m, z22m = _opt_mpf(z12), _opt_mpf(z22)
        return [_lhs_from_parts(point, k, p0[k], [r[k] for r in rs], omega, z12m, z22m) for k in range(kmax + 1)]


def lhs_infinity(point: DualPoint, cuts: Sequence[BqpInequality], precision: int = SWEEP_PRECISION, z12=None):
    """Limit of the rows: ``sum_i y_i trace(L_i) - omega_n z12`` (``P_k^n(0) -> 0``)."""
    _cut_check(point, cuts)
    with mpmath.workprec(precision):
        omega = sphere_surface(point.n, precision)
        val = -omega * _as_mpf(point.z12 if z12 is None else z12)
        for yi, c in zip(point.y, cuts):
            val += mpmath.mpf(float(yi)) * mpmath.fsum(mpmath.mpf(float(c.L[i, i])) for i in range(c.size))
        return val


# -- tail ---------------------------------------------------------------------------------------------


def tail_error(n: int, lam: float, cuts: Sequence[BqpInequality], y, k0: int, precision: int = 256):
    """Rigorous bound on ``|lhs(k) - lhs(inf)|`` for every ``k >= max(k0, 2d+1)``."""
    with mpmath.workprec(precision):
        total = mpmath.mpf(0)
        if lam:
            total += abs(mpmath.mpf(lam)) * jacobi_tail_bound(n, 0, k0, precision)
        for yi, c in zip(y, cuts):
            if yi:
                total += mpmath.mpf(float(yi)) * r_tail_error(c, k0, precision)
        return total


def find_k0(n: int, lam: float, cuts: Sequence[BqpInequality], y, epsilon: float, cap: int = K0_CAP) -> int:
    """Smallest ``k0`` (doubling, then bisection) whose tail error is at most ``epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    for c in cuts:
        if c.separation <= 0:
            raise CertificationError(f"cut {c.label!r} has coincident or antipodal support points")
    eps = mpmath.mpf(epsilon)

    def ok(k):
        return tail_error(n, lam, cuts, y, k) <= eps

    if ok(0):
        return 0
    hi = 1
    while not ok(hi):
        if hi > cap:
            raise CertificationError(f"tail cutoff exceeds the cap {cap}")
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    if hi > cap:
        raise CertificationError(f"tail cutoff exceeds the cap {cap}")
    return hi


# -- report ---------------------------------------------------------------------------------------------


@dataclass
class CertificationReport:
    n: int
    d: int
    eta: float
    eig_margins: list
    lhs_infinity: float
    k0: int
    epsilon: float
    eta_prime: float
    adjusted_z: tuple
    solver_objective: float
    certified_bound: float
    status: str
    reason: str = ""
    min_slack: float = math.nan
    min_slack_k: int = -1
    row_slacks: list = field(default_factory=list)  # (k, lhs(k) - 1) for the tightest rows
    repairs: list = field(default_factory=list)
    audit_rows: int = 0
    audit_max_difference: float = 0.0
    num_cuts: int = 0
    exact_bound: Fraction | None = None
    exact_z: tuple | None = None  # (z11, z12, z22) as exact rationals

    @property
    def certified(self) -> bool:
        return self.status == "certified"

    def summary_rows(self) -> list[tuple[str, str]]:
        rows = [
            ("n", str(self.n)),
            ("d", str(self.d)),
            ("cuts", str(self.num_cuts)),
            ("status", self.status if not self.reason else f"{self.status}: {self.reason}"),
            ("solver_objective", f"{self.solver_objective:.12e}"),
            ("certified_bound", f"{self.certified_bound:.12e}"),
            ("eta", f"{self.eta:.6e}"),
            ("epsilon", f"{self.epsilon:.6e}"),
            ("eta_prime", f"{self.eta_prime:.6e}"),
            ("k0", str(self.k0)),
            ("lhs_infinity", f"{self.lhs_infinity:.12e}"),
            ("min_slack", f"{self.min_slack:.6e} at k={self.min_slack_k}"),
            ("z11", f"{self.adjusted_z[0]:.17e}"),
            ("z12", f"{self.adjusted_z[1]:.17e}"),
            ("z22", f"{self.adjusted_z[2]:.17e}"),
            ("audit_rows", str(self.audit_rows)),
            ("audit_max_difference", f"{self.audit_max_difference:.3e}"),
        ]
        for b in self.eig_margins:
            rows.append(
                (f"margin_{b.name}", f"lambda_min={b.lambda_min:.6e} proven>={b.certified_lower:.6e} required={b.required:.3e} {'pass' if b.passed else 'FAIL'}")
            )
        for i, r in enumerate(self.repairs):
            rows.append((f"repair_{i}", r))
        return rows

    def to_text(self) -> str:
        rows = self.summary_rows()
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(self.summary_rows())
        w.writerow([])
        w.writerow(["block", "size", "lambda_min", "certified_lower", "required", "passed"])
        for b in self.eig_margins:
            w.writerow([b.name, b.size, f"{b.lambda_min:.6e}", f"{b.certified_lower:.6e}", f"{b.required:.6e}", int(b.passed)])
        w.writerow([])
        w.writerow(["k", "slack"])
        for k, s in self.row_slacks:
            w.writerow([k, f"{s:.6e}"])
        return buf.getvalue()


def _lift_z11(z11: Fraction, z12: Fraction, z22: Fraction) -> Fraction:
    """Smallest ``z11' >= z11`` making ``[[z11', z12/2], [z12/2, z22]]`` psd (exact)."""
    return max(z11, z12 * z12 / (4 * z22), Fraction(0))


def repair_and_certify(
    n: int,
    d: int,
    point: DualPoint,
    cuts: Sequence[BqpInequality] = (),
    epsilon: float | None = None,
    cfg: CertifyConfig | None = None,
) -> CertificationReport:
    """Run the certification pipeline on ``point``; never raises on a failed proof, reports it instead."""
    cfg = cfg or CertifyConfig()
    if epsilon is not None:
        cfg = CertifyConfig(**{**cfg.__dict__, "epsilon": epsilon})
    eps = cfg.epsilon
    eta_prime = cfg.margin_factor * eps
    point = _clean_point(point)
    _cut_check(point, cuts)
    solver_obj = point.objective(cuts)
    z11, z12, z22 = Fraction(point.z11), Fraction(point.z12), Fraction(point.z22)
    report = CertificationReport(
        n=n, d=d, eta=math.nan, eig_margins=[], lhs_infinity=math.nan, k0=-1, epsilon=eps,
        eta_prime=eta_prime, adjusted_z=(float(z11), float(z12), float(z22)), solver_objective=solver_obj,
        certified_bound=math.inf, status="failed", num_cuts=len(cuts),
    )
    if z22 <= 0:
        report.reason = "z22 <= 0, the z block cannot be repaired"
        return report

    eta_q = residual_eta_exact(n, d, point)
    report.eta = _float_up(eta_q)
    report.eig_margins = eigen_margin_check(point, report.eta, cfg.kappa)
    bad = [b.name for b in report.eig_margins if not b.passed]
    if bad:
        report.reason = "eigenvalue margin not proven for " + ", ".join(bad)
        return report

    prec = cfg.sweep_precision
    with mpmath.workprec(prec):
        omega = sphere_surface(n, prec)
        guard = _as_mpf(ROW_GUARD)

        def lower_z12(amount) -> Fraction:
            # overshoot the binary rounding of amount / omega
            return _frac(amount / omega) + ROW_GUARD

        # (i) limit row
        linf = lhs_infinity(point, cuts, prec, z12)
        if linf < 1 + eta_prime:
            delta = lower_z12(1 + mpmath.mpf(eta_prime) - linf)
            z12 -= delta
            report.repairs.append(f"limit: z12 lowered by {float(delta):.6e}")
            linf = lhs_infinity(point, cuts, prec, z12)
        report.lhs_infinity = float(linf)

        # (ii) tail cutoff
        try:
            k0 = find_k0(n, point.lam, cuts, point.y, eps, cfg.k0_cap)
        except CertificationError as exc:
            report.reason = str(exc)
            return report
        k0 = max(k0, 2 * d + 1)
        report.k0 = k0
        tail = tail_error(n, point.lam, cuts, point.y, k0)
        if not linf - tail >= 1 + guard:
            report.reason = "tail bound does not clear the limit margin"
            return report

        # (iii) finite rows
        values = lhs_table(point, cuts, k0, prec, z12, z22)
        worst = min(range(k0 + 1), key=lambda k: values[k])
        if values[worst] < 1 + guard:
            delta = lower_z12(1 + 2 * guard - values[worst])
            z12 -= delta
            shift = omega * _as_mpf(delta)
            values = [v + shift for v in values]
            report.repairs.append(f"rows: z12 lowered by {float(delta):.6e} (worst k={worst})")
        if min(values) < 1 + guard:
            report.reason = f"row k={worst} still violated after repair"
            return report
        z11 = _lift_z11(z11, z12, z22)
        if z11 != Fraction(point.z11):
            report.repairs.append(f"z11 raised by {float(z11 - Fraction(point.z11)):.6e}")

        slacks = sorted(((float(values[k] - 1), k) for k in range(k0 + 1)))
        report.min_slack, report.min_slack_k = slacks[0]
        report.row_slacks = [(k, s) for s, k in slacks[:10]]

        # audit a fraction of the rows at higher precision
        rng = random.Random(cfg.seed)
        count = max(10, int(cfg.audit_fraction * (k0 + 1)))
        ks = sorted(set([0, k0, worst] + [rng.randint(0, k0) for _ in range(count)]))
        # the recurrence needs every lower degree anyway, so audit from one table
        audit = lhs_table(point, cuts, k0, cfg.audit_precision, z12, z22)
        diff = mpmath.mpf(0)
        for k in ks:
            hi = audit[k]
            diff = max(diff, abs(hi - values[k]))
            if hi < 1:
                report.reason = f"audit found lhs({k}) < 1"
                return report
        report.audit_rows = len(ks)
        report.audit_max_difference = float(diff)
        if diff > guard:
            report.reason = "audit disagrees with the sweep beyond the row guard"
            return report

    bound = z11 + sum((Fraction(float(yi)) * Fraction(c.beta) for yi, c in zip(point.y, cuts)), Fraction(0))
    report.adjusted_z = (_float_up(z11), _float_down(z12), float(z22))
    report.exact_bound = bound
    report.exact_z = (z11, z12, z22)
    report.certified_bound = _float_up(bound)
    report.status = "certified"
    return report
