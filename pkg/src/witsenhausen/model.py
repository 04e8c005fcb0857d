"""Assembly of the Witsenhausen dual SDP and a checker for its primal.

Dual variables: a free scalar ``lam``, cut multipliers ``y >= 0``, the psd
2x2 block ``z = [[z11, z12/2], [z12/2, z22]]``, free ``f(0..2d)`` and the psd
certificate blocks ``F_0..F_d``, ``Q_0..Q_4``.  Linear rows are indexed by a
finite sample ``S`` of degrees; the slice-positive SOS identity is imposed
coefficientwise over all monomials of degree ``<= 2d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import polysym
from .bqpcuts import BqpInequality, r_values
from .sdp import DIAG, PSD, SdpProblem, SdpSolution
from .special import harmonic_dim, jacobi_table, normalizing_integral, sphere_surface

DEFAULT_KMAX = 3000
SAMPLE_RATIO = 1.15


class ModelError(ValueError):
    exit_code = 10


def choose_sample(n: int, d: int, k_max: int = DEFAULT_KMAX) -> list[int]:
    """``{0..4d}`` plus ``ceil(4d * 1.15^j)`` up to ``k_max``, always including ``k_max``."""
    if k_max < 2 * d + 1:
        raise ModelError("k_max must be at least 2d + 1")
    base = 4 * d
    S = set(range(min(base, k_max) + 1))
    j = 1
    while True:
        k = math.ceil(base * SAMPLE_RATIO**j)
        if k > k_max:
            break
        S.add(k)
        j += 1
    S.add(k_max)
    return sorted(S)


def _vec(poly: polysym.TriPoly, index: dict) -> dict:
    return {index[m]: float(c) for m, c in poly}


@dataclass(frozen=True)
class BlockLayout:
    """Names and sizes of the certificate blocks for degree ``d``."""

    d: int
    F_sizes: tuple
    Q_degrees: dict

    @property
    def Q_sizes(self) -> dict:
        return {i: len(polysym.gram_basis(r)) for i, r in self.Q_degrees.items()}


def layout(d: int) -> BlockLayout:
    return BlockLayout(d, tuple(d - k + 1 for k in range(d + 1)), polysym.q_block_degrees(d))


def _sos_coefficient_rows(n: int, d: int):
    """For each block entry, the sparse monomial-coefficient vector of its polynomial."""
    mons = polysym.monomials(2 * d)
    index = {m: i for i, m in enumerate(mons)}
    F_cols = []
    for k in range(d + 1):
        yb = polysym.y_bar(n, k, d)
        F_cols.append({(i, j): _vec(yb.entry(i, j), index) for i in range(yb.size) for j in range(i, yb.size)})
    gs = (None,) + polysym.domain_polys()
    Q_cols = {}
    for i, r in polysym.q_block_degrees(d).items():
        vg = polysym.VGram(r)
        cols = {}
        for a in range(vg.size):
            for b in range(a, vg.size):
                if i == 0:
                    cols[(a, b)] = {index[vg.product_exponent(a, b)]: 1.0}
                else:
                    cols[(a, b)] = _vec(gs[i] * vg.entry(a, b), index)
        Q_cols[i] = cols
    h = [harmonic_dim(n, k) for k in range(2 * d + 1)]
    f_cols = [{m: h[k] * c for m, c in _vec(p, index).items()} for k, p in enumerate(polysym.univariate_terms(n, d))]
    return mons, f_cols, F_cols, Q_cols


def build_dual(
    n: int,
    d: int,
    cuts: Sequence[BqpInequality] = (),
    S: Sequence[int] | None = None,
    *,
    k_max: int = DEFAULT_KMAX,
    psd_margin: float = 0.0,
) -> SdpProblem:
    """Assemble the dual program with rows for ``k`` in ``S`` and the SOS identity rows.

    ``psd_margin`` imposes ``F_k, Q_i >= psd_margin * I`` instead of ``>= 0``;
    this only shrinks the feasible set, so any solution remains feasible for
    the unmodified program.
    """
    if n < 3:
        raise ModelError("n must be at least 3")
    if d < 2:
        raise ModelError("d must be at least 2")
    if S is None:
        S = choose_sample(n, d, k_max)
    S = sorted(set(int(k) for k in S))
    if not S:
        raise ModelError("the sample S is empty")
    if S[0] != 0:
        raise ModelError("the sample S must contain 0")
    for c in cuts:
        if c.n != n:
            raise ModelError(f"cut {c.label!r} lives in dimension {c.n}, not {n}")
    omega = float(sphere_surface(n))
    kmax = S[-1]
    P0 = jacobi_table(n, kmax, [0.0])[:, 0]
    R = [r_values(c, kmax) for c in cuts]
    lay = layout(d)
    prob = SdpProblem(
        "min",
        metadata=dict(n=n, d=d, S=S, cuts=[c.label for c in cuts], omega=omega, psd_margin=psd_margin),
    )
    lam = prob.add_free("lam")
    f = [prob.add_free(f"f{k}") for k in range(2 * d + 1)]
    zb = prob.add_block("z", 2)
    yb = prob.add_block("y", len(cuts), kind=DIAG) if cuts else None
    Fb = [prob.add_block(f"F{k}", size, floor=psd_margin) for k, size in enumerate(lay.F_sizes)]
    Qb = {i: prob.add_block(f"Q{i}", size, floor=psd_margin) for i, size in lay.Q_sizes.items()}

    z11, z12h, z22 = prob.entry(zb, 0, 0), prob.entry(zb, 0, 1), prob.entry(zb, 1, 1)
    # rows for the sampled degrees; an off-diagonal term with coefficient v contributes v * z12
    for k in S:
        terms = [(lam, P0[k]), (z12h, -omega)]
        if k == 0:
            terms.append((z22, -omega * omega))
        if k <= 2 * d:
            terms.append((f[k], -1.0))
        for i, r in enumerate(R):
            terms.append((prob.entry(yb, i), r[k]))
        prob.add_row(terms, ">=", 1.0, label=f"k={k}")

    mons, f_cols, F_cols, Q_cols = _sos_coefficient_rows(n, d)
    rows = [[] for _ in mons]
    for k, col in enumerate(f_cols):
        for m, c in col.items():
            rows[m].append((f[k], c))
    for k, cols in enumerate(F_cols):
        for (i, j), col in cols.items():
            e = prob.entry(Fb[k], i, j)
            for m, c in col.items():
                rows[m].append((e, -c))
    for q, cols in Q_cols.items():
        for (a, b), col in cols.items():
            e = prob.entry(Qb[q], a, b)
            for m, c in col.items():
                rows[m].append((e, -c))
    for m, terms in zip(mons, rows):
        prob.add_row(terms, "=", 0.0, label="sos:" + ",".join(map(str, m)))

    objective = [(z11, 1.0)]
    for i, c in enumerate(cuts):
        objective.append((prob.entry(yb, i), c.beta))
    prob.set_objective(objective)
    return prob.finalize()


@dataclass
class DualPoint:
    """A candidate dual solution ``(lam, y, z, f, F, Q)`` in plain arrays."""

    n: int
    d: int
    lam: float
    y: np.ndarray
    z11: float
    z12: float
    z22: float
    f: np.ndarray
    F: list
    Q: dict
    S: list = field(default_factory=list)

    def objective(self, cuts: Sequence[BqpInequality] = ()) -> float:
        return float(self.z11 + sum(yi * c.beta for yi, c in zip(self.y, cuts)))

    def copy(self) -> "DualPoint":
        return DualPoint(
            self.n, self.d, self.lam, self.y.copy(), self.z11, self.z12, self.z22,
            self.f.copy(), [F.copy() for F in self.F], {i: Q.copy() for i, Q in self.Q.items()}, list(self.S),
        )


def extract_dual_point(problem: SdpProblem, sol: SdpSolution) -> DualPoint:
    meta = problem.metadata
    n, d = meta["n"], meta["d"]
    Z = sol.blocks["z"]
    y = np.asarray(sol.blocks["y"], dtype=float) if "y" in sol.blocks else np.zeros(0)
    F = [np.asarray(sol.blocks[f"F{k}"]) for k in range(d + 1)]
    Q = {i: np.asarray(sol.blocks[f"Q{i}"]) for i in polysym.q_block_degrees(d)}
    f = np.array([sol.free[f"f{k}"] for k in range(2 * d + 1)])
    return DualPoint(n, d, sol.free["lam"], y, float(Z[0, 0]), float(2 * Z[0, 1]), float(Z[1, 1]), f, F, Q, list(meta["S"]))


def sample_multipliers(problem: SdpProblem, sol: SdpSolution) -> dict:
    """Row multipliers of the sampled-degree rows, i.e. the primal Schoenberg coefficients ``a(k)``."""
    out = {}
    for r, row in enumerate(problem.rows):
        if row.label.startswith("k="):
            out[int(row.label[2:])] = max(float(sol.row_duals[r]), 0.0)
    return out


# -- primal side ---------------------------------------------------------------------------------


@dataclass
class PrimalReport:
    objective: float
    orthogonality: float
    cut_slacks: list
    normalization_min_eig: float
    dual_cone_value: float
    failures: list

    @property
    def feasible(self) -> bool:
        return not self.failures


def _dual_cone_min(n: int, d: int, b: np.ndarray) -> float:
    """``min sum_k b(k) g(k)`` over ``g`` in the degree-``d`` slice-positive cone with total block trace ``<= 1``.

    The value is ``0`` exactly when ``b`` lies in the dual cone and negative otherwise.
    """
    from .ipm import SolverConfig, solve

    lay = layout(d)
    prob = SdpProblem("min")
    g = [prob.add_free(f"g{k}") for k in range(2 * d + 1)]
    Fb = [prob.add_block(f"F{k}", s) for k, s in enumerate(lay.F_sizes)]
    Qb = {i: prob.add_block(f"Q{i}", s) for i, s in lay.Q_sizes.items()}
    mons = polysym.monomials(2 * d)
    index = {m: i for i, m in enumerate(mons)}
    rows = [[] for _ in mons]
    for k, p in enumerate(polysym.univariate_terms(n, d)):
        for m, c in _vec(p, index).items():
            rows[m].append((g[k], c))
    _, _, F_cols, Q_cols = _sos_coefficient_rows(n, d)
    for k, cols in enumerate(F_cols):
        for (i, j), col in cols.items():
            for m, c in col.items():
                rows[m].append((prob.entry(Fb[k], i, j), -c))
    for q, cols in Q_cols.items():
        for (a, bb), col in cols.items():
            for m, c in col.items():
                rows[m].append((prob.entry(Qb[q], a, bb), -c))
    for terms in rows:
        prob.add_row(terms, "=", 0.0)
    trace = [(prob.entry(Fb[k], i), -1.0) for k, s in enumerate(lay.F_sizes) for i in range(s)]
    trace += [(prob.entry(Qb[q], i), -1.0) for q, s in lay.Q_sizes.items() for i in range(s)]
    prob.add_row(trace, ">=", -1.0)
    prob.set_objective([(g[k], float(b[k])) for k in range(2 * d + 1)])
    sol = solve(prob.finalize(), SolverConfig(gap_tol=1e-10, feas_tol=1e-10))
    return sol.primal_objective


def primal_check(n: int, d: int, a, cuts: Sequence[BqpInequality] = (), tol: float = 1e-6) -> PrimalReport:
    """Check a finitely supported ``a >= 0`` against every constraint of the primal program."""
    if not isinstance(a, dict):
        a = {k: v for k, v in enumerate(a)}
    a = {int(k): float(v) for k, v in a.items() if v}
    failures = []
    if any(v < 0 for v in a.values()):
        failures.append("a has negative entries")
    omega = float(sphere_surface(n))
    kmax = max(a, default=0)
    P0 = jacobi_table(n, max(kmax, 2 * d), [0.0])[:, 0]
    total = sum(a.values())
    orth = sum(v * P0[k] for k, v in a.items())
    if abs(orth) > tol:
        failures.append(f"sum a(k) P_k(0) = {orth:.3e} is not zero")
    slacks = []
    for i, c in enumerate(cuts):
        r = r_values(c, max(kmax, 1))
        val = sum(v * r[k] for k, v in a.items())
        slacks.append(c.beta - val)
        if val > c.beta + tol:
            failures.append(f"cut {i} violated by {val - c.beta:.3e}")
    a0 = a.get(0, 0.0)
    M = np.array([[1.0, omega * total], [omega * total, omega * omega * a0]])
    min_eig = float(np.linalg.eigvalsh(M)[0])
    if min_eig < -tol * (1 + omega * omega):
        failures.append(f"normalization matrix has eigenvalue {min_eig:.3e}")
    b = np.array([a.get(k, 0.0) / harmonic_dim(n, k) for k in range(2 * d + 1)])
    cone = _dual_cone_min(n, d, b) if np.any(b) else 0.0
    if cone < -tol:
        failures.append(f"a/h leaves the dual cone (value {cone:.3e})")
    return PrimalReport(total, orth, slacks, min_eig, cone, failures)


def double_cap_coefficients(n: int, kmax: int) -> np.ndarray:
    """Schoenberg coefficients ``a(k) = h_k c_k^2`` of two antipodal caps of angular radius ``pi/4``.

    ``c_k`` is the normalized-measure average of ``P_k^n(e . x)`` over the
    caps, ``2 int_0^{pi/4} P_k^n(cos th) sin^{n-2} th dth / int_0^pi sin^{n-2}``
    for even ``k`` and ``0`` for odd ``k``, by Gauss-Legendre quadrature in ``th``.
    """
    xs, ws = np.polynomial.legendre.leggauss(kmax + 64)
    half = math.pi / 8
    th = half * (xs + 1)
    weights = half * ws * np.sin(th) ** (n - 2) / float(normalizing_integral(n + 1))
    c = 2 * (jacobi_table(n, kmax, np.cos(th)) @ weights)
    c[1::2] = 0.0
    h = np.array([harmonic_dim(n, k) for k in range(kmax + 1)], dtype=float)
    return h * c * c
