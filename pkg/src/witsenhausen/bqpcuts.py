"""Boolean-quadratic-polytope inequalities on the sphere.

An inequality is a finite support set ``U`` of unit vectors, a symmetric
matrix ``L`` indexed by ``U`` and a bound ``beta`` such that
``x^T L x <= beta`` for every ``x`` in ``{0,1}^U``.  Averaging over rotations
turns it into the linear inequality ``sum_k a(k) r(k) <= beta`` on the
Schoenberg coefficients, with ``r(k) = sum_{x,y} L(x,y) P_k^n(x . y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
import numpy as np

from .special import DEFAULT_PRECISION, jacobi_sequence, jacobi_table, jacobi_tail_bound

MAX_VALIDATE_POINTS = 30
UNIT_TOL = mpmath.mpf("1e-30")
SEPARATION_FLOOR = 0.999
FILE_VERSION = 1
FILE_DIGITS = 45


class CutError(ValueError):
    """Malformed or invalid inequality."""


@dataclass(frozen=True)
class BqpInequality:
    n: int
    points: tuple  # tuple of tuples of mpf, unit vectors at ``precision`` bits
    L: np.ndarray
    beta: float
    label: str = ""
    precision: int = DEFAULT_PRECISION
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        L = np.array(self.L, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] != len(self.points):
            raise CutError("L must be square and indexed by the support points")
        if not np.array_equal(L, L.T):
            raise CutError("L must be symmetric")
        object.__setattr__(self, "L", L)
        with mpmath.workprec(self.precision):
            pts = []
            for p in self.points:
                if len(p) != self.n:
                    raise CutError(f"point of dimension {len(p)} in an inequality for n={self.n}")
                v = tuple(mpmath.mpf(c) for c in p)
                if abs(mpmath.fsum(c * c for c in v) - 1) > UNIT_TOL:
                    raise CutError("support points must be unit vectors to 1e-30")
                pts.append(v)
        object.__setattr__(self, "points", tuple(pts))

    @classmethod
    def from_vectors(cls, n: int, vectors, L, beta, label: str = "", precision: int = DEFAULT_PRECISION):
        """Normalize ``vectors`` at ``precision`` bits and build the inequality."""
        pts = []
        with mpmath.workprec(precision):
            for v in vectors:
                v = [mpmath.mpf(float(c)) if not isinstance(c, (str, mpmath.mpf)) else mpmath.mpf(c) for c in v]
                norm = mpmath.sqrt(mpmath.fsum(c * c for c in v))
                if norm == 0:
                    raise CutError("zero vector cannot be normalized")
                pts.append(tuple(c / norm for c in v))
        return cls(n, tuple(pts), np.asarray(L, dtype=float), float(beta), label, precision)

    @property
    def size(self) -> int:
        return len(self.points)

    def gram_mp(self, precision: int | None = None):
        prec = precision or self.precision
        key = ("gram", prec)
        if key not in self._cache:
            with mpmath.workprec(prec):
                m = self.size
                G = [[mpmath.fsum(a * b for a, b in zip(self.points[i], self.points[j])) for j in range(m)] for i in range(m)]
            self._cache[key] = G
        return self._cache[key]

    def gram(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.gram_mp()], dtype=float)

    def off_diagonal_pairs(self):
        """Distinct unordered pairs ``(i, j, L_ij, x_i . x_j)`` with ``L_ij != 0``."""
        G = self.gram_mp()
        return [(i, j, self.L[i, j], G[i][j]) for i in range(self.size) for j in range(i + 1, self.size) if self.L[i, j]]

    @property
    def separation(self) -> float:
        if self.size < 2:
            return 1.0
        G = self.gram_mp()
        return float(min(1 - abs(G[i][j]) for i in range(self.size) for j in range(i + 1, self.size)))


def _exact_value(L: np.ndarray, x: Sequence[int]) -> Fraction:
    idx = [i for i, b in enumerate(x) if b]
    return sum((Fraction(float(L[i, j])) for i in idx for j in idx), Fraction(0))


def validate(ineq: BqpInequality) -> tuple[bool, tuple, Fraction]:
    """Enumerate ``{0,1}^U``; return ``(valid, maximizer, max value)`` with the value exact."""
    m = ineq.size
    if m > MAX_VALIDATE_POINTS:
        raise CutError(f"validation enumerates 2^|U| vectors and is limited to |U| <= {MAX_VALIDATE_POINTS}")
    if m == 0:
        return Fraction(0) <= Fraction(ineq.beta), (), Fraction(0)
    L = ineq.L
    low = min(m, 16)
    lo_bits = ((np.arange(1 << low)[:, None] >> np.arange(low)) & 1).astype(float)
    tol = 1e-9 * (1.0 + float(np.abs(L).sum()))
    pool = []
    for hi in range(1 << (m - low)):
        hi_bits = ((hi >> np.arange(m - low)) & 1).astype(float)
        X = np.hstack([lo_bits, np.broadcast_to(hi_bits, (len(lo_bits), m - low))])
        vals = np.einsum("ij,jk,ik->i", X, L, X)
        for r in np.argsort(-vals, kind="stable")[:8]:
            pool.append((float(vals[r]), tuple(int(b) for b in X[r])))
        best = max(v for v, _ in pool)
        pool = sorted((c for c in pool if c[0] >= best - tol), key=lambda c: -c[0])[:256]
    # binary64 preselects the candidates, exact rationals decide
    value, x = max(((_exact_value(L, c), c) for _, c in pool), key=lambda t: t[0])
    return value <= Fraction(ineq.beta), x, value


def r_sequence(ineq: BqpInequality, k: int, precision: int | None = None):
    """``r(k) = sum_{x,y in U} L(x,y) P_k^n(x . y)`` at ``precision`` bits."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    prec = precision or ineq.precision
    G = ineq.gram_mp(prec)
    with mpmath.workprec(prec):
        total = mpmath.mpf(0)
        diag = mpmath.fsum(mpmath.mpf(float(ineq.L[i, i])) for i in range(ineq.size))
        for i, j, lij, _ in ineq.off_diagonal_pairs():
            total += 2 * mpmath.mpf(float(lij)) * jacobi_sequence(ineq.n, k, G[i][j], prec)[k]
        return total + diag


def r_values(ineq: BqpInequality, kmax: int) -> np.ndarray:
    """Binary64 table ``[r(0), ..., r(kmax)]`` (stable recurrence)."""
    out = np.full(kmax + 1, float(np.trace(ineq.L)))
    pairs = ineq.off_diagonal_pairs()
    if pairs:
        t = np.array([float(p[3]) for p in pairs])
        w = np.array([2 * p[2] for p in pairs])
        out += jacobi_table(ineq.n, kmax, t) @ w
    return out


def r_values_mp(ineq: BqpInequality, kmax: int, precision: int) -> list:
    """Multiprecision table ``[r(0), ..., r(kmax)]``."""
    G = ineq.gram_mp(precision)
    with mpmath.workprec(precision):
        out = [mpmath.mpf(float(np.trace(ineq.L)))] * (kmax + 1)
        for i, j, lij, _ in ineq.off_diagonal_pairs():
            seq = jacobi_sequence(ineq.n, kmax, G[i][j], precision)
            c = 2 * mpmath.mpf(float(lij))
            out = [o + c * p for o, p in zip(out, seq)]
    return out


def r_infinity(ineq: BqpInequality) -> float:
    return float(np.trace(ineq.L))


def r_tail_error(ineq: BqpInequality, k0: int, precision: int | None = None):
    """Rigorous bound on ``|r(k) - r(inf)|`` valid for all ``k >= k0``."""
    if k0 < 0:
        raise ValueError("k0 must be nonnegative")
    pairs = ineq.off_diagonal_pairs()
    prec = precision or ineq.precision
    if not pairs:
        return mpmath.mpf(0)
    if ineq.separation <= 0:
        raise CutError("support points must be separated from each other and from antipodes")
    with mpmath.workprec(prec):
        total = mpmath.mpf(0)
        for _, _, lij, t in pairs:
            # both (x, y) and (y, x) appear in the double sum
            total += 2 * abs(mpmath.mpf(float(lij))) * jacobi_tail_bound(ineq.n, t, k0, prec)
        return total * (1 + mpmath.mpf(2) ** (-prec + 8))


# -- facets ------------------------------------------------------------------------------------


def clique_facet(q: int, s: int) -> tuple[np.ndarray, float]:
    """``s sum_i x_i - sum_{i<j} x_i x_j <= s(s+1)/2`` as ``(L, beta)`` (``s = 1, q = 3`` is the triangle facet)."""
    if q < 2 or not 1 <= s <= q - 1:
        raise ValueError("need q >= 2 and 1 <= s <= q - 1")
    L = -0.5 * (np.ones((q, q)) - np.eye(q)) + s * np.eye(q)
    return L, s * (s + 1) / 2


def facet_family(max_points: int = 10) -> list[tuple[np.ndarray, float, str]]:
    out = []
    for q in range(3, max_points + 1):
        for s in range(1, q - 1):
            L, beta = clique_facet(q, s)
            out.append((L, beta, f"clique(q={q},s={s})"))
    return out


# -- kernel evaluation ---------------------------------------------------------------------------


class SchoenbergKernel:
    """``A(t) = sum_k a(k) P_k^n(t)`` for a finitely supported ``a`` and its derivative."""

    def __init__(self, n: int, a: dict):
        self.n = n
        items = sorted((int(k), float(v)) for k, v in dict(a).items() if v)
        if any(v < 0 for _, v in items):
            raise ValueError("Schoenberg coefficients must be nonnegative")
        self.ks = np.array([k for k, _ in items], dtype=int)
        self.a = np.array([v for _, v in items])
        self.kmax = int(self.ks.max()) if len(self.ks) else 0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = np.clip(t.ravel(), -1, 1)
        if not len(self.ks):
            return np.zeros_like(t)
        P = jacobi_table(self.n, self.kmax, flat)
        return (self.a @ P[self.ks]).reshape(t.shape)

    def derivative(self, t):
        # d/dt P_k^n = k (k + n - 2) / (n - 1) * P_{k-1}^{n+2}
        t = np.asarray(t, dtype=float)
        flat = np.clip(t.ravel(), -1, 1)
        if not len(self.ks) or self.kmax == 0:
            return np.zeros_like(t)
        P = jacobi_table(self.n + 2, self.kmax, flat)
        ks = self.ks[self.ks > 0]
        a = self.a[self.ks > 0]
        c = a * ks * (ks + self.n - 2) / (self.n - 1)
        return (c @ P[ks - 1]).reshape(t.shape)


def violation(kernel: SchoenbergKernel, vectors: np.ndarray, L: np.ndarray, beta: float) -> float:
    V = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    G = np.clip(V @ V.T, -1, 1)
    return float(np.sum(L * kernel(G)) - beta)


def _optimize_points(kernel, L, beta, n, rng, iters=200):
    from scipy.optimize import minimize

    q = len(L)
    x0 = rng.standard_normal((q, n))

    def obj(flat):
        X = flat.reshape(q, n)
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        V = X / norms
        G = np.clip(V @ V.T, -1, 1)
        val = np.sum(L * kernel(G))
        dG = L * kernel.derivative(G)
        gV = 2 * dG @ V
        # project the gradient through the normalization
        gX = (gV - np.sum(gV * V, axis=1, keepdims=True) * V) / norms
        return -val, -gX.ravel()

    res = minimize(obj, x0.ravel(), jac=True, method="L-BFGS-B", options=dict(maxiter=iters))
    X = res.x.reshape(q, n)
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def generate_cuts(
    n: int,
    primal_a,
    budget: int = 5,
    seed: int | None = 0,
    restarts: int = 8,
    max_points: int = 6,
    min_violation: float = 1e-6,
) -> list[BqpInequality]:
    """Search for clique-facet inequalities violated by the kernel with Schoenberg coefficients ``primal_a``.

    ``primal_a`` is a mapping ``k -> a(k)`` (or a sequence indexed by ``k``).
    For every facet in the family the support points are optimized by
    L-BFGS over products of spheres from ``restarts`` random starts; sets with
    two points at ``|x . y| > 0.999`` are discarded, every survivor is
    validated by enumeration and re-checked for violation before it is kept.
    """
    if not isinstance(primal_a, dict):
        primal_a = {k: v for k, v in enumerate(primal_a)}
    if any(v < -1e-12 for v in primal_a.values()):
        raise ValueError("primal_a must be nonnegative")
    kernel = SchoenbergKernel(n, {k: max(v, 0.0) for k, v in primal_a.items()})
    rng = np.random.default_rng(seed)
    found = []
    for L, beta, label in facet_family(max_points):
        for _ in range(restarts):
            V = _optimize_points(kernel, L, beta, n, rng)
            G = V @ V.T
            off = np.abs(G[~np.eye(len(G), dtype=bool)])
            if off.size and off.max() > SEPARATION_FLOOR:
                continue
            viol = violation(kernel, V, L, beta)
            if viol > min_violation:
                found.append((viol, label, V, L, beta))
    found.sort(key=lambda t: -t[0])
    out = []
    for viol, label, V, L, beta in found:
        if len(out) >= budget:
            break
        ineq = BqpInequality.from_vectors(n, V, L, beta, label=f"{label} violation={viol:.6e}")
        ok, _, _ = validate(ineq)
        if not ok:
            continue
        rk = r_values_mp(ineq, max(primal_a), 128)
        recheck = sum(v * float(rk[k]) for k, v in primal_a.items() if v) - beta
        if recheck > 1e-9:
            out.append(ineq)
    return out


# -- file format -------------------------------------------------------------------------------

HEADER = "# witsenhausen bqp inequalities"


def _num(x) -> str:
    return mpmath.nstr(mpmath.mpf(x), FILE_DIGITS, strip_zeros=False, min_fixed=-1, max_fixed=1)


def write_cuts(path, cuts: Iterable[BqpInequality]) -> None:
    cuts = list(cuts)
    lines = [HEADER, f"version {FILE_VERSION}", f"count {len(cuts)}"]
    for c in cuts:
        lines.append("begin")
        lines.append(f"label {c.label}")
        lines.append(f"dimension {c.n}")
        lines.append(f"points {c.size}")
        with mpmath.workprec(c.precision):
            for p in c.points:
                lines.append(" ".join(_num(x) for x in p))
        lines.append("matrix")
        for row in c.L:
            lines.append(" ".join(repr(float(v)) for v in row))
        lines.append(f"beta {float(c.beta)!r}")
        lines.append("end")
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def read_cuts(path, precision: int = DEFAULT_PRECISION) -> list[BqpInequality]:
    text = path.read() if hasattr(path, "read") else open(path).read()
    lines = [ln.strip() for ln in text.splitlines()]
    pos = 0

    def fail(msg):
        raise CutError(f"line {pos}: {msg}")

    def next_line():
        nonlocal pos
        while pos < len(lines) and (not lines[pos] or lines[pos].startswith("#")):
            pos += 1
        if pos >= len(lines):
            fail("unexpected end of file")
        pos += 1
        return lines[pos - 1]

    def keyed(key, kind=str):
        head, _, rest = next_line().partition(" ")
        if head != key:
            fail(f"expected '{key}'")
        try:
            return kind(rest.strip())
        except ValueError:
            fail(f"bad value for '{key}': {rest.strip()!r}")

    if not any(ln and not ln.startswith("#") for ln in lines):
        return []
    version = keyed("version", int)
    if version != FILE_VERSION:
        fail(f"unsupported version {version}")
    count = keyed("count", int)
    out = []
    for _ in range(count):
        if next_line() != "begin":
            fail("expected 'begin'")
        label = keyed("label")
        n = keyed("dimension", int)
        m = keyed("points", int)
        with mpmath.workprec(precision):
            pts = []
            for _ in range(m):
                toks = next_line().split()
                if len(toks) != n:
                    fail(f"expected {n} coordinates")
                try:
                    pts.append(tuple(mpmath.mpf(t) for t in toks))
                except ValueError:
                    fail("bad coordinate")
        if next_line() != "matrix":
            fail("expected 'matrix'")
        L = []
        for _ in range(m):
            try:
                row = [float(t) for t in next_line().split()]
            except ValueError:
                fail("bad matrix entry")
            if len(row) != m:
                fail(f"expected {m} matrix entries")
            L.append(row)
        beta = keyed("beta", float)
        if next_line() != "end":
            fail("expected 'end'")
        try:
            out.append(BqpInequality(n, tuple(pts), np.array(L).reshape(m, m), beta, label, precision))
        except CutError as exc:
            fail(str(exc))
    return out
