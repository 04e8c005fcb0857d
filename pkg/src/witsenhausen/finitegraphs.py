"""Finite-graph versions of the hierarchies: theta, Lasserre, k-point bound, Polya cones and gamma_r.

Everything here is small and exact enough to act as an oracle for the sphere
code: the same solver is used, but the answers are known or can be sandwiched.
Subsets of vertices are bitmasks and are ordered by (size, mask value).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from .ipm import SolverConfig, solve
from .sdp import DIAG, PSD, SdpProblem

ALPHA_MAX_VERTICES = 30
THETA_MAX_VERTICES = 64
LASSERRE_MAX_VERTICES = 14
LASSERRE_MAX_LEVEL = 3
KPOINT_MAX_VERTICES = 12
KPOINT_MAX_LEVEL = 4
KPCONE_MAX_ENTRIES = 10**7
GAMMA_MAX_VERTICES = 6
GAMMA_MAX_LEVEL = 3
POLYA_GRID = 64
POLYA_MAX_GRID_POINTS = 2_000_000


class SizeCapError(ValueError):
    pass


def _cap(value: int, limit: int, what: str):
    if value > limit:
        raise SizeCapError(f"{what} = {value} exceeds the cap {limit}")


# -- graphs -------------------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteGraph:
    """Simple undirected graph on vertices ``0..n-1``."""

    n: int
    edges: tuple = ()
    adjacency: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("vertex count must be nonnegative")
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError("loops are not allowed")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge ({a}, {b}) outside vertex range")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        adj = [0] * self.n
        for a, b in self.edges:
            adj[a] |= 1 << b
            adj[b] |= 1 << a
        object.__setattr__(self, "adjacency", tuple(adj))

    @classmethod
    def complete(cls, n: int) -> "FiniteGraph":
        return cls(n, tuple(itertools.combinations(range(n), 2)))

    @classmethod
    def empty(cls, n: int) -> "FiniteGraph":
        return cls(n, ())

    @classmethod
    def cycle(cls, n: int) -> "FiniteGraph":
        return cls(n, tuple((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def random(cls, n: int, p: float = 0.5, seed: int | None = None) -> "FiniteGraph":
        rng = np.random.default_rng(seed)
        return cls(n, tuple(e for e in itertools.combinations(range(n), 2) if rng.random() < p))

    @classmethod
    def parse(cls, text: str) -> "FiniteGraph":
        """Edge-list text: first non-comment line ``n``, then one ``a b`` pair per line."""
        lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines:
            raise ValueError("empty graph file")
        try:
            n = int(lines[0])
            edges = [tuple(int(x) for x in ln.split()) for ln in lines[1:]]
        except ValueError as exc:
            raise ValueError(f"malformed graph file: {exc}") from None
        if any(len(e) != 2 for e in edges):
            raise ValueError("each edge line needs exactly two vertices")
        return cls(n, tuple(edges))

    @classmethod
    def read(cls, path) -> "FiniteGraph":
        with open(path) as fh:
            return cls.parse(fh.read())

    def to_text(self) -> str:
        return "\n".join([str(self.n)] + [f"{a} {b}" for a, b in self.edges]) + "\n"

    def has_edge(self, a: int, b: int) -> bool:
        return bool(self.adjacency[a] >> b & 1)

    def is_independent(self, mask: int) -> bool:
        m = mask
        while m:
            low = m & -m
            v = low.bit_length() - 1
            if self.adjacency[v] & mask:
                return False
            m ^= low
        return True


def _popcount(x: int) -> int:
    return bin(x).count("1")


def subsets_upto(n: int, k: int) -> list[int]:
    """Bitmasks of all subsets of size at most ``k``, ordered by (size, mask)."""
    out = []
    for size in range(k + 1):
        masks = [sum(1 << v for v in c) for c in itertools.combinations(range(n), size)]
        out.extend(sorted(masks))
    return out


def independent_subsets(G: FiniteGraph, k: int) -> list[int]:
    return [S for S in subsets_upto(G.n, k) if G.is_independent(S)]


# -- independence number ---------------------------------------------------------------------------


def alpha_brute(G: FiniteGraph) -> int:
    """Exact independence number by branch and bound over bitsets."""
    _cap(G.n, ALPHA_MAX_VERTICES, "vertex count")
    adj = G.adjacency
    best = 0

    def branch(cand: int, size: int):
        nonlocal best
        if size + _popcount(cand) <= best:
            return
        if not cand:
            best = size
            return
        # branch on a vertex of maximum degree inside the candidate set
        v = max((u for u in range(G.n) if cand >> u & 1), key=lambda u: _popcount(adj[u] & cand))
        branch(cand & ~(1 << v) & ~adj[v], size + 1)
        if adj[v] & cand:
            branch(cand & ~(1 << v), size)

    branch((1 << G.n) - 1, 0)
    return best


def _value(prob: SdpProblem, block: int, i: int, j: int, coeff: float = 1.0):
    """Row term whose contribution is ``coeff * X[i, j]`` (off-diagonal terms count twice otherwise)."""
    return (prob.entry(block, i, j), coeff if i == j else 0.5 * coeff)


# -- theta ---------------------------------------------------------------------------------------


def theta_problem(G: FiniteGraph) -> SdpProblem:
    prob = SdpProblem("max", {"graph": G})
    b = prob.add_block("A", max(G.n, 1))
    prob.add_row([(prob.entry(b, x), 1.0) for x in range(G.n)], "=", 1.0, "trace")
    for x, y in G.edges:
        prob.add_row([(prob.entry(b, x, y), 1.0)], "=", 0.0, f"edge {x} {y}")
    # off-diagonal entries count twice, which is the sum over ordered pairs
    prob.set_objective([(prob.entry(b, x, y), 1.0) for x in range(G.n) for y in range(x, G.n)])
    return prob.finalize()


def lovasz_theta(G: FiniteGraph, cfg: SolverConfig = SolverConfig()) -> float:
    _cap(G.n, THETA_MAX_VERTICES, "vertex count")
    if G.n == 0:
        return 0.0
    return solve(theta_problem(G), cfg).primal_objective


# -- Lasserre ------------------------------------------------------------------------------------


def lasserre_problem(G: FiniteGraph, k: int) -> SdpProblem:
    """Moment matrix over independent subsets of size ``<= k``; one free variable per independent union."""
    rows_idx = independent_subsets(G, k)
    prob = SdpProblem("max", {"graph": G, "k": k, "index": rows_idx})
    b = prob.add_block("M", len(rows_idx))
    moments = {}

    def moment(U):
        if U not in moments:
            moments[U] = prob.add_free(f"y{U}")
        return moments[U]

    for i, S in enumerate(rows_idx):
        for j in range(i, len(rows_idx)):
            U = S | rows_idx[j]
            if G.is_independent(U):
                prob.add_row([_value(prob, b, i, j), (moment(U), -1.0)], "=", 0.0)
            else:
                prob.add_row([(prob.entry(b, i, j), 1.0)], "=", 0.0)
    prob.add_row([(moment(0), 1.0)], "=", 1.0, "normalization")
    prob.set_objective([(moment(1 << x), 1.0) for x in range(G.n)])
    return prob.finalize()


def lasserre(G: FiniteGraph, k: int, cfg: SolverConfig = SolverConfig()) -> float:
    _cap(G.n, LASSERRE_MAX_VERTICES, "vertex count")
    _cap(k, LASSERRE_MAX_LEVEL, "level")
    if k < 1:
        raise ValueError("level must be at least 1")
    return solve(lasserre_problem(G, k), cfg).primal_objective


# -- k-point bound ---------------------------------------------------------------------------------


def kpoint_problem(G: FiniteGraph, k: int) -> SdpProblem:
    """``nu`` on independent subsets of size ``<= k``; ``M_Q nu`` psd for independent ``|Q| <= k - 2``."""
    prob = SdpProblem("max", {"graph": G, "k": k})
    nu = {S: prob.add_free(f"nu{S}") for S in independent_subsets(G, k)}
    for Q in independent_subsets(G, k - 2):
        # rows of vertices in Q repeat the empty row, rows of vertices adjacent to Q vanish;
        # dropping both leaves an equivalent psd condition with a strictly feasible interior
        small = [0] + [1 << v for v in range(G.n) if not Q >> v & 1 and G.is_independent(Q | 1 << v)]
        b = prob.add_block(f"M{Q}", len(small))
        for i, S in enumerate(small):
            for j in range(i, len(small)):
                U = Q | S | small[j]
                terms = [_value(prob, b, i, j)]
                if U in nu:
                    terms.append((nu[U], -1.0))
                prob.add_row(terms, "=", 0.0)
    prob.add_row([(nu[0], 1.0)], "=", 1.0, "normalization")
    prob.set_objective([(nu[1 << x], 1.0) for x in range(G.n) if (1 << x) in nu])
    return prob.finalize()


def kpoint_delta(G: FiniteGraph, k: int, cfg: SolverConfig = SolverConfig()) -> float:
    _cap(G.n, KPOINT_MAX_VERTICES, "vertex count")
    _cap(k, KPOINT_MAX_LEVEL, "level")
    if k < 2:
        raise ValueError("the k-point bound needs k >= 2")
    return solve(kpoint_problem(G, k), cfg).primal_objective


def indicator_moments(G: FiniteGraph, I: int, k: int) -> dict:
    """The 0/1 moment vector of an independent set: ``nu(S) = 1`` iff ``S`` is a subset of ``I``."""
    if not G.is_independent(I):
        raise ValueError("not an independent set")
    return {S: float(S & ~I == 0) for S in independent_subsets(G, k)}


# -- symmetric tensors and Polya cones ----------------------------------------------------------


class SymTensor:
    """Symmetric ``order``-tensor on ``dim`` points stored densely."""

    def __init__(self, values, check: bool = True):
        values = np.asarray(values, dtype=float)
        if values.ndim < 1 or len(set(values.shape)) > 1:
            raise ValueError("expected a cubical array")
        if check and not np.allclose(values, rey(values), atol=1e-12, rtol=0):
            raise ValueError("tensor is not invariant under index permutations")
        self.values = values

    @property
    def order(self) -> int:
        return self.values.ndim

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_matrix(cls, A) -> "SymTensor":
        return cls(np.asarray(A, dtype=float))

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def form(self, w) -> float:
        """``<T, w^{(x) k}>``."""
        out = self.values
        w = np.asarray(w, dtype=float)
        for _ in range(self.order):
            out = out @ w
        return float(out)


def rey(F) -> np.ndarray:
    """Symmetrization: the average over all permutations of the axes."""
    F = np.asarray(F, dtype=float)
    perms = list(itertools.permutations(range(F.ndim)))
    return sum(np.transpose(F, p) for p in perms) / len(perms)


def _multiset_counts(dim: int, size: int):
    for combo in itertools.combinations_with_replacement(range(dim), size):
        yield np.bincount(combo, minlength=dim)


def polya_values(T: SymTensor, r: int) -> np.ndarray:
    """Entries of ``Rey(T (x) 1^{(x) r})`` at every multiset of size ``r + k`` (one value per multiset)."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    k, dim = T.order, T.dim
    _cap(dim ** (r + k), KPCONE_MAX_ENTRIES, "tensor entries")
    counts = np.array(list(_multiset_counts(dim, r + k)))
    if k == 2:
        # sum over ordered pairs of distinct positions: c^T A c - sum_v c_v A_vv
        A = T.values
        vals = np.einsum("mi,ij,mj->m", counts, A, counts) - counts @ np.diag(A)
        return vals / ((r + 2) * (r + 1))
    subs = [np.bincount(s, minlength=dim) for s in itertools.combinations_with_replacement(range(dim), k)]
    sub_vals = [T.values[tuple(np.repeat(np.arange(dim), s))] for s in subs]
    # number of ordered placements of a sub-multiset s inside positions with counts c
    out = np.zeros(len(counts))
    perm_s = [math.factorial(k) / np.prod([math.factorial(int(x)) for x in s]) for s in subs]
    for m, c in enumerate(counts):
        total = 0.0
        for s, val, ps in zip(subs, sub_vals, perm_s):
            if np.all(s <= c):
                ways = np.prod([math.comb(int(ci), int(si)) for ci, si in zip(c, s)])
                total += val * ways * math.factorial(k)
        out[m] = total
    return out / (math.perm(r + k, k))


def kpcone_member(A, r: int, tol: float = 0.0) -> bool:
    """``A`` lies in the Polya cone ``K_r`` when ``Rey(A (x) 1^{(x) r})`` is entrywise nonnegative."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T, atol=1e-12, rtol=0):
        raise ValueError("expected a symmetric matrix")
    return bool(polya_values(SymTensor(A, check=False), r).min() >= -tol)


def polya_member(T: SymTensor, r: int, tol: float = 0.0) -> bool:
    return bool(polya_values(T, r).min() >= -tol)


def _simplex_grid(dim: int, N: int):
    for bars in itertools.combinations(range(N + dim - 1), dim - 1):
        prev, out = -1, []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(N + dim - 2 - prev)
        yield out


def _face_minimum(A: np.ndarray) -> float:
    """Minimum of ``w^T A w`` over the simplex via the stationary points of every face.

    On face ``S`` a relative-interior minimizer solves ``A_S x = mu 1, sum x = 1``
    with ``x >= 0`` and value ``mu``.  Every solution of that system has the same
    ``mu``, so a singular system only needs a feasibility check for ``x >= 0``.
    """
    dim = A.shape[0]
    best = math.inf
    for size in range(1, dim + 1):
        for S in itertools.combinations(range(dim), size):
            K = np.zeros((size + 1, size + 1))
            K[:size, :size] = A[np.ix_(S, S)]
            K[:size, size] = -1.0
            K[size, :size] = 1.0
            rhs = np.zeros(size + 1)
            rhs[size] = 1.0
            sol, _, rank, _ = np.linalg.lstsq(K, rhs, rcond=None)
            if rank == size + 1:
                x = sol[:size]
                if not np.all(x >= -1e-14):
                    continue
            else:
                lp = linprog(np.zeros(size + 1), A_eq=K, b_eq=rhs, bounds=[(0, None)] * size + [(None, None)])
                if not lp.success:
                    continue
                x = lp.x[:size]
            w = np.clip(x, 0, None)
            w /= w.sum()
            best = min(best, float(w @ K[:size, :size] @ w))
    return best


def _projected_gradient(T: SymTensor, w: np.ndarray, iters: int = 300) -> float:
    k = T.order
    for it in range(iters):
        g = T.values
        for _ in range(k - 1):
            g = g @ w
        g = k * g
        step = 1.0 / (k * (k - 1) * T.max_abs() * T.dim + 1e-300)
        w = _project_simplex(w - step * g)
    return T.form(w)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    ind = np.arange(1, len(v) + 1)
    rho = ind[u - css / ind > 0][-1]
    return np.maximum(v - css[rho - 1] / rho, 0)


def simplex_minimum(T: SymTensor, seed: int = 0, starts: int = 16) -> tuple[float, float]:
    """``(lambda_hat, lambda_lower)`` for ``min_{w in simplex} <T, w^k>``.

    ``lambda_hat`` is the best value found by the grid, multistart projected
    gradient and, for matrices, the face enumeration.  ``lambda_lower`` is a
    proven lower bound: the grid minimum minus the Lipschitz gap
    ``k M dim / N`` (exact face enumeration for matrices).
    """
    dim, k, M = T.dim, T.order, T.max_abs()
    N = POLYA_GRID
    while math.comb(N + dim - 1, dim - 1) > POLYA_MAX_GRID_POINTS and N > 4:
        N //= 2
    grid = np.array(list(_simplex_grid(dim, N)), dtype=float) / N
    vals = np.array([T.form(w) for w in grid]) if k != 2 else np.einsum("mi,ij,mj->m", grid, T.values, grid)
    grid_min = float(vals.min())
    rng = np.random.default_rng(seed)
    hat = grid_min
    for w0 in [grid[int(vals.argmin())]] + [rng.dirichlet(np.ones(dim)) for _ in range(starts)]:
        hat = min(hat, _projected_gradient(T, w0))
    lower = grid_min - k * M * dim / N
    if k == 2:
        exact = _face_minimum(T.values)
        hat = min(hat, exact)
        lower = max(lower, exact - 1e-12 * max(M, 1.0))
    return hat, lower


def polya_exponent(T: SymTensor) -> int:
    """Smallest ``r >= 0`` strictly above ``k(k-1)M/(2 lambda) - k`` (Polya-type exponent)."""
    k, M = T.order, T.max_abs()
    lam, lower = simplex_minimum(T)
    if not lower > 0:
        raise ValueError("the minimum over the simplex is not provably positive")
    threshold = Fraction(k * (k - 1)) * Fraction(M) / (2 * Fraction(lam)) - k
    r = math.floor(threshold) + 1
    return max(r, 0)


# -- gamma_r ------------------------------------------------------------------------------------


def tstar_coefficients(n: int, r: int) -> tuple[list, np.ndarray]:
    """Multisets of size ``r + 2`` and the matrix ``C[(x, y), m]`` with ``(T_r^* F)(x, y) = sum_m C F_m``.

    ``F`` is symmetric so ``Rey F = F``; ``C`` counts the tuples ``v in V^r``
    completing ``(x, y)`` to the multiset ``m``.
    """
    multisets = list(itertools.combinations_with_replacement(range(n), r + 2))
    pairs = [(x, y) for x in range(n) for y in range(x, n)]
    C = np.zeros((len(pairs), len(multisets)))
    for j, m in enumerate(multisets):
        c = np.bincount(m, minlength=n)
        for i, (x, y) in enumerate(pairs):
            rest = c.copy()
            rest[x] -= 1
            rest[y] -= 1
            if rest.min() < 0:
                continue
            C[i, j] = math.factorial(r) / np.prod([math.factorial(int(v)) for v in rest])
    return multisets, C


def gamma_problem(G: FiniteGraph, r: int) -> SdpProblem:
    prob = SdpProblem("max", {"graph": G, "r": r})
    b = prob.add_block("A", G.n)
    multisets, C = tstar_coefficients(G.n, r)
    fb = prob.add_block("F", len(multisets), DIAG)
    pairs = [(x, y) for x in range(G.n) for y in range(x, G.n)]
    for i, (x, y) in enumerate(pairs):
        terms = [_value(prob, b, x, y)]
        terms += [(prob.entry(fb, j), -C[i, j]) for j in np.flatnonzero(C[i])]
        prob.add_row(terms, "=", 0.0)
    prob.add_row([(prob.entry(b, x), 1.0) for x in range(G.n)], "=", 1.0, "trace")
    for x, y in G.edges:
        prob.add_row([(prob.entry(b, x, y), 1.0)], "=", 0.0, f"edge {x} {y}")
    prob.set_objective([(prob.entry(b, x, y), 1.0) for x in range(G.n) for y in range(x, G.n)])
    return prob.finalize()


def gamma_r(G: FiniteGraph, r: int, cfg: SolverConfig = SolverConfig()) -> float:
    _cap(G.n, GAMMA_MAX_VERTICES, "vertex count")
    _cap(r, GAMMA_MAX_LEVEL, "level")
    if r < 1:
        raise ValueError("r must be at least 1")
    return solve(gamma_problem(G, r), cfg).primal_objective
