"""Exact trivariate polynomial algebra in ``(u, v, t)`` for the slice-positive SOS certificate.

Monomials are exponent triples ``(a, b, c)`` for ``u^a v^b t^c`` and are ordered
graded-lexicographically with ``u > v > t``.  Coefficients are kept as
``fractions.Fraction`` while building the certificate blocks; floating inputs
(solver output) are converted exactly, so residuals carry no expansion
round-off.
"""

from __future__ import annotations

import functools
import itertools
import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .special import harmonic_dim, jacobi_poly

Monomial = tuple[int, int, int]

PERMUTATIONS = tuple(itertools.permutations(range(3)))


def _exact(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, np.integer)):
        return Fraction(int(c))
    return Fraction(float(c))


class TriPoly:
    """Immutable polynomial in ``u, v, t`` with exact rational coefficients."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, object] | None = None):
        clean = {}
        for mono, c in (terms or {}).items():
            c = _exact(c)
            if c:
                mono = tuple(int(e) for e in mono)
                if len(mono) != 3 or min(mono) < 0:
                    raise ValueError(f"bad exponent triple {mono!r}")
                clean[mono] = clean.get(mono, 0) + c
        self._terms = {m: c for m, c in clean.items() if c}
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict) -> "TriPoly":
        obj = cls.__new__(cls)
        obj._terms = {m: c for m, c in terms.items() if c}
        obj._hash = None
        return obj

    @classmethod
    def constant(cls, c) -> "TriPoly":
        return cls({(0, 0, 0): c})

    @classmethod
    def monomial(cls, mono: Monomial, c=1) -> "TriPoly":
        return cls({mono: c})

    @property
    def terms(self) -> Mapping[Monomial, Fraction]:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        return max((sum(m) for m in self._terms), default=-1)

    def coeff(self, mono: Monomial) -> Fraction:
        return self._terms.get(tuple(mono), Fraction(0))

    def is_zero(self) -> bool:
        return not self._terms

    def __iter__(self):
        return iter(self._terms.items())

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = TriPoly.constant(other)
        return isinstance(other, TriPoly) and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __add__(self, other):
        other = _lift(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0) + c
        return TriPoly._raw(out)

    __radd__ = __add__

    def __neg__(self):
        return TriPoly._raw({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, TriPoly):
            c = _exact(other)
            return TriPoly._raw({m: c * v for m, v in self._terms.items()})
        out: dict = {}
        for (a1, b1, c1), x in self._terms.items():
            for (a2, b2, c2), y in other._terms.items():
                key = (a1 + a2, b1 + b2, c1 + c2)
                out[key] = out.get(key, 0) + x * y
        return TriPoly._raw(out)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        if e < 0:
            raise ValueError("negative powers are not polynomials")
        out = TriPoly.constant(1)
        base = self
        while e:
            if e & 1:
                out = out * base
            base = base * base
            e >>= 1
        return out

    def permute(self, perm: Sequence[int]) -> "TriPoly":
        """Substitute variables: the result at ``w`` equals ``self`` at ``(w[perm[0]], w[perm[1]], w[perm[2]])``."""
        out = {}
        for mono, c in self._terms.items():
            new = [0, 0, 0]
            for i, e in enumerate(mono):
                new[perm[i]] += e
            out[tuple(new)] = c
        return TriPoly._raw(out)

    def symmetrize(self) -> "TriPoly":
        """Average over the six permutations of ``(u, v, t)``."""
        out: dict = {}
        for perm in PERMUTATIONS:
            for m, c in self.permute(perm)._terms.items():
                out[m] = out.get(m, 0) + c
        return TriPoly._raw({m: c / 6 for m, c in out.items()})

    def __call__(self, u, v, t):
        if not self._terms:
            return 0 * u
        total = 0
        for (a, b, c), coef in self._terms.items():
            total = total + float(coef) * u**a * v**b * t**c
        return total

    def evaluate_exact(self, u, v, t) -> Fraction:
        u, v, t = _exact(u), _exact(v), _exact(t)
        return sum((c * u**a * v**b * t**e for (a, b, e), c in self._terms.items()), Fraction(0))

    def max_abs_coeff(self) -> Fraction:
        return max((abs(c) for c in self._terms.values()), default=Fraction(0))

    def __repr__(self):
        if not self._terms:
            return "TriPoly(0)"
        parts = []
        for m in sorted(self._terms, key=grlex_key):
            c = self._terms[m]
            name = "*".join(f"{x}^{e}" if e > 1 else x for x, e in zip("uvt", m) if e)
            parts.append(f"{c}" + (f"*{name}" if name else ""))
        return "TriPoly(" + " + ".join(parts) + ")"


def _lift(x) -> TriPoly:
    return x if isinstance(x, TriPoly) else TriPoly.constant(x)


U = TriPoly.monomial((1, 0, 0))
V = TriPoly.monomial((0, 1, 0))
T = TriPoly.monomial((0, 0, 1))


def grlex_key(mono: Monomial):
    return (sum(mono), tuple(-e for e in mono))


@functools.lru_cache(maxsize=None)
def monomials(max_degree: int) -> tuple[Monomial, ...]:
    """All exponent triples of total degree ``<= max_degree`` in graded lex order."""
    if max_degree < 0:
        return ()
    out = [
        (a, b, c)
        for a in range(max_degree + 1)
        for b in range(max_degree + 1 - a)
        for c in range(max_degree + 1 - a - b)
    ]
    return tuple(sorted(out, key=grlex_key))


def gram_basis(r: int) -> tuple[Monomial, ...]:
    """Index set of ``V_r``: monomials of degree ``<= floor(r/2)``."""
    return monomials(r // 2) if r >= 0 else ()


class VGram:
    """Monomial Gram matrix ``V_r`` with entries ``m_1 m_2``."""

    def __init__(self, r: int):
        self.r = r
        self.basis = gram_basis(r)

    @property
    def size(self) -> int:
        return len(self.basis)

    def entry(self, i: int, j: int) -> TriPoly:
        a, b = self.basis[i], self.basis[j]
        return TriPoly.monomial((a[0] + b[0], a[1] + b[1], a[2] + b[2]))

    def product_exponent(self, i: int, j: int) -> Monomial:
        a, b = self.basis[i], self.basis[j]
        return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def v_gram(r: int) -> VGram:
    return VGram(r)


@functools.lru_cache(maxsize=None)
def q_poly(n: int, k: int) -> TriPoly:
    """Polynomial form of ``Q_k^n(u,v,t) = ((1-u^2)(1-v^2))^{k/2} P_k^n((t-uv)/sqrt((1-u^2)(1-v^2)))``.

    ``P_k^n`` has the parity of ``k``, so only the terms
    ``c_{k-2j} ((1-u^2)(1-v^2))^j (t-uv)^{k-2j}`` survive.
    """
    if n < 2:
        raise ValueError("q_poly needs n >= 2")
    if k < 0:
        raise ValueError("degree must be nonnegative")
    coeffs = jacobi_poly(n, k)
    base = (1 - U * U) * (1 - V * V)
    lin = T - U * V
    out = TriPoly()
    for i, c in enumerate(coeffs):
        if not c:
            continue
        if (k - i) % 2:
            raise ArithmeticError(f"P_{k}^{n} has a term of the wrong parity; radicals do not cancel")
        out = out + c * base ** ((k - i) // 2) * lin**i
    return out


class YMatrix:
    """Square matrix of ``TriPoly`` entries (Bachoc-Vallentin ``Y`` or its symmetrization)."""

    def __init__(self, n: int, k: int, d: int, entries):
        self.n, self.k, self.d = n, k, d
        self.entries = tuple(tuple(row) for row in entries)

    @property
    def size(self) -> int:
        return len(self.entries)

    def entry(self, i: int, j: int) -> TriPoly:
        return self.entries[i][j]

    def __iter__(self):
        return iter(self.entries)


def _check_kd(k: int, d: int):
    if k < 0 or d < 0 or k > d:
        raise ValueError(f"need 0 <= k <= d, got k={k}, d={d}")


@functools.lru_cache(maxsize=None)
def y_matrix(n: int, k: int, d: int) -> YMatrix:
    """``(Y_{k,d}^n)_{ij} = u^i v^j Q_k^{n-1}(u, v, t)`` for ``0 <= i, j <= d - k``."""
    _check_kd(k, d)
    q = q_poly(n - 1, k)
    m = d - k + 1
    entries = [[TriPoly.monomial((i, j, 0)) * q for j in range(m)] for i in range(m)]
    return YMatrix(n, k, d, entries)


@functools.lru_cache(maxsize=None)
def y_bar(n: int, k: int, d: int) -> YMatrix:
    """Entrywise average of ``Y_{k,d}^n`` over all permutations of ``(u, v, t)``."""
    y = y_matrix(n, k, d)
    m = y.size
    entries = [[None] * m for _ in range(m)]
    for i in range(m):
        for j in range(i, m):
            entries[i][j] = entries[j][i] = y.entry(i, j).symmetrize()
    return YMatrix(n, k, d, entries)


def _g(w: TriPoly) -> TriPoly:
    return 1 - w * w


@functools.lru_cache(maxsize=None)
def domain_polys() -> tuple[TriPoly, TriPoly, TriPoly, TriPoly]:
    """The four symmetric polynomials whose nonnegativity cuts out the Gram-triple domain."""
    gu, gv, gt = _g(U), _g(V), _g(T)
    g1 = gu + gv + gt
    g2 = gu * gv + gu * gt + gv * gt
    g3 = gu * gv * gt
    g4 = 1 + 2 * U * V * T - U * U - V * V - T * T
    return g1, g2, g3, g4


def q_block_degrees(d: int) -> dict[int, int]:
    """Gram degree ``r`` of ``V_r`` multiplying each ``Q_i``; blocks with ``r < 0`` are dropped."""
    full = {0: 2 * d, 1: 2 * d - 2, 2: 2 * d - 4, 3: 2 * d - 6, 4: 2 * d - 3}
    return {i: r for i, r in full.items() if r >= 0}


@functools.lru_cache(maxsize=None)
def univariate_terms(n: int, d: int) -> tuple[TriPoly, ...]:
    """``(1/3)(P_k^n(u) + P_k^n(v) + P_k^n(t))`` for ``k = 0..2d``."""
    out = []
    for k in range(2 * d + 1):
        coeffs = jacobi_poly(n, k)
        terms = {}
        for i, c in enumerate(coeffs):
            if c:
                for axis in range(3):
                    mono = [0, 0, 0]
                    mono[axis] = i
                    terms[tuple(mono)] = terms.get(tuple(mono), 0) + c / 3
        out.append(TriPoly(terms))
    return tuple(out)


def univariate_sum_term(n: int, d: int, f: Sequence) -> TriPoly:
    """``sum_{k <= 2d} f(k) (1/3)(P_k^n(u) + P_k^n(v) + P_k^n(t))``."""
    if len(f) != 2 * d + 1:
        raise ValueError(f"f must have length 2d+1 = {2 * d + 1}")
    out: dict = {}
    for fk, poly in zip(f, univariate_terms(n, d)):
        fk = _exact(fk)
        if fk:
            for m, c in poly:
                out[m] = out.get(m, 0) + fk * c
    return TriPoly._raw(out)


def _accumulate_inner(out: dict, matrix, poly_entry, sign: int):
    """``out += sign * <matrix, P>`` where ``P[i][j]`` is given by ``poly_entry(i, j)``."""
    mat = np.asarray(matrix)
    m = mat.shape[0]
    for i in range(m):
        for j in range(m):
            x = mat[i, j]
            if not x:
                continue
            x = _exact(x) * sign
            for mono, c in poly_entry(i, j):
                out[mono] = out.get(mono, 0) + x * c


def _check_square(mat, size: int, label: str):
    shape = np.shape(mat)
    if shape != (size, size):
        raise ValueError(f"{label} must be {size}x{size}, got shape {shape}")


def sos_residual(n: int, d: int, f: Sequence, F: Sequence, Q: Mapping[int, object] | Sequence) -> TriPoly:
    """Left-hand side of the slice-positive SOS identity for ``k -> h_k^n f(k)``.

    Returns ``sum_k f(k)(h_k/3)(P_k(u)+P_k(v)+P_k(t)) - sum_k <F_k, Ybar_k>
    - <Q_0, V_2d> - sum_i <Q_i, g_i V_{r_i}>``, which vanishes identically for
    an exact certificate.  ``Q`` is a mapping (or list indexed by ``i``) from
    block index to matrix; blocks absent for small ``d`` may be omitted or
    ``None``.
    """
    if len(f) != 2 * d + 1:
        raise ValueError(f"f must have length 2d+1 = {2 * d + 1}")
    if len(F) != d + 1:
        raise ValueError(f"expected {d + 1} F blocks, got {len(F)}")
    qmap = dict(Q) if isinstance(Q, Mapping) else dict(enumerate(Q))
    degrees = q_block_degrees(d)
    for i, mat in qmap.items():
        if mat is not None and i not in degrees:
            raise ValueError(f"Q_{i} is not part of the degree-{d} certificate")
    weighted = [_exact(fk) * harmonic_dim(n, k) for k, fk in enumerate(f)]
    out = dict(univariate_sum_term(n, d, weighted)._terms)
    for k, Fk in enumerate(F):
        yb = y_bar(n, k, d)
        _check_square(Fk, yb.size, f"F_{k}")
        _accumulate_inner(out, Fk, lambda i, j: yb.entry(i, j), -1)
    gs = (None,) + domain_polys()
    for i, r in degrees.items():
        mat = qmap.get(i)
        if mat is None:
            continue
        vg = VGram(r)
        _check_square(mat, vg.size, f"Q_{i}")
        if i == 0:
            _accumulate_inner(out, mat, lambda a, b: ((vg.product_exponent(a, b), 1),), -1)
        else:
            g = gs[i]
            _accumulate_inner(out, mat, lambda a, b, g=g: g * vg.entry(a, b), -1)
    return TriPoly._raw(out)


def num_monomials(max_degree: int) -> int:
    return math.comb(max_degree + 3, 3)


def coefficient_vector(poly: TriPoly, max_degree: int) -> list[Fraction]:
    """Coefficients of ``poly`` listed along :func:`monomials` ``(max_degree)``."""
    if poly.degree > max_degree:
        raise ValueError("polynomial degree exceeds the requested basis")
    return [poly.coeff(m) for m in monomials(max_degree)]


def from_points(points: Iterable[tuple[float, float, float]]) -> np.ndarray:
    return np.asarray(list(points), dtype=float)
