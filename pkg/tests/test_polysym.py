import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from witsenhausen.polysym import (
    T,
    U,
    V,
    TriPoly,
    VGram,
    coefficient_vector,
    domain_polys,
    monomials,
    num_monomials,
    q_block_degrees,
    q_poly,
    sos_residual,
    univariate_sum_term,
    y_bar,
    y_matrix,
)
from witsenhausen.special import harmonic_dim

PERMS = list(itertools.permutations(range(3)))


def gram_triples(n, count, seed):
    rng = np.random.default_rng(seed)
    x, y, z = (rng.standard_normal((count, n)) for _ in range(3))
    x, y, z = (w / np.linalg.norm(w, axis=1, keepdims=True) for w in (x, y, z))
    return np.einsum("ij,ij->i", x, z), np.einsum("ij,ij->i", y, z), np.einsum("ij,ij->i", x, y)


def p_oracle(n, k, x):
    """Normalized Jacobi value from mpmath; Chebyshev for ``n = 2``."""
    if n == 2:
        return math.cos(k * math.acos(max(-1.0, min(1.0, x))))
    a = mpmath.mpf(n - 2) / 2
    return float(mpmath.gegenbauer(k, a, x) / mpmath.gegenbauer(k, a, 1))


def q_radical(n, k, u, v, t):
    s = math.sqrt((1 - u * u) * (1 - v * v))
    return s**k * p_oracle(n, k, (t - u * v) / s)


def random_psd(rng, m, scale=1.0):
    G = rng.standard_normal((m, m))
    return scale * G @ G.T / m


class TestTriPoly:
    def test_no_zero_coefficients(self):
        p = TriPoly({(1, 0, 0): 1, (0, 1, 0): 0})
        assert len(p) == 1
        assert (U - U).is_zero()

    def test_exact_arithmetic(self):
        p = (U + Fraction(1, 3) * V) ** 2
        assert p.coeff((1, 1, 0)) == Fraction(2, 3)
        assert p.coeff((0, 2, 0)) == Fraction(1, 9)
        assert p.degree == 2

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3), st.integers(-5, 5)), max_size=6))
    @settings(max_examples=50, deadline=None)
    def test_symmetrize_idempotent_and_invariant(self, terms):
        p = TriPoly({(a, b, c): w for a, b, c, w in terms})
        s = p.symmetrize()
        assert s.symmetrize() == s
        for perm in PERMS:
            assert s.permute(perm) == s

    def test_rejects_bad_exponents(self):
        with pytest.raises(ValueError):
            TriPoly({(1, 0): 1})
        with pytest.raises(ValueError):
            U ** -1


class TestMonomials:
    @pytest.mark.parametrize("deg", range(0, 9))
    def test_count(self, deg):
        brute = [m for m in itertools.product(range(deg + 1), repeat=3) if sum(m) <= deg]
        assert len(monomials(deg)) == len(brute) == num_monomials(deg)

    def test_grlex_order(self):
        assert monomials(2)[:4] == ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))
        assert monomials(2)[4] == (2, 0, 0)

    @pytest.mark.parametrize("r", range(0, 13))
    def test_vgram_shape(self, r):
        vg = VGram(r)
        assert vg.size == math.comb(r // 2 + 3, 3)
        assert all(vg.entry(i, j).degree <= r for i in range(vg.size) for j in range(vg.size))


class TestQPoly:
    @pytest.mark.parametrize("n", [3, 4, 7])
    def test_low_degrees(self, n):
        assert q_poly(n, 0) == 1
        assert q_poly(n, 1) == T - U * V

    @pytest.mark.parametrize("n,k", [(4, 2), (3, 3), (2, 4), (5, 5)])
    def test_matches_radical_form(self, n, k):
        us, vs, ts = gram_triples(3, 50, seed=k)
        q = q_poly(n, k)
        for u, v, t in zip(us, vs, ts):
            assert q(u, v, t) == pytest.approx(q_radical(n, k, u, v, t), abs=1e-12)

    def test_rejects(self):
        with pytest.raises(ValueError):
            q_poly(1, 2)
        with pytest.raises(ValueError):
            q_poly(3, -1)


class TestYMatrix:
    def test_trivial(self):
        y = y_matrix(3, 0, 0)
        assert y.size == 1 and y.entry(0, 0) == 1

    @pytest.mark.parametrize("n,k,d", [(3, 1, 3), (4, 2, 4), (5, 0, 2)])
    def test_entries(self, n, k, d):
        y = y_matrix(n, k, d)
        assert y.size == d - k + 1
        q = q_poly(n - 1, k)
        for i in range(y.size):
            for j in range(y.size):
                assert y.entry(i, j) == TriPoly.monomial((i, j, 0)) * q
                assert y.entry(i, j) == y.entry(j, i).permute((1, 0, 2))

    def test_ybar_k1(self):
        e = y_bar(3, 1, 1).entry(0, 0)
        expected = Fraction(1, 3) * (U + V + T) - Fraction(1, 3) * (U * V + U * T + V * T)
        assert e == expected
        assert e.evaluate_exact(1, 1, 1) == 0

    def test_ybar_invariant(self):
        yb = y_bar(4, 1, 3)
        for i in range(yb.size):
            for j in range(yb.size):
                for perm in PERMS:
                    assert yb.entry(i, j).permute(perm) == yb.entry(i, j)

    def test_rejects_k_above_d(self):
        with pytest.raises(ValueError):
            y_matrix(3, 3, 2)


class TestDomainPolys:
    def test_values(self):
        g1, g2, g3, g4 = domain_polys()
        assert g1.evaluate_exact(0, 0, 0) == 3
        assert g4.evaluate_exact(1, 1, 1) == 0
        assert g4.evaluate_exact(0, 0, 0) == 1
        assert g3.evaluate_exact(0, 0, 0) == 1

    def test_invariant(self):
        for g in domain_polys():
            for perm in PERMS:
                assert g.permute(perm) == g

    @pytest.mark.parametrize("n", [3, 5])
    def test_gram_triples_satisfy(self, n):
        us, vs, ts = gram_triples(n, 10_000, seed=n)
        for g in domain_polys():
            assert np.all(g(us, vs, ts) >= -1e-12)

    def test_cube_points_outside_are_not_gram(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(10_000, 3))
        gs = domain_polys()
        vals = np.array([g(pts[:, 0], pts[:, 1], pts[:, 2]) for g in gs])
        outside = np.any(vals < -1e-9, axis=0)
        assert outside.sum() > 100
        for u, v, t in pts[outside]:
            gram = np.array([[1, t, u], [t, 1, v], [u, v, 1]])
            assert np.linalg.eigvalsh(gram)[0] < 0


class TestUnivariateSum:
    def test_unit_vectors(self):
        d = 2
        e = lambda k: [int(i == k) for i in range(2 * d + 1)]
        assert univariate_sum_term(3, d, e(0)) == 1
        assert univariate_sum_term(3, d, e(1)) == Fraction(1, 3) * (U + V + T)
        leg = lambda w: Fraction(3, 2) * w * w - Fraction(1, 2)
        assert univariate_sum_term(3, d, e(2)) == Fraction(1, 3) * (leg(U) + leg(V) + leg(T))

    def test_length_checked(self):
        with pytest.raises(ValueError):
            univariate_sum_term(3, 2, [1, 2])


class TestSosResidual:
    def _zeros(self, d):
        F = [np.zeros((d - k + 1, d - k + 1)) for k in range(d + 1)]
        Q = {i: np.zeros((math.comb(r // 2 + 3, 3),) * 2) for i, r in q_block_degrees(d).items()}
        return [0] * (2 * d + 1), F, Q

    def test_zero(self):
        f, F, Q = self._zeros(3)
        assert sos_residual(4, 3, f, F, Q).is_zero()

    def test_constant(self):
        f, F, Q = self._zeros(2)
        f[0] = 1
        assert sos_residual(3, 2, f, F, Q) == 1

    def test_block_degrees(self):
        assert q_block_degrees(2) == {0: 4, 1: 2, 2: 0, 4: 1}
        assert q_block_degrees(6) == {0: 12, 1: 10, 2: 8, 3: 6, 4: 9}

    def test_shape_errors(self):
        f, F, Q = self._zeros(2)
        with pytest.raises(ValueError):
            sos_residual(3, 2, f, F[:-1], Q)
        with pytest.raises(ValueError):
            sos_residual(3, 2, f, F, {3: np.zeros((1, 1))})
        with pytest.raises(ValueError):
            sos_residual(3, 2, f[:-1], F, Q)

    @pytest.mark.parametrize("n,d", [(3, 2), (4, 3)])
    def test_pointwise_oracle(self, n, d):
        rng = np.random.default_rng(7 + d)
        F = [random_psd(rng, d - k + 1) for k in range(d + 1)]
        degrees = q_block_degrees(d)
        Q = {i: random_psd(rng, math.comb(r // 2 + 3, 3), 0.1) for i, r in degrees.items()}
        f = rng.standard_normal(2 * d + 1)
        res = sos_residual(n, d, f, F, Q)
        assert res.degree <= 2 * d
        g = {
            1: lambda u, v, t: (1 - u * u) + (1 - v * v) + (1 - t * t),
            2: lambda u, v, t: (1 - u * u) * (1 - v * v) + (1 - u * u) * (1 - t * t) + (1 - v * v) * (1 - t * t),
            3: lambda u, v, t: (1 - u * u) * (1 - v * v) * (1 - t * t),
            4: lambda u, v, t: 1 + 2 * u * v * t - u * u - v * v - t * t,
        }
        us, vs, ts = gram_triples(3, 100, seed=d)
        for u, v, t in zip(us, vs, ts):
            w = (u, v, t)
            expect = sum(f[k] * harmonic_dim(n, k) / 3 * sum(p_oracle(n, k, x) for x in w) for k in range(2 * d + 1))
            for k, Fk in enumerate(F):
                m = d - k + 1
                ybar = np.zeros((m, m))
                for perm in PERMS:
                    a, b, c = (w[p] for p in perm)
                    ybar += np.array([[a**i * b**j * q_radical(n - 1, k, a, b, c) for j in range(m)] for i in range(m)])
                expect -= np.sum(Fk * ybar / 6)
            for i, r in degrees.items():
                basis = monomials(r // 2)
                vec = np.array([u**a * v**b * t**c for a, b, c in basis])
                weight = 1.0 if i == 0 else g[i](u, v, t)
                expect -= weight * vec @ Q[i] @ vec
            assert res(u, v, t) == pytest.approx(expect, abs=1e-10 * max(1, abs(expect)))

    @pytest.mark.parametrize("d", [2, 3])
    def test_invariant_for_invariant_blocks(self, d):
        rng = np.random.default_rng(d)
        F = [np.eye(d - k + 1) for k in range(d + 1)]
        Q = {}
        for i, r in q_block_degrees(d).items():
            basis = monomials(r // 2)
            index = {m: j for j, m in enumerate(basis)}
            G = rng.integers(-3, 4, size=(len(basis), len(basis))).astype(float)
            raw = G @ G.T
            sym = np.zeros_like(raw)
            for perm in PERMS:
                P = np.zeros_like(raw)
                for j, m in enumerate(basis):
                    P[index[tuple(m[q] for q in perm)], j] = 1
                sym += P @ raw @ P.T
            Q[i] = sym
        f = [Fraction(k + 1, 7) for k in range(2 * d + 1)]
        res = sos_residual(4, d, f, F, Q)
        assert res.degree <= 2 * d
        for perm in PERMS:
            assert res.permute(perm) == res

    @pytest.mark.parametrize("d", [2, 3])
    def test_sos_part_nonnegative_on_domain(self, d):
        rng = np.random.default_rng(d)
        f, F, Q = self._zeros(d)
        for i, r in q_block_degrees(d).items():
            Q[i] = random_psd(rng, math.comb(r // 2 + 3, 3))
        p = -sos_residual(3, d, f, F, Q)
        us, vs, ts = gram_triples(3, 1000, seed=11)
        assert np.all(p(us, vs, ts) >= -1e-12)

    def test_coefficient_vector(self):
        assert coefficient_vector(U * V + 2, 2)[:2] == [2, 0]
        with pytest.raises(ValueError):
            coefficient_vector(U**3, 2)
