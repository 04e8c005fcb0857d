import itertools
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from witsenhausen.bqpcuts import (
    BqpInequality,
    CutError,
    clique_facet,
    facet_family,
    generate_cuts,
    r_infinity,
    r_sequence,
    r_tail_error,
    r_values,
    r_values_mp,
    read_cuts,
    validate,
    write_cuts,
)


def spread_points(n, m, seed=0):
    rng = np.random.default_rng(seed)
    while True:
        V = rng.standard_normal((m, n))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        G = V @ V.T
        if m < 2 or np.abs(G[~np.eye(m, dtype=bool)]).max() < 0.95:
            return V


def triangle(n=3, seed=0):
    L, beta = clique_facet(3, 1)
    return BqpInequality.from_vectors(n, spread_points(n, 3, seed), L, beta, label="triangle")


def brute_max(L):
    m = len(L)
    return max(sum(Fraction(float(L[i, j])) for i in range(m) for j in range(m) if x[i] and x[j]) for x in itertools.product((0, 1), repeat=m))


class TestValidate:
    def test_zero_inequality(self):
        ineq = BqpInequality.from_vectors(3, spread_points(3, 2), np.zeros((2, 2)), 0.0)
        assert validate(ineq)[0]

    def test_identity(self):
        ineq = BqpInequality.from_vectors(3, spread_points(3, 2), np.eye(2), 2.0)
        ok, x, value = validate(ineq)
        assert ok and x == (1, 1) and value == 2

    def test_all_ones_invalid(self):
        ineq = BqpInequality.from_vectors(3, spread_points(3, 2), np.ones((2, 2)), 3.0)
        ok, x, value = validate(ineq)
        assert not ok and x == (1, 1) and value == 4

    @pytest.mark.parametrize("q,s", [(3, 1), (4, 1), (4, 2), (5, 2), (6, 3)])
    def test_clique_facets_valid_and_tight(self, q, s):
        L, beta = clique_facet(q, s)
        assert brute_max(L) == Fraction(beta)
        ineq = BqpInequality.from_vectors(4, spread_points(4, q, q), L, beta)
        assert validate(ineq)[0]

    @given(st.integers(1, 7), st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_matches_enumeration(self, m, seed):
        rng = np.random.default_rng(seed)
        A = rng.integers(-4, 5, size=(m, m)).astype(float)
        L = (A + A.T) / 2
        best = brute_max(L)
        ineq = BqpInequality.from_vectors(3, rng.standard_normal((m, 3)) + 0.01, L, float(best))
        ok, x, value = validate(ineq)
        assert ok and value == best
        tighter = BqpInequality.from_vectors(3, ineq.points, L, float(best) - 0.5)
        assert not validate(tighter)[0]

    def test_size_limit(self):
        m = 31
        V = np.eye(m, 40)[:, :40]
        ineq = BqpInequality.from_vectors(40, V, np.zeros((m, m)), 0.0)
        with pytest.raises(CutError):
            validate(ineq)

    def test_construction_checks(self):
        with pytest.raises(CutError):
            BqpInequality.from_vectors(3, spread_points(3, 2), np.array([[0, 1], [2, 0]]), 1.0)
        with pytest.raises(CutError):
            BqpInequality(3, ((1, 0, 0), (0.5, 0.5, 0)), np.zeros((2, 2)), 0.0)
        with pytest.raises(CutError):
            BqpInequality.from_vectors(3, [(1, 0, 0)], np.zeros((2, 2)), 0.0)


class TestRSequence:
    def test_low_degrees(self):
        ineq = triangle()
        G = ineq.gram()
        assert float(r_sequence(ineq, 0)) == pytest.approx(ineq.L.sum(), abs=1e-15)
        assert float(r_sequence(ineq, 1)) == pytest.approx(float(np.sum(ineq.L * G)), abs=1e-15)
        assert r_infinity(ineq) == np.trace(ineq.L)

    def test_table_matches_pointwise(self):
        ineq = triangle(4, seed=3)
        table = r_values(ineq, 60)
        mp_table = r_values_mp(ineq, 60, 200)
        for k in (0, 1, 7, 33, 60):
            assert table[k] == pytest.approx(float(r_sequence(ineq, k)), abs=1e-12)
            assert float(mp_table[k]) == pytest.approx(float(r_sequence(ineq, k)), abs=1e-15)

    def test_precisions_agree(self):
        ineq = triangle(3, seed=5)
        lo = r_values_mp(ineq, 10_000, 128)
        hi = r_values_mp(ineq, 10_000, 256)
        with mpmath.workprec(256):
            assert max(abs(a - b) for a, b in zip(lo, hi)) < mpmath.mpf("1e-20")

    def test_converges_with_tail_bound(self):
        ineq = triangle(3, seed=1)
        assert ineq.separation >= 0.05
        k = 100_000
        diff = abs(r_sequence(ineq, k) - r_infinity(ineq))
        assert diff <= r_tail_error(ineq, k)


class TestTailError:
    def test_diagonal(self):
        ineq = BqpInequality.from_vectors(3, spread_points(3, 3), np.diag([1.0, 2.0, 3.0]), 6.0)
        assert r_tail_error(ineq, 0) == 0
        assert r_tail_error(ineq, 500) == 0

    def test_at_zero(self):
        ineq = triangle()
        off = np.abs(ineq.L).sum() - np.abs(np.diag(ineq.L)).sum()
        assert float(r_tail_error(ineq, 0)) <= off * (1 + 1e-12)

    def test_dominates_observed(self):
        ineq = triangle(3, seed=2)
        table = r_values(ineq, 2000)
        observed = np.abs(table[1000:] - r_infinity(ineq)).max()
        assert float(r_tail_error(ineq, 1000)) >= observed

    @given(st.integers(3, 6), st.integers(0, 1000), st.sampled_from([0, 10, 100, 400]))
    @settings(max_examples=15, deadline=None)
    def test_sound_and_monotone(self, n, seed, k0):
        rng = np.random.default_rng(seed)
        L = rng.normal(size=(3, 3))
        L = (L + L.T) / 2
        ineq = BqpInequality.from_vectors(n, spread_points(n, 3, seed), L, 100.0)
        table = r_values(ineq, k0 + 600)
        bound = r_tail_error(ineq, k0)
        assert float(bound) >= np.abs(table[k0:] - r_infinity(ineq)).max() - 1e-13
        assert r_tail_error(ineq, k0 + 50) <= bound

    def test_collinear_rejected(self):
        ineq = BqpInequality.from_vectors(3, [(1, 0, 0), (-1, 0, 0)], np.array([[0, 1.0], [1.0, 0]]), 2.0)
        with pytest.raises(CutError):
            r_tail_error(ineq, 10)


class TestFacets:
    def test_family(self):
        fam = facet_family(4)
        assert all(L.shape[0] <= 4 for L, _, _ in fam)
        assert any(L.shape[0] == 3 for L, _, _ in fam)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            clique_facet(3, 3)


class TestGenerate:
    def test_constant_kernel(self):
        cuts = generate_cuts(3, {0: 1.0}, budget=3, seed=0, restarts=2, max_points=3)
        assert all(validate(c)[0] for c in cuts)

    def test_seeded_determinism(self):
        a = {0: 0.3, 2: 0.4, 7: 0.2}
        one = generate_cuts(3, a, budget=2, seed=4, restarts=2, max_points=4)
        two = generate_cuts(3, a, budget=2, seed=4, restarts=2, max_points=4)
        assert [c.label for c in one] == [c.label for c in two]
        assert all(np.array_equal(c.L, d.L) and c.points == d.points for c, d in zip(one, two))

    def test_returned_cuts_separate(self):
        # a kernel concentrated on a high degree is far from any independence indicator
        a = {0: 0.3, 11: 0.7}
        cuts = generate_cuts(3, a, budget=2, seed=1, restarts=3, max_points=4)
        assert cuts
        for c in cuts:
            assert validate(c)[0]
            value = sum(v * float(r_sequence(c, k)) for k, v in a.items())
            assert value > c.beta + 1e-9

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            generate_cuts(3, {0: -1.0})


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        cuts = [triangle(3, 0), triangle(3, 1)]
        path = tmp_path / "cuts.txt"
        write_cuts(path, cuts)
        back = read_cuts(path)
        assert len(back) == 2
        for a, b in zip(cuts, back):
            assert a.label == b.label and a.beta == b.beta
            assert np.array_equal(a.L, b.L)
            with mpmath.workprec(256):
                assert all(abs(x - y) < mpmath.mpf("1e-40") for p, q in zip(a.points, b.points) for x, y in zip(p, q))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        write_cuts(path, [])
        assert read_cuts(path) == []

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("# witsenhausen bqp inequalities\nversion 1\ncount 1\nbegin\nlabel x\ndimension three\n")
        with pytest.raises(CutError):
            read_cuts(path)
