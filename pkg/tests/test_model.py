import functools
import math

import numpy as np
import pytest

from witsenhausen.bqpcuts import BqpInequality, clique_facet
from witsenhausen.ipm import solve
from witsenhausen.model import (
    ModelError,
    build_dual,
    choose_sample,
    double_cap_coefficients,
    extract_dual_point,
    layout,
    primal_check,
    sample_multipliers,
)
from witsenhausen.polysym import monomials
from witsenhausen.special import jacobi_table, sphere_surface


@functools.lru_cache(maxsize=None)
def solved(n, d, with_cut=False):
    cuts = (triangle_cut(n),) if with_cut else ()
    prob = build_dual(n, d, cuts)
    return prob, solve(prob)


@functools.lru_cache(maxsize=None)
def triangle_cut(n):
    # three mutually orthogonal-ish points: the triangle facet on near-orthogonal points is tight for caps
    V = np.eye(3, n)[:, :n] + 0.05
    L, beta = clique_facet(3, 1)
    return BqpInequality.from_vectors(n, V, L, beta, label="triangle")


class TestSample:
    def test_small(self):
        S = choose_sample(3, 2, 8)
        assert set(range(9)) <= set(S)

    @pytest.mark.parametrize("d,kmax", [(2, 100), (4, 3000), (6, 10_000)])
    def test_endpoints_and_growth(self, d, kmax):
        S = choose_sample(3, d, kmax)
        assert S[0] == 0 and S[-1] == kmax
        assert S == sorted(set(S))
        assert len(S) <= 4 * d + 2 + math.log(kmax / (4 * d)) / math.log(1.15) + 1

    def test_deterministic(self):
        assert choose_sample(5, 3, 700) == choose_sample(5, 3, 700)

    def test_rejects(self):
        with pytest.raises(ModelError):
            choose_sample(3, 4, 8)


class TestBuildDual:
    def test_inventory_d2(self):
        prob = build_dual(3, 2)
        inv = {name: size for name, size, _ in prob.inventory()}
        assert inv == {"z": 2, "F0": 3, "F1": 2, "F2": 1, "Q0": 10, "Q1": 4, "Q2": 1, "Q4": 1}
        sos_rows = [r for r in prob.rows if r.label.startswith("sos:")]
        assert len(sos_rows) == len(monomials(4)) == 35

    def test_objective_is_z11_without_cuts(self):
        prob = build_dual(3, 2)
        assert len(prob.objective) == 1
        e, c = prob.objective[0]
        assert prob.blocks[e.index].name == "z" and (e.i, e.j) == (0, 0) and c == 1.0

    def test_row_shapes(self):
        n, d = 4, 2
        prob = build_dual(n, d, S=[0, 1, 3, 4, 5, 9, 10])
        omega = float(sphere_surface(n))
        P0 = jacobi_table(n, 10, [0.0])[:, 0]
        rows = {r.label: r for r in prob.rows if r.label.startswith("k=")}
        assert set(rows) == {"k=0", "k=1", "k=3", "k=4", "k=5", "k=9", "k=10"}

        def coeffs(row):
            out = {}
            for e, c in row.terms:
                key = prob.free_names[e.index] if e.kind == "free" else (prob.blocks[e.index].name, e.i, e.j)
                out[key] = c
            return out

        c0 = coeffs(rows["k=0"])
        assert c0 == {"lam": 1.0, ("z", 0, 1): -omega, ("z", 1, 1): -omega * omega, "f0": -1.0}
        c4 = coeffs(rows["k=4"])
        assert c4 == {"lam": P0[4], ("z", 0, 1): -omega, "f4": -1.0}
        # P_k(0) = 0 for odd k, so lambda drops out
        assert coeffs(rows["k=3"]) == {("z", 0, 1): -omega, "f3": -1.0}
        assert coeffs(rows["k=9"]) == {("z", 0, 1): -omega}
        assert coeffs(rows["k=5"]) == {("z", 0, 1): -omega}
        assert coeffs(rows["k=10"]) == {"lam": P0[10], ("z", 0, 1): -omega}
        assert all(r.sense == ">=" and r.rhs == 1.0 for r in rows.values())

    def test_with_cut(self):
        cut = triangle_cut(3)
        prob = build_dual(3, 2, [cut])
        inv = {name: (size, kind) for name, size, kind in prob.inventory()}
        assert inv["y"] == (1, "diag")
        assert any(c == cut.beta for _, c in prob.objective)

    def test_errors(self):
        with pytest.raises(ModelError):
            build_dual(2, 2)
        with pytest.raises(ModelError):
            build_dual(3, 1)
        with pytest.raises(ModelError):
            build_dual(3, 2, S=[1, 2])
        with pytest.raises(ModelError):
            build_dual(3, 2, S=[])
        with pytest.raises(ModelError):
            build_dual(4, 2, [triangle_cut(3)])

    def test_layout(self):
        lay = layout(6)
        assert lay.F_sizes == (7, 6, 5, 4, 3, 2, 1)
        assert lay.Q_sizes == {0: 84, 1: 56, 2: 35, 3: 20, 4: 35}


class TestPrimalCheck:
    def test_zero(self):
        rep = primal_check(3, 2, {})
        assert rep.feasible and rep.objective == 0

    def test_constant_only(self):
        rep = primal_check(3, 2, {0: 1.0})
        assert not rep.feasible
        assert rep.orthogonality == pytest.approx(1.0)

    def test_double_cap(self):
        a = double_cap_coefficients(3, 4000)
        rep = primal_check(3, 2, a)
        assert rep.feasible, rep.failures
        assert rep.objective >= 0.2928

    def test_double_cap_frozen(self):
        a = double_cap_coefficients(3, 4000)
        assert a[0] == pytest.approx((1 - math.sqrt(0.5)) ** 2, rel=1e-10)
        assert a[2] == pytest.approx(0.15625, rel=1e-10)
        assert a.sum() == pytest.approx(0.2928369601952774, rel=1e-9)

    def test_reports_negative(self):
        assert not primal_check(3, 2, {0: -0.1}).feasible


class TestDualProperties:
    def test_weak_duality(self):
        prob, sol = solved(3, 2)
        a = double_cap_coefficients(3, 4000)
        assert primal_check(3, 2, a).feasible
        assert sol.primal_objective >= a.sum() - 1e-9

    def test_multipliers_are_primal_feasible(self):
        prob, sol = solved(3, 2)
        a = sample_multipliers(prob, sol)
        rep = primal_check(3, 2, a, tol=1e-5)
        assert rep.feasible, rep.failures
        assert rep.objective == pytest.approx(sol.primal_objective, abs=1e-5)

    def test_d2_value(self):
        _, sol = solved(3, 2)
        assert 0 < sol.primal_objective <= 1 / 3 + 1e-7

    def test_cut_never_increases(self):
        _, plain = solved(3, 2)
        _, cut = solved(3, 2, True)
        assert cut.primal_objective <= plain.primal_objective + 1e-7

    def test_monotone_in_d(self):
        _, d2 = solved(3, 2)
        _, d3 = solved(3, 3)
        assert d3.primal_objective <= d2.primal_objective + 1e-7

    def test_extract(self):
        prob, sol = solved(3, 2)
        pt = extract_dual_point(prob, sol)
        assert pt.z22 > 0
        assert pt.objective() == pytest.approx(sol.primal_objective, abs=1e-9)
        assert len(pt.f) == 5 and [F.shape[0] for F in pt.F] == [3, 2, 1]
        cp = pt.copy()
        cp.F[0][0, 0] += 1
        assert cp.F[0][0, 0] != pt.F[0][0, 0]
