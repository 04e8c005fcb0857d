"""End-to-end acceptance criteria.

Each test prints (and the terminal summary repeats) one PASS/FAIL line.  The
certified runs are shared between criteria through module-level caches, so
the whole file solves every program once.  Expect roughly half an hour on a
single core, most of it in the run with cuts.
"""

import io
import math
import time
from functools import lru_cache

import numpy as np
import pytest

from acceptance_log import criterion, record
from audit_oracle import audit_rows, random_degrees
from sdpa_bridge import solve_sdpa
from test_finitegraphs import random_corpus, small_graphs
from witsenhausen.bqpcuts import generate_cuts, validate
from witsenhausen.certify import CertifyConfig, repair_and_certify
from witsenhausen.cli import RunConfig
from witsenhausen.finitegraphs import (
    FiniteGraph,
    SymTensor,
    alpha_brute,
    gamma_r,
    kpcone_member,
    kpoint_delta,
    lasserre,
    lovasz_theta,
    polya_exponent,
    simplex_minimum,
    theta_problem,
)
from witsenhausen.ipm import SolverConfig, export_sdpa, read_sdpa, sdpa_objective, solve
from witsenhausen.model import build_dual, extract_dual_point, sample_multipliers
from witsenhausen.polysym import VGram

pytestmark = pytest.mark.slow

TABLE_NO_CUTS = {3: 0.316925, 4: 0.223633, 5: 0.167357, 6: 0.130829, 7: 0.106059, 8: 0.088750}
DOUBLE_CAP = 0.2928
DEFAULTS = RunConfig("bound")
AUDIT_SAMPLES = 10_000
AUDIT_KMAX = 10**6


class Run:
    def __init__(self, n, d, cuts=()):
        self.n, self.d, self.cuts = n, d, tuple(cuts)
        start = time.perf_counter()
        self.problem = build_dual(n, d, self.cuts, k_max=DEFAULTS.kmax, psd_margin=DEFAULTS.margin)
        self.solution = solve(self.problem, SolverConfig(gap_tol=DEFAULTS.tol, feas_tol=DEFAULTS.tol))
        self.point = extract_dual_point(self.problem, self.solution)
        cfg = CertifyConfig(epsilon=DEFAULTS.epsilon, sweep_precision=DEFAULTS.precision, audit_precision=2 * DEFAULTS.precision)
        self.report = repair_and_certify(n, d, self.point, self.cuts, cfg=cfg)
        self.seconds = time.perf_counter() - start

    @property
    def bound(self):
        return self.report.certified_bound if self.report.certified else math.inf

    def describe(self):
        return f"n={self.n} d={self.d} cuts={len(self.cuts)}"


@lru_cache(maxsize=None)
def run(n, d):
    return Run(n, d)


@lru_cache(maxsize=None)
def cut_run():
    base = run(3, 6)
    a = sample_multipliers(base.problem, base.solution)
    cuts = generate_cuts(3, a, budget=5, seed=DEFAULTS.seed)
    return Run(3, 6, cuts)


def certified_runs():
    return [run(n, 6) for n in TABLE_NO_CUTS] + [run(3, 2), run(3, 4), cut_run()]


@criterion("table d=6 without cuts within 2e-3")
def test_table_no_cuts_d6():
    rows, ok = [], True
    for n, paper in TABLE_NO_CUTS.items():
        r = run(n, 6)
        good = r.report.certified and abs(r.bound - paper) <= 2e-3 and r.seconds <= 3600
        ok &= good
        rows.append(f"n={n} {r.bound:.6f} vs {paper:.6f} ({r.seconds:.0f}s)")
    assert record("table d=6 without cuts within 2e-3", ok, "; ".join(rows))


@criterion("n=3 bounds nonincreasing in d and above the double cap")
def test_monotone_in_d():
    bounds = [run(3, d).bound for d in (2, 4, 6)]
    ok = all(math.isfinite(b) for b in bounds) and bounds[0] >= bounds[1] >= bounds[2] and min(bounds) >= DOUBLE_CAP
    assert record("n=3 bounds nonincreasing in d and above the double cap", ok, ", ".join(f"d={d}: {b:.6f}" for d, b in zip((2, 4, 6), bounds)))


@criterion("d=6 bounds below 1/n")
def test_beats_simple_bound():
    rows = [(n, run(n, 6).bound) for n in TABLE_NO_CUTS]
    ok = all(b < 1 / n for n, b in rows)
    assert record("d=6 bounds below 1/n", ok, ", ".join(f"n={n}: {b:.6f}<{1 / n:.6f}" for n, b in rows))


@criterion("validated cuts improve n=3 d=6 by at least 1e-4")
def test_cut_improvement():
    base = run(3, 6)
    r = cut_run()
    valid = all(validate(c)[0] for c in r.cuts)
    gain = base.bound - r.bound
    ok = len(r.cuts) >= 1 and valid and r.report.certified and gain >= 1e-4
    assert record(
        "validated cuts improve n=3 d=6 by at least 1e-4",
        ok,
        f"{len(r.cuts)} cuts, {base.bound:.6f} -> {r.bound:.6f}, gain {gain:.2e}, k0 {r.report.k0}, {r.seconds:.0f}s",
    )


@criterion("1024-bit audit, eta and eigen margins")
def test_soundness_audit():
    ks = random_degrees(AUDIT_SAMPLES, AUDIT_KMAX, seed=2024)
    rows, ok = [], True
    for r in certified_runs():
        rep = r.report
        if not rep.certified:
            ok = False
            rows.append(f"{r.describe()}: not certified")
            continue
        lhs = audit_rows(r.point, r.cuts, rep.exact_z, ks, precision=1024)
        worst = min(lhs.values())
        B = VGram(2 * r.d).size
        q0 = next(b for b in rep.eig_margins if b.name == "Q0")
        margins = all(b.passed for b in rep.eig_margins) and q0.required >= 10 * rep.eta * B * (1 - 1e-12)
        good = worst >= 1 and rep.eta < 1e-10 and margins
        ok &= good
        rows.append(f"{r.describe()}: min lhs-1 {float(worst - 1):.2e}, eta {rep.eta:.1e}, margins {'ok' if margins else 'FAIL'}")
    assert record("1024-bit audit, eta and eigen margins", ok, f"{AUDIT_SAMPLES} degrees <= {AUDIT_KMAX}; " + "; ".join(rows))


@criterion("finite-graph oracle suite within 5 minutes")
def test_finite_graph_suite():
    start = time.perf_counter()
    checks = {}
    corpus = random_corpus()
    thetas = [lovasz_theta(G) for G in corpus]
    checks["las1=theta"] = all(abs(lasserre(G, 1) - t) <= 1e-5 for G, t in zip(corpus, thetas))
    checks["las2(C5)=2"] = abs(lasserre(FiniteGraph.cycle(5), 2) - 2) <= 1e-5
    checks["theta(C5)=sqrt5"] = abs(lovasz_theta(FiniteGraph.cycle(5)) - math.sqrt(5)) <= 1e-6
    sandwich = True
    for G, t in zip(corpus, thetas):
        a, l2, d3 = alpha_brute(G), lasserre(G, 2), kpoint_delta(G, 3)
        sandwich &= a - 1e-5 <= l2 <= d3 + 1e-5 and d3 <= t + 1e-5
    checks["alpha<=las2<=delta3<=theta"] = sandwich
    checks["las3<=delta4<=gamma1"] = all(
        lasserre(G, 3) <= kpoint_delta(G, 4) + 1e-4 and kpoint_delta(G, 4) <= gamma_r(G, 1) + 1e-4 for G in small_graphs()
    )
    rng = np.random.default_rng(0)
    chain = True
    for _ in range(200):
        A = rng.uniform(-0.3, 1.0, size=(4, 4))
        A = (A + A.T) / 2
        inside = [kpcone_member(A, r) for r in range(5)]
        chain &= all(not inside[r] or inside[r + 1] for r in range(4))
    checks["K_r chain x200"] = chain
    polya, count = True, 0
    while count < 200:
        A = rng.uniform(-0.25, 1.0, size=(3, 3))
        A = (A + A.T) / 2
        np.fill_diagonal(A, rng.uniform(0.5, 1.0, size=3))
        if not simplex_minimum(SymTensor(A), starts=2)[1] > 0.08 * np.abs(A).max():
            continue
        polya &= kpcone_member(A, polya_exponent(SymTensor(A)))
        count += 1
    checks["Polya membership x200"] = polya
    seconds = time.perf_counter() - start
    ok = all(checks.values()) and seconds <= 300
    detail = ", ".join(f"{k} {'ok' if v else 'FAIL'}" for k, v in checks.items()) + f"; {seconds:.0f}s"
    assert record("finite-graph oracle suite within 5 minutes", ok, detail)


def _external(problem):
    buf = io.StringIO()
    meta = export_sdpa(problem, buf)
    data = read_sdpa(io.StringIO(buf.getvalue()))
    value, _, _ = solve_sdpa(data)
    return sdpa_objective(meta, value)


@criterion("SDPA export solved externally matches to 1e-6")
def test_sdpa_cross_check():
    rows, ok = [], True
    for name, problem in [("theta(C5)", theta_problem(FiniteGraph.cycle(5))), ("n=3 d=2 dual", build_dual(3, 2, k_max=DEFAULTS.kmax, psd_margin=DEFAULTS.margin))]:
        internal = solve(problem).primal_objective
        external = _external(problem)
        diff = abs(internal - external)
        ok &= diff <= 1e-6
        rows.append(f"{name}: {internal:.9f} vs {external:.9f} ({diff:.1e})")
    assert record("SDPA export solved externally matches to 1e-6", ok, "; ".join(rows))
