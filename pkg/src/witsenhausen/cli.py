"""Command-line front end.

Subcommands::

    witsenhausen bound  --n 3 --d 6 [--cuts FILE ...] [--out DIR] [--export-sdpa FILE]
    witsenhausen cuts   validate FILE ...
    witsenhausen cuts   generate --n 3 --d 6 [--primal FILE] --out FILE [--seed S]
    witsenhausen finite {alpha,theta,lasserre,delta,gamma,polya} FILE [--k K] [--r R]
    witsenhausen export --n 3 --d 6 [--cuts FILE ...] --out FILE

Exit codes are listed in :data:`EXIT_CODES`.  Certified bounds are printed
rounded up in the last digit; every other number is printed at a fixed
precision with round-half-even.  ``WITSENHAUSEN_THREADS`` sets the BLAS
thread count.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

EXIT_CODES = {
    "ok": 0,
    "usage": 2,
    "model": 10,
    "solver": 20,
    "max_iterations": 21,
    "numerical": 22,
    "infeasible": 23,
    "certify": 30,
    "invalid_cut": 40,
    "input": 41,
    "size_cap": 50,
}
DIGITS = 6


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _threads():
    value = os.environ.get("WITSENHAUSEN_THREADS")
    if value:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, value)


# -- configuration -------------------------------------------------------------------------------


@dataclass
class RunConfig:
    command: str
    n: int | None = None
    d: int | None = None
    cuts: list = field(default_factory=list)
    kmax: int = 3000
    precision: int = 512
    tol: float = 1e-9
    epsilon: float = 1e-2
    margin: float = 1e-7
    seed: int = 0
    out: str | None = None
    export_sdpa: str | None = None
    subcommand: str | None = None
    paths: list = field(default_factory=list)
    primal: str | None = None
    budget: int = 5
    k: int = 1
    r: int = 1

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise CliError(f"unknown configuration keys: {', '.join(unknown)}", EXIT_CODES["usage"])
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise CliError(msg, EXIT_CODES["usage"])

        if self.command in ("bound", "export") or (self.command == "cuts" and self.subcommand == "generate" and not self.primal):
            need(self.n is not None and self.d is not None, "--n and --d are required")
        if self.n is not None:
            need(self.n >= 3, "--n must be at least 3")
        if self.d is not None:
            need(self.d >= 2, "--d must be at least 2")
        if self.command == "cuts" and self.subcommand == "generate":
            need(self.n is not None, "--n is required")
            need(self.out is not None, "--out is required")
        if self.command == "export":
            need(self.out is not None, "--out is required")
        need(self.kmax >= 1, "--kmax must be positive")
        need(self.precision >= 128, "--precision must be at least 128 bits")
        need(self.tol > 0 and self.epsilon > 0, "tolerances must be positive")
        need(self.margin >= 0, "--margin must be nonnegative")


# -- formatting -------------------------------------------------------------------------------------


def round_up(x, digits: int = DIGITS) -> str:
    """Decimal rendering of ``x`` rounded toward +infinity at ``digits`` places."""
    q = x if isinstance(x, Fraction) else Fraction(x)
    scale = 10**digits
    up = math.ceil(q * scale)
    sign = "-" if up < 0 else ""
    up = abs(up)
    return f"{sign}{up // scale}.{up % scale:0{digits}d}"


def fixed(x: float, digits: int = DIGITS) -> str:
    return f"{x:.{digits}f}"


# -- commands ------------------------------------------------------------------------------------------


def _load_cuts(paths, n=None):
    from .bqpcuts import CutError, read_cuts, validate

    cuts = []
    for path in paths:
        try:
            loaded = read_cuts(path)
        except (OSError, CutError, ValueError) as exc:
            raise CliError(f"{path}: {exc}", EXIT_CODES["input"]) from None
        for c in loaded:
            if n is not None and c.n != n:
                raise CliError(f"{path}: inequality {c.label!r} is for dimension {c.n}, not {n}", EXIT_CODES["invalid_cut"])
            ok, x, value = validate(c)
            if not ok:
                raise CliError(f"{path}: inequality {c.label!r} is invalid: value {value} > {c.beta} at {x}", EXIT_CODES["invalid_cut"])
        cuts.extend(loaded)
    return cuts


def _build(cfg: RunConfig, cuts):
    from .model import ModelError, build_dual

    try:
        return build_dual(cfg.n, cfg.d, cuts, k_max=cfg.kmax, psd_margin=cfg.margin)
    except (ModelError, ValueError) as exc:
        raise CliError(f"model: {exc}", EXIT_CODES["model"]) from None


def _solve(problem, cfg: RunConfig):
    from .ipm import InfeasibleError, MaxIterationsError, NumericalError, SolverConfig, SolverError, solve

    scfg = SolverConfig(gap_tol=cfg.tol, feas_tol=cfg.tol)
    try:
        return solve(problem, scfg)
    except MaxIterationsError as exc:
        raise CliError(f"solver: {exc}", EXIT_CODES["max_iterations"]) from None
    except NumericalError as exc:
        raise CliError(f"solver: {exc}", EXIT_CODES["numerical"]) from None
    except InfeasibleError as exc:
        raise CliError(f"solver: {exc}", EXIT_CODES["infeasible"]) from None
    except SolverError as exc:
        raise CliError(f"solver: {exc}", EXIT_CODES["solver"]) from None


def cmd_bound(cfg: RunConfig, out=sys.stdout) -> int:
    from .certify import CertifyConfig, repair_and_certify
    from .ipm import export_sdpa
    from .model import extract_dual_point
    from .sdp import save_solution

    if not 3 <= cfg.n <= 8 or cfg.d > 8:
        print(f"warning: (n, d) = ({cfg.n}, {cfg.d}) is outside the tested range 3 <= n <= 8, d <= 8", file=sys.stderr)
    cuts = _load_cuts(cfg.cuts, cfg.n)
    problem = _build(cfg, cuts)
    if cfg.export_sdpa:
        export_sdpa(problem, cfg.export_sdpa)
    sol = _solve(problem, cfg)
    point = extract_dual_point(problem, sol)
    ccfg = CertifyConfig(epsilon=cfg.epsilon, sweep_precision=cfg.precision, audit_precision=2 * cfg.precision, seed=cfg.seed)
    report = repair_and_certify(cfg.n, cfg.d, point, cuts, cfg=ccfg)
    if cfg.out:
        dest = Path(cfg.out)
        dest.mkdir(parents=True, exist_ok=True)
        stem = f"bound_n{cfg.n}_d{cfg.d}"
        (dest / f"{stem}.report.txt").write_text(report.to_text())
        (dest / f"{stem}.report.csv").write_text(report.to_csv())
        save_solution(dest / f"{stem}.wsol", sol)
    bound = report.exact_bound if report.certified else None
    rows = [
        ("n", str(cfg.n)),
        ("d", str(cfg.d)),
        ("cuts", str(len(cuts))),
        ("solver status", sol.status),
        ("solver objective", fixed(sol.primal_objective)),
        ("eta", f"{report.eta:.3e}"),
        ("k0", str(report.k0)),
        ("status", report.status + (f" ({report.reason})" if report.reason else "")),
        ("certified bound", round_up(bound) if bound is not None else "-"),
    ]
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k.ljust(width)}  {v}", file=out)
    return EXIT_CODES["ok"] if report.certified else EXIT_CODES["certify"]


def _read_primal(path):
    a = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError(f"line {lineno}: expected 'k value'")
                a[int(parts[0])] = float(parts[1])
    except (OSError, ValueError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_CODES["input"]) from None
    return a


def cmd_cuts(cfg: RunConfig, out=sys.stdout) -> int:
    from .bqpcuts import generate_cuts, write_cuts

    if cfg.subcommand == "validate":
        total = 0
        for path in cfg.paths:
            total += len(_load_cuts([path]))
        print(f"valid inequalities: {total}", file=out)
        return EXIT_CODES["ok"]
    if cfg.primal:
        a = _read_primal(cfg.primal)
    else:
        from .model import sample_multipliers

        problem = _build(cfg, [])
        a = sample_multipliers(problem, _solve(problem, cfg))
    cuts = generate_cuts(cfg.n, a, budget=cfg.budget, seed=cfg.seed)
    write_cuts(cfg.out, cuts)
    print(f"generated inequalities: {len(cuts)}", file=out)
    for c in cuts:
        print(f"  {c.label}", file=out)
    return EXIT_CODES["ok"]


def _read_matrix(path):
    import numpy as np

    try:
        A = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_CODES["input"]) from None
    return A


def cmd_finite(cfg: RunConfig, out=sys.stdout) -> int:
    from . import finitegraphs as fg

    rows = []
    try:
        for path in cfg.paths:
            if cfg.subcommand == "polya":
                T = fg.SymTensor(_read_matrix(path))
                r = fg.polya_exponent(T)
                rows.append((path, "polya", "", str(r), str(int(fg.polya_member(T, r)))))
                continue
            try:
                G = fg.FiniteGraph.read(path)
            except (OSError, ValueError) as exc:
                raise CliError(f"{path}: {exc}", EXIT_CODES["input"]) from None
            sub = cfg.subcommand
            if sub == "alpha":
                rows.append((path, sub, "", str(fg.alpha_brute(G)), ""))
            elif sub == "theta":
                rows.append((path, sub, "", fixed(fg.lovasz_theta(G)), ""))
            elif sub == "lasserre":
                rows.append((path, sub, f"k={cfg.k}", fixed(fg.lasserre(G, cfg.k)), ""))
            elif sub == "delta":
                rows.append((path, sub, f"k={cfg.k}", fixed(fg.kpoint_delta(G, cfg.k)), ""))
            elif sub == "gamma":
                rows.append((path, sub, f"r={cfg.r}", fixed(fg.gamma_r(G, cfg.r)), ""))
    except fg.SizeCapError as exc:
        raise CliError(str(exc), EXIT_CODES["size_cap"]) from None
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CODES["input"]) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "quantity", "parameter", "value", "member"])
    w.writerows(rows)
    text = buf.getvalue()
    out.write(text)
    if cfg.out:
        Path(cfg.out).write_text(text)
    return EXIT_CODES["ok"]


def cmd_export(cfg: RunConfig, out=sys.stdout) -> int:
    import json

    from .ipm import export_sdpa

    cuts = _load_cuts(cfg.cuts, cfg.n)
    problem = _build(cfg, cuts)
    meta = export_sdpa(problem, cfg.out)
    Path(str(cfg.out) + ".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    sizes = ", ".join(f"{name}:{size}{'d' if kind == 'diag' else ''}" for name, size, kind in problem.inventory())
    print(f"wrote {cfg.out}: {problem.num_rows} rows; blocks {sizes}", file=out)
    return EXIT_CODES["ok"]


COMMANDS = {"bound": cmd_bound, "cuts": cmd_cuts, "finite": cmd_finite, "export": cmd_export}


# -- argument parsing ------------------------------------------------------------------------------


def _common_model(p):
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--cuts", nargs="*", default=[], metavar="FILE")
    p.add_argument("--kmax", type=int, default=3000)
    p.add_argument("--tol", type=float, default=1e-9, help="solver gap and feasibility tolerance")
    p.add_argument("--margin", type=float, default=1e-7, help="eigenvalue floor imposed on F and Q blocks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="witsenhausen", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="solve and certify the dual program")
    _common_model(b)
    b.add_argument("--precision", type=int, default=512, help="bits for the certification sweep")
    b.add_argument("--epsilon", type=float, default=1e-2, help="tail slack used by the certification")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="directory for report and solution files")
    b.add_argument("--export-sdpa", dest="export_sdpa", metavar="FILE")

    c = sub.add_parser("cuts", help="validate or generate inequality files")
    csub = c.add_subparsers(dest="subcommand", required=True)
    cv = csub.add_parser("validate")
    cv.add_argument("paths", nargs="*")
    cg = csub.add_parser("generate")
    _common_model(cg)
    cg.add_argument("--primal", help="file of 'k a(k)' lines; solved from --n/--d when omitted")
    cg.add_argument("--budget", type=int, default=5)
    cg.add_argument("--seed", type=int, default=0)
    cg.add_argument("--out", required=True)

    f = sub.add_parser("finite", help="finite-graph hierarchies")
    f.add_argument("subcommand", choices=["alpha", "theta", "lasserre", "delta", "gamma", "polya"])
    f.add_argument("paths", nargs="+", metavar="FILE")
    f.add_argument("--k", type=int, default=1)
    f.add_argument("--r", type=int, default=1)
    f.add_argument("--out", help="also write the CSV here")

    e = sub.add_parser("export", help="write the dual program in SDPA sparse format")
    _common_model(e)
    e.add_argument("--out", required=True)
    return parser


def main(argv=None, out=sys.stdout) -> int:
    _threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = RunConfig.from_mapping(vars(args))
        return COMMANDS[cfg.command](cfg, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
