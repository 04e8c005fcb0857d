"""Block-structured SDP containers shared by the model, the solver and the exporters.

A problem is stated over three kinds of variables: symmetric matrices
constrained to be positive semidefinite (``psd`` blocks), nonnegative vectors
(``diag`` blocks) and free scalars.  Linear rows have sense ``"="`` or ``">="``.
:func:`standard_form` turns a problem into the equality form
``min <C, X> + c_f x_f  s.t.  A(X) + B x_f = b,  X in cone`` used by the
interior-point solver and the SDPA exporter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

PSD = "psd"
DIAG = "diag"


@dataclass(frozen=True)
class Block:
    name: str
    size: int
    kind: str = PSD
    floor: float = 0.0

    def __post_init__(self):
        if self.kind not in (PSD, DIAG):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("block size must be positive")
        if self.floor < 0:
            raise ValueError("block floor must be nonnegative")


@dataclass(frozen=True)
class Entry:
    """Reference to one variable: a matrix entry ``(i, j)``, a diagonal slot ``(i, i)`` or a free scalar."""

    kind: str  # "block" or "free"
    index: int
    i: int = 0
    j: int = 0


@dataclass
class Row:
    terms: list  # list of (Entry, value)
    sense: str
    rhs: float
    label: str = ""


class SdpProblem:
    """Mutable builder for a block SDP; freeze with :meth:`finalize` before solving."""

    def __init__(self, sense: str = "min", metadata: Mapping | None = None):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.sense = sense
        self.blocks: list[Block] = []
        self.free_names: list[str] = []
        self.rows: list[Row] = []
        self.objective: list = []
        self.objective_constant = 0.0
        self.metadata = dict(metadata or {})
        self._block_index: dict[str, int] = {}
        self._free_index: dict[str, int] = {}
        self._frozen = False

    # -- declarations -------------------------------------------------------------------------
    def _check_open(self):
        if self._frozen:
            raise RuntimeError("problem is frozen")

    def add_block(self, name: str, size: int, kind: str = PSD, floor: float = 0.0) -> int:
        self._check_open()
        if name in self._block_index or name in self._free_index:
            raise ValueError(f"duplicate variable name {name!r}")
        self.blocks.append(Block(name, size, kind, floor))
        self._block_index[name] = len(self.blocks) - 1
        return len(self.blocks) - 1

    def add_free(self, name: str) -> Entry:
        self._check_open()
        if name in self._block_index or name in self._free_index:
            raise ValueError(f"duplicate variable name {name!r}")
        self.free_names.append(name)
        self._free_index[name] = len(self.free_names) - 1
        return Entry("free", len(self.free_names) - 1)

    def block_id(self, name: str) -> int:
        return self._block_index[name]

    def entry(self, block: str | int, i: int, j: int | None = None) -> Entry:
        b = self._block_index[block] if isinstance(block, str) else block
        blk = self.blocks[b]
        j = i if j is None else j
        if blk.kind == DIAG and i != j:
            raise ValueError("diagonal blocks have no off-diagonal entries")
        if not (0 <= i < blk.size and 0 <= j < blk.size):
            raise IndexError(f"entry ({i},{j}) outside block {blk.name} of size {blk.size}")
        return Entry("block", b, min(i, j), max(i, j))

    def free(self, name: str) -> Entry:
        return Entry("free", self._free_index[name])

    # -- rows ---------------------------------------------------------------------------------
    def _check_terms(self, terms):
        out = []
        for e, v in terms:
            if not isinstance(e, Entry):
                raise TypeError("row terms must reference declared entries")
            if e.kind == "free":
                if not 0 <= e.index < len(self.free_names):
                    raise ValueError("row references an undeclared free variable")
            elif not 0 <= e.index < len(self.blocks):
                raise ValueError("row references an undeclared block")
            v = float(v)
            if v:
                out.append((e, v))
        return out

    def add_row(self, terms: Iterable, sense: str, rhs: float, label: str = "") -> int:
        """Add ``sum v * <E, X>`` with off-diagonal entries meaning the symmetric pair.

        A term ``(entry(b, i, j), v)`` with ``i != j`` contributes ``2 v X_ij``
        (the SDPA convention of listing only the upper triangle).
        """
        self._check_open()
        if sense not in ("=", ">="):
            raise ValueError("row sense must be '=' or '>='")
        self.rows.append(Row(self._check_terms(terms), sense, float(rhs), label))
        return len(self.rows) - 1

    def set_objective(self, terms: Iterable, constant: float = 0.0):
        self._check_open()
        self.objective = self._check_terms(terms)
        self.objective_constant = float(constant)

    def finalize(self) -> "SdpProblem":
        self._frozen = True
        return self

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def inventory(self) -> list[tuple[str, int, str]]:
        return [(b.name, b.size, b.kind) for b in self.blocks]


@dataclass
class SdpSolution:
    """Solver output mapped back onto the problem's variables."""

    blocks: dict  # name -> ndarray (matrix for psd, vector for diag)
    free: dict  # name -> float
    row_duals: np.ndarray
    primal_objective: float
    dual_objective: float
    status: str = "optimal"
    iterations: int = 0
    gap: float = 0.0
    primal_infeasibility: float = 0.0
    dual_infeasibility: float = 0.0
    log: list = field(default_factory=list)
    dual_blocks: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.primal_objective

    def min_eigenvalues(self) -> dict:
        out = {}
        for name, val in self.blocks.items():
            val = np.asarray(val)
            out[name] = float(np.linalg.eigvalsh(val)[0]) if val.ndim == 2 else float(val.min(initial=np.inf))
        return out


@dataclass
class StandardForm:
    """``min <C, X> + c_f x_f + const  s.t.  A(X) + B x_f = b`` over a product cone."""

    sizes: list  # block sizes
    kinds: list  # PSD or DIAG
    A: list  # per block: csr (m x size^2) for psd (full symmetric vec), csr (m x size) for diag
    B: sp.csr_matrix  # m x p
    b: np.ndarray
    C: list  # per block: dense matrix or vector
    c_free: np.ndarray
    constant: float
    sign: float  # +1 for min problems, -1 when the user problem maximizes
    floors: list
    slack_rows: list  # rows of the user problem converted with a slack
    num_user_blocks: int

    @property
    def m(self) -> int:
        return len(self.b)


def standard_form(problem: SdpProblem) -> StandardForm:
    """Convert to equality form; ``>=`` rows get a surplus variable in an extra diag block.

    Blocks with a positive ``floor`` are shifted, ``X = X' + floor * I``, so
    the solver variable ``X'`` is only required to be psd.
    """
    rows = problem.rows
    m = len(rows)
    slack_rows = [r for r, row in enumerate(rows) if row.sense == ">="]
    sizes = [b.size for b in problem.blocks]
    kinds = [b.kind for b in problem.blocks]
    floors = [b.floor for b in problem.blocks]
    if slack_rows:
        sizes.append(len(slack_rows))
        kinds.append(DIAG)
        floors.append(0.0)
    nb = len(sizes)
    coo = [([], [], []) for _ in range(nb)]
    fr, fc, fv = [], [], []
    b = np.array([row.rhs for row in rows], dtype=float)

    def put(target, r, e, v):
        if e.kind == "free":
            fr.append(r)
            fc.append(e.index)
            fv.append(v)
            return
        k = e.index
        n = sizes[k]
        rr, cc, vv = target[k]
        if kinds[k] == DIAG:
            rr.append(r)
            cc.append(e.i)
            vv.append(v)
        elif e.i == e.j:
            rr.append(r)
            cc.append(e.i * n + e.i)
            vv.append(v)
        else:
            rr += [r, r]
            cc += [e.i * n + e.j, e.j * n + e.i]
            vv += [v, v]

    for r, row in enumerate(rows):
        for e, v in row.terms:
            put(coo, r, e, v)
    for s, r in enumerate(slack_rows):
        coo[-1][0].append(r)
        coo[-1][1].append(s)
        coo[-1][2].append(-1.0)
    A = []
    for k in range(nb):
        width = sizes[k] ** 2 if kinds[k] == PSD else sizes[k]
        rr, cc, vv = coo[k]
        A.append(sp.csr_matrix((vv, (rr, cc)), shape=(m, width)))
    B = sp.csr_matrix((fv, (fr, fc)), shape=(m, len(problem.free_names)))
    sign = 1.0 if problem.sense == "min" else -1.0
    C = [np.zeros((s, s)) if kd == PSD else np.zeros(s) for s, kd in zip(sizes, kinds)]
    c_free = np.zeros(len(problem.free_names))
    for e, v in problem.objective:
        v = sign * v
        if e.kind == "free":
            c_free[e.index] += v
        elif kinds[e.index] == DIAG:
            C[e.index][e.i] += v
        elif e.i == e.j:
            C[e.index][e.i, e.i] += v
        else:
            C[e.index][e.i, e.j] += v
            C[e.index][e.j, e.i] += v
    constant = sign * problem.objective_constant
    for k, fl in enumerate(floors):
        if fl:
            eye = np.eye(sizes[k]).ravel() if kinds[k] == PSD else np.ones(sizes[k])
            b = b - fl * (A[k] @ eye)
            constant += fl * (np.trace(C[k]) if kinds[k] == PSD else C[k].sum())
    return StandardForm(sizes, kinds, A, B, b, C, c_free, constant, sign, floors, slack_rows, len(problem.blocks))


def block_inner(kind: str, Cb, Xb) -> float:
    return float(np.sum(Cb * Xb))


def apply_A(std: StandardForm, X: list, x_free: np.ndarray) -> np.ndarray:
    out = std.B @ x_free if std.B.shape[1] else np.zeros(std.m)
    for k, Xk in enumerate(X):
        out = out + std.A[k] @ np.ravel(Xk)
    return out


def apply_At(std: StandardForm, y: np.ndarray) -> list:
    out = []
    for k, kind in enumerate(std.kinds):
        v = std.A[k].T @ y
        if kind == PSD:
            n = std.sizes[k]
            v = v.reshape(n, n)
            v = 0.5 * (v + v.T)
        out.append(v)
    return out


# -- native solution archive ------------------------------------------------------------------------
#
# Layout (all integers little-endian):
#   magic  b"WSOL"           4 bytes
#   version                  u16
#   header length            u64, followed by a UTF-8 JSON header
#   one record per array     u64 byte length, then float64 little-endian data
# The header lists scalars, free variables and, in order, the name, section and
# shape of every array record.

SOLUTION_MAGIC = b"WSOL"
SOLUTION_VERSION = 1


def save_solution(destination, sol: SdpSolution) -> None:
    import json
    import struct

    arrays = [("row_duals", "", np.asarray(sol.row_duals, dtype="<f8"))]
    arrays += [("blocks", k, np.asarray(v, dtype="<f8")) for k, v in sol.blocks.items()]
    arrays += [("dual_blocks", k, np.asarray(v, dtype="<f8")) for k, v in sol.dual_blocks.items()]
    arrays.append(("log", "", np.asarray(sol.log, dtype="<f8").reshape(len(sol.log), -1)))
    header = {
        "status": sol.status,
        "primal_objective": sol.primal_objective,
        "dual_objective": sol.dual_objective,
        "iterations": sol.iterations,
        "gap": sol.gap,
        "primal_infeasibility": sol.primal_infeasibility,
        "dual_infeasibility": sol.dual_infeasibility,
        "free": sol.free,
        "arrays": [{"section": s, "name": k, "shape": list(a.shape)} for s, k, a in arrays],
    }
    raw = json.dumps(header, sort_keys=True).encode()
    parts = [SOLUTION_MAGIC + struct.pack("<HQ", SOLUTION_VERSION, len(raw)) + raw]
    for _, _, a in arrays:
        data = np.ascontiguousarray(a).tobytes()
        parts.append(struct.pack("<Q", len(data)) + data)
    blob = b"".join(parts)
    if hasattr(destination, "write"):
        destination.write(blob)
    else:
        with open(destination, "wb") as fh:
            fh.write(blob)


def load_solution(source) -> SdpSolution:
    import json
    import struct

    if hasattr(source, "read"):
        blob = source.read()
    else:
        with open(source, "rb") as fh:
            blob = fh.read()
    if blob[:4] != SOLUTION_MAGIC:
        raise ValueError("not a solution archive")
    version, hlen = struct.unpack_from("<HQ", blob, 4)
    if version != SOLUTION_VERSION:
        raise ValueError(f"unsupported archive version {version}")
    pos = 14
    header = json.loads(blob[pos : pos + hlen].decode())
    pos += hlen
    sections = {"blocks": {}, "dual_blocks": {}}
    row_duals, log = np.zeros(0), []
    for rec in header["arrays"]:
        (size,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        a = np.frombuffer(blob[pos : pos + size], dtype="<f8").reshape(rec["shape"]).copy()
        pos += size
        if rec["section"] == "row_duals":
            row_duals = a
        elif rec["section"] == "log":
            log = [tuple(r) for r in a]
        else:
            sections[rec["section"]][rec["name"]] = a
    if pos != len(blob):
        raise ValueError("trailing bytes in solution archive")
    return SdpSolution(
        blocks=sections["blocks"],
        free=header["free"],
        row_duals=row_duals,
        primal_objective=header["primal_objective"],
        dual_objective=header["dual_objective"],
        status=header["status"],
        iterations=header["iterations"],
        gap=header["gap"],
        primal_infeasibility=header["primal_infeasibility"],
        dual_infeasibility=header["dual_infeasibility"],
        log=log,
        dual_blocks=sections["dual_blocks"],
    )
