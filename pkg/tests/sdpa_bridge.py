"""Solve an SDPA sparse problem with cvxpy, as an external reference solver.

SDPA dual side: ``max <F_0, Y>  s.t.  <F_i, Y> = c_i,  Y psd`` (diagonal
blocks are nonnegative vectors).  Only the parsed file is used, so the
internal solver and this one share nothing beyond the file format.
"""

import cvxpy as cp
import numpy as np
import scipy.sparse as sp


def solve_sdpa(data, solver="CLARABEL"):
    m = data.m
    sizes = data.block_sizes
    rows = {k: ([], [], []) for k in range(len(sizes))}
    objective = {k: ([], []) for k in range(len(sizes))}
    for mat, blk, i, j, v in data.entries:
        k = blk - 1
        n = abs(sizes[k])
        if sizes[k] < 0:
            pos = [i - 1]
        else:
            pos = [(i - 1) * n + (j - 1)] + ([(j - 1) * n + (i - 1)] if i != j else [])
        for p in pos:
            if mat == 0:
                objective[k][0].append(p)
                objective[k][1].append(v)
            else:
                rows[k][0].append(mat - 1)
                rows[k][1].append(p)
                rows[k][2].append(v)
    variables, cons = [], []
    lhs = 0
    obj = 0
    for k, s in enumerate(sizes):
        n = abs(s)
        if s < 0:
            Y = cp.Variable(n, nonneg=True)
            vec = Y
            width = n
        else:
            Y = cp.Variable((n, n), PSD=True)
            vec = cp.vec(Y, order="C")
            width = n * n
        variables.append(Y)
        r, c, v = rows[k]
        if r:
            lhs = lhs + sp.csr_matrix((v, (r, c)), shape=(m, width)) @ vec
        oc, ov = objective[k]
        if oc:
            w = np.zeros(width)
            np.add.at(w, oc, ov)
            obj = obj + w @ vec
    cons.append(lhs == data.c)
    prob = cp.Problem(cp.Maximize(obj), cons)
    prob.solve(solver=solver)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"external solve failed: {prob.status}")
    return prob.value, variables, cons[0].dual_value
