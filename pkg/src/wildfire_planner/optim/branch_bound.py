"""Best-first branch-and-bound over simplex relaxations."""

from __future__ import annotations

import heapq
import itertools
import math

import numpy as np

from .model import LinearModel, SolveResult, Status
from .simplex import solve_standard, standardize

INT_TOL = 1e-6


def _lp_result(model, sf, out) -> SolveResult:
    if out.status is not Status.OPTIMAL:
        return SolveResult(out.status, iterations=out.iterations)
    x = out.x[: sf.n_struct]
    return SolveResult(
        Status.OPTIMAL,
        x=x,
        objective=sf.sign * out.value + sf.offset,
        iterations=out.iterations,
        duals=sf.sign * out.duals,
    )


def simplex_lp(model: LinearModel, feas_tol: float = 1e-7, max_iters: int = 50_000) -> SolveResult:
    sf = standardize(model)
    return _lp_result(model, sf, solve_standard(sf, feas_tol=feas_tol, max_iters=max_iters))


def branch_and_bound(model: LinearModel, gap_tol: float = 1e-6, node_limit: int = 200_000,
                     feas_tol: float = 1e-7, max_iters: int = 50_000) -> SolveResult:
    """Exact MILP solve; branches on the most fractional variable (lowest index on ties).

    Nodes are explored in order of their relaxation bound, the node counter
    breaking ties, so the search is fully deterministic.
    """
    sf = standardize(model)
    int_idx = np.flatnonzero(sf.integrality)
    lb0 = sf.lb.copy()
    ub0 = sf.ub.copy()
    # integer bounds can be rounded inward without losing solutions
    lb0[int_idx] = np.ceil(lb0[int_idx] - INT_TOL)
    ub0[int_idx] = np.floor(ub0[int_idx] + INT_TOL)
    for j in int_idx:
        if not (math.isfinite(lb0[j]) and math.isfinite(ub0[j])):
            raise ValueError(f"integer variable x{j} needs finite bounds")

    counter = itertools.count()
    total_iters = 0

    def relax(lb, ub):
        nonlocal total_iters
        out = solve_standard(sf, lb, ub, feas_tol=feas_tol, max_iters=max_iters)
        total_iters += out.iterations
        return out

    root = relax(lb0, ub0)
    if root.status is not Status.OPTIMAL:
        return SolveResult(root.status, iterations=total_iters, nodes=1)

    heap = [(root.value, next(counter), lb0, ub0, root.x)]
    best_val = math.inf
    best_x = None
    nodes = 1
    bound = root.value
    while heap:
        val, _, lb, ub, x = heapq.heappop(heap)
        bound = val
        if val >= best_val - gap_tol:
            bound = val
            break
        xi = x[int_idx]
        frac = np.abs(xi - np.round(xi))
        k = int(np.argmax(frac))
        if frac[k] <= INT_TOL:
            cand = x.copy()
            cand[int_idx] = np.round(xi)
            v = float(sf.c @ cand)
            if v < best_val:
                best_val, best_x = v, cand
            continue
        j = int_idx[k]
        for side in (0, 1):
            clb, cub = lb.copy(), ub.copy()
            if side == 0:
                cub[j] = math.floor(x[j])
            else:
                clb[j] = math.ceil(x[j])
            if clb[j] > cub[j]:
                continue
            out = relax(clb, cub)
            nodes += 1
            if out.status is Status.OPTIMAL and out.value < best_val - gap_tol:
                heapq.heappush(heap, (out.value, next(counter), clb, cub, out.x))
        if nodes >= node_limit:
            gap = best_val - min(h[0] for h in heap) if heap and best_x is not None else math.inf
            return _mip_result(sf, Status.ITERATION_LIMIT, best_x, best_val, gap, total_iters, nodes)
    else:
        bound = best_val

    if best_x is None:
        return SolveResult(Status.INFEASIBLE, iterations=total_iters, nodes=nodes)
    gap = max(0.0, best_val - bound)
    return _mip_result(sf, Status.OPTIMAL, best_x, best_val, gap, total_iters, nodes)


def _mip_result(sf, status, x, val, gap, iters, nodes) -> SolveResult:
    if x is None:
        return SolveResult(status, gap=gap, iterations=iters, nodes=nodes)
    return SolveResult(
        status,
        x=x[: sf.n_struct].copy(),
        objective=sf.sign * val + sf.offset,
        gap=float(gap),
        iterations=iters,
        nodes=nodes,
    )
