"""Adapter running a :class:`LinearModel` through SciPy's HiGHS bindings."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import LinearConstraint, linprog, milp
from scipy.optimize import Bounds

from .model import LinearModel, SolveResult, Status


def _split(model: LinearModel):
    c, A, senses, b, lb, ub, integrality = model.arrays()
    sign = 1.0 if model.sense == "min" else -1.0
    return sign, sign * c, A, senses, b, lb, ub, integrality


def highs_lp(model: LinearModel, feas_tol: float = 1e-7, max_iters: int = 50_000) -> SolveResult:
    sign, c, A, senses, b, lb, ub, _ = _split(model)
    le = [k for k, s in enumerate(senses) if s == "<="]
    ge = [k for k, s in enumerate(senses) if s == ">="]
    eq = [k for k, s in enumerate(senses) if s == "="]
    A_ub = np.vstack([A[le], -A[ge]]) if le or ge else None
    b_ub = np.concatenate([b[le], -b[ge]]) if le or ge else None
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A[eq] if eq else None,
        b_eq=b[eq] if eq else None,
        bounds=list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None))),
        method="highs",
        options={"primal_feasibility_tolerance": feas_tol, "maxiter": max_iters},
    )
    if res.status == 2:
        return SolveResult(Status.INFEASIBLE, iterations=int(res.nit))
    if res.status == 3:
        return SolveResult(Status.UNBOUNDED, iterations=int(res.nit))
    if res.status == 1:
        return SolveResult(Status.ITERATION_LIMIT, iterations=int(res.nit))
    if res.status != 0:
        raise RuntimeError(f"HiGHS LP failed: {res.message}")
    duals = np.zeros(len(senses))
    marg_ub = res.ineqlin.marginals if (le or ge) else np.zeros(0)
    duals[le] = marg_ub[: len(le)]
    duals[ge] = -marg_ub[len(le):]
    if eq:
        duals[eq] = res.eqlin.marginals
    return SolveResult(
        Status.OPTIMAL,
        x=np.asarray(res.x, dtype=float),
        objective=sign * float(res.fun) + model.offset,
        iterations=int(res.nit),
        duals=sign * duals,
    )


def highs_milp(model: LinearModel, gap_tol: float = 1e-6, node_limit: int = 200_000,
               feas_tol: float = 1e-7) -> SolveResult:
    sign, c, A, senses, b, lb, ub, integrality = _split(model)
    constraints = []
    if len(senses):
        lo = np.array([-math.inf if s == "<=" else r for s, r in zip(senses, b)])
        hi = np.array([math.inf if s == ">=" else r for s, r in zip(senses, b)])
        constraints.append(LinearConstraint(A, lo, hi))
    res = milp(
        c,
        constraints=constraints,
        integrality=integrality.astype(int),
        bounds=Bounds(lb, ub),
        options={"mip_rel_gap": 1e-9, "node_limit": node_limit},
    )
    if res.status == 2:
        return SolveResult(Status.INFEASIBLE)
    if res.status == 3:
        return SolveResult(Status.UNBOUNDED)
    if res.x is None:
        if res.status == 1:
            return SolveResult(Status.ITERATION_LIMIT, gap=math.inf)
        raise RuntimeError(f"HiGHS MILP failed: {res.message}")
    x = np.asarray(res.x, dtype=float)
    x[integrality] = np.round(x[integrality])
    val = float(c @ x)
    bound = getattr(res, "mip_dual_bound", None)
    gap = 0.0 if bound is None or not math.isfinite(bound) else max(0.0, val - float(bound))
    status = Status.OPTIMAL if res.status == 0 else Status.ITERATION_LIMIT
    if status is Status.OPTIMAL and gap > gap_tol:
        # HiGHS stops at its relative gap; report the absolute gap honestly
        status = Status.OPTIMAL if gap <= max(gap_tol, 1e-9 * abs(val)) else Status.ITERATION_LIMIT
    return SolveResult(
        status,
        x=x,
        objective=sign * val + model.offset,
        gap=gap,
        nodes=int(getattr(res, "mip_node_count", 0) or 0),
    )
