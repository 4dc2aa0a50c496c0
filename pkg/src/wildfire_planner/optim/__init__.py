"""LP / MILP backend: model contract, in-repo simplex + branch-and-bound, HiGHS adapter."""

from __future__ import annotations

import math

import numpy as np

from .branch_bound import branch_and_bound, simplex_lp
from .knapsack import KnapsackResult, grid_scale, solve_recourse_knapsack
from .model import INF, Constraint, LinearModel, SolveResult, Status, Variable, parse_dump

ENGINES = ("builtin", "highs")


def _check_engine(engine: str) -> None:
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")


def solve_lp(model: LinearModel, feas_tol: float = 1e-7, max_iters: int = 50_000,
             engine: str = "builtin") -> SolveResult:
    """Solve a pure LP. Integrality flags are rejected."""
    _check_engine(engine)
    if model.is_mip:
        raise ValueError("solve_lp called on a model with integer variables")
    model.validate()
    if engine == "highs":
        from .highs import highs_lp

        return highs_lp(model, feas_tol=feas_tol, max_iters=max_iters)
    return simplex_lp(model, feas_tol=feas_tol, max_iters=max_iters)


def solve_milp(model: LinearModel, gap_tol: float = 1e-6, node_limit: int = 200_000,
               engine: str = "builtin") -> SolveResult:
    """Solve a MILP to an absolute gap of ``gap_tol``.

    A model without integer variables is passed straight to :func:`solve_lp`.
    """
    _check_engine(engine)
    if not model.is_mip:
        return solve_lp(model, engine=engine)
    model.validate()
    if engine == "highs":
        from .highs import highs_milp

        return highs_milp(model, gap_tol=gap_tol, node_limit=node_limit)
    return branch_and_bound(model, gap_tol=gap_tol, node_limit=node_limit)


def lagrangian_bound(model: LinearModel, duals) -> float:
    """Lower bound on a minimisation model from row multipliers ``duals``.

    Multipliers follow the sign convention of :class:`SolveResult.duals`
    (sensitivity of the optimum to each right-hand side): ``<=`` rows need
    ``y <= 0`` and ``>=`` rows ``y >= 0``. Any sign-feasible vector gives a
    valid bound; ``-inf`` is returned when the inner minimisation is unbounded.
    """
    if model.sense != "min":
        raise ValueError("lagrangian_bound expects a minimisation model")
    c, A, senses, b, lb, ub, _ = model.arrays()
    y = np.asarray(duals, dtype=float)
    for yi, s in zip(y, senses):
        if (s == "<=" and yi > 1e-12) or (s == ">=" and yi < -1e-12):
            return -math.inf
    red = c - A.T @ y if len(senses) else c
    total = float(y @ b) + model.offset
    for rj, lo, hi in zip(red, lb, ub):
        if rj > 0:
            if not math.isfinite(lo):
                return -math.inf
            total += rj * lo
        elif rj < 0:
            if not math.isfinite(hi):
                return -math.inf
            total += rj * hi
    return total


__all__ = [
    "ENGINES",
    "INF",
    "Constraint",
    "KnapsackResult",
    "LinearModel",
    "SolveResult",
    "Status",
    "Variable",
    "grid_scale",
    "lagrangian_bound",
    "parse_dump",
    "solve_lp",
    "solve_milp",
    "solve_recourse_knapsack",
]
