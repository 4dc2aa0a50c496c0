"""Bounded-integer knapsack oracle for the PSPS recourse problem.

For fixed ``(x, y, u)`` the recourse problem is

    max  sum_i a_i z_i          a_i = h_i (1 - beta_i y_i)
    s.t. sum_i delta_i z_i <= W - sum_i gamma_i y_i
         0 <= z_i <= floor(u_i x_i),  z integer

which is solved exactly by dynamic programming once ``delta`` lives on a
decimal grid; the budget is then floored onto the same grid without loss.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..domain import PlanningInstance
from .model import LinearModel, Status

log = logging.getLogger(__name__)

MAX_DECIMALS = 4
MAX_GRID = 5_000_000


@dataclass(frozen=True)
class KnapsackResult:
    z: np.ndarray
    w: np.ndarray
    cost: float
    used_fallback: bool = False


def grid_scale(values: np.ndarray, max_decimals: int = MAX_DECIMALS) -> int | None:
    """Smallest power of ten (at most 10**max_decimals) making every value integral."""
    for d in range(max_decimals + 1):
        scaled = values * 10**d
        if np.all(np.abs(scaled - np.round(scaled)) <= 1e-9 * np.maximum(1.0, np.abs(scaled))):
            return 10**d
    return None


def _bounded_knapsack(values: np.ndarray, weights: np.ndarray, counts: np.ndarray, capacity: int) -> np.ndarray:
    """Exact bounded knapsack by binary splitting of item multiplicities.

    Returns the optimal count per item.
    """
    best = np.zeros(capacity + 1)
    # record each 0/1 piece and its take-mask for reconstruction
    pieces: list[tuple[int, int, np.ndarray]] = []
    for i, (v, wt, cnt) in enumerate(zip(values, weights, counts)):
        k = 1
        remaining = int(cnt)
        while remaining > 0:
            take = min(k, remaining)
            remaining -= take
            k *= 2
            pv, pw = v * take, int(wt) * take
            if pv <= 0:
                continue
            if pw == 0:
                pieces.append((i, take, np.ones(capacity + 1, dtype=bool)))
                best = best + pv
                continue
            if pw > capacity:
                continue
            cand = np.full(capacity + 1, -np.inf)
            cand[pw:] = best[:-pw] + pv
            mask = cand > best + 1e-12
            best = np.where(mask, cand, best)
            pieces.append((i, take, mask))
    z = np.zeros(len(values), dtype=int)
    cap = capacity
    for i, take, mask in reversed(pieces):
        if mask[cap]:
            z[i] += take
            cap -= int(weights[i]) * take
    return z


def solve_recourse_knapsack(inst: PlanningInstance, x, y, u, budget_remaining: float | None = None) -> KnapsackResult:
    """Optimal PSPS counts for a fixed plan and scenario.

    ``cost`` is the induced minimum of ``sum_i h_i (1 - beta_i y_i)(u_i - z_i)``.
    Falls back to branch-and-bound when ``delta`` cannot be put on a grid of
    at most four decimals; ``used_fallback`` flags that case.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if budget_remaining is None:
        budget_remaining = inst.W - float(inst.gamma @ y)
    if budget_remaining < -1e-12:
        raise ValueError(f"reliability budget exhausted by fast-trip: remaining {budget_remaining:g}")
    budget_remaining = max(0.0, budget_remaining)
    a = inst.h * (1.0 - inst.beta * y)
    counts = np.floor(u * x + 1e-9).astype(int)
    base = float(a @ u)

    scale = grid_scale(inst.delta)
    if scale is None:
        cap = None
    else:
        weights = np.round(inst.delta * scale).astype(np.int64)
        cap = int(math.floor(budget_remaining * scale + 1e-9))
        # positive-weight items can never exceed capacity/weight copies
        limit = np.where(weights > 0, cap // np.maximum(weights, 1), counts)
        counts = np.minimum(counts, limit)
    if cap is None or cap > MAX_GRID:
        log.warning("knapsack grid too fine (scale=%s); falling back to branch-and-bound", scale)
        z = _milp_fallback(a, inst.delta, counts, budget_remaining)
        return KnapsackResult(z, z * y, base - float(a @ z), used_fallback=True)

    z = _bounded_knapsack(a, weights, counts, cap).astype(float)
    return KnapsackResult(z, z * y, base - float(a @ z))


def _milp_fallback(a, delta, counts, budget) -> np.ndarray:
    from . import solve_milp

    model = LinearModel("knapsack")
    z = model.add_vars(len(a), lb=0.0, ub=counts.astype(float), integer=True, group="z")
    model.add_constr({j: d for j, d in zip(z, delta)}, "<=", budget)
    model.set_objective({j: v for j, v in zip(z, a)}, "max")
    res = solve_milp(model)
    if res.status is not Status.OPTIMAL:
        raise RuntimeError(f"knapsack fallback failed: {res.status}")
    return np.round(res.x).astype(float)
