"""Independent brute-force oracles and random instance generators for the tests."""

from __future__ import annotations

import itertools

import numpy as np

from wildfire_planner.domain import PlanningInstance


def random_instance(rng: np.random.Generator, n: int, decimals: int = 2, budget_scale: float = 1.0) -> PlanningInstance:
    """Random valid instance with delta on a decimal grid so the knapsack DP applies."""
    h = np.round(rng.uniform(0.5, 3.0, n), 3)
    beta = np.round(rng.uniform(0.0, 1.0, n), 3)
    gamma = np.round(rng.uniform(0.0, 0.4, n), decimals)
    delta = np.round(rng.uniform(0.1, 1.0, n), decimals)
    c = np.round(rng.uniform(0.2, 1.0, n), 2)
    b = np.round(rng.uniform(0.2, 1.0, n), 2)
    C = float(np.round(rng.uniform(0.0, c.sum()), 2))
    B = float(np.round(rng.uniform(0.0, b.sum()), 2))
    W = float(np.round(rng.uniform(0.3, 3.0) * budget_scale, decimals))
    return PlanningInstance(h, beta, gamma, delta, c, b, C, B, W)


def brute_recourse(inst: PlanningInstance, x, y, u) -> tuple[float, np.ndarray]:
    """Minimum inner cost by enumerating every integer z with 0 <= z <= floor(u x)."""
    x, y, u = (np.asarray(a, dtype=float) for a in (x, y, u))
    cap = np.floor(u * x + 1e-9).astype(int)
    a = inst.h * (1.0 - inst.beta * y)
    budget = inst.W - float(inst.gamma @ y)
    best, best_z = np.inf, None
    for z in itertools.product(*(range(k + 1) for k in cap)):
        z = np.asarray(z, dtype=float)
        if inst.delta @ z <= budget + 1e-9:
            cost = float(a @ (u - z))
            if cost < best - 1e-12:
                best, best_z = cost, z
    return best, best_z


def feasible_plans(inst: PlanningInstance, require_reliability: bool = True):
    """Every binary (x, y) with y <= x inside both budgets (and gamma.y <= W)."""
    n = inst.n
    for xs in itertools.product((0, 1), repeat=n):
        x = np.asarray(xs, dtype=float)
        if inst.c @ x > inst.C + 1e-12:
            continue
        for ys in itertools.product((0, 1), repeat=n):
            y = np.asarray(ys, dtype=float)
            if np.any(y > x) or inst.b @ y > inst.B + 1e-12:
                continue
            if require_reliability and inst.gamma @ y > inst.W + 1e-12:
                continue
            yield x, y


def box_corner_oracle(inst: PlanningInstance, U, recourse=None) -> float:
    """min over plans of the recourse cost at the upper corner u = U."""
    recourse = recourse or (lambda x, y, u: brute_recourse(inst, x, y, u)[0])
    return min(recourse(x, y, np.asarray(U, dtype=float)) for x, y in feasible_plans(inst))


def polytope_points_2d(L, U, gL: float, gU: float, step: float = 0.05) -> list[np.ndarray]:
    """Vertices plus a regular grid of {L <= u <= U, gL <= u1 + u2 <= gU} for n = 2."""
    pts = []
    for u1 in np.round(np.arange(L[0], U[0] + 1e-9, step), 10):
        for u2 in np.round(np.arange(L[1], U[1] + 1e-9, step), 10):
            pts.append((u1, u2))
    for u1 in (L[0], U[0]):
        for s in (gL, gU):
            pts.append((u1, s - u1))
    for u2 in (L[1], U[1]):
        for s in (gL, gU):
            pts.append((s - u2, u2))
    keep = []
    for p in pts:
        p = np.asarray(p, dtype=float)
        if np.all(p >= np.asarray(L) - 1e-9) and np.all(p <= np.asarray(U) + 1e-9) and gL - 1e-9 <= p.sum() <= gU + 1e-9:
            keep.append(p)
    return keep


def grid_vertex_oracle(inst: PlanningInstance, L, U, gL: float, gU: float, recourse=None) -> float:
    recourse = recourse or (lambda x, y, u: brute_recourse(inst, x, y, u)[0])
    pts = polytope_points_2d(L, U, gL, gU)
    return min(max(recourse(x, y, u) for u in pts) for x, y in feasible_plans(inst))


def lp_vertex_oracle(c, A, b, lb, ub, chunk: int = 20000) -> float:
    """min c.x s.t. A x <= b, lb <= x <= ub by enumerating every basic solution."""
    c, A, b, lb, ub = (np.asarray(v, dtype=float) for v in (c, A, b, lb, ub))
    n = A.shape[1]
    rows = np.vstack([A, np.eye(n), -np.eye(n)])
    rhs = np.concatenate([b, ub, -lb])
    combos = np.array(list(itertools.combinations(range(rows.shape[0]), n)))
    best = np.inf
    for start in range(0, len(combos), chunk):
        idx = combos[start:start + chunk]
        M = rows[idx]
        ok = np.abs(np.linalg.det(M)) > 1e-10
        if not ok.any():
            continue
        X = np.linalg.solve(M[ok], rhs[idx[ok]][..., None])[..., 0]
        feas = np.all(X @ rows.T <= rhs + 1e-7, axis=1)
        if feas.any():
            best = min(best, float(np.min(X[feas] @ c)))
    return best
