"""Tri-level robust planning by nested column-and-constraint generation.

Outer loop: a master MILP over sectionalization ``x`` and fast-trip ``y``
against a growing pool of ignition scenarios (lower bound). Inner loop, for a
fixed plan: an LP over the uncertainty polytope against a growing pool of
PSPS recourse vectors (upper bound), alternating with exact recourse solves
at the scenario it proposes (lower bound).

Scenarios ``u`` are continuous while PSPS counts ``z`` are integer, so every
``z_i <= u_i x_i`` row is equivalent to ``z_i <= floor(u_i) x_i``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .domain import PlanningInstance, PlanningSolution, RecourseDecision
from .optim import INF, LinearModel, Status, solve_lp, solve_milp, solve_recourse_knapsack
from .uncertainty import BOX, UncertaintySet, project_center

log = logging.getLogger(__name__)

EPS_DEFAULT = 1e-5
MAX_OUTER = 200
MAX_INNER = 500
_FLOOR_TOL = 1e-9


class RecourseInfeasibleError(ValueError):
    """Fast-trip configuration alone exceeds the reliability threshold."""


class SolverLimitError(RuntimeError):
    """An optimisation subproblem hit its iteration or node limit."""


def _floor(v) -> np.ndarray:
    return np.floor(np.asarray(v, dtype=float) + _FLOOR_TOL)


def _bigm(uset: UncertaintySet | None, *vectors) -> np.ndarray:
    """Valid upper bound on each z_i for the McCormick rows."""
    parts = [np.asarray(v, dtype=float) for v in vectors]
    if uset is not None:
        parts.append(uset.seg_U)
    return np.max(np.vstack(parts), axis=0)


def _check_recourse_budget(inst: PlanningInstance, y) -> float:
    rem = inst.W - float(inst.gamma @ np.asarray(y, dtype=float))
    if rem < -1e-9:
        raise RecourseInfeasibleError(
            f"fast-trip reliability impact {inst.gamma @ y:g} exceeds W={inst.W:g}"
        )
    return rem


# -- recourse ------------------------------------------------------------------

def build_recourse_milp(inst: PlanningInstance, x, y, u, uset: UncertaintySet | None = None) -> LinearModel:
    """PSPS recourse MILP with McCormick rows linearising w_i = y_i z_i."""
    x, y, u = (np.asarray(a, dtype=float) for a in (x, y, u))
    _check_recourse_budget(inst, y)
    n = inst.n
    M = _bigm(uset, u)
    model = LinearModel("recourse")
    z = model.add_vars(n, lb=0.0, ub=_floor(u * x), integer=True, group="z")
    w = model.add_vars(n, lb=0.0, ub=INF, group="w")
    model.add_constr({z[i]: inst.delta[i] for i in range(n)}, "<=", inst.W - float(inst.gamma @ y), name="reliability")
    for i in range(n):
        model.add_constr({z[i]: 1.0, w[i]: -1.0}, "<=", M[i] * (1.0 - y[i]), name=f"mc_lo[{i}]")
        model.add_constr({w[i]: 1.0}, "<=", M[i] * y[i], name=f"mc_hi[{i}]")
        model.add_constr({w[i]: 1.0, z[i]: -1.0}, "<=", 0.0, name=f"mc_z[{i}]")
    obj = {z[i]: -inst.h[i] for i in range(n)}
    obj.update({w[i]: inst.h[i] * inst.beta[i] for i in range(n)})
    offset = float(np.sum(inst.h * u * (1.0 - inst.beta * y)))
    model.set_objective(obj, "min", offset)
    return model


def solve_recourse(inst: PlanningInstance, x, y, u, uset: UncertaintySet | None = None,
                   engine: str = "builtin", method: str = "milp") -> RecourseDecision:
    """Optimal PSPS response for a fixed plan and scenario."""
    if method == "knapsack":
        _check_recourse_budget(inst, y)
        res = solve_recourse_knapsack(inst, x, y, u)
        return RecourseDecision(res.z, res.w, res.cost)
    model = build_recourse_milp(inst, x, y, u, uset)
    res = solve_milp(model, engine=engine)
    if res.status is not Status.OPTIMAL:
        raise SolverLimitError(f"recourse solve ended with {res.status.value}")
    z = np.round(res.x[model.groups["z"]])
    w = z * np.asarray(y, dtype=float)
    return RecourseDecision(z, w, float(res.objective))


# -- outer master ----------------------------------------------------------------

MASTER_FORMULATIONS = ("mccormick", "split")


def build_master(inst: PlanningInstance, pool: Sequence[np.ndarray], uset: UncertaintySet,
                 formulation: str = "mccormick") -> LinearModel:
    """Planning MILP against a finite scenario pool, one recourse copy per scenario.

    ``"mccormick"`` carries (z^j, w^j) with McCormick rows for w = y z.
    ``"split"`` is an exact alternative with a tighter relaxation: PSPS counts
    are split into a part on fast-trip segments (z1 <= floor(u) y) and a part
    on the remaining sectionalized ones (z0 <= floor(u) (x - y)).
    """
    if formulation not in MASTER_FORMULATIONS:
        raise ValueError(f"formulation must be one of {MASTER_FORMULATIONS}")
    if not len(pool):
        raise ValueError("scenario pool must be nonempty")
    n = inst.n
    h, beta = inst.h, inst.beta
    model = LinearModel("master")
    eta = model.add_var(-INF, INF, name="eta")
    model.groups["eta"] = [eta]
    x = model.add_vars(n, 0.0, 1.0, integer=True, group="x")
    y = model.add_vars(n, 0.0, 1.0, integer=True, group="y")
    model.add_constr({x[i]: inst.c[i] for i in range(n)}, "<=", inst.C, name="budget_C")
    model.add_constr({y[i]: inst.b[i] for i in range(n)}, "<=", inst.B, name="budget_B")
    for i in range(n):
        model.add_constr({y[i]: 1.0, x[i]: -1.0}, "<=", 0.0, name=f"y_le_x[{i}]")
    for j, u in enumerate(pool):
        u = np.asarray(u, dtype=float)
        if formulation == "split":
            _add_split_block(model, inst, j, u, eta, x, y)
            continue
        # z^j <= floor(u^j) already bounds z^j, so it is the tightest valid McCormick constant
        cap = _floor(u)
        M = cap
        z = model.add_vars(n, 0.0, cap, integer=True, group=f"z{j}")
        w = model.add_vars(n, 0.0, INF, group=f"w{j}")
        # eta >= sum h (u - z - beta u y + beta w)
        row = {eta: 1.0}
        for i in range(n):
            row[z[i]] = h[i]
            row[w[i]] = -h[i] * beta[i]
            row[y[i]] = h[i] * beta[i] * u[i]
        model.add_constr(row, ">=", float(h @ u), name=f"epi[{j}]")
        rel = {y[i]: inst.gamma[i] for i in range(n)}
        for i in range(n):
            rel[z[i]] = rel.get(z[i], 0.0) + inst.delta[i]
        model.add_constr(rel, "<=", inst.W, name=f"reliability[{j}]")
        for i in range(n):
            model.add_constr({z[i]: 1.0, w[i]: -1.0, y[i]: M[i]}, "<=", M[i], name=f"mc_lo[{j},{i}]")
            model.add_constr({w[i]: 1.0, y[i]: -M[i]}, "<=", 0.0, name=f"mc_hi[{j},{i}]")
            model.add_constr({w[i]: 1.0, z[i]: -1.0}, "<=", 0.0, name=f"mc_z[{j},{i}]")
            model.add_constr({z[i]: 1.0, x[i]: -cap[i]}, "<=", 0.0, name=f"z_le_ux[{j},{i}]")
    model.set_objective({eta: 1.0}, "min")
    return model


def _add_split_block(model: LinearModel, inst: PlanningInstance, j: int, u: np.ndarray, eta: int, x, y) -> None:
    n = inst.n
    h, beta = inst.h, inst.beta
    cap = _floor(u)
    z0 = model.add_vars(n, 0.0, cap, integer=True, group=f"z0_{j}")
    z1 = model.add_vars(n, 0.0, cap, integer=True, group=f"z1_{j}")
    # eta >= sum h u - h z0 - h (1 - beta) z1 - h beta u y
    row = {eta: 1.0}
    for i in range(n):
        row[z0[i]] = h[i]
        row[z1[i]] = h[i] * (1.0 - beta[i])
        row[y[i]] = h[i] * beta[i] * u[i]
    model.add_constr(row, ">=", float(h @ u), name=f"epi[{j}]")
    rel = {y[i]: inst.gamma[i] for i in range(n)}
    rel.update({z0[i]: inst.delta[i] for i in range(n)})
    rel.update({z1[i]: inst.delta[i] for i in range(n)})
    model.add_constr(rel, "<=", inst.W, name=f"reliability[{j}]")
    for i in range(n):
        model.add_constr({z0[i]: 1.0, x[i]: -cap[i], y[i]: cap[i]}, "<=", 0.0, name=f"z0_cap[{j},{i}]")
        model.add_constr({z1[i]: 1.0, y[i]: -cap[i]}, "<=", 0.0, name=f"z1_cap[{j},{i}]")


# -- inner master ----------------------------------------------------------------

def _add_polytope(model: LinearModel, uset: UncertaintySet) -> list[int]:
    u = model.add_vars(uset.n, lb=uset.seg_L, ub=uset.seg_U, group="u")
    if uset.mode != BOX:
        for g, idx in enumerate(uset.grouping.members):
            row = {u[i]: 1.0 for i in idx}
            model.add_constr(row, ">=", float(uset.group_L[g]), name=f"group_lo[{g}]")
            model.add_constr(row, "<=", float(uset.group_U[g]), name=f"group_hi[{g}]")
    return u


def build_inner_master(inst: PlanningInstance, x, y, cuts: Sequence[RecourseDecision], uset: UncertaintySet) -> LinearModel:
    """LP choosing the scenario that is worst against every recourse vector found so far."""
    if not len(cuts):
        raise ValueError("at least one recourse cut is required")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = inst.n
    a = inst.h * (1.0 - inst.beta * y)
    model = LinearModel("inner_master")
    theta = model.add_var(-INF, INF, name="theta")
    model.groups["theta"] = [theta]
    u = _add_polytope(model, uset)
    for l, cut in enumerate(cuts):
        z, w = np.asarray(cut.z, dtype=float), np.asarray(cut.w, dtype=float)
        if np.any((x < 0.5) & (z > 0.5)):
            raise AssertionError("recourse cut acts on an unsectionalized segment")
        if np.any(z > uset.seg_U * x + 1e-6):
            raise AssertionError("recourse cut exceeds the uncertainty set's upper bounds")
        row = {theta: 1.0}
        row.update({u[i]: -a[i] for i in range(n)})
        rhs = float(np.sum(-inst.h * z + inst.h * inst.beta * w))
        model.add_constr(row, "<=", rhs, name=f"cut[{l}]")
        for i in np.flatnonzero((x > 0.5) & (z > 0)):
            model.add_constr({u[i]: 1.0}, ">=", float(z[i]), name=f"cut_feas[{l},{i}]")
    model.set_objective({theta: 1.0}, "max")
    return model


@dataclass
class SubproblemResult:
    u: np.ndarray
    value: float
    lb: float
    recourse: RecourseDecision
    iterations: int
    trace: list[dict[str, Any]] = field(default_factory=list)
    status: str = "optimal"


def solve_subproblem(inst: PlanningInstance, x, y, uset: UncertaintySet, eps_in: float = EPS_DEFAULT,
                     init: np.ndarray | None = None, engine: str = "builtin",
                     max_inner: int = MAX_INNER, recourse_method: str = "milp") -> SubproblemResult:
    """Worst-case scenario for a fixed plan via the inner CCG loop."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_recourse_budget(inst, y)
    u0 = project_center(uset, engine=engine) if init is None else np.asarray(init, dtype=float)
    cuts = [solve_recourse(inst, x, y, u0, uset, engine, recourse_method)]
    lb, ub = -math.inf, math.inf
    trace: list[dict[str, Any]] = []
    r = 0
    u_r, rec_r, theta = u0, cuts[0], math.inf
    status = "optimal"
    while ub - lb > eps_in:
        if r >= max_inner:
            status = "iteration_limit"
            log.warning("inner loop hit %d iterations (gap %.3g)", max_inner, ub - lb)
            break
        mps = build_inner_master(inst, x, y, cuts, uset)
        res = solve_lp(mps, engine=engine)
        if res.status is not Status.OPTIMAL:
            raise SolverLimitError(f"inner master ended with {res.status.value}")
        u_r = np.clip(res.x[mps.groups["u"]], uset.seg_L, uset.seg_U)
        theta = float(res.objective)
        ub = theta
        rec_r = solve_recourse(inst, x, y, u_r, uset, engine, recourse_method)
        lb = max(lb, rec_r.cost)
        cuts.append(rec_r)
        r += 1
        trace.append({"ub": ub, "lb": lb})
    return SubproblemResult(u_r, theta, lb, rec_r, r, trace, status)


# -- nested CCG ------------------------------------------------------------------

def solve_trilevel(inst: PlanningInstance, uset: UncertaintySet, eps_out: float = EPS_DEFAULT,
                   eps_in: float = EPS_DEFAULT, init_scenario=None, engine: str = "builtin",
                   max_outer: int = MAX_OUTER, gap_tol: float = 1e-6,
                   recourse_method: str = "milp", master_formulation: str = "mccormick") -> PlanningSolution:
    """min over plans, max over scenarios in ``uset``, min over PSPS recourse.

    Returns the plan that attained the upper bound, its worst-case value and
    the signed final gap ``UB - LB``. The gap goes negative when the master
    bound overtakes the inner value, which happens when the worst case is a
    supremum approached just below an integer crossing of some ``u_i``. ``status`` is ``"iteration_limit"`` if the outer
    loop stopped at ``max_outer`` before closing the gap.
    """
    u1 = project_center(uset, engine=engine) if init_scenario is None else np.asarray(init_scenario, dtype=float)
    pool = [u1]
    lb, ub = -math.inf, math.inf
    trace: list[dict[str, Any]] = []
    best: tuple[np.ndarray, np.ndarray, SubproblemResult] | None = None
    status = "iteration_limit"
    for m in range(1, max_outer + 1):
        mp = build_master(inst, pool, uset, master_formulation)
        res = solve_milp(mp, gap_tol=gap_tol, engine=engine)
        if res.status is not Status.OPTIMAL:
            raise SolverLimitError(f"outer master ended with {res.status.value}")
        x = np.round(res.x[mp.groups["x"]])
        y = np.round(res.x[mp.groups["y"]])
        lb = max(lb, float(res.objective))
        sub = solve_subproblem(inst, x, y, uset, eps_in, init=u1, engine=engine,
                               recourse_method=recourse_method)
        if sub.status != "optimal":
            raise SolverLimitError("inner loop did not converge")
        if sub.value < ub:
            ub = sub.value
            best = (x, y, sub)
        pool.append(sub.u)
        trace.append({
            "lb": lb,
            "ub": ub,
            "inner_iters": sub.iterations,
            "theta": sub.value,
            "inner_slack": sub.value - sub.lb,
            "scenario": sub.u.tolist(),
        })
        log.debug("outer %d: lb=%.6g ub=%.6g inner=%d", m, lb, ub, sub.iterations)
        if ub - lb <= eps_out:
            status = "optimal"
            break
    else:
        log.warning("outer loop stopped at %d iterations with gap %.3g", max_outer, ub - lb)
    if lb > ub + max(eps_out, 1e-6):
        log.warning("master bound %.6g exceeds inner worst case %.6g; the inner supremum is not attained", lb, ub)
    assert best is not None
    x, y, sub = best
    return PlanningSolution(
        x=x.astype(int),
        y=y.astype(int),
        z=sub.recourse.z.copy(),
        value=ub,
        gap=ub - lb,
        outer_iters=len(trace),
        status=status,
        trace=trace,
        worst_case=sub.u.copy(),
    )


# -- benchmarks ------------------------------------------------------------------

def solve_cooptimized(inst: PlanningInstance, u_nominal, engine: str = "builtin", gap_tol: float = 1e-6) -> PlanningSolution:
    """Joint plan + recourse optimisation at the nominal forecast (no worst case)."""
    u = np.asarray(u_nominal, dtype=float)
    n = inst.n
    h, beta = inst.h, inst.beta
    cap = _floor(u)
    M = np.maximum(u, cap)
    model = LinearModel("cooptimized")
    x = model.add_vars(n, 0.0, 1.0, integer=True, group="x")
    y = model.add_vars(n, 0.0, 1.0, integer=True, group="y")
    z = model.add_vars(n, 0.0, cap, integer=True, group="z")
    w = model.add_vars(n, 0.0, INF, group="w")
    model.add_constr({x[i]: inst.c[i] for i in range(n)}, "<=", inst.C, name="budget_C")
    model.add_constr({y[i]: inst.b[i] for i in range(n)}, "<=", inst.B, name="budget_B")
    rel = {y[i]: inst.gamma[i] for i in range(n)}
    rel.update({z[i]: inst.delta[i] for i in range(n)})
    model.add_constr(rel, "<=", inst.W, name="reliability")
    for i in range(n):
        model.add_constr({y[i]: 1.0, x[i]: -1.0}, "<=", 0.0)
        model.add_constr({z[i]: 1.0, x[i]: -cap[i]}, "<=", 0.0)
        model.add_constr({z[i]: 1.0, w[i]: -1.0, y[i]: M[i]}, "<=", M[i])
        model.add_constr({w[i]: 1.0, y[i]: -M[i]}, "<=", 0.0)
        model.add_constr({w[i]: 1.0, z[i]: -1.0}, "<=", 0.0)
    obj: dict[int, float] = {}
    for i in range(n):
        obj[z[i]] = -h[i]
        obj[w[i]] = h[i] * beta[i]
        obj[y[i]] = -h[i] * beta[i] * u[i]
    model.set_objective(obj, "min", float(h @ u))
    res = solve_milp(model, gap_tol=gap_tol, engine=engine)
    if res.status is not Status.OPTIMAL:
        raise SolverLimitError(f"co-optimized MILP ended with {res.status.value}")
    return PlanningSolution(
        x=np.round(res.x[x]).astype(int),
        y=np.round(res.x[y]).astype(int),
        z=np.round(res.x[z]),
        value=float(res.objective),
        gap=res.gap,
        status="optimal",
    )


def solve_planning_only(inst: PlanningInstance, u_nominal, engine: str = "builtin", gap_tol: float = 1e-6) -> PlanningSolution:
    """Fast-trip placement against the nominal forecast, ignoring PSPS recourse.

    Sectionalization carries no value in this model, so the returned plan
    sectionalizes exactly the fast-trip segments.
    """
    u = np.asarray(u_nominal, dtype=float)
    n = inst.n
    model = LinearModel("planning_only")
    x = model.add_vars(n, 0.0, 1.0, integer=True, group="x")
    y = model.add_vars(n, 0.0, 1.0, integer=True, group="y")
    model.add_constr({x[i]: inst.c[i] for i in range(n)}, "<=", inst.C, name="budget_C")
    model.add_constr({y[i]: inst.b[i] for i in range(n)}, "<=", inst.B, name="budget_B")
    for i in range(n):
        model.add_constr({y[i]: 1.0, x[i]: -1.0}, "<=", 0.0)
    weight = inst.h * u
    model.set_objective({y[i]: -weight[i] * inst.beta[i] for i in range(n)}, "min", float(np.sum(weight)))
    res = solve_milp(model, gap_tol=gap_tol, engine=engine)
    if res.status is not Status.OPTIMAL:
        raise SolverLimitError(f"planning-only MILP ended with {res.status.value}")
    yv = np.round(res.x[y]).astype(int)
    return PlanningSolution(x=yv.copy(), y=yv, z=None, value=float(res.objective), gap=res.gap, status="optimal")
