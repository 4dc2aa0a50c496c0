import numpy as np
import pytest

from oracles import brute_recourse, lp_vertex_oracle, random_instance
from wildfire_planner.domain import PlanningInstance
from wildfire_planner.optim import (LinearModel, Status, lagrangian_bound, parse_dump, solve_lp, solve_milp,
                                    solve_recourse_knapsack)
from wildfire_planner.planner import build_recourse_milp

ENGINES = ("builtin", "highs")


def random_lp(rng, m=5, n=8):
    A = rng.integers(-5, 6, size=(m, n)).astype(float)
    b = rng.integers(1, 10, size=m).astype(float)
    c = rng.integers(-5, 6, size=n).astype(float)
    lb, ub = np.zeros(n), rng.integers(1, 5, size=n).astype(float)
    model = LinearModel("rand")
    xs = model.add_vars(n, lb=lb, ub=ub, group="x")
    for row, rhs in zip(A, b):
        model.add_constr(dict(zip(xs, row)), "<=", rhs)
    model.set_objective(dict(zip(xs, c)), "min")
    return model, (c, A, b, lb, ub)


@pytest.mark.parametrize("engine", ENGINES)
def test_lp_trivial_max(engine):
    m = LinearModel()
    x = m.add_var(0.0)
    m.add_constr({x: 1.0}, "<=", 3.0)
    m.set_objective({x: 1.0}, "max")
    res = solve_lp(m, engine=engine)
    assert res.ok and res.x[0] == pytest.approx(3.0) and res.objective == pytest.approx(3.0)


@pytest.mark.parametrize("engine", ENGINES)
def test_lp_contradictory_is_infeasible(engine):
    m = LinearModel()
    x = m.add_var(-10.0, 10.0)
    m.add_constr({x: 1.0}, "<=", 0.0)
    m.add_constr({x: 1.0}, ">=", 1.0)
    assert solve_lp(m, engine=engine).status is Status.INFEASIBLE


def test_lp_unbounded():
    m = LinearModel()
    x = m.add_var(0.0)
    m.set_objective({x: 1.0}, "max")
    assert solve_lp(m).status is Status.UNBOUNDED


def test_lp_rejects_integer_models():
    m = LinearModel()
    m.add_var(0.0, 1.0, integer=True)
    with pytest.raises(ValueError):
        solve_lp(m)


@pytest.mark.parametrize("seed", range(30))
def test_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    model, data = random_lp(rng)
    oracle = lp_vertex_oracle(*data)
    res = solve_lp(model)
    assert res.ok
    assert res.objective == pytest.approx(oracle, abs=1e-6)
    assert model.max_violation(res.x) <= 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_lp_weak_duality(seed):
    model, _ = random_lp(np.random.default_rng(100 + seed))
    res = solve_lp(model)
    assert res.duals is not None
    assert lagrangian_bound(model, res.duals) <= res.objective + 1e-7
    assert lagrangian_bound(model, res.duals) == pytest.approx(res.objective, abs=1e-6)
    assert lagrangian_bound(model, np.zeros(model.num_constraints)) <= res.objective + 1e-9


@pytest.mark.parametrize("engine", ENGINES)
def test_milp_knapsack_example(engine):
    m = LinearModel()
    xs = m.add_vars(3, 0.0, 1.0, integer=True)
    m.add_constr(dict(zip(xs, (5.0, 4.0, 3.0))), "<=", 7.0)
    m.set_objective(dict(zip(xs, (10.0, 6.0, 4.0))), "max")
    res = solve_milp(m, engine=engine)
    # enumeration of all 8 points: best is 10 ({x1} or {x2, x3})
    assert res.ok and res.objective == pytest.approx(10.0)


@pytest.mark.parametrize("engine", ENGINES)
def test_milp_integer_infeasible(engine):
    m = LinearModel()
    m.add_var(0.2, 0.8, integer=True)
    m.set_objective({0: 1.0})
    assert solve_milp(m, engine=engine).status is Status.INFEASIBLE


def test_milp_pure_lp_matches_solve_lp():
    model, _ = random_lp(np.random.default_rng(7))
    a, b = solve_milp(model), solve_lp(model)
    assert a.status == b.status and a.objective == b.objective and np.array_equal(a.x, b.x)


def test_milp_node_limit_returns_incumbent():
    rng = np.random.default_rng(3)
    m = LinearModel()
    n = 14
    xs = m.add_vars(n, 0.0, 1.0, integer=True)
    w = rng.integers(10, 40, n).astype(float)
    m.add_constr(dict(zip(xs, w)), "<=", float(w.sum() / 2 + 0.5))
    m.set_objective(dict(zip(xs, w + rng.uniform(-1, 1, n))), "max")
    res = solve_milp(m, node_limit=3)
    assert res.status is Status.ITERATION_LIMIT
    assert res.gap > 0
    full = solve_milp(m)
    assert full.ok and full.objective >= (res.objective if res.objective is not None else -np.inf) - 1e-9


def test_solvers_are_deterministic_and_dump_round_trips():
    rng = np.random.default_rng(21)
    inst = random_instance(rng, 5)
    u = rng.integers(0, 5, 5).astype(float)
    model = build_recourse_milp(inst, np.ones(5), np.zeros(5), u)
    text = model.dump()
    again = parse_dump(text)
    assert again.dump() == text
    r1, r2 = solve_milp(model), solve_milp(again)
    assert r1.status == r2.status and r1.objective == r2.objective and np.array_equal(r1.x, r2.x)
    assert r1.nodes == r2.nodes and r1.iterations == r2.iterations


def knap_inst(**kw):
    base = dict(h=np.array([5.0, 3.0, 1.0]), beta=np.array([0.5, 0.0, 0.0]), gamma=np.zeros(3),
                delta=np.ones(3), c=np.ones(3), b=np.ones(3), C=3.0, B=3.0, W=2.0)
    base.update(kw)
    return PlanningInstance(**base)


def test_knapsack_examples():
    inst = knap_inst()
    x, y, u = np.ones(3), np.array([1.0, 0, 0]), np.array([2.0, 1.0, 2.0])
    res = solve_recourse_knapsack(inst, x, y, u, 2.0)
    assert res.z.tolist() == [1.0, 1.0, 0.0] and res.cost == pytest.approx(4.5)
    zero = solve_recourse_knapsack(inst, x, y, u, 0.0)
    assert zero.z.tolist() == [0, 0, 0] and zero.cost == pytest.approx(float(inst.h * (1 - inst.beta * y) @ u))
    none = solve_recourse_knapsack(inst, np.zeros(3), y, u, 100.0)
    assert none.z.tolist() == [0, 0, 0]
    with pytest.raises(ValueError):
        solve_recourse_knapsack(inst, x, y, u, -1.0)


def test_knapsack_fine_grid_falls_back(caplog):
    inst = knap_inst(delta=np.array([1 / 3, 1.0, 1.0]))
    res = solve_recourse_knapsack(inst, np.ones(3), np.zeros(3), np.array([2.0, 1.0, 2.0]), 1.0)
    assert res.used_fallback
    best, _ = brute_recourse(knap_inst(delta=np.array([1 / 3, 1.0, 1.0]), W=1.0), np.ones(3), np.zeros(3),
                             np.array([2.0, 1.0, 2.0]))
    assert res.cost == pytest.approx(best)


@pytest.mark.parametrize("seed", range(40))
def test_recourse_milp_matches_knapsack_and_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    inst = random_instance(rng, n)
    x = (rng.random(n) < 0.8).astype(float)
    y = x * (rng.random(n) < 0.5)
    if inst.gamma @ y > inst.W:
        y[:] = 0
    u = rng.integers(0, 5, n).astype(float)
    res = solve_milp(build_recourse_milp(inst, x, y, u))
    dp = solve_recourse_knapsack(inst, x, y, u)
    best, _ = brute_recourse(inst, x, y, u)
    assert res.ok
    assert res.objective == pytest.approx(dp.cost, abs=1e-6) == pytest.approx(best, abs=1e-6)
