"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (also repeated in the pytest
terminal summary) and then asserts the criterion at its stated tolerance.
"""

import logging
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import box_corner_oracle, grid_vertex_oracle, random_instance
from wildfire_planner.datagen import SyntheticConfig, generate_synthetic
from wildfire_planner.domain import PlanningInstance
from wildfire_planner.harness import ExperimentConfig, InstanceRule, run_experiment
from wildfire_planner.ignition_glm import fit_poisson_arrays, gradient_arrays, log_likelihood_arrays
from wildfire_planner.optim import solve_milp, solve_recourse_knapsack
from wildfire_planner.planner import build_recourse_milp, solve_trilevel
from wildfire_planner.uncertainty import Grouping, UncertaintySet, mixing_correction

EPS_OUT = 1e-5
TRACES: dict[str, list] = {}


def report(k: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


@pytest.fixture(autouse=True)
def quiet_solver_warnings():
    logging.disable(logging.WARNING)
    yield
    logging.disable(logging.NOTSET)


def test_criterion_1_recourse_milp_equals_knapsack():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 7))
        inst = random_instance(rng, n)
        x = (rng.random(n) < 0.8).astype(float)
        y = x * (rng.random(n) < 0.5)
        if inst.gamma @ y > inst.W:
            y[:] = 0
        u = rng.integers(0, 5, n).astype(float)
        milp = solve_milp(build_recourse_milp(inst, x, y, u))
        dp = solve_recourse_knapsack(inst, x, y, u)
        worst = max(worst, abs(milp.objective - dp.cost))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30
    report(1, ok, f"200 instances, max |MILP - DP| = {worst:.2e}, {elapsed:.1f}s")
    assert ok


def box_set(U):
    n = len(U)
    return UncertaintySet(Grouping(np.zeros(n, dtype=int), 1), np.zeros(n), np.asarray(U, dtype=float), mode="box")


def test_criterion_2_box_trilevel_equals_corner_enumeration():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst, traces = 0.0, []
    for _ in range(50):
        n = int(rng.integers(1, 4))
        inst = random_instance(rng, n)
        U = rng.integers(1, 4, n).astype(float)
        sol = solve_trilevel(inst, box_set(U), eps_out=EPS_OUT, eps_in=EPS_OUT)
        worst = max(worst, abs(sol.value - box_corner_oracle(inst, U)))
        traces.append(sol)
    elapsed = time.perf_counter() - t0
    TRACES["2"] = traces
    ok = worst <= 1e-6 and elapsed < 60
    report(2, ok, f"50 instances, max |trilevel - oracle| = {worst:.2e}, {elapsed:.1f}s")
    assert ok


def grouped_instance(rng):
    """n = 2, one group whose upper row binds (sum of segment caps exceeds it)."""
    n = 2
    h, beta = rng.uniform(0.5, 2, n), rng.uniform(0, 1, n)
    gamma, delta = np.round(rng.uniform(0, 0.3, n), 2), np.round(rng.uniform(0.2, 1, n), 2)
    L = rng.integers(0, 3, n).astype(float)
    U = L + rng.integers(1, 4, n)
    gU = float(rng.integers(L.sum() + 1, U.sum()))
    W = float(np.round(rng.uniform(0.3, 3), 2))
    inst = PlanningInstance(h, beta, gamma, delta, np.full(n, 0.5), np.full(n, 0.5), 1.0, 1.0, W)
    uset = UncertaintySet(Grouping(np.zeros(n, dtype=int), 1), np.append(L, L.sum()), np.append(U, gU))
    return inst, uset, L, U, gU


def test_criterion_3_grouped_trilevel_near_grid_vertex_oracle():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    misses, worst, traces = [], 0.0, []
    for k in range(20):
        inst, uset, L, U, gU = grouped_instance(rng)
        sol = solve_trilevel(inst, uset, eps_out=EPS_OUT, eps_in=EPS_OUT)
        rec = lambda x, y, u: solve_recourse_knapsack(inst, x, y, u).cost
        oracle = grid_vertex_oracle(inst, L, U, L.sum(), gU, rec)
        err = abs(sol.value - oracle)
        worst = max(worst, err)
        if err > 1e-3:
            misses.append(f"#{k} {sol.value:.3f} vs {oracle:.3f}")
        traces.append(sol)
    elapsed = time.perf_counter() - t0
    TRACES["3"] = traces
    ok = not misses and elapsed < 60
    report(3, ok, f"20 instances, {len(misses)} outside 1e-3 (max {worst:.3g}), {elapsed:.1f}s"
               + (f"; e.g. {', '.join(misses[:3])}" if misses else ""))
    assert ok


def test_criterion_4_grouped_coverage():
    t0 = time.perf_counter()
    parts, ok = [], True
    for alpha in (0.05, 0.10, 0.20):
        cfg = ExperimentConfig(method="grouped_random", planner="none", alpha=alpha, repetitions=500, seed=404)
        rep = run_experiment(cfg)
        assert all(r["error"] is None for r in rep.rows)
        rate = float(np.mean(rep.column("covered")))
        floor = 1 - alpha - 3 * math.sqrt(alpha * (1 - alpha) / 500)
        ok &= rate >= floor
        parts.append(f"alpha={alpha}: {rate:.3f} >= {floor:.3f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    report(4, ok, "; ".join(parts) + f", {elapsed:.0f}s")
    assert ok


# Miscoverage used for both ordering criteria, matching the reference cost comparison.
TABLE_ALPHA = 0.6


def test_criterion_5_bonferroni_wider_than_grouped():
    widths = {}
    for method in ("bonferroni", "grouped_random"):
        cfg = ExperimentConfig(method=method, planner="none", alpha=TABLE_ALPHA, repetitions=50, seed=505)
        widths[method] = float(np.mean(run_experiment(cfg).column("width_circuit")))
    ok = widths["bonferroni"] >= widths["grouped_random"]
    report(5, ok, f"mean circuit width bonferroni {widths['bonferroni']:.3f} vs grouped {widths['grouped_random']:.3f}")
    assert ok


# CCG at n = 25 closes its gap very slowly; each repetition keeps the incumbent after this many outer iterations.
COST_MAX_OUTER = 4


def test_criterion_6_trilevel_cheaper_than_planning_only():
    common = dict(method="grouped_random", alpha=TABLE_ALPHA, repetitions=50, seed=606, engine="highs",
                  instance=InstanceRule(C=0.4, B=0.4, W=1.0))
    t0 = time.perf_counter()
    tri = run_experiment(ExperimentConfig(planner="trilevel", max_outer=COST_MAX_OUTER,
                                          master_formulation="split", **common))
    po = run_experiment(ExperimentConfig(planner="planning_only", **common))
    assert all(r["error"] is None for r in tri.rows + po.rows)
    a, b = tri.column("cost"), po.column("cost")
    rng = np.random.default_rng(0)
    idx = rng.integers(0, a.size, size=(10_000, a.size))
    agree = float(np.mean(a[idx].mean(axis=1) <= b[idx].mean(axis=1)))
    ok = a.mean() <= b.mean() and agree >= 0.9
    report(6, ok, f"mean cost trilevel {a.mean():.3f} vs planning-only {b.mean():.3f}, "
               f"bootstrap agreement {agree:.3f}, {time.perf_counter() - t0:.0f}s")
    assert ok


def test_criterion_7_ccg_contract():
    if "2" not in TRACES or "3" not in TRACES:
        pytest.skip("needs the runs from criteria 2 and 3")
    bad = []
    for key, sols in TRACES.items():
        for k, sol in enumerate(sols):
            lbs = [t["lb"] for t in sol.trace]
            ubs = [t["ub"] for t in sol.trace]
            mono = all(q >= p - 1e-9 for p, q in zip(lbs, lbs[1:])) and all(q <= p + 1e-9 for p, q in zip(ubs, ubs[1:]))
            if not (mono and sol.gap <= EPS_OUT and sol.outer_iters <= 200 and sol.status == "optimal"):
                bad.append(f"{key}#{k}")
    total = sum(len(v) for v in TRACES.values())
    iters = max(s.outer_iters for v in TRACES.values() for s in v)
    ok = not bad
    report(7, ok, f"{total - len(bad)}/{total} runs monotone with gap <= {EPS_OUT:g}, max {iters} outer iterations"
               + (f"; violations {bad[:5]}" if bad else ""))
    assert ok


def closed_form(gamma, m):
    return 2 * (3 + 8 * gamma) ** (1 / 3) * (3 + math.log(m) / (2 * math.log(2))) ** (2 / 3) / m ** (1 / 3)


def test_criterion_8_mixing_correction_formula():
    worst, decreasing = 0.0, True
    for g in (0, 1):
        vals = [mixing_correction(g, m) for m in (10**2, 10**3, 10**6)]
        worst = max(worst, *(abs(v - closed_form(g, m)) for v, m in zip(vals, (10**2, 10**3, 10**6))))
        decreasing &= vals[0] > vals[1] > vals[2]
    ok = worst <= 1e-9 and decreasing
    report(8, ok, f"max deviation {worst:.1e}, strictly decreasing in m: {decreasing}")
    assert ok


def test_criterion_9_glm_gradient_and_recovery():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(1, 4))
        V = rng.normal(size=(30, p))
        u = rng.poisson(np.exp(0.3 + V @ rng.normal(0, 0.5, p))).astype(float)
        b = rng.normal(0, 0.5, p + 1)
        num = np.array([(log_likelihood_arrays(b + e, V, u) - log_likelihood_arrays(b - e, V, u)) / 2e-5
                        for e in np.eye(p + 1) * 1e-5])
        ana = gradient_arrays(b, V, u)
        worst = max(worst, float(np.max(np.abs(num - ana) / np.maximum(1.0, np.abs(ana)))))
    data = generate_synthetic(SyntheticConfig(seed=0))
    model = fit_poisson_arrays(*data.design(data.train))
    d_mu = abs(model.intercept - math.log(3.0))
    d_kappa = abs(model.coefficients[0] - 0.5)
    ok = worst <= 1e-4 and d_mu <= 0.2 and d_kappa <= 0.2
    report(9, ok, f"max relative gradient error {worst:.1e}; fitted (log mu, kappa) = "
               f"({model.intercept:.3f}, {model.coefficients[0]:.3f}) vs ({math.log(3):.3f}, 0.5)")
    assert ok
