"""Command-line entry point: generate, fit, calibrate, instance, plan, evaluate, sweep.

Exit codes: 0 success, 2 invalid input, 3 solver limit reached.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from ..datagen import SyntheticConfig, generate_synthetic, write_synthetic
from ..domain import PlanDecision, PlanningInstance, PlanningSolution, validate_instance
from ..ignition_glm import ConvergenceError, PoissonModel, fit_poisson, predict_many, read_records_csv
from ..optim import ENGINES
from ..planner import SolverLimitError
from ..uncertainty import (CalibrationSet, Grouping, UncertaintySet, contains, random_grouping,
                           read_calibration_csv)
from .experiment import (METHODS, ExperimentConfig, InstanceRule, build_set, evaluate_out_of_sample,
                         mean_interval_width, plan, run_sweep)
from .report import write_sweep

log = logging.getLogger("wildfire_planner")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3


class InputError(ValueError):
    """Malformed or inconsistent command-line input."""


def _write_json(path: str | None, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text)


def _records_matrix(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Record CSV -> (times, counts (T, n), covariates (T, n, p))."""
    records = read_records_csv(path)
    if not records:
        raise InputError(f"{path}: no records")
    times = np.array(sorted({r.time for r in records}))
    segs = sorted({r.segment for r in records})
    if segs != list(range(len(segs))):
        raise InputError(f"{path}: segments must be numbered 0..n-1")
    n, p = len(segs), len(records[0].v)
    t_index = {t: k for k, t in enumerate(times)}
    counts = np.full((len(times), n), np.nan)
    V = np.zeros((len(times), n, p))
    for r in records:
        k = t_index[r.time]
        counts[k, r.segment] = r.u
        V[k, r.segment] = r.v
    if np.isnan(counts).any():
        raise InputError(f"{path}: every time step needs a record for every segment")
    return times, counts, V


def _load_calibration(path: str, model: PoissonModel | None) -> CalibrationSet:
    header = Path(path).open().readline().strip().split(",")
    if header[:4] == ["time", "segment", "u", "u_hat"]:
        return read_calibration_csv(path)
    if model is None:
        raise InputError("record-format calibration CSV needs --model")
    times, counts, V = _records_matrix(path)
    T, n, p = V.shape
    u_hat = predict_many(model, V.reshape(T * n, p)).reshape(T, n)
    return CalibrationSet(counts, u_hat, times)


def _load_grouping(arg: str | None, n: int, seed: int) -> Grouping:
    if arg is None:
        raise InputError("grouped methods need --groups (a count or an assignment JSON file)")
    if Path(arg).is_file():
        data = json.loads(Path(arg).read_text())
        assignment = np.asarray(data["assignment"] if isinstance(data, dict) else data, dtype=int)
        if assignment.shape != (n,):
            raise InputError(f"assignment has length {assignment.size}, expected {n}")
        return Grouping(assignment, int(assignment.max()) + 1)
    try:
        k = int(arg)
    except ValueError as exc:
        raise InputError(f"--groups must be an integer or an existing file, got {arg!r}") from exc
    return random_grouping(n, k, seed=seed)


def _load_instance(path: str) -> PlanningInstance:
    inst = PlanningInstance.from_json(path)
    problems = validate_instance(inst)
    if problems:
        raise InputError("invalid instance: " + "; ".join(map(str, problems)))
    return inst


# -- subcommands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = SyntheticConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else SyntheticConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    paths = write_synthetic(generate_synthetic(cfg), args.out)
    _write_json(None, {k: str(v) for k, v in paths.items()})
    return EXIT_OK


def cmd_fit(args) -> int:
    records = read_records_csv(args.train)
    if not records:
        raise InputError("training CSV has no records")
    model = fit_poisson(records, max_iters=args.max_iters)
    payload = model.to_dict() | {"info": {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v)
                                          for k, v in model.info.items()}}
    _write_json(args.out, payload)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    model = PoissonModel.from_json(args.model) if args.model else None
    cal = _load_calibration(args.cal, model)
    if args.u_hat is not None:
        u_hat = np.asarray(json.loads(Path(args.u_hat).read_text()), dtype=float)
    elif args.test is not None:
        if model is None:
            raise InputError("--test needs --model to predict the planning window")
        _, _, V = _records_matrix(args.test)
        u_hat = predict_many(model, V[0])
    else:
        raise InputError("need --test (covariates of the planning window) or --u-hat")
    if u_hat.shape != (cal.n,):
        raise InputError(f"forecast has shape {u_hat.shape}, calibration has n={cal.n}")
    grouping = None
    if args.method.startswith("grouped"):
        grouping = _load_grouping(args.groups, cal.n, args.seed)
    uset = build_set(args.method, cal, u_hat, args.alpha, grouping, args.correct, args.gamma_mix)
    payload = uset.to_dict() | {"widths": mean_interval_width(uset), "method": args.method, "alpha": args.alpha}
    _write_json(args.out, payload)
    return EXIT_OK


def cmd_instance(args) -> int:
    uset = UncertaintySet.from_json(args.set)
    if uset.center is None:
        raise InputError("set JSON lacks the forecast 'u_hat'")
    rule = InstanceRule(C=args.C, B=args.B, W=args.W)
    inst = rule.draw(uset.n, uset.center, np.random.default_rng(args.seed))
    if args.out:
        inst.to_json(args.out)
    else:
        print(inst.to_json())
    return EXIT_OK


def cmd_plan(args) -> int:
    inst = _load_instance(args.instance)
    uset = UncertaintySet.from_json(args.set)
    if uset.n != inst.n:
        raise InputError(f"instance has n={inst.n}, set has n={uset.n}")
    u_hat = uset.center if uset.center is not None else 0.5 * (uset.seg_L + uset.seg_U)
    sol = plan(args.planner, inst, uset, u_hat, args.engine, args.eps_out, args.eps_in, args.max_outer)
    _write_json(args.out, sol.to_dict())
    if sol.status != "optimal":
        log.warning("planner stopped with status %s (gap %.3g)", sol.status, sol.gap)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_evaluate(args) -> int:
    inst = _load_instance(args.instance)
    sol = PlanningSolution.from_json(args.solution)
    violations = PlanDecision(sol.x, sol.y).violations(inst)
    if violations:
        raise InputError("infeasible plan: " + "; ".join(map(str, violations)))
    _, counts, _ = _records_matrix(args.realized)
    if counts.shape[1] != inst.n:
        raise InputError(f"realized CSV has n={counts.shape[1]}, instance has n={inst.n}")
    uset = UncertaintySet.from_json(args.set) if args.set else None
    results = []
    for u in counts:
        ev = evaluate_out_of_sample(inst, PlanDecision(sol.x, sol.y), u, uset, engine=args.engine)
        rec = {"z_true": ev["z_true"].tolist(), "z_true_norm": ev["z_true_norm"], "cost": ev["cost"],
               "recourse_feasible": ev["recourse_feasible"]}
        if uset is not None:
            rec["covered"] = bool(contains(uset, u))
        results.append(rec)
    payload = {
        "x_norm": int(np.sum(sol.x)),
        "y_norm": int(np.sum(sol.y)),
        "z_norm": None if sol.z is None else float(np.sum(sol.z)),
        "planned_value": sol.value,
        "draws": results,
        "mean_cost": float(np.mean([r["cost"] for r in results])),
    }
    _write_json(args.out, payload)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    results = run_sweep(cfg)
    param = None if cfg.sweep is None else cfg.sweep["param"]
    paths = write_sweep(results, param, args.out, cfg.to_dict())
    failed = sum(r["error"] is not None for _, _, rep in results for r in rep.rows)
    if failed:
        log.warning("%d repetitions recorded errors", failed)
    _write_json(None, {k: str(v) for k, v in paths.items()})
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wildfire-planner", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthetic data set -> train/cal/test CSVs")
    p.add_argument("--config", help="SyntheticConfig JSON (defaults if omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="record CSV -> Poisson model JSON")
    p.add_argument("--train", required=True)
    p.add_argument("--out")
    p.add_argument("--max-iters", type=int, default=100)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="model + calibration CSV -> uncertainty set JSON")
    p.add_argument("--model")
    p.add_argument("--cal", required=True, help="record CSV, or time,segment,u,u_hat CSV")
    p.add_argument("--test", help="record CSV whose first time step is the planning window")
    p.add_argument("--u-hat", help="JSON list with the planning-window forecast")
    p.add_argument("--method", choices=METHODS, default="grouped_random")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--groups", help="group count (random grouping) or assignment JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--correct", action="store_true", help="apply the mixing correction to alpha")
    p.add_argument("--gamma-mix", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("instance", help="draw a SAIFI-style planning instance for a set")
    p.add_argument("--set", required=True)
    p.add_argument("--C", type=float, default=0.4)
    p.add_argument("--B", type=float, default=0.4)
    p.add_argument("--W", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_instance)

    p = sub.add_parser("plan", help="instance + set -> planning solution JSON")
    p.add_argument("--instance", required=True)
    p.add_argument("--set", required=True)
    p.add_argument("--planner", choices=("trilevel", "cooptimized", "planning_only"), default="trilevel")
    p.add_argument("--eps-out", type=float, default=1e-5)
    p.add_argument("--eps-in", type=float, default=1e-5)
    p.add_argument("--max-outer", type=int, default=200)
    p.add_argument("--engine", choices=ENGINES, default="builtin")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("evaluate", help="solution + realized record CSV -> report JSON")
    p.add_argument("--solution", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--realized", required=True)
    p.add_argument("--set", help="optional set JSON for coverage and the McCormick bound")
    p.add_argument("--engine", choices=ENGINES, default="builtin")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="ExperimentConfig JSON -> sweep.json, sweep.csv, figures")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SolverLimitError, ConvergenceError) as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    except (InputError, ValueError, KeyError, TypeError, FileNotFoundError, json.JSONDecodeError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
