"""Experiment protocol: data -> forecast -> uncertainty set -> plan -> out-of-sample evaluation."""

from __future__ import annotations

import copy
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..datagen import SyntheticConfig, generate_synthetic
from ..domain import PlanDecision, PlanningInstance, PlanningSolution
from ..ignition_glm import fit_poisson_arrays, predict_many
from ..planner import (RecourseInfeasibleError, solve_cooptimized, solve_planning_only,
                       solve_recourse, solve_trilevel)
from ..uncertainty import (CalibrationSet, Grouping, UncertaintySet, build_bonferroni_set,
                           build_ci_set, build_grouped_set, build_maxrank_set, contains,
                           random_grouping)

log = logging.getLogger(__name__)

METHODS = ("grouped_random", "grouped_fixed", "bonferroni", "maxrank", "ci")
PLANNERS = ("trilevel", "cooptimized", "planning_only", "none")
METRICS = ("covered", "width_circuit", "width_group", "x_norm", "y_norm", "z_norm",
           "z_true_norm", "cost", "value", "gap", "outer_iters")


# -- instance construction and metrics -------------------------------------------

def build_saifi_instance(h, zeta, beta, C: float, B: float, W: float, u_hat=None) -> PlanningInstance:
    """Instance whose reliability row bounds a SAIFI-style interruption index.

    PSPS on segment i interrupts a customer share ``h_i / sum(h)``; fast-trip
    adds ``zeta_i`` expected interruptions for the same share. Every segment
    costs ``1/n`` of each budget, so ``C`` and ``B`` are fractions of segments.
    """
    h = np.asarray(h, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    n = h.shape[0]
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,))
    if zeta.shape != (n,):
        raise ValueError(f"zeta has shape {zeta.shape}, expected ({n},)")
    if u_hat is not None and np.asarray(u_hat).shape != (n,):
        raise ValueError("u_hat length does not match h")
    if np.any(h < 0):
        raise ValueError("h must be nonnegative")
    total = float(h.sum())
    if total <= 0:
        raise ValueError("total consequence weight sum(h) must be positive")
    share = h / total
    return PlanningInstance(h=h, beta=beta, gamma=share * zeta, delta=share,
                            c=np.full(n, 1.0 / n), b=np.full(n, 1.0 / n), C=C, B=B, W=W)


def evaluate_out_of_sample(inst: PlanningInstance, plan: PlanDecision, u_realized,
                           uset: UncertaintySet | None = None, engine: str = "builtin") -> dict[str, Any]:
    """Re-solve the PSPS recourse at the realized ignitions for a fixed plan.

    If fast-trip alone breaks the reliability threshold no PSPS is possible;
    the result is flagged with ``recourse_feasible = False`` and ``z = 0``.
    """
    u = np.asarray(u_realized, dtype=float)
    if u.shape != (inst.n,) or np.any(u < 0) or not np.all(np.isfinite(u)):
        raise ValueError("realized ignitions must be a finite nonnegative vector of length n")
    x = np.asarray(plan.x, dtype=float)
    y = np.asarray(plan.y, dtype=float)
    try:
        rec = solve_recourse(inst, x, y, u, uset, engine=engine)
        z, cost, feasible = rec.z, rec.cost, True
    except RecourseInfeasibleError:
        z = np.zeros(inst.n)
        cost = float(np.sum(inst.h * (1.0 - inst.beta * y) * u))
        feasible = False
    return {"z_true": z, "z_true_norm": float(np.sum(z)), "cost": float(cost), "recourse_feasible": feasible}


def coverage_rate(uset: UncertaintySet, draws) -> float:
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[0] < 1:
        raise ValueError("at least one draw is required")
    return float(np.mean([contains(uset, u) for u in draws]))


def mean_interval_width(uset: UncertaintySet) -> dict[str, float | None]:
    seg = float(np.mean(uset.seg_U - uset.seg_L))
    if uset.mode == "box" or uset.grouping.n_groups == 0:
        return {"circuit": seg, "group": None}
    return {"circuit": seg, "group": float(np.mean(uset.group_U - uset.group_L))}


# -- configuration ---------------------------------------------------------------

@dataclass
class InstanceRule:
    """How each repetition draws its SAIFI-style planning instance."""

    h_range: tuple[float, float] = (0.5, 1.5)
    zeta_range: tuple[float, float] = (0.0, 0.5)
    beta_range: tuple[float, float] = (0.3, 0.9)
    C: float = 0.4
    B: float = 0.4
    W: float = 1.0

    def draw(self, n: int, u_hat, rng: np.random.Generator) -> PlanningInstance:
        h = rng.uniform(*self.h_range, size=n)
        zeta = rng.uniform(*self.zeta_range, size=n)
        beta = rng.uniform(*self.beta_range, size=n)
        return build_saifi_instance(h, zeta, beta, self.C, self.B, self.W, u_hat)


@dataclass
class ExperimentConfig:
    generator: SyntheticConfig = field(default_factory=SyntheticConfig)
    method: str = "grouped_random"
    planner: str = "trilevel"
    alpha: float = 0.1
    instance: InstanceRule = field(default_factory=InstanceRule)
    repetitions: int = 50
    seed: int = 0
    engine: str = "builtin"
    eps_out: float = 1e-5
    eps_in: float = 1e-5
    max_outer: int = 200
    master_formulation: str = "mccormick"
    apply_correction: bool = False
    gamma_mix: float = 0.0
    assignment: list[int] | None = None
    workers: int = 1
    sweep: dict[str, Any] | None = None

    def __post_init__(self) -> None:
        if isinstance(self.generator, dict):
            self.generator = SyntheticConfig.from_dict(self.generator)
        if isinstance(self.instance, dict):
            self.instance = InstanceRule(**self.instance)
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.planner not in PLANNERS:
            raise ValueError(f"planner must be one of {PLANNERS}, got {self.planner!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        if self.method == "grouped_fixed":
            if self.assignment is None:
                raise ValueError("grouped_fixed needs an explicit assignment")
            if len(self.assignment) != self.generator.n:
                raise ValueError("assignment length must equal generator.n")
        if self.sweep is not None:
            if "param" not in self.sweep or not self.sweep.get("values"):
                raise ValueError("sweep needs 'param' and a nonempty 'values' list")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["generator"] = self.generator.to_dict()
        d["instance"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["instance"].items()}
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_param(self, path: str, value: Any) -> "ExperimentConfig":
        """Copy with one (possibly dotted, e.g. ``generator.rho``) field replaced."""
        cfg = copy.deepcopy(self)
        cfg.sweep = None
        obj: Any = cfg
        *head, last = path.split(".")
        for part in head:
            obj = getattr(obj, part)
        if not hasattr(obj, last):
            raise ValueError(f"unknown sweep parameter {path!r}")
        setattr(obj, last, value)
        cfg.__post_init__()
        if isinstance(cfg.generator, SyntheticConfig):
            cfg.generator.__post_init__()
        return cfg


# -- report ----------------------------------------------------------------------

def _clean(v: Any) -> Any:
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return None if math.isnan(f) else f
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class EvalReport:
    config: dict[str, Any]
    rows: list[dict[str, Any]]

    @property
    def aggregates(self) -> dict[str, dict[str, float | None]]:
        out = {}
        for key in METRICS:
            vals = np.array([r[key] for r in self.rows if r.get(key) is not None], dtype=float)
            if vals.size == 0:
                out[key] = {"mean": None, "std": None, "count": 0}
            else:
                out[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "count": int(vals.size)}
        return out

    def column(self, key: str) -> np.ndarray:
        return np.array([np.nan if r.get(key) is None else r[key] for r in self.rows], dtype=float)

    def to_dict(self) -> dict[str, Any]:
        return {"config": self.config, "rows": self.rows, "aggregates": self.aggregates}

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text


# -- protocol --------------------------------------------------------------------

def repetition_seeds(master: int, rep: int) -> tuple[int, int, int]:
    """Independent (data, grouping, instance) seeds for one repetition."""
    ss = np.random.SeedSequence([int(master), int(rep)])
    a, b, c = ss.generate_state(3)
    return int(a), int(b), int(c)


def calibration_from_data(data, model) -> CalibrationSet:
    n = data.config.n
    V, _ = data.design(data.cal)
    u_hat = predict_many(model, V).reshape(-1, n)
    times = np.arange(data.config.horizon)[data.cal]
    return CalibrationSet(data.counts[data.cal].astype(float), u_hat, times)


def build_set(method: str, cal: CalibrationSet, u_hat_future, alpha: float, grouping: Grouping | None = None,
              apply_correction: bool = False, gamma_mix: float = 0.0) -> UncertaintySet:
    if method in ("grouped_random", "grouped_fixed"):
        if grouping is None:
            raise ValueError(f"{method} needs a grouping")
        return build_grouped_set(cal, grouping, u_hat_future, alpha,
                                 apply_correction=apply_correction, gamma_mix=gamma_mix)
    if method == "bonferroni":
        return build_bonferroni_set(cal, u_hat_future, alpha)
    if method == "maxrank":
        return build_maxrank_set(cal, u_hat_future, alpha)
    if method == "ci":
        return build_ci_set(cal, u_hat_future, alpha)
    raise ValueError(f"unknown method {method!r}")


def plan(planner: str, inst: PlanningInstance, uset: UncertaintySet, u_hat, engine: str,
         eps_out: float = 1e-5, eps_in: float = 1e-5, max_outer: int = 200,
         master_formulation: str = "mccormick") -> PlanningSolution:
    if planner == "trilevel":
        return solve_trilevel(inst, uset, eps_out=eps_out, eps_in=eps_in, engine=engine,
                              max_outer=max_outer, master_formulation=master_formulation)
    if planner == "cooptimized":
        return solve_cooptimized(inst, u_hat, engine=engine)
    if planner == "planning_only":
        return solve_planning_only(inst, u_hat, engine=engine)
    raise ValueError(f"unknown planner {planner!r}")


def run_repetition(cfg: ExperimentConfig, rep: int) -> dict[str, Any]:
    data_seed, group_seed, inst_seed = repetition_seeds(cfg.seed, rep)
    row: dict[str, Any] = {"rep": rep, "seed": data_seed, "error": None, "status": None,
                           "recourse_feasible": None, "within_bound": None}
    row.update({k: None for k in METRICS})
    try:
        gen = copy.deepcopy(cfg.generator)
        gen.seed = data_seed
        data = generate_synthetic(gen)
        n = gen.n
        model = fit_poisson_arrays(*data.design(data.train))
        cal = calibration_from_data(data, model)
        t_test = data.test.start
        u_hat = predict_many(model, data.covariates(t_test))
        u_real = data.counts[t_test].astype(float)
        if cfg.method == "grouped_random":
            grouping = random_grouping(n, gen.n_groups, seed=group_seed)
        elif cfg.method == "grouped_fixed":
            assignment = np.asarray(cfg.assignment, dtype=int)
            grouping = Grouping(assignment, int(assignment.max()) + 1)
        else:
            grouping = None
        uset = build_set(cfg.method, cal, u_hat, cfg.alpha, grouping, cfg.apply_correction, cfg.gamma_mix)
        widths = mean_interval_width(uset)
        covered = contains(uset, u_real)
        row.update(covered=int(covered), width_circuit=widths["circuit"], width_group=widths["group"])
        if cfg.planner != "none":
            inst = cfg.instance.draw(n, u_hat, np.random.default_rng(inst_seed))
            sol = plan(cfg.planner, inst, uset, u_hat, cfg.engine, cfg.eps_out, cfg.eps_in,
                       cfg.max_outer, cfg.master_formulation)
            ev = evaluate_out_of_sample(inst, PlanDecision(sol.x, sol.y), u_real, uset, engine=cfg.engine)
            row.update(
                x_norm=float(np.sum(sol.x)),
                y_norm=float(np.sum(sol.y)),
                z_norm=None if sol.z is None else float(np.sum(sol.z)),
                z_true_norm=ev["z_true_norm"],
                cost=ev["cost"],
                value=sol.value,
                gap=sol.gap,
                outer_iters=sol.outer_iters,
                status=sol.status,
                recourse_feasible=ev["recourse_feasible"],
            )
            if cfg.planner == "trilevel" and covered:
                row["within_bound"] = bool(ev["cost"] <= sol.value + 1e-6)
    except Exception as exc:  # recorded per row so one failure does not abort the batch
        log.warning("repetition %d failed: %s", rep, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    return {k: _clean(v) for k, v in row.items()}


def _run_rep_star(args):
    return run_repetition(*args)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> EvalReport:
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, rep) for rep in range(cfg.repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_rep_star, jobs))
    else:
        rows = [_run_rep_star(j) for j in jobs]
    rows.sort(key=lambda r: r["rep"])
    return EvalReport(cfg.to_dict(), rows)


def run_sweep(cfg: ExperimentConfig, methods: Sequence[str] | None = None,
              workers: int | None = None) -> list[tuple[str, Any, EvalReport]]:
    """One report per (method, parameter value) of ``cfg.sweep``."""
    if cfg.sweep is None:
        return [(cfg.method, None, run_experiment(cfg, workers))]
    param = cfg.sweep["param"]
    methods = list(methods or cfg.sweep.get("methods") or [cfg.method])
    out = []
    for method in methods:
        for value in cfg.sweep["values"]:
            sub = cfg.with_param("method", method).with_param(param, value)
            out.append((method, value, run_experiment(sub, workers)))
    return out
