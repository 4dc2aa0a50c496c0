"""Sweep outputs: JSON bundle, tidy CSV and matplotlib figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .experiment import METRICS, EvalReport

ROW_FIELDS = ("rep", "seed", "status", "error", "recourse_feasible", "within_bound") + METRICS


def tidy_rows(results: Sequence[tuple[str, Any, EvalReport]], param: str | None) -> list[dict[str, Any]]:
    """One row per (method, parameter value, repetition)."""
    out = []
    for method, value, report in results:
        for row in report.rows:
            rec = {"method": method, "param": param or "", "param_value": "" if value is None else value}
            rec.update({k: row.get(k) for k in ROW_FIELDS})
            out.append(rec)
    return out


def write_tidy_csv(path: str | Path, rows: list[dict[str, Any]]) -> None:
    fields = ("method", "param", "param_value") + ROW_FIELDS
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if row.get(k) is None else row[k] for k in fields})


def _series(results, metric: str) -> dict[str, tuple[list[float], list[float], list[float]]]:
    series: dict[str, tuple[list[float], list[float], list[float]]] = {}
    for method, value, report in results:
        col = report.column(metric)
        col = col[~np.isnan(col)]
        xs, ms, ss = series.setdefault(method, ([], [], []))
        xs.append(float(value))
        ms.append(float(np.mean(col)) if col.size else np.nan)
        ss.append(float(np.std(col)) if col.size else np.nan)
    return series


def plot_sweep(results, param: str, out_dir: str | Path) -> list[Path]:
    """Coverage and circuit-width curves against the swept parameter."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    paths = []
    numeric = all(isinstance(v, (int, float)) for _, v, _ in results)
    if not numeric:
        return paths
    for metric, label in (("covered", "empirical coverage"), ("width_circuit", "mean circuit width")):
        fig, ax = plt.subplots(figsize=(5.5, 3.8))
        for method, (xs, ms, ss) in _series(results, metric).items():
            order = np.argsort(xs)
            xs_, ms_, ss_ = (np.asarray(a)[order] for a in (xs, ms, ss))
            if metric == "covered":
                ax.plot(xs_, ms_, marker="o", label=method)
            else:
                ax.errorbar(xs_, ms_, yerr=ss_, marker="o", capsize=3, label=method)
        if metric == "covered" and param == "alpha":
            grid = np.linspace(min(v for _, v, _ in results), max(v for _, v, _ in results), 50)
            ax.plot(grid, 1.0 - grid, "k--", label="1 - alpha")
        ax.set_xlabel(param)
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out / f"{metric}_vs_{param.replace('.', '_')}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def write_sweep(results, param: str | None, out_dir: str | Path, config: dict[str, Any]) -> dict[str, Path]:
    """Write ``sweep.json``, ``sweep.csv`` and, for numeric sweeps, PNG figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = {
        "config": config,
        "param": param,
        "results": [
            {"method": m, "value": v, "report": r.to_dict()} for m, v, r in results
        ],
    }
    paths = {"json": out / "sweep.json", "csv": out / "sweep.csv"}
    paths["json"].write_text(json.dumps(bundle, indent=2, sort_keys=True))
    write_tidy_csv(paths["csv"], tidy_rows(results, param))
    if param is not None:
        for p in plot_sweep(results, param, out):
            paths[p.stem] = p
    return paths
