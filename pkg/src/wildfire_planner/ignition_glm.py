"""Pooled Poisson log-linear ignition model fitted by damped Newton / IRLS."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

log = logging.getLogger(__name__)

ETA_CLAMP = 30.0
INTERCEPT_FLOOR = -30.0
RIDGE = 1e-8


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, grad_norm: float) -> None:
        super().__init__(message)
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class CovariateRecord:
    segment: int
    time: int
    v: tuple[float, ...]
    u: int

    def __post_init__(self) -> None:
        if int(self.u) != self.u or self.u < 0:
            raise ValueError(f"count must be a nonnegative integer, got {self.u}")
        object.__setattr__(self, "v", tuple(float(a) for a in self.v))


@dataclass(frozen=True, eq=False)
class PoissonModel:
    intercept: float
    coefficients: np.ndarray
    info: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        coef = np.array(self.coefficients, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(coef)) and np.isfinite(self.intercept)):
            raise ValueError("model parameters must be finite")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "intercept", float(self.intercept))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoissonModel):
            return NotImplemented
        return self.intercept == other.intercept and np.array_equal(self.coefficients, other.coefficients)

    def __hash__(self) -> int:
        return hash((self.intercept, self.coefficients.tobytes()))

    @property
    def p(self) -> int:
        return int(self.coefficients.shape[0])

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.coefficients])

    def linear_predictor(self, V) -> np.ndarray:
        V = np.asarray(V, dtype=float).reshape(-1, self.p)
        return self.intercept + V @ self.coefficients

    def to_dict(self) -> dict[str, Any]:
        return {"intercept": self.intercept, "coefficients": self.coefficients.tolist()}

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, path: str | Path) -> "PoissonModel":
        data = json.loads(Path(path).read_text())
        return cls(data["intercept"], data["coefficients"])


def records_to_arrays(records: Sequence[CovariateRecord]) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        raise ValueError("at least one record is required")
    p = len(records[0].v)
    if any(len(r.v) != p for r in records):
        raise ValueError("records disagree on covariate dimension")
    V = np.array([r.v for r in records], dtype=float).reshape(len(records), p)
    u = np.array([r.u for r in records], dtype=float)
    return V, u


def _design(V: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((V.shape[0], 1)), V])


def log_likelihood_arrays(params: np.ndarray, V: np.ndarray, u: np.ndarray) -> float:
    eta = _design(V) @ params
    return float(np.sum(u * eta - np.exp(eta)))


def gradient_arrays(params: np.ndarray, V: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Analytic gradient of the log-likelihood w.r.t. (intercept, coefficients)."""
    X = _design(V)
    return X.T @ (u - np.exp(X @ params))


def log_likelihood(model: PoissonModel, records) -> float:
    """sum (u * phi(v) - exp(phi(v))); the log(u!) term is omitted."""
    V, u = records if isinstance(records, tuple) else records_to_arrays(records)
    return log_likelihood_arrays(model.params, np.asarray(V, dtype=float).reshape(len(u), -1), np.asarray(u, dtype=float))


def log_likelihood_gradient(model: PoissonModel, records) -> np.ndarray:
    V, u = records if isinstance(records, tuple) else records_to_arrays(records)
    return gradient_arrays(model.params, np.asarray(V, dtype=float).reshape(len(u), -1), np.asarray(u, dtype=float))


def fit_poisson_arrays(V, u, max_iters: int = 100, tol: float = 1e-8) -> PoissonModel:
    """Maximise the Poisson log-likelihood of ``u`` given design ``[1, V]``.

    Newton steps on the concave log-likelihood with step halving; converged
    once the (projected) gradient max-norm is at most ``tol``. The intercept
    is held at ``INTERCEPT_FLOOR`` if the likelihood keeps pushing it down,
    which happens when every count is zero.
    """
    u = np.asarray(u, dtype=float)
    V = np.asarray(V, dtype=float).reshape(u.shape[0], -1)
    if u.size == 0:
        raise ValueError("at least one record is required")
    if np.any(u < 0):
        raise ValueError("counts must be nonnegative")
    X = _design(V)
    k = X.shape[1]
    mean = u.mean()
    beta = np.zeros(k)
    beta[0] = max(np.log(mean), INTERCEPT_FLOOR) if mean > 0 else INTERCEPT_FLOOR
    ridge_used = False
    at_bound = False

    def ll(b):
        eta = np.minimum(X @ b, ETA_CLAMP)
        return float(np.sum(u * eta - np.exp(eta)))

    cur = ll(beta)
    grad_norm = np.inf
    for it in range(1, max_iters + 1):
        mu = np.exp(np.minimum(X @ beta, ETA_CLAMP))
        grad = X.T @ (u - mu)
        at_bound = bool(beta[0] <= INTERCEPT_FLOOR + 1e-12 and grad[0] < 0)
        proj = grad.copy()
        if at_bound:
            proj[0] = 0.0
        grad_norm = float(np.max(np.abs(proj)))
        if grad_norm <= tol:
            info = dict(converged=True, iterations=it - 1, grad_norm=grad_norm, at_bound=at_bound, ridge=ridge_used)
            if at_bound:
                log.info("intercept held at floor %.1f", INTERCEPT_FLOOR)
            return PoissonModel(beta[0], beta[1:], info)
        H = X.T @ (X * mu[:, None])
        free = np.ones(k, dtype=bool)
        if at_bound:
            free[0] = False
        step = np.zeros(k)
        Hf = H[np.ix_(free, free)]
        try:
            step[free] = np.linalg.solve(Hf, proj[free])
        except np.linalg.LinAlgError:
            ridge_used = True
            log.warning("singular weighted normal equations; adding ridge %.0e", RIDGE)
            step[free] = np.linalg.solve(Hf + RIDGE * np.eye(free.sum()), proj[free])
        t = 1.0
        while True:
            cand = beta + t * step
            cand[0] = max(cand[0], INTERCEPT_FLOOR)
            new = ll(cand)
            if new >= cur - 1e-12 * abs(cur) or t < 1e-10:
                break
            t *= 0.5
        beta, cur = cand, new
    raise ConvergenceError(f"Poisson fit did not converge in {max_iters} iterations (|grad|={grad_norm:.3g})", grad_norm)


def fit_poisson(records: Sequence[CovariateRecord], max_iters: int = 100, tol: float = 1e-8) -> PoissonModel:
    V, u = records_to_arrays(records)
    return fit_poisson_arrays(V, u, max_iters=max_iters, tol=tol)


def predict(model: PoissonModel, v, return_clamped: bool = False):
    """exp(phi(v)); the linear predictor is clamped at 30 before exponentiating."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != model.p:
        raise ValueError(f"covariate vector has length {v.shape[0]}, model expects {model.p}")
    eta = model.intercept + float(v @ model.coefficients)
    clamped = eta > ETA_CLAMP
    if clamped:
        log.warning("linear predictor %.3g clamped to %.0f", eta, ETA_CLAMP)
    val = float(np.exp(min(eta, ETA_CLAMP)))
    return (val, clamped) if return_clamped else val


def predict_many(model: PoissonModel, V) -> np.ndarray:
    eta = model.linear_predictor(V)
    if np.any(eta > ETA_CLAMP):
        log.warning("%d linear predictors clamped to %.0f", int(np.sum(eta > ETA_CLAMP)), ETA_CLAMP)
    return np.exp(np.minimum(eta, ETA_CLAMP))


# -- CSV: segment,time,u,v0,...,v{p-1} ------------------------------------------

def write_records_csv(path: str | Path, segments, times, u, V) -> None:
    V = np.asarray(V, dtype=float)
    V = V.reshape(len(u), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment", "time", "u"] + [f"v{j}" for j in range(V.shape[1])])
        for s, t, c, row in zip(segments, times, u, V):
            w.writerow([int(s), int(t), int(c)] + [repr(float(a)) for a in row])


def read_records_csv(path: str | Path) -> list[CovariateRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["segment", "time", "u"]:
            raise ValueError(f"unexpected header {header}")
        out = []
        for row in reader:
            out.append(CovariateRecord(int(row[0]), int(row[1]), tuple(float(a) for a in row[3:]), int(float(row[2]))))
    return out
