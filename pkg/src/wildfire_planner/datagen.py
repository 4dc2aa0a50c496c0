"""Synthetic ignition data and PCA + VAR(1) covariate trajectories."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .ignition_glm import write_records_csv
from .uncertainty import Grouping, random_grouping

log = logging.getLogger(__name__)


@dataclass
class SyntheticConfig:
    n: int = 25
    n_groups: int = 5
    mu: float = 3.0
    kappa: float = 0.5
    rho: float = 0.4
    noise_sd: float = 0.3
    xi_sd: float = 1.0
    n_train: int = 100
    n_cal: int = 200
    n_test: int = 1
    seed: int = 0
    kappa_jitter: bool = False

    def __post_init__(self) -> None:
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1 for stationarity, got {self.rho}")
        if min(self.n_train, self.n_cal, self.n_test) < 1:
            raise ValueError("train, calibration and test windows must be nonempty")
        if not 1 <= self.n_groups <= self.n:
            raise ValueError("need 1 <= n_groups <= n")

    @property
    def horizon(self) -> int:
        return self.n_train + self.n_cal + self.n_test

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SyntheticConfig":
        data = dict(data)
        data.pop("horizon", None)
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self) | {"horizon": self.horizon}


@dataclass
class SyntheticData:
    config: SyntheticConfig
    v: np.ndarray  # (T,) shared weather covariate
    counts: np.ndarray  # (T, n) ignition counts
    kappa: np.ndarray  # (n,)
    grouping: Grouping

    @property
    def train(self) -> slice:
        return slice(0, self.config.n_train)

    @property
    def cal(self) -> slice:
        c = self.config
        return slice(c.n_train, c.n_train + c.n_cal)

    @property
    def test(self) -> slice:
        c = self.config
        return slice(c.n_train + c.n_cal, c.horizon)

    def design(self, window: slice) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (V, u) for a time window, ordered by time then segment."""
        v = self.v[window]
        counts = self.counts[window]
        V = np.repeat(v, self.config.n)[:, None]
        return V, counts.reshape(-1).astype(float)

    def covariates(self, t: int) -> np.ndarray:
        """Covariate matrix (n, p) of all segments at time t."""
        return np.full((self.config.n, 1), self.v[t])


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticData:
    """AR(1) weather driving log-linear Poisson ignition intensities."""
    rng = np.random.default_rng(cfg.seed)
    T, n = cfg.horizon, cfg.n
    v = np.empty(T)
    v[0] = rng.normal(0.0, cfg.xi_sd / np.sqrt(1.0 - cfg.rho**2))
    xi = rng.normal(0.0, cfg.xi_sd, size=T)
    for k in range(1, T):
        v[k] = cfg.rho * v[k - 1] + xi[k]
    kappa = np.full(n, cfg.kappa)
    if cfg.kappa_jitter:
        kappa = kappa + rng.uniform(-0.2, 0.2, size=n)
    eps = rng.normal(0.0, cfg.noise_sd, size=(T, n))
    lam = cfg.mu * np.exp(kappa[None, :] * v[:, None] + eps)
    counts = rng.poisson(lam)
    grouping = random_grouping(n, cfg.n_groups, seed=int(rng.integers(2**32)))
    return SyntheticData(cfg, v, counts, kappa, grouping)


def write_synthetic(data: SyntheticData, out_dir: str | Path) -> dict[str, Path]:
    """Write train/cal/test record CSVs plus a JSON manifest with the seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = data.config.n
    paths = {}
    for name, window in (("train", data.train), ("cal", data.cal), ("test", data.test)):
        times = np.arange(data.config.horizon)[window]
        V, u = data.design(window)
        p = out / f"{name}.csv"
        write_records_csv(p, np.tile(np.arange(n), len(times)), np.repeat(times, n), u, V)
        paths[name] = p
    manifest = {
        "config": data.config.to_dict(),
        "seed": data.config.seed,
        "assignment": data.grouping.assignment.tolist(),
        "n_groups": data.grouping.n_groups,
        "kappa": data.kappa.tolist(),
        "files": {k: v.name for k, v in paths.items()},
    }
    paths["manifest"] = out / "manifest.json"
    paths["manifest"].write_text(json.dumps(manifest, indent=2))
    return paths


@dataclass
class VarGeneratorConfig:
    n_components: int = 8
    var_lag: int = 1
    years_train: int = 20
    years_cal: int = 200
    steps_per_year: int | None = None
    burn_in: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.var_lag != 1:
            raise ValueError("only lag-1 autoregression is supported")


@dataclass
class VarModel:
    mean: np.ndarray  # (p,)
    components: np.ndarray  # (p, k) orthonormal columns
    eigenvalues: np.ndarray  # (p,) descending, all of them
    intercept: np.ndarray  # (k,)
    coef: np.ndarray  # (k, k): s_t = intercept + coef @ s_{t-1} + e_t
    resid_cov: np.ndarray  # (k, k)
    last_score: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def k(self) -> int:
        return int(self.components.shape[1])

    def project(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X) - self.mean) @ self.components

    def reconstruct(self, S: np.ndarray) -> np.ndarray:
        return np.asarray(S) @ self.components.T + self.mean

    @property
    def discarded_share(self) -> float:
        total = float(np.sum(self.eigenvalues))
        return 0.0 if total <= 0 else float(np.sum(self.eigenvalues[self.k:]) / total)


def fit_pca_var(covariates, n_components: int = 8) -> VarModel:
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T, p = X.shape
    if T < 3:
        raise ValueError("need at least three time steps")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (T - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    tol = 1e-12 * max(1.0, float(evals[0]) if evals.size else 1.0)
    rank = int(np.sum(evals > tol))
    k = min(n_components, p)
    if k < n_components:
        log.warning("n_components %d exceeds covariate dimension %d; using %d", n_components, p, k)
    if rank < k:
        log.warning("covariance rank %d below requested %d components; truncating", rank, k)
        k = rank
    comps = evecs[:, :k]
    # deterministic sign: largest-magnitude loading positive
    for j in range(k):
        if comps[np.argmax(np.abs(comps[:, j])), j] < 0:
            comps[:, j] *= -1
    S = Xc @ comps
    if k == 0:
        empty = np.zeros((0, 0))
        return VarModel(mean, comps, evals, np.zeros(0), empty, empty, np.zeros(0))
    Y = S[1:]
    Z = np.hstack([np.ones((T - 1, 1)), S[:-1]])
    B, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    resid = Y - Z @ B
    dof = max(T - 1 - (k + 1), 1)
    resid_cov = resid.T @ resid / dof
    return VarModel(mean, comps, evals, B[0], B[1:].T, resid_cov, S[-1].copy())


def simulate_var(model: VarModel, steps: int, rng: np.random.Generator, burn_in: int = 100) -> np.ndarray:
    """Simulate component scores forward and map back to covariate space, shape (steps, p)."""
    p = model.mean.shape[0]
    if model.k == 0:
        return np.tile(model.mean, (steps, 1))
    w, V = np.linalg.eigh(model.resid_cov)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    s = model.last_score.copy()
    out = np.empty((steps, model.k))
    for t in range(burn_in + steps):
        s = model.intercept + model.coef @ s + root @ rng.standard_normal(model.k)
        if t >= burn_in:
            out[t - burn_in] = s
    return model.reconstruct(out).reshape(steps, p)


def generate_var_scenarios(covariates, cfg: VarGeneratorConfig) -> dict[str, Any]:
    """Semi-synthetic covariate years from a PCA + VAR(1) fit of ``covariates`` (T x p)."""
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    model = fit_pca_var(X, cfg.n_components)
    steps = cfg.steps_per_year or X.shape[0]
    rng = np.random.default_rng(cfg.seed)
    years = cfg.years_train + cfg.years_cal
    traj = simulate_var(model, years * steps, rng, burn_in=cfg.burn_in).reshape(years, steps, -1)
    return {"model": model, "train": traj[: cfg.years_train], "cal": traj[cfg.years_train:]}
