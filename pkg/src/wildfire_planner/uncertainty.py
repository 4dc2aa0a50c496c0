"""Grouped conformal uncertainty sets and the box-shaped baselines.

Segment-level intervals are tightened by group-level intervals on sums of
segment counts. Every builder returns an :class:`UncertaintySet` holding
bounds on the augmented vector ``nu(u) = (u_1..u_n, group sums)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist
from typing import Any, Sequence

import numpy as np

GROUPED = "grouped"
BOX = "box"


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grouping:
    assignment: np.ndarray
    n_groups: int

    def __post_init__(self) -> None:
        a = _frozen(self.assignment, dtype=int).reshape(-1)
        object.__setattr__(self, "assignment", a)
        if self.n_groups < 0 or self.n_groups > a.size:
            raise ValueError(f"n_groups={self.n_groups} invalid for n={a.size}")
        if self.n_groups and (a.min() < 0 or a.max() >= self.n_groups):
            raise ValueError("group index out of range")
        if self.n_groups and np.bincount(a, minlength=self.n_groups).min() == 0:
            raise ValueError("every group must be nonempty")

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    @property
    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignment == g) for g in range(self.n_groups)]

    def matrix(self) -> np.ndarray:
        """Membership matrix G with G[g, i] = 1 when segment i is in group g."""
        G = np.zeros((self.n_groups, self.n))
        if self.n_groups:
            G[self.assignment, np.arange(self.n)] = 1.0
        return G

    @classmethod
    def none(cls, n: int) -> "Grouping":
        return cls(np.zeros(n, dtype=int), 0)


def random_grouping(n: int, n_groups: int, seed: int | None = None) -> Grouping:
    """Uniformly random balanced partition; group sizes differ by at most one."""
    if not 1 <= n_groups <= n:
        raise ValueError(f"need 1 <= n_groups <= n, got n_groups={n_groups}, n={n}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_groups
    return Grouping(rng.permutation(labels), n_groups)


def augment(grouping: Grouping, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != grouping.n:
        raise ValueError(f"vector has length {u.shape[-1]}, grouping expects {grouping.n}")
    if grouping.n_groups == 0:
        return u.copy()
    return np.concatenate([u, u @ grouping.matrix().T], axis=-1)


def score(grouping: Grouping, u, u_hat) -> float:
    """Sup-norm distance between augmented realized and predicted vectors."""
    u = np.asarray(u, dtype=float)
    u_hat = np.asarray(u_hat, dtype=float)
    if u.shape != u_hat.shape:
        raise ValueError("u and u_hat must have equal lengths")
    return float(np.max(np.abs(augment(grouping, u) - augment(grouping, u_hat))))


def _order_index(m: int, level: float) -> int:
    """Smallest k in 1..m with k/m >= level."""
    k = min(max(int(math.ceil(level * m)), 1), m)
    while k > 1 and (k - 1) / m >= level:
        k -= 1
    while k < m and k / m < level:
        k += 1
    return k


def empirical_quantile(scores: Sequence[float], alpha: float) -> float:
    """Q(alpha) = inf{q : F_m(q) >= 1 - alpha}, the ceil((1-alpha) m)-th smallest score.

    ``alpha = 0`` is accepted and returns the largest score.
    """
    s = np.sort(np.asarray(scores, dtype=float))
    if s.size == 0:
        raise ValueError("empirical_quantile of an empty score list")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    return float(s[_order_index(s.size, 1.0 - alpha) - 1])


def mixing_correction(gamma_mix: float, m: int) -> float:
    """Coverage slack for alpha-mixing scores with mixing-coefficient sum ``gamma_mix``."""
    if m < 1:
        raise ValueError("calibration size must be at least 1")
    return 2.0 * (3.0 + 8.0 * gamma_mix) ** (1 / 3) * (3.0 + math.log(m) / (2 * math.log(2))) ** (2 / 3) / m ** (1 / 3)


@dataclass(frozen=True)
class CalibrationSet:
    """Time-ordered (observed, predicted) count pairs, each an (m, n) array."""

    u: np.ndarray
    u_hat: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self) -> None:
        u = _frozen(np.atleast_2d(self.u))
        uh = _frozen(np.atleast_2d(self.u_hat))
        if u.shape != uh.shape:
            raise ValueError(f"calibration shapes differ: {u.shape} vs {uh.shape}")
        t = np.arange(u.shape[0]) if self.times is None else np.asarray(self.times)
        if t.shape[0] != u.shape[0] or np.any(np.diff(t) < 0):
            raise ValueError("calibration times must be time-ordered, one per row")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "u_hat", uh)
        object.__setattr__(self, "times", _frozen(t, dtype=int))

    @property
    def m(self) -> int:
        return int(self.u.shape[0])

    @property
    def n(self) -> int:
        return int(self.u.shape[1])

    @property
    def abs_residuals(self) -> np.ndarray:
        return np.abs(self.u - self.u_hat)


@dataclass(frozen=True)
class UncertaintySet:
    grouping: Grouping
    L: np.ndarray
    U: np.ndarray
    mode: str = GROUPED
    center: np.ndarray | None = None
    quantile: float | np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "L", _frozen(self.L))
        object.__setattr__(self, "U", _frozen(self.U))
        if self.center is not None:
            object.__setattr__(self, "center", _frozen(self.center))
        if self.mode not in (GROUPED, BOX):
            raise ValueError(f"unknown mode {self.mode!r}")
        rows = self.n + (self.n_groups if self.mode == GROUPED else 0)
        if self.L.shape != (rows,) or self.U.shape != (rows,):
            raise ValueError(f"bounds must have length {rows}")
        if np.any(self.L > self.U + 1e-12) or np.any(self.L < 0):
            raise ValueError("bounds need 0 <= L <= U")
        if self.mode == GROUPED:
            G = self.grouping.matrix()
            n = self.n
            if np.any(G @ self.L[:n] > self.U[n:] + 1e-9) or np.any(G @ self.U[:n] < self.L[n:] - 1e-9):
                raise ValueError("empty polytope: segment and group bounds are incompatible")

    @property
    def n(self) -> int:
        return self.grouping.n

    @property
    def n_groups(self) -> int:
        return self.grouping.n_groups

    @property
    def seg_L(self) -> np.ndarray:
        return self.L[: self.n]

    @property
    def seg_U(self) -> np.ndarray:
        return self.U[: self.n]

    @property
    def group_L(self) -> np.ndarray:
        return self.L[self.n:]

    @property
    def group_U(self) -> np.ndarray:
        return self.U[self.n:]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "mode": self.mode,
            "n": self.n,
            "n_groups": self.n_groups,
            "assignment": self.grouping.assignment.tolist(),
            "L": self.L.tolist(),
            "U": self.U.tolist(),
        }
        if self.center is not None:
            out["u_hat"] = self.center.tolist()
        return out

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "UncertaintySet":
        k = int(data["n_groups"])
        grouping = Grouping(np.asarray(data["assignment"], dtype=int), k)
        if grouping.n != int(data["n"]):
            raise ValueError("assignment length does not match n")
        center = data.get("u_hat")
        return cls(grouping, data["L"], data["U"], data["mode"], None if center is None else center)

    @classmethod
    def from_json(cls, path: str | Path) -> "UncertaintySet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def contains(uset: UncertaintySet, u, tol: float = 1e-9) -> bool:
    """Whether L <= nu(u) <= U on every row present in the set."""
    u = np.asarray(u, dtype=float)
    if u.shape != (uset.n,):
        raise ValueError(f"scenario has length {u.shape}, set expects {uset.n}")
    nu = augment(uset.grouping, u) if uset.mode == GROUPED else u
    return bool(np.all(nu >= uset.L - tol) and np.all(nu <= uset.U + tol))


def _interval(center: np.ndarray, q) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(center - q, 0.0), center + q


def build_grouped_set(cal: CalibrationSet, grouping: Grouping, u_hat_future, alpha: float,
                      apply_correction: bool = False, gamma_mix: float = 0.0) -> UncertaintySet:
    """Calibrate one sup-norm radius over segments and groups.

    With ``apply_correction`` the quantile level is shifted to
    ``max(alpha - eps, 0)`` using :func:`mixing_correction`.
    """
    if cal.m == 0:
        raise ValueError("empty calibration set")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    u_hat_future = np.asarray(u_hat_future, dtype=float)
    nu_u = augment(grouping, cal.u)
    nu_hat = augment(grouping, cal.u_hat)
    scores = np.max(np.abs(nu_u - nu_hat), axis=1)
    level = alpha
    if apply_correction:
        level = max(alpha - mixing_correction(gamma_mix, cal.m), 0.0)
    q = empirical_quantile(scores, level)
    L, U = _interval(augment(grouping, u_hat_future), q)
    mode = GROUPED if grouping.n_groups else BOX
    try:
        return UncertaintySet(grouping, L, U, mode, center=u_hat_future, quantile=q)
    except ValueError as err:  # pragma: no cover - a single radius cannot produce an empty set
        raise AssertionError(f"internal error building grouped set: {err}") from err


def _box(cal: CalibrationSet, u_hat_future, q: np.ndarray) -> UncertaintySet:
    u_hat_future = np.asarray(u_hat_future, dtype=float)
    if u_hat_future.shape != (cal.n,):
        raise ValueError("u_hat_future has the wrong length")
    L, U = _interval(u_hat_future, q)
    return UncertaintySet(Grouping.none(cal.n), L, U, BOX, center=u_hat_future, quantile=q)


def build_bonferroni_set(cal: CalibrationSet, u_hat_future, alpha: float) -> UncertaintySet:
    """Per-segment split-conformal quantiles at level alpha / n."""
    res = cal.abs_residuals
    q = np.array([empirical_quantile(res[:, i], alpha / cal.n) for i in range(cal.n)])
    return _box(cal, u_hat_future, q)


def build_maxrank_set(cal: CalibrationSet, u_hat_future, alpha: float) -> UncertaintySet:
    """Simultaneous intervals from the conformal quantile of per-time maximum ranks."""
    m = cal.m
    if m < 2:
        raise ValueError("max-rank needs at least two calibration points")
    res = cal.abs_residuals
    # stable sort: ties keep time order
    order = np.argsort(res, axis=0, kind="stable")
    ranks = np.empty_like(order)
    cols = np.arange(cal.n)
    ranks[order, cols] = np.arange(1, m + 1)[:, None]
    s = np.sort(ranks.max(axis=1))
    k = min(int(math.ceil((1.0 - alpha) * (m + 1) - 1e-12)), m)
    r_star = int(s[max(k, 1) - 1])
    sorted_res = np.sort(res, axis=0)
    q = sorted_res[r_star - 1, :]
    return _box(cal, u_hat_future, q)


_NORMAL = NormalDist()


def normal_quantile(p: float) -> float:
    return _NORMAL.inv_cdf(p)


def build_ci_set(cal: CalibrationSet, u_hat_future, alpha: float) -> UncertaintySet:
    """Mean plus z_{1 - alpha/n} sample standard deviations of absolute residuals."""
    if cal.m < 2:
        raise ValueError("confidence-interval baseline needs at least two calibration points")
    res = cal.abs_residuals
    mu = res.mean(axis=0)
    sd = res.std(axis=0, ddof=1)
    q = mu + normal_quantile(1.0 - alpha / cal.n) * sd
    return _box(cal, u_hat_future, q)


def project_center(uset: UncertaintySet, engine: str = "builtin") -> np.ndarray:
    """Closest point (in l1) of the polytope to the midpoint of the segment bounds."""
    from .optim import LinearModel, solve_lp

    n = uset.n
    mid = 0.5 * (uset.seg_L + uset.seg_U)
    if uset.mode == BOX or contains(uset, mid):
        return mid
    model = LinearModel("project_center")
    u = model.add_vars(n, lb=uset.seg_L, ub=uset.seg_U, group="u")
    t = model.add_vars(n, lb=0.0, group="t")
    for i in range(n):
        model.add_constr({t[i]: 1.0, u[i]: -1.0}, ">=", -mid[i])
        model.add_constr({t[i]: 1.0, u[i]: 1.0}, ">=", mid[i])
    for g, idx in enumerate(uset.grouping.members):
        row = {u[i]: 1.0 for i in idx}
        model.add_constr(row, ">=", uset.group_L[g])
        model.add_constr(row, "<=", uset.group_U[g])
    model.set_objective({j: 1.0 for j in t})
    res = solve_lp(model, engine=engine)
    if not res.ok:
        raise RuntimeError(f"projection onto uncertainty set failed: {res.status}")
    return np.clip(res.x[u], uset.seg_L, uset.seg_U)


# -- CSV: time,segment,u,u_hat ---------------------------------------------------

def write_calibration_csv(path: str | Path, cal: CalibrationSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "segment", "u", "u_hat"])
        for k, t in enumerate(cal.times):
            for i in range(cal.n):
                w.writerow([int(t), i, repr(float(cal.u[k, i])), repr(float(cal.u_hat[k, i]))])


def read_calibration_csv(path: str | Path) -> CalibrationSet:
    rows: dict[int, dict[int, tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for r in reader:
            rows.setdefault(int(r["time"]), {})[int(r["segment"])] = (float(r["u"]), float(r["u_hat"]))
    times = sorted(rows)
    n = 1 + max(max(v) for v in rows.values())
    u = np.zeros((len(times), n))
    uh = np.zeros((len(times), n))
    for k, t in enumerate(times):
        if len(rows[t]) != n:
            raise ValueError(f"time {t} has {len(rows[t])} segments, expected {n}")
        for i, (a, b) in rows[t].items():
            u[k, i], uh[k, i] = a, b
    return CalibrationSet(u, uh, np.array(times))
