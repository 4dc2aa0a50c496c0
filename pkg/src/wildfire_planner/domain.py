"""Core value types: planning instances, plans, recourse decisions.

Indices are 0-based everywhere (files included); segment ``i`` here is
segment ``i + 1`` in one-based notation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

VECTOR_FIELDS = ("h", "beta", "gamma", "delta", "c", "b")
SCALAR_FIELDS = ("C", "B", "W")
INSTANCE_KEYS = ("n",) + VECTOR_FIELDS + SCALAR_FIELDS


def _frozen(a: Any, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Violation:
    field: str
    index: int | None
    message: str

    def __str__(self) -> str:
        where = self.field if self.index is None else f"{self.field}[{self.index}]"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class PlanningInstance:
    """Deterministic data of the planning problem.

    h      consequence weight per ignition
    beta   fast-trip ignition reduction factor, in [0, 1]
    gamma  reliability impact of fast-trip configuration
    delta  reliability impact per PSPS action
    c, b   sectionalization and fast-trip costs
    C, B   sectionalization and fast-trip budgets
    W      reliability threshold
    """

    h: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    c: np.ndarray
    b: np.ndarray
    C: float
    B: float
    W: float

    def __post_init__(self) -> None:
        for name in VECTOR_FIELDS:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        for name in SCALAR_FIELDS:
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def n(self) -> int:
        return int(self.h.shape[0])

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"n": self.n}
        for name in VECTOR_FIELDS:
            out[name] = getattr(self, name).tolist()
        for name in SCALAR_FIELDS:
            out[name] = getattr(self, name)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PlanningInstance":
        keys = set(data)
        if keys != set(INSTANCE_KEYS):
            missing = sorted(set(INSTANCE_KEYS) - keys)
            extra = sorted(keys - set(INSTANCE_KEYS))
            raise ValueError(f"instance keys mismatch: missing={missing} extra={extra}")
        inst = cls(**{k: data[k] for k in VECTOR_FIELDS + SCALAR_FIELDS})
        if inst.n != int(data["n"]):
            raise ValueError(f"n={data['n']} but h has length {inst.n}")
        return inst

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source: str | Path) -> "PlanningInstance":
        p = Path(source)
        text = p.read_text() if p.exists() else str(source)
        return cls.from_dict(json.loads(text))


def validate_instance(inst: PlanningInstance) -> list[Violation]:
    """Return every invariant violation; an empty list means the instance is valid."""
    out: list[Violation] = []
    n = inst.n
    for name in VECTOR_FIELDS:
        vec = getattr(inst, name)
        if vec.shape[0] != n:
            out.append(Violation(name, None, f"length {vec.shape[0]} != n={n}"))
            continue
        for i, val in enumerate(vec):
            if not np.isfinite(val):
                out.append(Violation(name, i, f"non-finite value {val}"))
            elif val < 0:
                out.append(Violation(name, i, f"negative value {val}"))
            elif name == "beta" and val > 1:
                out.append(Violation(name, i, f"value {val} exceeds 1"))
    for name in SCALAR_FIELDS:
        val = getattr(inst, name)
        if not np.isfinite(val):
            out.append(Violation(name, None, f"non-finite value {val}"))
        elif val < 0:
            out.append(Violation(name, None, f"negative value {val}"))
    return out


def _check_dims(n: int, **vectors: np.ndarray) -> None:
    for name, vec in vectors.items():
        if vec.shape != (n,):
            raise ValueError(f"{name} has shape {vec.shape}, expected ({n},)")


def objective_value(inst: PlanningInstance, x, y, u, z) -> float:
    """Residual consequence sum_i h_i (1 - beta_i y_i)(u_i - z_i).

    No clamping is applied, so infeasible inputs (z_i > u_i) show up as
    negative contributions. ``x`` only participates in the dimension check.
    """
    x, y, u, z = (np.asarray(a, dtype=float) for a in (x, y, u, z))
    _check_dims(inst.n, x=x, y=y, u=u, z=z)
    return float(np.sum(inst.h * (1.0 - inst.beta * y) * (u - z)))


@dataclass(frozen=True)
class PlanDecision:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        # kept as floats so that non-binary entries surface in violations()
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "y", _frozen(self.y))

    def violations(self, inst: PlanningInstance, tol: float = 1e-9) -> list[Violation]:
        out: list[Violation] = []
        for name, vec in (("x", self.x), ("y", self.y)):
            for i in np.flatnonzero((np.abs(vec) > tol) & (np.abs(vec - 1) > tol)):
                out.append(Violation(name, int(i), "not binary"))
        for i in np.flatnonzero(self.y > self.x):
            out.append(Violation("y", int(i), "fast-trip on unsectionalized segment"))
        if inst.c @ self.x > inst.C + tol:
            out.append(Violation("C", None, f"sectionalization cost {inst.c @ self.x:g} > {inst.C:g}"))
        if inst.b @ self.y > inst.B + tol:
            out.append(Violation("B", None, f"fast-trip cost {inst.b @ self.y:g} > {inst.B:g}"))
        return out


@dataclass(frozen=True)
class RecourseDecision:
    z: np.ndarray
    w: np.ndarray
    cost: float = float("nan")

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", _frozen(self.z))
        object.__setattr__(self, "w", _frozen(self.w))

    def violations(self, tol: float = 1e-9) -> list[Violation]:
        out: list[Violation] = []
        for i in np.flatnonzero(np.abs(self.z - np.round(self.z)) > tol):
            out.append(Violation("z", int(i), "not integer"))
        for i in np.flatnonzero(self.z < -tol):
            out.append(Violation("z", int(i), "negative"))
        for i in np.flatnonzero(self.w > self.z + tol):
            out.append(Violation("w", int(i), "exceeds z"))
        for i in np.flatnonzero(self.w < -tol):
            out.append(Violation("w", int(i), "negative"))
        return out


def check_scenario(u, n: int) -> np.ndarray:
    """Validate an ignition scenario (nonnegative, finite, length n)."""
    arr = np.asarray(u, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise ValueError(f"scenario has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("scenario must be finite and nonnegative")
    return arr


@dataclass
class PlanningSolution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None
    value: float
    gap: float
    outer_iters: int = 0
    status: str = "optimal"
    trace: list[dict[str, Any]] = field(default_factory=list)
    worst_case: np.ndarray | None = None

    @property
    def plan(self) -> PlanDecision:
        return PlanDecision(self.x, self.y)

    def to_dict(self) -> dict[str, Any]:
        return {
            "x": [int(v) for v in self.x],
            "y": [int(v) for v in self.y],
            "z": None if self.z is None else [int(round(v)) for v in self.z],
            "value": float(self.value),
            "gap": float(self.gap),
            "outer_iters": int(self.outer_iters),
            "status": self.status,
            "trace": [
                {k: rec[k] for k in ("lb", "ub", "inner_iters", "inner_slack", "scenario") if k in rec}
                for rec in self.trace
            ],
            "worst_case": None if self.worst_case is None else [float(v) for v in self.worst_case],
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PlanningSolution":
        z = data.get("z")
        wc = data.get("worst_case")
        return cls(
            x=np.asarray(data["x"], dtype=int),
            y=np.asarray(data["y"], dtype=int),
            z=None if z is None else np.asarray(z, dtype=float),
            value=float(data["value"]),
            gap=float(data["gap"]),
            outer_iters=int(data.get("outer_iters", 0)),
            status=data.get("status", "optimal"),
            trace=list(data.get("trace", [])),
            worst_case=None if wc is None else np.asarray(wc, dtype=float),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "PlanningSolution":
        return cls.from_dict(json.loads(Path(path).read_text()))
