"""Linear / mixed-integer model container and its textual dump format.

Dump grammar (one item per line, tokens separated by single spaces)::

    model     := header objective "subject to" row* "bounds" bound* "integers" int_line "end"
    header    := "\\ model " NAME
    objective := ("minimize" | "maximize") NEWLINE "  obj:" term* [" + " OFFSET]
    row       := "  " NAME ":" term* " " ("<=" | "=" | ">=") " " RHS
    term      := " " SIGN COEF " x" INDEX          (sorted by INDEX)
    bound     := "  " LB " <= x" INDEX " <= " UB  | "  x" INDEX " free"
    int_line  := "  " ("x" INDEX " ")*

Numbers use ``repr`` of Python floats, so the dump is byte-deterministic and
round-trips exactly; ``inf`` marks an infinite bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

INF = math.inf
_SENSES = ("<=", "=", ">=")


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass
class Variable:
    lb: float = 0.0
    ub: float = INF
    integer: bool = False
    name: str = ""


@dataclass
class Constraint:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None = None
    objective: float | None = None
    gap: float = 0.0
    iterations: int = 0
    nodes: int = 0
    duals: np.ndarray | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


class LinearModel:
    """Variables, linear rows and a linear objective.

    ``groups`` maps a label (e.g. ``"z"``) to the indices of a block of
    variables so that model builders can hand results back by name.
    """

    def __init__(self, name: str = "model") -> None:
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.sense = "min"
        self.objective: dict[int, float] = {}
        self.offset = 0.0
        self.groups: dict[str, list[int]] = {}

    # -- construction -------------------------------------------------------
    def add_var(self, lb: float = 0.0, ub: float = INF, integer: bool = False, name: str = "") -> int:
        self.variables.append(Variable(float(lb), float(ub), bool(integer), name))
        return len(self.variables) - 1

    def add_vars(self, count: int, lb=0.0, ub=INF, integer: bool = False, group: str | None = None) -> list[int]:
        lbs = np.broadcast_to(np.asarray(lb, dtype=float), (count,))
        ubs = np.broadcast_to(np.asarray(ub, dtype=float), (count,))
        idx = [
            self.add_var(lbs[k], ubs[k], integer, f"{group}[{k}]" if group else "")
            for k in range(count)
        ]
        if group is not None:
            self.groups[group] = idx
        return idx

    def add_constr(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]], sense: str, rhs: float, name: str = "") -> int:
        if sense not in _SENSES:
            raise ValueError(f"unknown relation {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        row: dict[int, float] = {}
        for j, a in items:
            row[int(j)] = row.get(int(j), 0.0) + float(a)
        row = {j: a for j, a in row.items() if a != 0.0}
        self.constraints.append(Constraint(row, sense, float(rhs), name))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Mapping[int, float], sense: str = "min", offset: float = 0.0) -> None:
        if sense not in ("min", "max"):
            raise ValueError(f"unknown objective sense {sense!r}")
        self.sense = sense
        self.objective = {int(j): float(a) for j, a in coeffs.items() if a != 0.0}
        self.offset = float(offset)

    # -- inspection ---------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def is_mip(self) -> bool:
        return any(v.integer for v in self.variables)

    def validate(self) -> None:
        n = self.num_vars
        for j, v in enumerate(self.variables):
            if math.isnan(v.lb) or math.isnan(v.ub) or v.lb > v.ub:
                raise ValueError(f"variable x{j} has invalid bounds [{v.lb}, {v.ub}]")
        for k, con in enumerate(self.constraints):
            if not math.isfinite(con.rhs):
                raise ValueError(f"row {k} has non-finite rhs")
            for j, a in con.coeffs.items():
                if not 0 <= j < n:
                    raise ValueError(f"row {k} references undeclared variable x{j}")
                if not math.isfinite(a):
                    raise ValueError(f"row {k} has non-finite coefficient on x{j}")
        for j, a in self.objective.items():
            if not 0 <= j < n or not math.isfinite(a):
                raise ValueError(f"bad objective term on x{j}")

    def arrays(self):
        """Dense arrays ``(c, A, senses, b, lb, ub, integrality)`` in the model's own sense."""
        n, m = self.num_vars, self.num_constraints
        c = np.zeros(n)
        for j, a in self.objective.items():
            c[j] = a
        A = np.zeros((m, n))
        b = np.empty(m)
        senses = []
        for k, con in enumerate(self.constraints):
            for j, a in con.coeffs.items():
                A[k, j] = a
            b[k] = con.rhs
            senses.append(con.sense)
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        integrality = np.array([v.integer for v in self.variables], dtype=bool)
        return c, A, senses, b, lb, ub, integrality

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.offset + sum(a * x[j] for j, a in self.objective.items())

    def max_violation(self, x, integrality: bool = True) -> float:
        """Largest bound, row or integrality violation of ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for j, v in enumerate(self.variables):
            worst = max(worst, v.lb - x[j], x[j] - v.ub)
            if integrality and v.integer:
                worst = max(worst, abs(x[j] - round(x[j])))
        for con in self.constraints:
            act = sum(a * x[j] for j, a in con.coeffs.items())
            if con.sense == "<=":
                worst = max(worst, act - con.rhs)
            elif con.sense == ">=":
                worst = max(worst, con.rhs - act)
            else:
                worst = max(worst, abs(act - con.rhs))
        return worst

    def copy(self) -> "LinearModel":
        other = LinearModel(self.name)
        other.variables = [Variable(v.lb, v.ub, v.integer, v.name) for v in self.variables]
        other.constraints = [Constraint(dict(c.coeffs), c.sense, c.rhs, c.name) for c in self.constraints]
        other.sense = self.sense
        other.objective = dict(self.objective)
        other.offset = self.offset
        other.groups = {k: list(v) for k, v in self.groups.items()}
        return other

    # -- dump ---------------------------------------------------------------
    def dump(self) -> str:
        lines = [f"\\ model {self.name}", "minimize" if self.sense == "min" else "maximize"]
        obj = "  obj:" + _terms(self.objective)
        if self.offset != 0.0:
            obj += f" + {self.offset!r}"
        lines.append(obj)
        lines.append("subject to")
        for k, con in enumerate(self.constraints):
            label = con.name or f"c{k}"
            lines.append(f"  {label}:{_terms(con.coeffs)} {con.sense} {con.rhs!r}")
        lines.append("bounds")
        for j, v in enumerate(self.variables):
            if v.lb == -INF and v.ub == INF:
                lines.append(f"  x{j} free")
            else:
                lines.append(f"  {v.lb!r} <= x{j} <= {v.ub!r}")
        lines.append("integers")
        lines.append("  " + " ".join(f"x{j}" for j, v in enumerate(self.variables) if v.integer))
        lines.append("end")
        return "\n".join(lines) + "\n"


def _terms(coeffs: Mapping[int, float]) -> str:
    out = []
    for j in sorted(coeffs):
        a = coeffs[j]
        out.append(f" {'+' if a >= 0 else '-'}{abs(a)!r} x{j}")
    return "".join(out)


def parse_dump(text: str) -> LinearModel:
    """Inverse of :meth:`LinearModel.dump` (row names are kept, groups are not)."""
    lines = text.splitlines()
    it = iter(lines)
    header = next(it)
    model = LinearModel(header.split(" ", 2)[2] if header.count(" ") >= 2 else "model")
    sense = "min" if next(it).strip() == "minimize" else "max"
    obj_line = next(it).strip()[len("obj:"):]
    obj_terms, offset = _parse_terms(obj_line, allow_offset=True)
    assert next(it).strip() == "subject to"
    rows = []
    line = next(it)
    while line.strip() != "bounds":
        label, rest = line.strip().split(":", 1)
        for sense_tok in (" <= ", " >= ", " = "):
            if sense_tok in rest:
                lhs, rhs = rest.rsplit(sense_tok, 1)
                rows.append((label, _parse_terms(lhs)[0], sense_tok.strip(), float(rhs)))
                break
        line = next(it)
    bounds = []
    line = next(it)
    while line.strip() != "integers":
        tok = line.split()
        if tok[-1] == "free":
            bounds.append((-INF, INF))
        else:
            bounds.append((float(tok[0]), float(tok[-1])))
        line = next(it)
    ints = {int(t[1:]) for t in next(it).split()}
    for j, (lo, hi) in enumerate(bounds):
        model.add_var(lo, hi, j in ints)
    for label, coeffs, s, rhs in rows:
        model.add_constr(coeffs, s, rhs, name=label)
    model.set_objective(obj_terms, sense, offset)
    return model


def _parse_terms(s: str, allow_offset: bool = False):
    coeffs: dict[int, float] = {}
    offset = 0.0
    toks = s.split()
    k = 0
    while k < len(toks):
        tok = toks[k]
        if allow_offset and tok == "+" and k + 1 < len(toks) and not toks[k + 1].startswith("x"):
            offset = float(toks[k + 1])
            k += 2
            continue
        coef = float(tok)
        var = toks[k + 1]
        coeffs[int(var[1:])] = coef
        k += 2
    return coeffs, offset
