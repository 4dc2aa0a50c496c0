"""Dense bounded-variable primal simplex (two phases, tableau form).

Works on ``min c^T x  s.t.  A x = b,  lb <= x <= ub`` where bounds may be
infinite. Pricing is Dantzig's rule; after a run of degenerate pivots the
method switches to Bland's rule until the objective moves again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LinearModel, Status

OPT_TOL = 1e-9
PIV_TOL = 1e-9
REFACTOR_EVERY = 50
DEGENERATE_SWITCH = 25

BASIC, AT_LOWER, AT_UPPER, FREE = -1, 0, 1, 2


@dataclass
class StandardForm:
    """Equality form of a :class:`LinearModel` with one slack per inequality row.

    The first ``n_struct`` columns are the model's variables. ``sign`` is +1
    for minimisation and -1 for maximisation (``c`` is already negated).
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    n_struct: int
    sign: float
    offset: float
    integrality: np.ndarray


def standardize(model: LinearModel) -> StandardForm:
    c, A, senses, b, lb, ub, integrality = model.arrays()
    m, n = A.shape
    n_slack = sum(s != "=" for s in senses)
    S = np.zeros((m, n_slack))
    s_lb = np.zeros(n_slack)
    s_ub = np.zeros(n_slack)
    k = 0
    for i, s in enumerate(senses):
        if s == "=":
            continue
        S[i, k] = 1.0
        if s == "<=":
            s_lb[k], s_ub[k] = 0.0, math.inf
        else:
            s_lb[k], s_ub[k] = -math.inf, 0.0
        k += 1
    sign = 1.0 if model.sense == "min" else -1.0
    return StandardForm(
        c=np.concatenate([sign * c, np.zeros(n_slack)]),
        A=np.hstack([A, S]) if m else np.zeros((0, n + n_slack)),
        b=b,
        lb=np.concatenate([lb, s_lb]),
        ub=np.concatenate([ub, s_ub]),
        n_struct=n,
        sign=sign,
        offset=model.offset,
        integrality=integrality,
    )


@dataclass
class LPOutcome:
    status: Status
    x: np.ndarray | None = None
    value: float | None = None  # min-form objective, offset excluded
    duals: np.ndarray | None = None  # min-form row multipliers
    iterations: int = 0


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                 xv: np.ndarray, basis: np.ndarray, status: np.ndarray) -> None:
        self.A, self.b, self.lb, self.ub = A, b, lb, ub
        self.xv, self.basis, self.status = xv, basis, status
        self.refactor()

    def refactor(self) -> None:
        B = self.A[:, self.basis]
        self.T = np.linalg.solve(B, self.A) if self.basis.size else np.zeros((0, self.A.shape[1]))
        nb = self.status != BASIC
        rhs = self.b - self.A[:, nb] @ self.xv[nb]
        if self.basis.size:
            self.xv[self.basis] = np.linalg.solve(B, rhs)

    def run(self, c: np.ndarray, max_iters: int, it: int) -> tuple[Status, int]:
        lb, ub, xv, basis, status = self.lb, self.ub, self.xv, self.basis, self.status
        movable = ub > lb
        degenerate = 0
        bland = False
        pivots = 0
        while True:
            if it >= max_iters:
                return Status.ITERATION_LIMIT, it
            T = self.T
            d = c - c[basis] @ T if basis.size else c.copy()
            can_inc = ((status == AT_LOWER) | (status == FREE)) & (d < -OPT_TOL) & movable
            can_dec = ((status == AT_UPPER) | (status == FREE)) & (d > OPT_TOL) & movable
            elig = can_inc | can_dec
            if not elig.any():
                return Status.OPTIMAL, it
            if bland:
                j = int(np.flatnonzero(elig)[0])
            else:
                j = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            direction = 1.0 if can_inc[j] else -1.0
            col = T[:, j]
            alpha = direction * col
            xb = xv[basis]
            t_best = ub[j] - lb[j]
            row = -1
            if basis.size:
                lbB, ubB = lb[basis], ub[basis]
                lim = np.full(basis.size, math.inf)
                dec = (alpha > PIV_TOL) & np.isfinite(lbB)
                inc = (alpha < -PIV_TOL) & np.isfinite(ubB)
                lim[dec] = (xb[dec] - lbB[dec]) / alpha[dec]
                lim[inc] = (ubB[inc] - xb[inc]) / (-alpha[inc])
                np.maximum(lim, 0.0, out=lim)
                t_rows = lim.min()
                if t_rows < t_best:
                    ties = np.flatnonzero(lim <= t_rows + 1e-12)
                    if bland:
                        row = int(ties[np.argmin(basis[ties])])
                    else:
                        row = int(ties[np.argmax(np.abs(alpha[ties]))])
                    t_best = lim[row]
            if not math.isfinite(t_best):
                return Status.UNBOUNDED, it
            it += 1
            if t_best > 1e-12:
                degenerate = 0
                bland = False
            else:
                degenerate += 1
                if degenerate > DEGENERATE_SWITCH:
                    bland = True
            if basis.size:
                xv[basis] = xb - direction * t_best * col
            if row < 0:
                status[j] = AT_UPPER if direction > 0 else AT_LOWER
                xv[j] = ub[j] if direction > 0 else lb[j]
                continue
            leaving = basis[row]
            if alpha[row] > 0:
                xv[leaving], status[leaving] = lb[leaving], AT_LOWER
            else:
                xv[leaving], status[leaving] = ub[leaving], AT_UPPER
            xv[j] += direction * t_best
            basis[row] = j
            status[j] = BASIC
            pivots += 1
            if pivots % REFACTOR_EVERY == 0:
                self.refactor()
            else:
                prow = T[row] / T[row, j]
                T -= np.outer(T[:, j], prow)
                T[row] = prow


def solve_standard(sf: StandardForm, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
                   feas_tol: float = 1e-7, max_iters: int = 50_000) -> LPOutcome:
    """Two-phase simplex on a standard form, optionally with overridden bounds."""
    A, b = sf.A, sf.b
    m, N = A.shape
    lb = sf.lb.copy() if lb is None else lb.astype(float, copy=True)
    ub = sf.ub.copy() if ub is None else ub.astype(float, copy=True)
    if np.any(lb > ub + 1e-12):
        return LPOutcome(Status.INFEASIBLE)

    status = np.where(np.isfinite(lb), AT_LOWER, np.where(np.isfinite(ub), AT_UPPER, FREE))
    x0 = np.where(status == AT_LOWER, lb, np.where(status == AT_UPPER, ub, 0.0))
    resid = b - A @ x0
    sgn = np.where(resid >= 0, 1.0, -1.0)

    A_full = np.hstack([A, np.diag(sgn)]) if m else np.zeros((0, N))
    lb_f = np.concatenate([lb, np.zeros(m)])
    ub_f = np.concatenate([ub, np.full(m, math.inf)])
    xv = np.concatenate([x0, np.abs(resid)])
    st = np.concatenate([status, np.full(m, BASIC)])
    basis = np.arange(N, N + m)
    tab = _Tableau(A_full, b, lb_f, ub_f, xv, basis, st)

    c1 = np.concatenate([np.zeros(N), np.ones(m)])
    res, it = tab.run(c1, max_iters, 0)
    if res is Status.ITERATION_LIMIT:
        return LPOutcome(res, iterations=it)
    tab.refactor()
    infeas = float(np.sum(tab.xv[N:]))
    if infeas > feas_tol * (1.0 + float(np.max(np.abs(b), initial=0.0))):
        return LPOutcome(Status.INFEASIBLE, iterations=it)

    # artificials are pinned to zero for phase two
    tab.ub[N:] = 0.0
    tab.xv[N:] = 0.0
    nb_art = (tab.status[N:] != BASIC)
    tab.status[N:][nb_art] = AT_LOWER
    tab.refactor()

    c2 = np.concatenate([sf.c, np.zeros(m)])
    res, it = tab.run(c2, max_iters, it)
    if res is not Status.OPTIMAL:
        return LPOutcome(res, iterations=it)
    tab.refactor()
    x = tab.xv[:N].copy()
    # snap values that drifted marginally outside their bounds
    x = np.minimum(np.maximum(x, lb), ub)
    duals = np.linalg.solve(A_full[:, tab.basis].T, c2[tab.basis]) if m else np.zeros(0)
    return LPOutcome(Status.OPTIMAL, x=x, value=float(sf.c @ x), duals=duals, iterations=it)
