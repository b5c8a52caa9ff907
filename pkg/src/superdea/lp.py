"""Dense revised simplex for small linear programs.

Problems are stated as::

    minimize    c @ x
    subject to  A[i] @ x  (<= | = | >=)  b[i]
                lower <= x <= upper

and solved with a two-phase revised simplex that keeps an explicit basis
inverse.  Dantzig pricing is used until a run of degenerate pivots is seen,
after which Bland's rule takes over to rule out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

SENSES = ("<=", "=", ">=")


class LpError(Exception):
    """Structural problem with an LP (shapes, senses, bounds)."""


class IterationLimitError(LpError):
    """Simplex ran past its iteration cap without terminating."""


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class SolverSettings:
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    pivot_tol: float = 1e-11
    max_iter: int = 10_000
    bland_after: int = 50
    refactor_every: int = 40


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StandardFormLP:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple[str, ...]
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = _frozen(self.c).ravel()
        A = _frozen(self.A)
        if A.ndim == 1 and A.size == 0:
            A = np.zeros((0, c.size))
        if A.ndim != 2:
            raise LpError(f"constraint matrix must be 2-D, got shape {A.shape}")
        b = _frozen(self.b).ravel()
        senses = tuple(self.senses)
        rows, cols = A.shape
        if b.size != rows or len(senses) != rows:
            raise LpError(
                f"{rows} constraint rows but {b.size} rhs entries and {len(senses)} senses"
            )
        if c.size != cols:
            raise LpError(f"objective has {c.size} entries, matrix has {cols} columns")
        bad = [s for s in senses if s not in SENSES]
        if bad:
            raise LpError(f"unknown constraint sense(s) {bad}; expected one of {SENSES}")
        lower = np.zeros(cols) if self.lower is None else np.array(self.lower, dtype=float)
        upper = np.full(cols, np.inf) if self.upper is None else np.array(self.upper, dtype=float)
        if lower.shape != (cols,) or upper.shape != (cols,):
            raise LpError("bound vectors must match the number of columns")
        if not np.all(np.isfinite(lower)):
            raise LpError("lower bounds must be finite")
        if np.any(lower > upper):
            j = int(np.argmax(lower > upper))
            raise LpError(f"variable {j}: lower bound {lower[j]} exceeds upper bound {upper[j]}")
        for name, val in (("c", c), ("A", A), ("b", b), ("lower", _frozen(lower)), ("upper", _frozen(upper))):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "senses", senses)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: Status
    iterations: int
    value: float | None = None
    x: np.ndarray | None = None
    # Row duals of the original constraints, from the final basis.
    duals: np.ndarray | None = None
    phase_one_value: float | None = None
    ray: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Tableau:
    """Revised simplex state over equality rows ``A x = b, x >= 0``."""

    def __init__(self, A, b, basis, settings, iterations=0):
        self.A = A
        self.b = b
        self.basis = list(basis)
        self.s = settings
        self.iterations = iterations
        self._refactor()

    def _refactor(self):
        m = self.A.shape[0]
        if m == 0:
            self.Binv = np.zeros((0, 0))
        else:
            self.Binv = np.linalg.inv(self.A[:, self.basis])
        self._since_refactor = 0

    def xB(self):
        return self.Binv @ self.b

    def pivot(self, row, col, direction):
        p = direction[row]
        Binv = self.Binv
        pivot_row = Binv[row] / p
        Binv -= np.outer(direction, pivot_row)
        Binv[row] = pivot_row
        self.basis[row] = col
        self._since_refactor += 1
        if self._since_refactor >= self.s.refactor_every:
            self._refactor()

    def run(self, c, allowed):
        """Minimise ``c @ x``; returns ('optimal' | 'unbounded', entering, direction)."""
        s = self.s
        degenerate_run = 0
        while True:
            if self.iterations >= s.max_iter:
                raise IterationLimitError(f"simplex exceeded {s.max_iter} iterations")
            xB = self.xB()
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            d[self.basis] = 0.0
            d[~allowed] = 0.0
            candidates = np.flatnonzero(d < -s.opt_tol)
            if candidates.size == 0:
                return "optimal", None, None
            bland = degenerate_run >= s.bland_after
            q = int(candidates[0]) if bland else int(candidates[np.argmin(d[candidates])])
            direction = self.Binv @ self.A[:, q]
            positive = np.flatnonzero(direction > s.pivot_tol)
            if positive.size == 0:
                return "unbounded", q, direction
            ratios = np.maximum(xB[positive], 0.0) / direction[positive]
            theta = ratios.min()
            ties = positive[ratios <= theta + s.feas_tol * 1e-3]
            if bland:
                row = int(min(ties, key=lambda r: self.basis[r]))
            else:
                row = int(ties[np.argmax(direction[ties])])
            self.pivot(row, q, direction)
            self.iterations += 1
            degenerate_run = degenerate_run + 1 if theta <= s.feas_tol else 0


def _to_equality_form(problem: StandardFormLP):
    """Shift bounds, add slack/surplus columns, make every rhs nonnegative."""
    A0, b0, lower, upper = problem.A, problem.b, problem.lower, problem.upper
    rows, cols = A0.shape
    b = b0 - A0 @ lower
    senses = list(problem.senses)
    ub_cols = np.flatnonzero(np.isfinite(upper))
    if ub_cols.size:
        extra = np.zeros((ub_cols.size, cols))
        extra[np.arange(ub_cols.size), ub_cols] = 1.0
        A = np.vstack([A0, extra])
        b = np.concatenate([b, (upper - lower)[ub_cols]])
        senses += ["<="] * ub_cols.size
    else:
        A = np.array(A0, dtype=float)
    total_rows = A.shape[0]
    slack_rows = [i for i, sense in enumerate(senses) if sense != "="]
    S = np.zeros((total_rows, len(slack_rows)))
    for k, i in enumerate(slack_rows):
        S[i, k] = 1.0 if senses[i] == "<=" else -1.0
    A = np.hstack([A, S])
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    # A slack column that reads +1 after the sign flip is a ready-made basic column.
    ready = {}
    for k, i in enumerate(slack_rows):
        if A[i, cols + k] > 0:
            ready[i] = cols + k
    return A, b, sign, ready, rows


def solve_lp(problem: StandardFormLP, settings: SolverSettings | None = None) -> LpSolution:
    """Solve ``problem`` to optimality or prove it infeasible/unbounded."""
    s = settings or SolverSettings()
    if not isinstance(problem, StandardFormLP):
        raise LpError("solve_lp expects a StandardFormLP")
    n_orig = problem.A.shape[1]
    A, b, sign, ready, n_rows_orig = _to_equality_form(problem)
    m, n = A.shape
    c = np.concatenate([problem.c, np.zeros(n - n_orig)])

    art_rows = [i for i in range(m) if i not in ready]
    n_art = len(art_rows)
    if n_art:
        art = np.zeros((m, n_art))
        art[art_rows, np.arange(n_art)] = 1.0
        A_full = np.hstack([A, art])
    else:
        A_full = A
    basis = [ready.get(i, -1) for i in range(m)]
    for k, i in enumerate(art_rows):
        basis[i] = n + k

    phase_one_value = None
    active_rows = np.arange(m)
    tab = _Tableau(A_full, b, basis, s)
    if n_art:
        c1 = np.concatenate([np.zeros(n), np.ones(n_art)])
        tab.run(c1, np.ones(n + n_art, dtype=bool))
        phase_one_value = float(np.maximum(tab.xB(), 0.0) @ c1[tab.basis])
        if phase_one_value > s.feas_tol * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpSolution(Status.INFEASIBLE, tab.iterations, phase_one_value=phase_one_value)
        tab, active_rows = _drive_out_artificials(tab, n, s)

    allowed = np.ones(n, dtype=bool)
    tab.A = tab.A[:, :n]
    tab.A = np.ascontiguousarray(tab.A)
    outcome, q, direction = tab.run(c, allowed)
    if outcome == "unbounded":
        ray = np.zeros(n)
        ray[q] = 1.0
        ray[tab.basis] = -direction
        return LpSolution(
            Status.UNBOUNDED, tab.iterations, phase_one_value=phase_one_value, ray=ray[:n_orig]
        )

    x_eq = np.zeros(n)
    x_eq[tab.basis] = tab.xB()
    x = np.clip(x_eq[:n_orig], 0.0, None) + problem.lower
    y_active = c[tab.basis] @ tab.Binv
    y = np.zeros(m)
    y[active_rows] = y_active
    duals = (y * sign)[:n_rows_orig]
    return LpSolution(
        Status.OPTIMAL,
        tab.iterations,
        value=float(problem.c @ x),
        x=x,
        duals=duals,
        phase_one_value=phase_one_value,
    )


def _drive_out_artificials(tab: _Tableau, n: int, s: SolverSettings):
    """Pivot zero-level artificials out of the basis; drop rows that are redundant."""
    rows = np.arange(tab.A.shape[0])
    keep = np.ones(rows.size, dtype=bool)
    for r in range(rows.size):
        if tab.basis[r] < n:
            continue
        row_vals = tab.Binv[r] @ tab.A[:, :n]
        row_vals[[j for j in tab.basis if j < n]] = 0.0
        j = int(np.argmax(np.abs(row_vals)))
        if abs(row_vals[j]) > s.pivot_tol * 100:
            tab.pivot(r, j, tab.Binv @ tab.A[:, j])
        else:
            keep[r] = False
    if keep.all():
        return tab, rows
    basis = [tab.basis[r] for r in rows if keep[r]]
    new = _Tableau(tab.A[keep], tab.b[keep], basis, s, tab.iterations)
    return new, rows[keep]
