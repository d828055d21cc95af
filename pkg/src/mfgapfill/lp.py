"""Bounded-variable primal revised simplex with ranged rows and warm starts.

Problems have the form::

    min  c^T x
    s.t. row_lower <= A x <= row_upper
         lower <= x <= upper

Internally every row gets a logical variable ``s = A x`` carrying the row
range as its bounds, so the working system is ``[A  -I] z = 0`` with all
variables boxed (bounds may be infinite). The basis token returned with a
solution can be fed back into :meth:`SimplexSolver.solve` after any change to
variable or row bounds (or costs) of an LP with the same shape.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
MAX_PIVOTS = 1_000_000
BLAND_AFTER = 10_000
REFACTOR_EVERY = 50

# nonbasic status codes
AT_LOWER = 0
AT_UPPER = 1
AT_ZERO = 2  # free nonbasic variable, value 0
BASIC = 3


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class LinearProgram:
    """A minimisation LP in ranged-row form. ``matrix`` may be dense or scipy-sparse."""

    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    matrix: np.ndarray
    row_lower: np.ndarray
    row_upper: np.ndarray

    def __post_init__(self):
        mat = self.matrix
        if hasattr(mat, "toarray"):
            mat = mat.toarray()
        n = len(self.objective)
        mat = np.asarray(mat, dtype=float).reshape(-1, n) if n else np.zeros((len(self.row_lower), 0))
        object.__setattr__(self, "matrix", mat)
        for name in ("objective", "lower", "upper", "row_lower", "row_upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (len(self.lower) == len(self.upper) == n):
            raise ValueError("column bound arrays must match the objective length")
        if not (len(self.row_lower) == len(self.row_upper) == mat.shape[0]):
            raise ValueError("row range arrays must match the number of matrix rows")
        if np.any(self.lower > self.upper):
            raise ValueError("column lower bound exceeds upper bound")
        if np.any(self.row_lower > self.row_upper):
            raise ValueError("row lower bound exceeds upper bound")
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective coefficients must be finite")

    @property
    def num_cols(self) -> int:
        return len(self.objective)

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    def with_bounds(self, lower=None, upper=None, row_lower=None, row_upper=None) -> "LinearProgram":
        return LinearProgram(
            self.objective,
            self.lower if lower is None else lower,
            self.upper if upper is None else upper,
            self.matrix,
            self.row_lower if row_lower is None else row_lower,
            self.row_upper if row_upper is None else row_upper,
        )


@dataclass(frozen=True)
class Basis:
    """Opaque warm-start token: basic column indices and nonbasic statuses
    over the structural + logical columns."""

    basic: tuple
    status: tuple
    shape: tuple


@dataclass
class LpSolution:
    status: LpStatus
    primal: np.ndarray
    objective_value: float
    basis: Optional[Basis] = None
    iterations: int = 0
    row_activity: np.ndarray = field(default_factory=lambda: np.zeros(0))


class LpSolver(Protocol):
    def solve(self, lp: LinearProgram, warm_start: Optional[Basis] = None) -> LpSolution: ...


class SimplexSolver:
    """Reference in-house solver.

    Dantzig pricing, switching permanently to Bland's rule once the number of
    degenerate pivots reaches ``bland_after``. Phase 1 minimises the sum of
    bound infeasibilities of the basic variables and hands over to phase 2 as
    soon as the basis is primal feasible.
    """

    def __init__(self, max_pivots: int = MAX_PIVOTS, bland_after: int = BLAND_AFTER,
                 feas_tol: float = FEAS_TOL, opt_tol: float = OPT_TOL):
        self.max_pivots = max_pivots
        self.bland_after = bland_after
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol

    def solve(self, lp: LinearProgram, warm_start: Optional[Basis] = None) -> LpSolution:
        return _Simplex(lp, self).run(warm_start)


class _Simplex:
    def __init__(self, lp: LinearProgram, opts: SimplexSolver):
        self.lp = lp
        self.opts = opts
        m, n = lp.num_rows, lp.num_cols
        self.m, self.n = m, n
        self.W = np.hstack([lp.matrix, -np.eye(m)])
        self.lo = np.concatenate([lp.lower, lp.row_lower])
        self.hi = np.concatenate([lp.upper, lp.row_upper])
        self.cost = np.concatenate([lp.objective, np.zeros(m)])
        self.fixed = self.lo == self.hi

    def _default_status(self, j: int) -> int:
        if np.isfinite(self.lo[j]):
            return AT_LOWER
        if np.isfinite(self.hi[j]):
            return AT_UPPER
        return AT_ZERO

    def _cold_basis(self):
        basic = list(range(self.n, self.n + self.m))
        status = np.array([self._default_status(j) for j in range(self.n + self.m)], dtype=np.int8)
        status[basic] = BASIC
        return basic, status

    def _load(self, token: Optional[Basis]):
        if token is None or token.shape != (self.m, self.n):
            return self._cold_basis()
        basic = list(token.basic)
        status = np.array(token.status, dtype=np.int8)
        for j in range(self.n + self.m):
            s = status[j]
            if s == BASIC:
                continue
            if (s == AT_LOWER and not np.isfinite(self.lo[j])) or \
               (s == AT_UPPER and not np.isfinite(self.hi[j])) or s == AT_ZERO:
                status[j] = self._default_status(j)
        if self.m:
            B = self.W[:, basic]
            if np.linalg.cond(B) > 1e12:
                return self._cold_basis()
        return basic, status

    def _nonbasic_values(self, status):
        x = np.zeros(self.n + self.m)
        lo_mask = status == AT_LOWER
        hi_mask = status == AT_UPPER
        x[lo_mask] = self.lo[lo_mask]
        x[hi_mask] = self.hi[hi_mask]
        return x

    def run(self, token: Optional[Basis]) -> LpSolution:
        m, n = self.m, self.n
        basic, status = self._load(token)
        W, lo, hi, tol = self.W, self.lo, self.hi, self.opts.feas_tol
        nonbasic_x = self._nonbasic_values(status)
        Binv = np.linalg.inv(W[:, basic]) if m else np.zeros((0, 0))
        since_refactor = 0
        degenerate = 0
        bland = False
        it = 0
        while True:
            if since_refactor >= REFACTOR_EVERY:
                Binv = np.linalg.inv(W[:, basic])
                since_refactor = 0
            nb_mask = status != BASIC
            x = nonbasic_x.copy()
            x[~nb_mask] = 0.0
            xB = -Binv @ (W @ x) if m else np.zeros(0)
            lo_B, hi_B = lo[basic], hi[basic]
            below = xB < lo_B - tol
            above = xB > hi_B + tol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cB = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                cN = np.zeros(n + m)
            else:
                cB = self.cost[basic]
                cN = self.cost
            y = cB @ Binv if m else np.zeros(0)
            d = cN - y @ W if m else cN.copy()

            # pricing
            otol = self.opts.opt_tol
            improving = np.zeros(n + m)
            cand_lo = (status == AT_LOWER) & (d < -otol)
            cand_hi = (status == AT_UPPER) & (d > otol)
            cand_free = (status == AT_ZERO) & (np.abs(d) > otol)
            cand = (cand_lo | cand_hi | cand_free) & ~self.fixed
            if not cand.any():
                if phase1:
                    return self._finish(LpStatus.INFEASIBLE, x, xB, basic, status, it)
                return self._finish(LpStatus.OPTIMAL, x, xB, basic, status, it)
            improving[cand] = np.abs(d[cand])
            q = int(np.flatnonzero(cand)[0]) if bland else int(np.argmax(improving))
            direction = 1.0 if d[q] < 0 else -1.0

            it += 1
            if it > self.opts.max_pivots:
                return self._finish(LpStatus.ITERATION_LIMIT, x, xB, basic, status, it)

            alpha = Binv @ W[:, q] if m else np.zeros(0)
            delta = -direction * alpha  # change of xB per unit step
            step = hi[q] - lo[q]  # bound flip
            leave = -1
            leave_to = AT_LOWER
            best_piv = 0.0
            for i in np.flatnonzero(np.abs(delta) > PIVOT_TOL):
                di = delta[i]
                xi = xB[i]
                if phase1 and below[i]:
                    if di <= 0:
                        continue
                    lim, to = (lo_B[i] - xi) / di, AT_LOWER
                elif phase1 and above[i]:
                    if di >= 0:
                        continue
                    lim, to = (hi_B[i] - xi) / di, AT_UPPER
                elif di < 0:
                    if not np.isfinite(lo_B[i]):
                        continue
                    lim, to = (lo_B[i] - xi) / di, AT_LOWER
                else:
                    if not np.isfinite(hi_B[i]):
                        continue
                    lim, to = (hi_B[i] - xi) / di, AT_UPPER
                lim = max(lim, 0.0)
                if lim < step - 1e-12 or (
                    leave >= 0 and abs(lim - step) <= 1e-12 and
                    (basic[i] < basic[leave] if bland else abs(di) > best_piv)
                ):
                    step, leave, leave_to, best_piv = lim, i, to, abs(di)
            if not np.isfinite(step):
                if phase1:
                    # cannot happen with exact arithmetic; treat as numerical trouble
                    return self._finish(LpStatus.ITERATION_LIMIT, x, xB, basic, status, it)
                return self._finish(LpStatus.UNBOUNDED, x, xB, basic, status, it)

            if step <= 1e-12:
                degenerate += 1
                if degenerate >= self.opts.bland_after:
                    bland = True

            if leave < 0:
                # entering variable runs to its opposite bound
                status[q] = AT_UPPER if direction > 0 else AT_LOWER
                nonbasic_x[q] = hi[q] if direction > 0 else lo[q]
                continue

            # pivot: q enters at position leave
            out = basic[leave]
            status[out] = leave_to if np.isfinite(lo[out] if leave_to == AT_LOWER else hi[out]) else AT_ZERO
            if self.fixed[out]:
                status[out] = AT_LOWER
            nonbasic_x[out] = lo[out] if status[out] == AT_LOWER else (hi[out] if status[out] == AT_UPPER else 0.0)
            nonbasic_x[q] = 0.0
            status[q] = BASIC
            basic[leave] = q
            piv = alpha[leave]
            row = Binv[leave] / piv
            Binv -= np.outer(alpha, row)
            Binv[leave] = row
            since_refactor += 1

    def _finish(self, status_code, x, xB, basic, status, it) -> LpSolution:
        full = x.copy()
        full[basic] = xB
        if status_code == LpStatus.OPTIMAL:
            # snap basics sitting within tolerance of a bound
            lo, hi = self.lo, self.hi
            full = np.where(np.abs(full - lo) <= 1e-11, lo, full)
            full = np.where(np.abs(full - hi) <= 1e-11, hi, full)
        primal = full[: self.n]
        token = Basis(tuple(int(b) for b in basic), tuple(int(s) for s in status), (self.m, self.n))
        obj = float(self.lp.objective @ primal) if status_code == LpStatus.OPTIMAL else float("nan")
        return LpSolution(status_code, primal, obj, token, it, self.lp.matrix @ primal)


class HighsSolver:
    """scipy/HiGHS backend behind the same interface. Warm starts are ignored."""

    def solve(self, lp: LinearProgram, warm_start: Optional[Basis] = None) -> LpSolution:
        from scipy.optimize import linprog

        A = lp.matrix
        ub_rows, ub_rhs = [], []
        eq_rows, eq_rhs = [], []
        for r in range(lp.num_rows):
            lo, hi = lp.row_lower[r], lp.row_upper[r]
            if lo == hi:
                eq_rows.append(A[r]); eq_rhs.append(hi)
                continue
            if np.isfinite(hi):
                ub_rows.append(A[r]); ub_rhs.append(hi)
            if np.isfinite(lo):
                ub_rows.append(-A[r]); ub_rhs.append(-lo)
        res = linprog(
            lp.objective,
            A_ub=np.array(ub_rows) if ub_rows else None,
            b_ub=np.array(ub_rhs) if ub_rhs else None,
            A_eq=np.array(eq_rows) if eq_rows else None,
            b_eq=np.array(eq_rhs) if eq_rhs else None,
            bounds=[(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u)
                    for l, u in zip(lp.lower, lp.upper)],
            method="highs",
        )
        status = {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}.get(
            res.status, LpStatus.ITERATION_LIMIT)
        primal = np.asarray(res.x, dtype=float) if res.x is not None else np.full(lp.num_cols, np.nan)
        obj = float(lp.objective @ primal) if status == LpStatus.OPTIMAL else float("nan")
        return LpSolution(status, primal, obj, None, int(getattr(res, "nit", 0)), lp.matrix @ primal)


DEFAULT_SOLVER = SimplexSolver()


def solve(lp: LinearProgram, warm_start: Optional[Basis] = None,
          solver: Optional[LpSolver] = None) -> LpSolution:
    return (solver or DEFAULT_SOLVER).solve(lp, warm_start)


def dump_lp(lp: LinearProgram, names: Optional[list] = None) -> str:
    """Fixed-format plain-text listing, one line per column then per row entry."""
    names = names or [f"x{j}" for j in range(lp.num_cols)]
    out = io.StringIO()
    out.write(f"LP {lp.num_rows} {lp.num_cols}\n")
    for j in range(lp.num_cols):
        out.write(f"COL {names[j]:<16s} {lp.objective[j]: .12e} {lp.lower[j]: .12e} {lp.upper[j]: .12e}\n")
    for r in range(lp.num_rows):
        out.write(f"ROW r{r:<15d} {lp.row_lower[r]: .12e} {lp.row_upper[r]: .12e}\n")
        for j in np.flatnonzero(lp.matrix[r]):
            out.write(f"  {names[j]:<16s} {lp.matrix[r, j]: .12e}\n")
    out.write("END\n")
    return out.getvalue()
