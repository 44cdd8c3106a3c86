"""Linear feasibility backend on top of HiGHS.

The engine talks to this module only through sparse triplets and row/column
bounds, so another solver can be swapped in behind the same class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import highspy
import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

INF = highspy.kHighsInf
FEAS_TOL = 1e-7


@dataclass(frozen=True)
class LPResult:
    feasible: bool
    x: np.ndarray | None = None
    objective: float = 0.0


class LinearSystem:
    """``row_lower <= M x <= row_upper``, ``col_lower <= x <= col_upper``.

    The model stays loaded in one HiGHS instance; changing coefficients or
    bounds and re-solving warm-starts from the previous basis. Instances are
    not shared between threads or processes.
    """

    def __init__(self, n_cols: int, rows, cols, vals, row_lower, row_upper,
                 col_lower=None, col_upper=None, cost=None, tol: float = FEAS_TOL):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        self.n_rows = len(row_lower)
        self.n_cols = int(n_cols)
        self.tol = tol
        self.row_lower = np.asarray(row_lower, dtype=float).copy()
        self.row_upper = np.asarray(row_upper, dtype=float).copy()
        self.col_lower = np.full(n_cols, -INF) if col_lower is None else np.asarray(col_lower, float).copy()
        self.col_upper = np.full(n_cols, INF) if col_upper is None else np.asarray(col_upper, float).copy()
        self.cost = np.zeros(n_cols) if cost is None else np.asarray(cost, float).copy()
        self._M = sparse.csc_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_cols))
        self._M.sum_duplicates()
        self._M.sort_indices()
        self._dirty_matrix = False
        self._highs = self._new_solver()
        self._load()

    def _new_solver(self) -> highspy.Highs:
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("solver", "simplex")
        h.setOptionValue("primal_feasibility_tolerance", self.tol)
        h.setOptionValue("dual_feasibility_tolerance", self.tol)
        return h

    def _load(self) -> None:
        lp = highspy.HighsLp()
        lp.num_col_ = self.n_cols
        lp.num_row_ = self.n_rows
        lp.col_cost_ = self.cost
        lp.col_lower_ = self.col_lower
        lp.col_upper_ = self.col_upper
        lp.row_lower_ = self.row_lower
        lp.row_upper_ = self.row_upper
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = self._M.indptr.astype(np.int32)
        lp.a_matrix_.index_ = self._M.indices.astype(np.int32)
        lp.a_matrix_.value_ = self._M.data
        lp.a_matrix_.num_col_ = self.n_cols
        lp.a_matrix_.num_row_ = self.n_rows
        self._highs.passModel(lp)

    def slots(self, rows, cols) -> np.ndarray:
        """Positions of existing nonzeros (r, c) in the stored matrix, for repeated updates."""
        M = self._M
        out = np.empty(len(rows), dtype=np.int64)
        for i, (r, c) in enumerate(zip(rows, cols)):
            lo, hi = M.indptr[c], M.indptr[c + 1]
            k = lo + int(np.searchsorted(M.indices[lo:hi], r))
            if k >= hi or M.indices[k] != r:
                raise KeyError(f"entry ({r}, {c}) is not in the sparsity pattern")
            out[i] = k
        return out

    def set_coefficients(self, rows, cols, vals, slots: np.ndarray | None = None) -> None:
        """Change existing nonzero entries (the sparsity pattern is fixed)."""
        if slots is None:
            slots = self.slots(rows, cols)
        vals = np.asarray(vals, dtype=float)
        self._M.data[slots] = vals
        change = self._highs.changeCoeff
        for r, c, v in zip(rows, cols, vals.tolist()):
            change(r, c, v)

    def set_row_bounds(self, idx, lower, upper) -> None:
        idx = np.asarray(idx, dtype=np.int32)
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        self.row_lower[idx] = lower
        self.row_upper[idx] = upper
        self._highs.changeRowsBounds(len(idx), idx, lower, upper)

    def set_cost(self, cost) -> None:
        self.cost = np.asarray(cost, float).copy()
        idx = np.arange(self.n_cols, dtype=np.int32)
        self._highs.changeColsCost(self.n_cols, idx, self.cost)

    def max_violation(self, x: np.ndarray) -> float:
        ax = self._M @ x
        v = max(0.0, float(np.max(self.row_lower - ax, initial=0.0)), float(np.max(ax - self.row_upper, initial=0.0)))
        v = max(v, float(np.max(self.col_lower - x, initial=0.0)), float(np.max(x - self.col_upper, initial=0.0)))
        return v

    def _run(self) -> tuple[str, np.ndarray | None, float]:
        h = self._highs
        h.run()
        st = h.getModelStatus()
        if st == highspy.HighsModelStatus.kOptimal:
            x = np.asarray(h.getSolution().col_value, dtype=float)
            return "optimal", x, float(h.getInfo().objective_function_value)
        if st in (highspy.HighsModelStatus.kInfeasible, highspy.HighsModelStatus.kUnboundedOrInfeasible):
            # every objective used here is bounded below, so this is infeasibility
            return "infeasible", None, 0.0
        if st == highspy.HighsModelStatus.kModelEmpty:
            return "optimal", np.zeros(self.n_cols), 0.0
        return str(st), None, 0.0

    def solve(self) -> LPResult:
        status, x, obj = self._run()
        if status == "optimal" and self.max_violation(x) > 10 * self.tol:
            status = "inaccurate"
        if status not in ("optimal", "infeasible"):
            # warm start went wrong; rebuild from scratch with presolve
            log.debug("HiGHS status %s on warm start, re-solving cold", status)
            self._highs = self._new_solver()
            self._highs.setOptionValue("presolve", "on")
            self._load()
            status, x, obj = self._run()
            self._highs.setOptionValue("presolve", "off")
            if status == "optimal" and self.max_violation(x) > 100 * self.tol:
                raise RuntimeError("LP solution violates constraints beyond tolerance")
            if status not in ("optimal", "infeasible"):
                raise RuntimeError(f"LP solver failed with status {status}")
        if status == "infeasible":
            return LPResult(False)
        return LPResult(True, x, obj)
