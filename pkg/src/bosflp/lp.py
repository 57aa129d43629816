"""Bounded-variable LP solving with row duals.

Models are minimizations.  HiGHS' dual simplex does the numerical work; this
module fixes the data layout, the status classification and the dual sign
convention (a ``<=`` row has a dual <= 0, a ``>=`` row a dual >= 0).

Two entry points exist: :func:`solve_lp` for one-off immutable programs and
:class:`LPWorkspace` for a model that is edited and re-solved warm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import highspy
import numpy as np
from scipy import sparse

INF = math.inf
TOL_FEAS = 1e-7
TOL_OPT = 1e-7
PIVOT_BUDGET = 10_000_000

LE, GE, EQ = "<=", ">=", "="
_SENSES = (LE, GE, EQ)


class LPError(RuntimeError):
    """The solver broke down; distinct from an infeasible or unbounded verdict."""


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``min cost @ x`` subject to ``lower <= x <= upper`` and the rows.

    ``matrix`` is a CSR array of shape (rows, vars); ``sense`` holds one of
    ``"<=", ">=", "="`` per row.
    """

    lower: np.ndarray
    upper: np.ndarray
    cost: np.ndarray
    matrix: sparse.csr_array
    sense: tuple[str, ...]
    rhs: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        nv = len(self.cost)
        if not (len(self.lower) == len(self.upper) == nv):
            raise ValueError("variable arrays differ in length")
        if np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise ValueError("variable lower bound exceeds upper bound")
        if self.matrix.shape != (len(self.sense), nv):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match {len(self.sense)} rows x {nv} vars")
        if len(self.rhs) != len(self.sense):
            raise ValueError("rhs length does not match row count")
        bad = [s for s in self.sense if s not in _SENSES]
        if bad:
            raise ValueError(f"unknown row relation {bad[0]!r}")

    @property
    def num_vars(self) -> int:
        return len(self.cost)

    @property
    def num_rows(self) -> int:
        return len(self.sense)

    @classmethod
    def from_rows(
        cls,
        variables: Sequence[tuple[float, float, float]],
        rows: Sequence[tuple[Mapping[int, float], str, float]],
        offset: float = 0.0,
    ) -> "LinearProgram":
        """Build from ``(lower, upper, cost)`` triples and ``(coeffs, relation, rhs)`` rows."""
        b = LPBuilder()
        for lo, hi, c in variables:
            b.add_var(lo, hi, c)
        for coeffs, rel, rhs in rows:
            b.add_row(coeffs, rel, rhs)
        return b.build(offset)

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.asarray(self.rhs, dtype=float)
        sense = np.array(self.sense)
        lo = np.where(sense == LE, -INF, rhs)
        hi = np.where(sense == GE, INF, rhs)
        return lo, hi


class LPBuilder:
    """Incremental construction of a :class:`LinearProgram`."""

    def __init__(self):
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.cost: list[float] = []
        self.indptr = [0]
        self.indices: list[int] = []
        self.values: list[float] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []

    @property
    def num_vars(self) -> int:
        return len(self.cost)

    @property
    def num_rows(self) -> int:
        return len(self.sense)

    def add_var(self, lower: float = 0.0, upper: float = INF, cost: float = 0.0) -> int:
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.cost.append(float(cost))
        return len(self.cost) - 1

    def add_row(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]], sense: str, rhs: float) -> int:
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, float] = {}
        for j, v in items:
            if not 0 <= j < self.num_vars:
                raise ValueError(f"row references undeclared variable {j}")
            merged[j] = merged.get(j, 0.0) + float(v)
        if sense not in _SENSES:
            raise ValueError(f"unknown row relation {sense!r}")
        for j in sorted(merged):
            self.indices.append(j)
            self.values.append(merged[j])
        self.indptr.append(len(self.indices))
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        return len(self.sense) - 1

    def build(self, offset: float = 0.0) -> LinearProgram:
        matrix = sparse.csr_array(
            (np.array(self.values, dtype=float), np.array(self.indices, dtype=np.int64), np.array(self.indptr, dtype=np.int64)),
            shape=(self.num_rows, self.num_vars),
        )
        return LinearProgram(
            lower=np.array(self.lower),
            upper=np.array(self.upper),
            cost=np.array(self.cost),
            matrix=matrix,
            sense=tuple(self.sense),
            rhs=np.array(self.rhs),
            offset=offset,
        )


@dataclass(frozen=True, eq=False)
class LPSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float
    primal: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _new_highs() -> highspy.Highs:
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("solver", "simplex")
    h.setOptionValue("simplex_iteration_limit", PIVOT_BUDGET)
    h.setOptionValue("primal_feasibility_tolerance", TOL_FEAS)
    h.setOptionValue("dual_feasibility_tolerance", TOL_FEAS)
    return h


def _to_highs_lp(lp: LinearProgram) -> highspy.HighsLp:
    hl = highspy.HighsLp()
    hl.num_col_ = lp.num_vars
    hl.num_row_ = lp.num_rows
    hl.col_cost_ = np.asarray(lp.cost, dtype=float)
    hl.col_lower_ = np.asarray(lp.lower, dtype=float)
    hl.col_upper_ = np.asarray(lp.upper, dtype=float)
    lo, hi = lp.row_bounds()
    hl.row_lower_ = lo
    hl.row_upper_ = hi
    hl.offset_ = float(lp.offset)
    m = lp.matrix
    hl.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
    hl.a_matrix_.num_col_ = lp.num_vars
    hl.a_matrix_.num_row_ = lp.num_rows
    hl.a_matrix_.start_ = np.asarray(m.indptr, dtype=np.int32)
    hl.a_matrix_.index_ = np.asarray(m.indices, dtype=np.int32)
    hl.a_matrix_.value_ = np.asarray(m.data, dtype=float)
    return hl


_MS = highspy.HighsModelStatus


def _collect(h: highspy.Highs, num_vars: int, num_rows: int, retry) -> LPSolution:
    status = h.getModelStatus()
    if status == _MS.kUnboundedOrInfeasible and retry is not None:
        # presolve could not tell; ask again without it
        h.setOptionValue("presolve", "off")
        try:
            h.run()
            return _collect(h, num_vars, num_rows, None)
        finally:
            h.setOptionValue("presolve", "choose")
    if status == _MS.kModelEmpty:
        status = _MS.kOptimal
    empty = np.zeros(0)
    if status == _MS.kOptimal:
        sol = h.getSolution()
        primal = np.asarray(sol.col_value, dtype=float)[:num_vars]
        duals = np.asarray(sol.row_dual, dtype=float)[:num_rows]
        rc = np.asarray(sol.col_dual, dtype=float)[:num_vars]
        return LPSolution("optimal", float(h.getInfo().objective_function_value), primal, duals, rc)
    if status == _MS.kInfeasible:
        return LPSolution("infeasible", INF, empty, empty, empty)
    if status == _MS.kUnbounded:
        return LPSolution("unbounded", -INF, empty, empty, empty)
    raise LPError(f"LP solver failed: {h.modelStatusToString(status)}")


def solve_lp(lp: LinearProgram) -> LPSolution:
    """Solve from scratch; identical inputs give identical outputs."""
    if lp.num_vars == 0:
        feasible = all(
            (s == LE and 0 <= r + TOL_FEAS) or (s == GE and 0 >= r - TOL_FEAS) or (s == EQ and abs(r) <= TOL_FEAS)
            for s, r in zip(lp.sense, lp.rhs)
        )
        if not feasible:
            return LPSolution("infeasible", INF, np.zeros(0), np.zeros(0), np.zeros(0))
        return LPSolution("optimal", float(lp.offset), np.zeros(0), np.zeros(lp.num_rows), np.zeros(0))
    h = _new_highs()
    h.passModel(_to_highs_lp(lp))
    h.run()
    return _collect(h, lp.num_vars, lp.num_rows, retry=True)


class LPWorkspace:
    """A HiGHS model kept alive between solves so edits re-solve warm.

    Confined to one thread.  The sequence of edits fully determines every
    returned solution, so replaying the same edits reproduces results.
    """

    def __init__(self, lp: LinearProgram):
        self.highs = _new_highs()
        self.highs.passModel(_to_highs_lp(lp))
        self.num_vars = lp.num_vars
        self.num_rows = lp.num_rows
        self.solves = 0

    def add_rows(self, lower, upper, indptr, indices, values) -> range:
        """Append rows given in CSR form; returns their index range."""
        lower = np.asarray(lower, dtype=float)
        k = len(lower)
        if k == 0:
            return range(self.num_rows, self.num_rows)
        indptr = np.asarray(indptr, dtype=np.int32)
        self.highs.addRows(
            k,
            lower,
            np.asarray(upper, dtype=float),
            int(indptr[-1]),
            indptr[:-1],
            np.asarray(indices, dtype=np.int32),
            np.asarray(values, dtype=float),
        )
        first = self.num_rows
        self.num_rows += k
        return range(first, self.num_rows)

    def delete_rows(self, rows) -> None:
        """Remove rows; later rows move up, keeping their relative order."""
        rows = np.unique(np.asarray(rows, dtype=np.int32))
        if len(rows):
            self.highs.deleteRows(len(rows), rows)
            self.num_rows -= len(rows)

    def set_col_bounds(self, cols, lower, upper) -> None:
        cols = np.asarray(cols, dtype=np.int32)
        if len(cols):
            self.highs.changeColsBounds(len(cols), cols, np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))

    def set_costs(self, cols, cost) -> None:
        cols = np.asarray(cols, dtype=np.int32)
        if len(cols):
            self.highs.changeColsCost(len(cols), cols, np.asarray(cost, dtype=float))

    def set_row_bounds(self, rows, lower, upper) -> None:
        rows = np.asarray(rows, dtype=np.int32)
        if len(rows):
            self.highs.changeRowsBounds(len(rows), rows, np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))

    def solve(self) -> LPSolution:
        self.highs.run()
        self.solves += 1
        return _collect(self.highs, self.num_vars, self.num_rows, retry=True)
