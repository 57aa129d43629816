"""Master LP for the weighted-sum relaxation, the global cut pool and separation.

Columns: the opening variables z (0..n-1), then one theta per decomposed
scenario (multi-cut) or a single theta for the decomposed average
(single-cut), then the second-stage columns of every embedded scenario.

Rows: 0 is the cost bound ``c @ z <= f1_bar``, 1 is the coverage bound
``f2(z, theta, u) <= f2_bar``; then the capacity inequalities (when
enabled), the embedded scenario blocks, and finally the pool cuts in the
order they were generated.
"""
from __future__ import annotations

import enum
import math
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .instance import Instance, ScenarioSet
from .lp import GE, INF, LE, LinearProgram, LPBuilder, LPSolution, LPWorkspace
from .subproblem import (
    AGGREGATE,
    CoverageEvaluator,
    FlowSecondStage,
    OptimalityCut,
    SecondStageSolver,
    _layout,
    build_aggregate_cut,
)

INT_TOL = 1e-6
POOL_TOL = 1e-7  # relative violation that loads a pooled cut into the LP
SLACK_TOL = 1e-6  # relative slack counted as idle


class Strategy(enum.Enum):
    NO_DECOMPOSITION = "nodecomp"
    BASE = "base"
    PARTIAL_DECOMPOSITION = "partial"
    VALID_INEQUALITIES = "validineq"
    INCUMBENT_CUTS = "incumbent"
    INCUMBENT_CUTS_VI = "incumbent-vi"

    @property
    def valid_inequalities(self) -> bool:
        return self in (Strategy.VALID_INEQUALITIES, Strategy.INCUMBENT_CUTS_VI)

    @property
    def incumbent_only(self) -> bool:
        return self in (Strategy.INCUMBENT_CUTS, Strategy.INCUMBENT_CUTS_VI)


class TimeLimitExceeded(Exception):
    pass


@dataclass
class Settings:
    strategy: Strategy = Strategy.INCUMBENT_CUTS_VI
    cut_mode: str = "multi"
    partial_k: int = 4
    tol_cut: float = 1e-6
    tol_seg: float = 1e-6
    time_limit: float | None = None
    seed: int = 0
    max_cut_rounds: int = 1_000_000
    # "flow": min-cut duals; "lp": duals from the LP kernel
    second_stage: str = "flow"

    def __post_init__(self):
        if self.second_stage not in ("flow", "lp"):
            raise ValueError(f"second_stage must be 'flow' or 'lp', not {self.second_stage!r}")
        if isinstance(self.strategy, str):
            self.strategy = Strategy(self.strategy)
        if self.cut_mode not in ("multi", "single"):
            raise ValueError(f"cut_mode must be 'multi' or 'single', not {self.cut_mode!r}")
        if self.partial_k < 0:
            raise ValueError("partial_k must be nonnegative")


def select_partial_scenarios(scenarios: ScenarioSet, k: int) -> list[int]:
    """Scenario closest to the mean scenario plus the ``k`` farthest ones.

    Distances are Euclidean, compared exactly in integers; ties go to the
    lowest index.  Returned sorted.
    """
    count = scenarios.count
    if k + 1 > count:
        raise ValueError(f"cannot embed {k + 1} of {count} scenarios")
    demand = scenarios.demand.astype(object)
    total = demand.sum(axis=0)
    # count**2 * squared distance to the mean, exact
    dev = [int(((count * demand[nu] - total) ** 2).sum()) for nu in range(count)]
    closest = min(range(count), key=lambda nu: (dev[nu], nu))
    rest = sorted((nu for nu in range(count) if nu != closest), key=lambda nu: (-dev[nu], nu))
    return sorted([closest] + rest[:k])


def is_integer_vector(z, tol: float = INT_TOL) -> bool:
    z = np.asarray(z)
    return bool(np.all(np.minimum(np.abs(z), np.abs(z - 1.0)) <= tol))


@dataclass
class Counters:
    lps: int = 0
    cuts: int = 0
    subproblems: int = 0


@dataclass
class MasterPoint:
    f1: float
    f2: float
    z: np.ndarray
    objective: float


class MasterState:
    """Everything a node needs to build and re-solve its master LP."""

    def __init__(self, instance: Instance, scenarios: ScenarioSet, settings: Settings, deadline: float | None = None):
        self.instance = instance
        self.scenarios = scenarios
        self.settings = settings
        self.deadline = deadline
        count = scenarios.count
        strategy = settings.strategy
        if strategy is Strategy.NO_DECOMPOSITION:
            embedded = list(range(count))
        elif strategy is Strategy.PARTIAL_DECOMPOSITION:
            embedded = select_partial_scenarios(scenarios, min(settings.partial_k, count - 1))
        else:
            embedded = []
        self.embedded = embedded
        emb = set(embedded)
        self.decomposed = [nu for nu in range(count) if nu not in emb]
        self.single = settings.cut_mode == "single"
        self.use_vi = strategy.valid_inequalities
        self.pool: list[tuple[OptimalityCut, int]] = []
        self._pool_keys: dict[tuple, list[int]] = {}
        self._pool_size = 0
        self._pool_stale = True
        self._in_lp = np.zeros(0, dtype=bool)
        self._idle = np.zeros(0, dtype=np.int64)
        self._lp_cuts: list[int] = []  # pool index of each LP cut row, in row order
        self.fixings: dict[int, int] = {}
        self.bound1 = INF
        self.bound2 = INF
        self.last_cut_scenario = -1
        self.counters = Counters()
        self.node_id = 0
        self.sub = None
        if self.decomposed:
            engine = FlowSecondStage if settings.second_stage == "flow" else SecondStageSolver
            self.sub = engine(instance, scenarios)
        self.coverage = CoverageEvaluator(instance, scenarios)
        self._binary_cache: OrderedDict[bytes, dict[int, tuple[float, OptimalityCut]]] = OrderedDict()
        self.weights = (1.0, 1.0)
        lp, self.theta_cols, self.u_cols = _assemble(self, self.weights, with_cuts=False)
        self.workspace = LPWorkspace(lp)
        self._base_rows = lp.num_rows

    # --- node state -------------------------------------------------------

    def apply_node(self, fixings: dict[int, int], bound1: float, bound2: float, node_id: int = 0) -> None:
        n = self.instance.n
        lo = np.zeros(n)
        hi = np.ones(n)
        for j, v in fixings.items():
            lo[j] = hi[j] = float(v)
        self.workspace.set_col_bounds(np.arange(n), lo, hi)
        self.fixings = dict(fixings)
        self.node_id = node_id
        self.retire_idle_cuts()
        self.set_bounds(bound1, bound2)

    def set_bounds(self, bound1: float, bound2: float) -> None:
        self.bound1, self.bound2 = bound1, bound2
        self.workspace.set_row_bounds([0, 1], [-INF, -INF], [bound1, bound2])

    # --- objective --------------------------------------------------------

    def objective_costs(self, weights) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Normalized costs for z, theta and embedded u columns."""
        w1, w2 = weights
        if w1 < 0 or w2 < 0 or w1 + w2 <= 0:
            raise ValueError(f"invalid weights {weights}")
        s = w1 + w2
        w1, w2 = w1 / s, w2 / s
        count = self.scenarios.count
        cz = w1 * self.instance.cost.astype(float)
        if self.single:
            ct = np.full(1 if self.decomposed else 0, w2 * len(self.decomposed) / count)
        else:
            ct = np.full(len(self.decomposed), w2 / count)
        cu = np.full(len(self.embedded) * self.instance.n, -w2 / count)
        return cz, ct, cu

    def set_weights(self, weights) -> None:
        cz, ct, cu = self.objective_costs(weights)
        n = self.instance.n
        cols = np.concatenate([np.arange(n), self.theta_cols, self.u_cols]).astype(np.int64)
        self.workspace.set_costs(cols, np.concatenate([cz, ct, cu]))
        self.weights = tuple(weights)

    def check_time(self) -> None:
        if self.deadline is not None and time.process_time() > self.deadline:
            raise TimeLimitExceeded()

    def solve(self) -> LPSolution:
        """Optimal master over the whole pool.

        Only a working set of pool cuts lives in the LP; after each solve the
        others are checked at once and violated ones are loaded before
        solving again, so the result is that of the LP with every cut.
        """
        self.retire_idle_cuts()
        while True:
            self.check_time()
            self.counters.lps += 1
            sol = self.workspace.solve()
            if not sol.optimal or not self._pool_size:
                return sol
            if not self._load_violated(sol.primal):
                self._note_slack(sol.primal)
                return sol

    # --- cut pool and working set -------------------------------------------

    def _pool_arrays(self):
        if self._pool_stale:
            k = self._pool_size
            self._alpha = np.array([c.alpha for c, _ in self.pool[:k]]).reshape(k, self.instance.n)
            self._beta = np.array([c.beta for c, _ in self.pool[:k]])
            self._col = np.array([self.theta_col(c.scope) for c, _ in self.pool[:k]], dtype=np.int64)
            self._pool_stale = False
        return self._alpha, self._beta, self._col

    def _lhs_gap(self, x: np.ndarray) -> np.ndarray:
        """``beta - (theta + alpha z)`` for every pool cut at ``x``."""
        alpha, beta, col = self._pool_arrays()
        return beta - (x[col] + alpha @ x[: self.instance.n])

    def _load_violated(self, x: np.ndarray) -> bool:
        gap = self._lhs_gap(x)
        tol = POOL_TOL * (1.0 + np.abs(self._beta))
        load = np.flatnonzero((gap > tol) & ~self._in_lp[: self._pool_size])
        if not len(load):
            return False
        self._activate(load.tolist())
        return True

    def _activate(self, idx: list[int]) -> None:
        lo, indptr, cols, vals = [], [0], [], []
        for k in idx:
            cut = self.pool[k][0]
            nz = np.flatnonzero(cut.alpha)
            cols.extend([self.theta_col(cut.scope)] + nz.tolist())
            vals.extend([1.0] + cut.alpha[nz].tolist())
            indptr.append(len(cols))
            lo.append(cut.beta)
            self._in_lp[k] = True
            self._idle[k] = 0
        self.workspace.add_rows(lo, np.full(len(lo), INF), indptr, cols, vals)
        self._lp_cuts.extend(idx)

    def _note_slack(self, x: np.ndarray) -> None:
        if not self._lp_cuts:
            return
        rows = np.array(self._lp_cuts)
        slack = -self._lhs_gap(x)[rows] > SLACK_TOL * (1.0 + np.abs(self._beta[rows]))
        self._idle[rows[slack]] += 1
        self._idle[rows[~slack]] = 0

    def retire_idle_cuts(self, patience: int = 3) -> int:
        """Drop LP rows of cuts slack for ``patience`` solves in a row; they stay pooled."""
        if not self._lp_cuts:
            return 0
        rows = np.array(self._lp_cuts)
        gone = self._idle[rows] >= patience
        if not gone.any():
            return 0
        self.workspace.delete_rows(self._base_rows + np.flatnonzero(gone))
        self._in_lp[rows[gone]] = False
        self._lp_cuts = rows[~gone].tolist()
        return int(gone.sum())

    def point(self, sol: LPSolution) -> MasterPoint:
        n = self.instance.n
        z = sol.primal[:n].copy()
        f1 = float(np.dot(self.instance.cost, z))
        return MasterPoint(f1, self.f2_value(sol.primal), z, sol.objective)

    def f2_value(self, x: np.ndarray) -> float:
        count = self.scenarios.count
        total = 0.0
        if self.theta_cols.size:
            theta = x[self.theta_cols]
            total += float(theta.sum()) * (len(self.decomposed) if self.single else 1)
        if self.u_cols.size:
            total -= float(x[self.u_cols].sum())
        return total / count

    # --- cuts -------------------------------------------------------------

    def add_cuts(self, cuts: list[OptimalityCut]) -> list[OptimalityCut]:
        """Append new cuts to the pool and the LP.

        Exact repeats of pooled cuts are not added again; a repeat whose
        original sits outside the working set is loaded back and returned.
        """
        fresh, reload = [], []
        for cut in cuts:
            key = (cut.scope, round(cut.beta, 6), tuple(np.round(cut.alpha, 6).tolist()))
            bucket = self._pool_keys.setdefault(key, [])
            twin = next((k for k in bucket if cut.same_as(self.pool[k][0])), None)
            if twin is not None:
                if not self._in_lp[twin] and twin not in reload:
                    reload.append(twin)
                continue
            bucket.append(len(self.pool))
            self.pool.append((cut, self.node_id))
            fresh.append(cut)
        if fresh:
            first = self._pool_size
            self._pool_size = len(self.pool)
            self._in_lp = np.concatenate([self._in_lp, np.zeros(len(fresh), dtype=bool)])
            self._idle = np.concatenate([self._idle, np.zeros(len(fresh), dtype=np.int64)])
            self._pool_stale = True
            self._activate(list(range(first, self._pool_size)))
            self.counters.cuts += len(fresh)
        if reload:
            self._activate(reload)
        return fresh + [self.pool[k][0] for k in reload]

    def theta_col(self, scope: int) -> int:
        if self.single:
            return int(self.theta_cols[0])
        return int(self.theta_cols[self._theta_pos[scope]])

    @property
    def _theta_pos(self) -> dict[int, int]:
        pos = self.__dict__.get("_theta_pos_cache")
        if pos is None:
            pos = {nu: k for k, nu in enumerate(self.decomposed)}
            self.__dict__["_theta_pos_cache"] = pos
        return pos

    def scenario_values(self, nus, z: np.ndarray) -> dict[int, tuple[float, OptimalityCut]]:
        """``scenario_value`` for several scenarios, solved in one batch where possible."""
        nus = list(nus)
        if not nus:
            return {}
        if is_integer_vector(z) or not hasattr(self.sub, "solve_many"):
            return {nu: self.scenario_value(nu, z) for nu in nus}
        self.check_time()
        results = self.sub.solve_many(nus, z)
        self.counters.subproblems += len(nus)
        return {nu: (res.q_value, self.sub.cut(nu, z, res)) for nu, res in zip(nus, results)}

    def scenario_value(self, nu: int, z: np.ndarray) -> tuple[float, OptimalityCut]:
        """``Q(z, scenario nu)`` and the cut generated there; memoized at binary z."""
        binary = is_integer_vector(z)
        if binary:
            zb = np.round(z)
            key = zb.astype(np.int8).tobytes()
            entry = self._binary_cache.get(key)
            if entry is None:
                entry = {}
                self._binary_cache[key] = entry
                if len(self._binary_cache) > 256:
                    self._binary_cache.popitem(last=False)
            else:
                self._binary_cache.move_to_end(key)
            hit = entry.get(nu)
            if hit is not None:
                return hit
            z = zb
        res = self.sub.solve(nu, z)
        self.counters.subproblems += 1
        cut = self.sub.cut(nu, z, res)
        if binary:
            entry[nu] = (res.q_value, cut)
        return res.q_value, cut


def _assemble(state: MasterState, weights, with_cuts: bool = True):
    """Build the master LP of ``state`` from scratch."""
    inst, scen = state.instance, state.scenarios
    n = inst.n
    cz, ct, cu = state.objective_costs(weights)
    b = LPBuilder()
    lo = np.zeros(n)
    hi = np.ones(n)
    for j, v in state.fixings.items():
        lo[j] = hi[j] = float(v)
    z = [b.add_var(lo[j], hi[j], cz[j]) for j in range(n)]
    totals = scen.demand.sum(axis=1).astype(float)
    if state.single:
        floor = -float(np.mean(totals[state.decomposed])) if state.decomposed else 0.0
        theta = [b.add_var(floor, 0.0, c) for c in ct]
    else:
        theta = [b.add_var(-totals[nu], 0.0, c) for nu, c in zip(state.decomposed, ct)]
    count = scen.count
    b.add_row([(z[j], float(inst.cost[j])) for j in range(n)], LE, state.bound1)
    f2_row_at = b.add_row([], LE, state.bound2)
    if state.use_vi:
        for t in theta:
            b.add_row([(t, 1.0)] + [(z[j], float(inst.capacity[j])) for j in range(n)], GE, 0.0)
    lay = _layout(inst)
    u_cols = []
    for k, nu in enumerate(state.embedded):
        u = lay.add_to(b, scen.demand[nu].astype(float), z_cols=z, u_cost=cu[k * n] if cu.size else 0.0)
        u_cols.extend(u)
    # fill the f2 bound row now that all its columns exist
    f2_coeffs = []
    if state.single:
        f2_coeffs += [(t, len(state.decomposed) / count) for t in theta]
    else:
        f2_coeffs += [(t, 1.0 / count) for t in theta]
    f2_coeffs += [(u, -1.0 / count) for u in u_cols]
    _set_row(b, f2_row_at, f2_coeffs)
    if with_cuts:
        tpos = {nu: k for k, nu in enumerate(state.decomposed)}
        for cut, _ in state.pool:
            col = theta[0] if state.single else theta[tpos[cut.scope]]
            b.add_row([(col, 1.0)] + [(z[j], float(cut.alpha[j])) for j in range(n) if cut.alpha[j] != 0.0], GE, cut.beta)
    return b.build(), np.array(theta, dtype=np.int64), np.array(u_cols, dtype=np.int64)


def _set_row(b: LPBuilder, row: int, coeffs) -> None:
    # rows are stored CSR; rewriting an empty row in place means splicing
    start, end = b.indptr[row], b.indptr[row + 1]
    assert start == end, "row already has coefficients"
    items = sorted(coeffs)
    b.indices[start:start] = [j for j, _ in items]
    b.values[start:start] = [v for _, v in items]
    for r in range(row + 1, len(b.indptr)):
        b.indptr[r] += len(items)


def build_master(state: MasterState, weights) -> LinearProgram:
    """The node's master LP at ``weights`` (normalized to sum 1), pool cuts included."""
    lp, _, _ = _assemble(state, weights)
    return lp


def build_deterministic_equivalent(
    instance: Instance,
    scenarios: ScenarioSet,
    weights,
    fixings: dict[int, int] | None = None,
    bounds: tuple[float, float] = (INF, INF),
) -> LinearProgram:
    settings = Settings(strategy=Strategy.NO_DECOMPOSITION)
    state = MasterState.__new__(MasterState)
    state.instance, state.scenarios, state.settings = instance, scenarios, settings
    state.embedded = list(range(scenarios.count))
    state.decomposed = []
    state.single = False
    state.use_vi = False
    state.pool = []
    state.fixings = dict(fixings or {})
    state.bound1, state.bound2 = bounds
    lp, _, _ = _assemble(state, weights)
    return lp


def probe_order(last: int, members: list[int], count: int) -> list[int]:
    """Scenarios of ``members`` starting right after ``last`` and wrapping around."""
    start = (last + 1) % count if count else 0
    ordered = list(range(start, count)) + list(range(0, start))
    keep = set(members)
    return [nu for nu in ordered if nu in keep]


def separate_cuts(state: MasterState, sol: LPSolution, mode: str = "first_violated") -> list[OptimalityCut]:
    """Find optimality cuts violated by ``sol``; add them to the pool and LP.

    ``mode`` is ``"first_violated"`` (stop after the first cut) or
    ``"all_violated"``.  Multi-cut probes decomposed scenarios round-robin,
    resuming after the last scenario that produced a cut.
    """
    if mode not in ("first_violated", "all_violated"):
        raise ValueError(f"unknown separation mode {mode!r}")
    if not state.decomposed:
        return []
    n = state.instance.n
    z = sol.primal[:n]
    tol = state.settings.tol_cut
    found: list[OptimalityCut] = []
    binary = is_integer_vector(z)
    covs = state.coverage.coverages(z) if binary else None
    if state.single:
        theta = sol.primal[state.theta_cols[0]]
        if binary and theta >= -float(np.mean(covs[list(state.decomposed)])) - tol:
            return []
        values = state.scenario_values(state.decomposed, z)
        results = {nu: values[nu][1] for nu in state.decomposed}
        members = state.decomposed
        cut = _average_cuts([results[nu] for nu in members], z)
        if theta < cut.bound_at(z) - tol:
            found.append(cut)
    else:
        count = state.scenarios.count
        order = probe_order(state.last_cut_scenario, state.decomposed, count)
        if mode == "all_violated":
            if binary:
                need = [nu for nu in order if sol.primal[state.theta_col(nu)] < -float(covs[nu]) - tol]
            else:
                need = order
            values = state.scenario_values(need, z)
            for nu in need:
                q, cut = values[nu]
                if sol.primal[state.theta_col(nu)] < q - tol:
                    found.append(cut)
                    state.last_cut_scenario = nu
            return state.add_cuts(found) if found else []
        for nu in order:
            state.check_time()
            theta = sol.primal[state.theta_col(nu)]
            if binary:
                # exact value first; the subproblem only runs for a violated scenario
                if theta >= -float(covs[nu]) - tol:
                    continue
            q, cut = state.scenario_value(nu, z)
            if theta < q - tol:
                found.append(cut)
                state.last_cut_scenario = nu
                if mode == "first_violated":
                    break
    return state.add_cuts(found) if found else []


def _average_cuts(cuts: list[OptimalityCut], z) -> OptimalityCut:
    alpha = np.zeros_like(cuts[0].alpha)
    beta = 0.0
    for c in cuts:
        alpha += c.alpha
        beta += c.beta
    return OptimalityCut(AGGREGATE, alpha / len(cuts), beta / len(cuts))
