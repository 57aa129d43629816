"""Second-stage coverage LP per scenario, its duals, and L-shaped optimality cuts.

For first-stage vector z (possibly fractional) and scenario demand W:

    Q(z, W) = min -sum_j u_j
      cov_j :  u_j - sum_{i:(i,j) in A} y_ij <= 0
      cap_j :  u_j <= gamma_j z_j
      open_ij: y_ij <= W_i z_j
      dem_i :  sum_{j:(i,j) in A} y_ij <= W_i
      u, y >= 0

Row duals are reported negated so that all four families (lam, pi, sigma,
delta) are nonnegative.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_array
from scipy.sparse.csgraph import maximum_flow

from . import bruteforce
from .flow import Topology, max_flow_min_cut
from .instance import Instance, ScenarioSet
from .lp import INF, LinearProgram, LPBuilder, LPError, LPWorkspace, LE, solve_lp

AGGREGATE = -1


@dataclass(frozen=True, eq=False)
class SecondStageResult:
    q_value: float
    lam: np.ndarray
    pi: np.ndarray
    sigma: np.ndarray  # one entry per arc, in instance.arcs order
    delta: np.ndarray


@dataclass(frozen=True, eq=False)
class OptimalityCut:
    """``theta_scope + alpha @ z >= beta``; scope is a scenario index or AGGREGATE."""

    scope: int
    alpha: np.ndarray
    beta: float

    def bound_at(self, z) -> float:
        """Lower bound the cut imposes on theta at ``z``."""
        return self.beta - float(np.dot(self.alpha, z))

    def same_as(self, other: "OptimalityCut", tol: float = 1e-9) -> bool:
        return (
            self.scope == other.scope
            and abs(self.beta - other.beta) <= tol
            and bool(np.all(np.abs(self.alpha - other.alpha) <= tol))
        )


class _Layout:
    """Column/row index bookkeeping shared by all second-stage models of an instance."""

    def __init__(self, instance: Instance):
        n = instance.n
        self.n = n
        self.arc_i = np.array([a[0] for a in instance.arcs], dtype=np.int64)
        self.arc_j = np.array([a[1] for a in instance.arcs], dtype=np.int64)
        self.m = len(instance.arcs)
        self.gamma = instance.capacity.astype(float)
        # rows: cov [0,n), cap [n,2n), open [2n,2n+m), dem [2n+m, 3n+m)
        self.cap_rows = np.arange(n, 2 * n)
        self.open_rows = np.arange(2 * n, 2 * n + self.m)
        self.dem_rows = np.arange(2 * n + self.m, 3 * n + self.m)
        self.rhs_rows = np.arange(n, 3 * n + self.m)

    def rhs(self, demand: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.concatenate([self.gamma * z, demand[self.arc_i] * z[self.arc_j], demand])

    def add_to(self, b: LPBuilder, demand: np.ndarray, z_cols=None, z=None, u_cost: float = -1.0):
        """Append the second stage to ``b``.

        With ``z_cols`` the opening variables are columns of ``b`` (the
        deterministic equivalent); otherwise ``z`` is a fixed vector moved to
        the right-hand sides.  Returns the u column indices.
        """
        n = self.n
        u = [b.add_var(0.0, INF, u_cost) for _ in range(n)]
        y = [b.add_var(0.0, INF, 0.0) for _ in range(self.m)]
        into: list[list[int]] = [[] for _ in range(n)]
        out: list[list[int]] = [[] for _ in range(n)]
        for a in range(self.m):
            into[self.arc_j[a]].append(a)
            out[self.arc_i[a]].append(a)
        for j in range(n):
            b.add_row([(u[j], 1.0)] + [(y[a], -1.0) for a in into[j]], LE, 0.0)
        for j in range(n):
            if z_cols is None:
                b.add_row([(u[j], 1.0)], LE, self.gamma[j] * z[j])
            else:
                b.add_row([(u[j], 1.0), (z_cols[j], -self.gamma[j])], LE, 0.0)
        for a in range(self.m):
            i, j = self.arc_i[a], self.arc_j[a]
            if z_cols is None:
                b.add_row([(y[a], 1.0)], LE, float(demand[i] * z[j]))
            else:
                b.add_row([(y[a], 1.0), (z_cols[j], -float(demand[i]))], LE, 0.0)
        for i in range(n):
            b.add_row([(y[a], 1.0) for a in out[i]], LE, float(demand[i]))
        return u

    def result(self, sol, demand: np.ndarray) -> SecondStageResult:
        if not sol.optimal:
            raise LPError(f"second-stage LP reported {sol.status}")
        d = np.maximum(-sol.duals, 0.0)
        n, m = self.n, self.m
        return SecondStageResult(
            q_value=float(sol.objective),
            lam=d[:n],
            pi=d[n : 2 * n],
            sigma=d[2 * n : 2 * n + m],
            delta=d[2 * n + m :],
        )

    def alpha(self, res: SecondStageResult, demand: np.ndarray) -> np.ndarray:
        return res.pi * self.gamma + np.bincount(
            self.arc_j, weights=res.sigma * demand[self.arc_i], minlength=self.n
        )


_layouts: dict[int, tuple[Instance, _Layout]] = {}


def _layout(instance: Instance) -> _Layout:
    hit = _layouts.get(id(instance))
    if hit is None or hit[0] is not instance:
        hit = (instance, _Layout(instance))
        _layouts[id(instance)] = hit
    return hit[1]


def second_stage_lp(instance: Instance, demand, z) -> LinearProgram:
    b = LPBuilder()
    _layout(instance).add_to(b, np.asarray(demand, dtype=float), z=np.asarray(z, dtype=float))
    return b.build()


def solve_second_stage(instance: Instance, demand, z) -> SecondStageResult:
    """Solve one scenario's coverage LP from scratch at ``z``."""
    demand = np.asarray(demand, dtype=float)
    sol = solve_lp(second_stage_lp(instance, demand, z))
    return _layout(instance).result(sol, demand)


def dual_objective(instance: Instance, res: SecondStageResult, demand, z) -> float:
    lay = _layout(instance)
    demand = np.asarray(demand, dtype=float)
    z = np.asarray(z, dtype=float)
    return -(
        float(np.dot(res.pi * lay.gamma, z))
        + float(np.dot(res.sigma * demand[lay.arc_i], z[lay.arc_j]))
        + float(np.dot(res.delta, demand))
    )


class SecondStageSolver:
    """Re-solves the scenario LPs of one instance in a single warm workspace."""

    def __init__(self, instance: Instance, scenarios: ScenarioSet):
        self.instance = instance
        self.demand = scenarios.demand.astype(float)
        self.layout = _layout(instance)
        n = instance.n
        self.workspace = LPWorkspace(second_stage_lp(instance, np.zeros(n), np.zeros(n)))
        self.solves = 0

    def solve(self, nu: int, z) -> SecondStageResult:
        z = np.asarray(z, dtype=float)
        demand = self.demand[nu]
        rhs = self.layout.rhs(demand, z)
        rows = self.layout.rhs_rows
        self.workspace.set_row_bounds(rows, np.full(len(rows), -INF), rhs)
        self.solves += 1
        return self.layout.result(self.workspace.solve(), demand)

    def cut(self, nu: int, z, res: SecondStageResult | None = None) -> OptimalityCut:
        if res is None:
            res = self.solve(nu, z)
        return build_scenario_cut(res, z, self.instance, self.demand[nu], nu)


class FlowSecondStage:
    """Second stage through max-flow / min-cut; same interface as :class:`SecondStageSolver`.

    The source side of a minimum cut prices every row with 0 or 1: a
    demand row when its node is cut off the source, an arc row when it
    crosses the cut, a capacity row when the facility stays on the source
    side (``lam = 1 - pi``).  That is an optimal dual of the coverage LP,
    and the reported value is minus the capacity of that cut.
    """

    def __init__(self, instance: Instance, scenarios: ScenarioSet):
        self.instance = instance
        self.demand = scenarios.demand.astype(float)
        self.layout = lay = _layout(instance)
        n, m = instance.n, lay.m
        # nodes: source 0, sink 1, demand i at 2+i, facility j at 2+n+j
        tails = np.concatenate([np.zeros(n, dtype=np.int64), 2 + lay.arc_i, 2 + n + np.arange(n)])
        heads = np.concatenate([2 + np.arange(n), 2 + n + lay.arc_j, np.ones(n, dtype=np.int64)])
        self.topology = Topology(2 + 2 * n, tails, heads)
        self.solves = 0

    def solve_many(self, nus, z) -> list[SecondStageResult]:
        nus = list(nus)
        z = np.asarray(z, dtype=float)
        lay = self.layout
        n = self.instance.n
        W = self.demand[nus]
        caps = np.hstack([W, W[:, lay.arc_i] * z[lay.arc_j], np.broadcast_to(lay.gamma * z, (len(nus), n))])
        _, sides = max_flow_min_cut(self.topology, caps)
        self.solves += len(nus)
        on_dem = sides[:, 2 : 2 + n]
        on_fac = sides[:, 2 + n : 2 + 2 * n]
        delta = (~on_dem).astype(float)
        sigma = (on_dem[:, lay.arc_i] & ~on_fac[:, lay.arc_j]).astype(float)
        pi = on_fac.astype(float)
        cut_cap = (delta * W).sum(axis=1) + (sigma * caps[:, n : n + lay.m]).sum(axis=1) + (pi * (lay.gamma * z)).sum(axis=1)
        return [
            SecondStageResult(q_value=-float(cut_cap[k]), lam=1.0 - pi[k], pi=pi[k], sigma=sigma[k], delta=delta[k])
            for k in range(len(nus))
        ]

    def solve(self, nu: int, z) -> SecondStageResult:
        return self.solve_many([nu], z)[0]

    def cut(self, nu: int, z, res: SecondStageResult | None = None) -> OptimalityCut:
        if res is None:
            res = self.solve(nu, z)
        return build_scenario_cut(res, z, self.instance, self.demand[nu], nu)


class CoverageEvaluator:
    """Per-scenario covered demand at binary z, all scenarios in one max-flow call.

    The scenario networks are stacked into one graph sharing a super source
    and sink; a maximum flow of the union is maximum on every block, so the
    flow leaving the source into a block is that scenario's coverage.
    Results are cached by z.
    """

    def __init__(self, instance: Instance, scenarios: ScenarioSet, cache_size: int = 4096):
        self.instance = instance
        self.scenarios = scenarios
        self.cache_size = cache_size
        self._cache: dict[bytes, np.ndarray] = {}
        self.calls = 0
        n = instance.n
        count = scenarios.count
        self._demand = scenarios.demand.astype(np.int64)
        arc_i = np.array([a[0] for a in instance.arcs], dtype=np.int64)
        arc_j = np.array([a[1] for a in instance.arcs], dtype=np.int64)
        base = 2 + 2 * n * np.arange(count, dtype=np.int64)
        self._dem_node = base[:, None] + np.arange(n)[None, :]
        fac_node = base[:, None] + n + np.arange(n)[None, :]
        self._size = 2 + 2 * n * count
        # the graph never changes shape; a call only zeroes closed facilities' sink arcs
        W = self._demand
        rows = np.concatenate([np.zeros(W.size, dtype=np.int64), self._dem_node[:, arc_i].ravel(), fac_node.ravel()])
        cols = np.concatenate([self._dem_node.ravel(), fac_node[:, arc_j].ravel(), np.ones(W.size, dtype=np.int64)])
        cap = np.concatenate([W.ravel(), W[:, arc_i].ravel(), np.tile(instance.capacity, count)]).astype(np.int32)
        order = np.lexsort((cols, rows))
        rows, cols, cap = rows[order], cols[order], cap[order]
        self._indptr = np.searchsorted(rows, np.arange(self._size + 1)).astype(np.int32)
        self._indices = cols.astype(np.int32)
        self._cap = cap
        # rows are sorted, so sink arcs come scenario by scenario, facility by facility
        self._sink_pos = np.flatnonzero(cols == 1).reshape(count, n)

    @staticmethod
    def key(z) -> bytes:
        return np.asarray(np.round(z), dtype=np.int8).tobytes()

    def coverages(self, z) -> np.ndarray:
        zb = np.asarray(np.round(np.asarray(z, dtype=float)), dtype=np.int64)
        k = zb.astype(np.int8).tobytes()
        hit = self._cache.get(k)
        if hit is not None:
            return hit
        out = self._solve(zb)
        if len(self._cache) >= self.cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[k] = out
        return out

    def _solve(self, zb: np.ndarray) -> np.ndarray:
        self.calls += 1
        cap = self._cap.copy()
        cap[self._sink_pos[:, zb == 0].ravel()] = 0
        if not cap[self._indptr[0] : self._indptr[1]].any() or not zb.any():
            return np.zeros(self.scenarios.count, dtype=np.int64)
        graph = csr_array((cap, self._indices, self._indptr), shape=(self._size, self._size))
        flow = maximum_flow(graph, 0, 1, method="dinic").flow.tocsr()
        lo, hi = flow.indptr[0], flow.indptr[1]
        first = np.zeros(self._size, dtype=np.int64)
        first[flow.indices[lo:hi]] = flow.data[lo:hi]
        return first[self._dem_node].sum(axis=1)


def evaluate_binary(instance: Instance, scenarios: ScenarioSet, z) -> tuple[int, Fraction]:
    """Exact ``(f1, f2)`` of a binary opening vector via the max-flow oracle."""
    return bruteforce.exact_objectives(instance, scenarios, z)


def build_scenario_cut(res: SecondStageResult, z_l, instance: Instance, demand, nu: int) -> OptimalityCut:
    demand = np.asarray(demand, dtype=float)
    alpha = _layout(instance).alpha(res, demand)
    beta = res.q_value + float(np.dot(alpha, np.asarray(z_l, dtype=float)))
    return OptimalityCut(nu, alpha, beta)


def build_aggregate_cut(results, z_l, instance: Instance, scenarios: ScenarioSet, members=None) -> OptimalityCut:
    """Average of the per-scenario cuts over ``members`` (default: all scenarios).

    Accumulates in ascending scenario order.
    """
    members = range(scenarios.count) if members is None else list(members)
    lay = _layout(instance)
    z_l = np.asarray(z_l, dtype=float)
    alpha = np.zeros(instance.n)
    q = 0.0
    for nu in members:
        res = results[nu]
        alpha += lay.alpha(res, scenarios.demand[nu].astype(float))
        q += res.q_value
    k = len(members)
    alpha /= k
    q /= k
    return OptimalityCut(AGGREGATE, alpha, q + float(np.dot(alpha, z_l)))
