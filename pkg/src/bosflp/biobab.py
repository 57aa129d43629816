"""Bi-objective branch-and-bound with bound sets and embedded cut generation.

Depth-first over a stack.  Each node computes its lower bound set, filters it
against the upper bound set and branches in objective space (one region per
remaining continuous piece) combined with binary variable branching.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .instance import Instance, ScenarioSet
from .lbset import (
    INT_TOL,
    CutPolicy,
    LBPiece,
    LBSet,
    ObjPoint,
    SegmentScreen,
    UBSet,
    compute_lb_set,
    filter_against_ub,
)
from .lp import INF
from .master import MasterState, Settings, Strategy, TimeLimitExceeded


@dataclass(frozen=True)
class Node:
    fixings: tuple[tuple[int, int], ...] = ()
    bound1: float | Fraction = INF
    bound2: float | Fraction = INF
    depth: int = 0

    def fixed(self) -> dict[int, int]:
        return dict(self.fixings)

    def child(self, bound1, bound2, var: int | None = None, value: int | None = None) -> "Node":
        fixings = self.fixings
        if var is not None:
            if var in dict(fixings):
                raise ValueError(f"variable {var} already fixed")
            fixings = tuple(sorted(fixings + ((var, value),)))
        return Node(fixings, bound1, bound2, self.depth + 1)


@dataclass
class RunStats:
    lps_solved: int = 0
    bb_nodes: int = 0
    cuts_generated: int = 0
    cpu_seconds: float = 0.0
    converged: bool = True
    subproblems_solved: int = 0
    ub_evaluations: int = 0


@dataclass
class NodeEvent:
    """What a processed node saw; handed to the ``on_node`` observer."""

    node: Node
    lb: LBSet
    pieces: list[LBPiece]
    children: list[Node]
    state: MasterState
    ub: UBSet


def select_branching_variable(corner_points, fixed=()) -> int | None:
    """Variable fractional in the most corner points.

    Ties: lowest mean distance of its fractional values to 0.5, then lowest
    distance of its mean value to 0.5, then lowest index.  None when every
    value is integral.
    """
    zs = np.array([np.asarray(p.z if hasattr(p, "z") else p, dtype=float) for p in corner_points])
    if zs.size == 0:
        return None
    frac = np.minimum(np.abs(zs), np.abs(zs - 1.0)) > INT_TOL
    best = None
    for j in range(zs.shape[1]):
        if j in fixed or not frac[:, j].any():
            continue
        vals = zs[frac[:, j], j]
        key = (-int(frac[:, j].sum()), float(np.mean(np.abs(vals - 0.5))), abs(float(zs[:, j].mean()) - 0.5), j)
        if best is None or key < best:
            best = key
    return None if best is None else best[3]


def _differing_variable(corner_points, fixed) -> int | None:
    zs = np.array([np.round(p.z) for p in corner_points])
    for j in range(zs.shape[1]):
        if j not in fixed and len(set(zs[:, j].tolist())) > 1:
            return j
    return None


def branch(node: Node, pieces: list[LBPiece], n: int) -> list[Node]:
    """Children of ``node``: per piece, its region split on one binary variable.

    A piece whose corner points are all integral branches on a variable that
    differs between them, or on the first free variable if its corner points
    share one solution that the filter could not discard.
    """
    fixed = node.fixed()
    children = []
    for piece in pieces:
        var = select_branching_variable(piece.corners, fixed)
        if var is None:
            var = _differing_variable(piece.corners, fixed)
        if var is None:
            free = [j for j in range(n) if j not in fixed]
            if not free:
                continue
            var = free[0]
        for value in (0, 1):
            children.append(node.child(piece.bound1, piece.bound2, var, value))
    return children


def granularities(instance: Instance, scenarios: ScenarioSet) -> tuple[int, Fraction]:
    g1 = 0
    for c in instance.cost.tolist():
        g1 = math.gcd(g1, int(c))
    return max(g1, 1), Fraction(1, scenarios.count)


def policies(settings: Settings) -> tuple[CutPolicy, CutPolicy]:
    """Cut policies at the root and below it."""
    strategy = settings.strategy
    if strategy.incumbent_only:
        return CutPolicy(False, "all_violated"), CutPolicy(True, "all_violated")
    same = CutPolicy(False, "first_violated")
    return same, same


def run(
    instance: Instance,
    scenarios: ScenarioSet,
    settings: Settings | None = None,
    on_node: Callable[[NodeEvent], None] | None = None,
    max_nodes: int | None = None,
) -> tuple[UBSet, RunStats]:
    """Exact Pareto front of the instance; returns the UB set and run indicators."""
    settings = settings or Settings()
    start = time.process_time()
    deadline = None if settings.time_limit is None else start + settings.time_limit
    stats = RunStats()
    g1, g2 = granularities(instance, scenarios)
    root_policy, node_policy = policies(settings)
    if max_nodes is None:
        max_nodes = 2 ** min(instance.n + 1, 40) * 64
    state = MasterState(instance, scenarios, settings, deadline)
    ub = UBSet(instance, scenarios, state.coverage)
    stack = [Node()]
    try:
        while stack:
            node = stack.pop()
            stats.bb_nodes += 1
            if stats.bb_nodes > max_nodes:
                raise RuntimeError(f"node cap {max_nodes} exceeded")
            state.apply_node(node.fixed(), float(node.bound1), float(node.bound2), stats.bb_nodes)
            policy = root_policy if node.depth == 0 else node_policy
            screen = SegmentScreen(ub, g1, g2, (node.bound1, node.bound2))
            lb = compute_lb_set(state, policy, ub, screen)
            pieces = filter_against_ub(lb, ub, g1, g2, (node.bound1, node.bound2)) if lb else []
            children = branch(node, pieces, instance.n) if pieces else []
            if on_node is not None:
                on_node(NodeEvent(node, lb, pieces, children, state, ub))
            stack.extend(children)
    except TimeLimitExceeded:
        stats.converged = False
    stats.lps_solved = state.counters.lps
    stats.cuts_generated = state.counters.cuts
    stats.subproblems_solved = state.counters.subproblems
    stats.ub_evaluations = ub.evaluations
    stats.cpu_seconds = time.process_time() - start
    return ub, stats


def solve(instance: Instance, scenarios: ScenarioSet, strategy="incumbent-vi", **kwargs):
    """Convenience wrapper: ``run`` with settings built from keyword arguments."""
    return run(instance, scenarios, Settings(strategy=Strategy(strategy), **kwargs))
