"""Combinatorial oracle: coverage by max-flow and exhaustive front enumeration.

At a binary opening vector the second stage is a max-flow problem

    source -> i  (cap W_i)  -> j  (cap W_i, only if (i, j) in A and z_j = 1)  -> sink (cap gamma_j)

so its value is exact integer arithmetic, independent of any LP code.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .instance import Instance, ScenarioSet

ENUMERATION_LIMIT = 20


@dataclass
class FlowNetwork:
    """Directed network with integer capacities; node 0 is the source, 1 the sink."""

    num_nodes: int
    arcs: list[tuple[int, int, int]]
    source: int = 0
    sink: int = 1

    def __post_init__(self):
        for u, v, cap in self.arcs:
            if cap < 0:
                raise ValueError("capacities must be nonnegative")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise ValueError("arc endpoint out of range")


def coverage_network(instance: Instance, demand, z) -> FlowNetwork:
    """Layout: source 0, sink 1, demand node i at 2+i, facility j at 2+n+j."""
    n = instance.n
    demand = [int(w) for w in demand]
    cap = instance.capacity.tolist()
    arcs = []
    for i in range(n):
        if demand[i] > 0:
            arcs.append((0, 2 + i, demand[i]))
    for i, j in instance.arcs:
        if z[j] and demand[i] > 0:
            arcs.append((2 + i, 2 + n + j, demand[i]))
    for j in range(n):
        if z[j] and cap[j] > 0:
            arcs.append((2 + n + j, 1, cap[j]))
    return FlowNetwork(2 + 2 * n, arcs)


def max_flow(network: FlowNetwork) -> int:
    """Dinic's algorithm on integer capacities."""
    size = network.num_nodes
    head: list[list[int]] = [[] for _ in range(size)]
    to: list[int] = []
    cap: list[int] = []
    for u, v, c in network.arcs:
        head[u].append(len(to))
        to.append(v)
        cap.append(c)
        head[v].append(len(to))
        to.append(u)
        cap.append(0)
    s, t = network.source, network.sink
    if s == t:
        return 0
    total = 0
    while True:
        level = [-1] * size
        level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for e in head[u]:
                if cap[e] > 0 and level[to[e]] < 0:
                    level[to[e]] = level[u] + 1
                    queue.append(to[e])
        if level[t] < 0:
            return total
        ptr = [0] * size

        def push(u: int, limit: int) -> int:
            if u == t:
                return limit
            edges = head[u]
            while ptr[u] < len(edges):
                e = edges[ptr[u]]
                v = to[e]
                if cap[e] > 0 and level[v] == level[u] + 1:
                    pushed = push(v, min(limit, cap[e]))
                    if pushed:
                        cap[e] -= pushed
                        cap[e ^ 1] += pushed
                        return pushed
                ptr[u] += 1
            return 0

        while True:
            f = push(s, 1 << 62)
            if not f:
                break
            total += f


def coverage(instance: Instance, demand, z) -> int:
    """Maximum demand covered in one scenario by the open facilities ``z``."""
    return max_flow(coverage_network(instance, demand, z))


def total_coverage(instance: Instance, scenarios: ScenarioSet, z) -> int:
    """Sum of covered demand over all scenarios (the exact numerator of -f2)."""
    z = [int(round(v)) for v in z]
    return sum(coverage(instance, row, z) for row in scenarios.demand.tolist())


def exact_objectives(instance: Instance, scenarios: ScenarioSet, z) -> tuple[int, Fraction]:
    zb = [int(round(v)) for v in z]
    f1 = int(np.dot(instance.cost, zb))
    return f1, Fraction(-total_coverage(instance, scenarios, zb), scenarios.count)


@dataclass(frozen=True)
class FrontPoint:
    f1: int
    f2: Fraction
    z: tuple[int, ...]


def nondominated(points: list[FrontPoint]) -> list[FrontPoint]:
    """Keep nondominated points; among equal images the smallest ``z`` wins."""
    best: dict[tuple[int, Fraction], FrontPoint] = {}
    for p in points:
        key = (p.f1, p.f2)
        if key not in best or p.z < best[key].z:
            best[key] = p
    front = []
    for key in sorted(best):
        p = best[key]
        if front and front[-1].f2 <= p.f2:
            continue
        front.append(p)
    return front


def enumerate_front(instance: Instance, scenarios: ScenarioSet) -> list[FrontPoint]:
    """Exact Pareto front over all ``2**n`` opening vectors, sorted by cost."""
    if instance.n > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration refused for n = {instance.n} > {ENUMERATION_LIMIT}")
    points = []
    for bits in product((0, 1), repeat=instance.n):
        f1, f2 = exact_objectives(instance, scenarios, bits)
        points.append(FrontPoint(f1, f2, bits))
    return nondominated(points)
