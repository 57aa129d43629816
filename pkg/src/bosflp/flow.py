"""Compiled max-flow / min-cut over many copies of one small network.

Used by the second stage: at any opening vector z (fractional or not) the
coverage LP of a scenario is a maximum flow

    source -> i (W_i) -> j (W_i z_j, arc (i, j) in A) -> sink (gamma_j z_j)

and the source side of a minimum cut is an optimal dual solution of that LP.
Capacities are floats; every scenario shares the topology and only the
capacity vector changes.
"""
from __future__ import annotations

import numpy as np
from numba import njit

RESIDUAL_EPS = 1e-9


class Topology:
    """Forward arcs plus reverse twins in CSR order by tail node."""

    def __init__(self, num_nodes: int, tails, heads):
        tails = np.asarray(tails, dtype=np.int64)
        heads = np.asarray(heads, dtype=np.int64)
        m = tails.size
        all_tail = np.concatenate([tails, heads])
        all_head = np.concatenate([heads, tails])
        order = np.argsort(all_tail, kind="stable")
        pos = np.empty(2 * m, dtype=np.int64)
        pos[order] = np.arange(2 * m)
        twin = np.concatenate([np.arange(m, 2 * m), np.arange(m)])
        self.num_nodes = num_nodes
        self.num_forward = m
        self.to = all_head[order]
        self.rev = pos[twin][order]
        self.indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.add.at(self.indptr, all_tail + 1, 1)
        self.indptr = np.cumsum(self.indptr)
        # slot of forward arc k in the CSR arrays
        self.forward_slot = pos[:m]


@njit(cache=True)
def _max_flow(indptr, to, rev, cap, s, t, eps, level, it, queue, path):
    num = indptr.size - 1
    total = 0.0
    while True:
        for v in range(num):
            level[v] = -1
        level[s] = 0
        head = 0
        tail = 1
        queue[0] = s
        while head < tail:
            u = queue[head]
            head += 1
            for e in range(indptr[u], indptr[u + 1]):
                v = to[e]
                if cap[e] > eps and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[tail] = v
                    tail += 1
        if level[t] < 0:
            break
        for v in range(num):
            it[v] = indptr[v]
        while True:
            depth = 0
            u = s
            while u != t:
                moved = False
                while it[u] < indptr[u + 1]:
                    e = it[u]
                    v = to[e]
                    if cap[e] > eps and level[v] == level[u] + 1:
                        path[depth] = e
                        depth += 1
                        u = v
                        moved = True
                        break
                    it[u] += 1
                if not moved:
                    if depth == 0:
                        break
                    level[u] = -1
                    depth -= 1
                    u = to[rev[path[depth]]]
                    it[u] += 1
            if u != t:
                break
            push = np.inf
            for k in range(depth):
                if cap[path[k]] < push:
                    push = cap[path[k]]
            for k in range(depth):
                e = path[k]
                cap[e] -= push
                cap[rev[e]] += push
            total += push
    # source side of a minimum cut: reachable in the residual network
    for v in range(num):
        level[v] = 0
    level[s] = 1
    head = 0
    tail = 1
    queue[0] = s
    while head < tail:
        u = queue[head]
        head += 1
        for e in range(indptr[u], indptr[u + 1]):
            v = to[e]
            if cap[e] > eps and level[v] == 0:
                level[v] = 1
                queue[tail] = v
                tail += 1
    return total


@njit(cache=True)
def _batch(indptr, to, rev, caps, s, t, eps):
    rows, width = caps.shape
    num = indptr.size - 1
    flows = np.zeros(rows)
    sides = np.zeros((rows, num), dtype=np.bool_)
    level = np.empty(num, dtype=np.int64)
    it = np.empty(num, dtype=np.int64)
    queue = np.empty(num, dtype=np.int64)
    path = np.empty(num, dtype=np.int64)
    cap = np.empty(width)
    for r in range(rows):
        for e in range(width):
            cap[e] = caps[r, e]
        flows[r] = _max_flow(indptr, to, rev, cap, s, t, eps[r], level, it, queue, path)
        for v in range(num):
            sides[r, v] = level[v] == 1
    return flows, sides


def max_flow_min_cut(topology: Topology, forward_caps: np.ndarray, source: int = 0, sink: int = 1):
    """Max-flow values and source-side indicators, one row per capacity vector.

    ``forward_caps`` has shape ``(rows, num_forward)``.
    """
    forward_caps = np.atleast_2d(np.asarray(forward_caps, dtype=float))
    rows = forward_caps.shape[0]
    caps = np.zeros((rows, 2 * topology.num_forward))
    caps[:, topology.forward_slot] = forward_caps
    # per-row tolerance keeps each row's answer independent of its batch
    eps = RESIDUAL_EPS * np.maximum(1.0, forward_caps.max(axis=1, initial=0.0))
    return _batch(topology.indptr, topology.to, topology.rev, caps, source, sink, eps)
