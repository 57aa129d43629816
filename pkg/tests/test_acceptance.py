"""Acceptance criteria, one test and one printed verdict line each.

Run ``pytest tests/test_acceptance.py -v``; the verdict lines are repeated in
the terminal summary.  Criterion 7 (large instances, about an hour) runs by
default; set ``BOSFLP_QUICK=1`` to skip it.
"""
from __future__ import annotations

import itertools
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import pytest

from bosflp import bruteforce
from bosflp import experiments as ex
from bosflp.biobab import run
from bosflp.instance import GeneratorParams, generate_instance, generate_scenarios, reference_instance
from bosflp.lbset import check_lb_set, weights_for
from bosflp.lp import solve_lp
from bosflp.master import MasterState, Settings, Strategy, build_master, separate_cuts
from bosflp.subproblem import FlowSecondStage, SecondStageSolver

from conftest import SMALL, TIGHT, binary_vectors

VERDICTS: list[str] = []
CONFIGS = [Settings(strategy=s, cut_mode=m) for s in Strategy for m in ("multi", "single")]
T1_FRONT = [(0, 0), (2, -5), (5, -7), (6, -10), (9, -12)]


def report(number: int, ok: bool, text: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {text}"
    VERDICTS.append(line)
    print(line, file=sys.__stdout__, flush=True)


def battery_case(k: int):
    """Instance ``k`` of the 50-instance battery: n cycles 5..10, |N| cycles 2, 5, 10, 20."""
    n = 5 + k % 6
    samples = (2, 5, 10, 20)[(k // 6) % 4]
    inst = generate_instance(n, 500 + k, (GeneratorParams(), SMALL, TIGHT)[k % 3], name=f"b{k}")
    return inst, generate_scenarios(inst, samples, 0.3, 900 + k)


# --- shared battery (criteria 1, 5, 6) --------------------------------------------


@dataclass
class Battery:
    runs: int = 0
    mismatches: list = field(default_factory=list)
    seconds: float = 0.0
    lb_sets: int = 0
    lb_failures: list = field(default_factory=list)
    nodes_checked: int = 0
    fathomed_checked: int = 0
    lost_points: list = field(default_factory=list)
    vi_pairs: int = 0
    vi_violations: list = field(default_factory=list)
    lps: dict = field(default_factory=dict)
    observer_seconds: float = 0.0


def _region_has(fixings, b1, b2, z, f1, f2) -> bool:
    tol = 1e-7
    return all(z[j] == v for j, v in fixings) and f1 <= float(b1) + tol and float(f2) <= float(b2) + tol


def _front_solutions(inst, sc):
    images = {bits: bruteforce.exact_objectives(inst, sc, bits) for bits in itertools.product((0, 1), repeat=inst.n)}
    front = {(p.f1, p.f2) for p in bruteforce.nondominated(
        [bruteforce.FrontPoint(f1, f2, z) for z, (f1, f2) in images.items()])}
    return [(z, v) for z, v in images.items() if v in front], front


def _observer(battery: Battery, front_sols, check_vi: bool):
    def on_node(ev):
        t0 = time.perf_counter()
        try:
            _inspect(ev)
        finally:
            battery.observer_seconds += time.perf_counter() - t0

    def _inspect(ev):
        # criterion 5: shape of every LB set
        if ev.lb:
            battery.lb_sets += 1
            try:
                check_lb_set(ev.lb.points)
            except AssertionError as exc:
                battery.lb_failures.append(str(exc))
        # criterion 5: nothing of the true front is lost below this node
        if front_sols is not None:
            battery.nodes_checked += 1
            battery.fathomed_checked += not ev.children
            found = set(ev.ub.images())
            node = ev.node
            for z, (f1, f2) in front_sols:
                if (f1, f2) in found or not _region_has(node.fixings, node.bound1, node.bound2, z, f1, f2):
                    continue
                if not any(_region_has(c.fixings, c.bound1, c.bound2, z, f1, f2) for c in ev.children):
                    battery.lost_points.append((node, z, f1, f2))
        # criterion 6: the same master with and without the valid inequalities
        if check_vi and ev.lb and ev.state.decomposed:
            pts = ev.lb.points
            weights = [(1.0, 1e-3), (1e-3, 1.0)] + [weights_for(a, b) for a, b in zip(pts, pts[1:])]
            state = ev.state
            for w in weights:
                saved = state.use_vi
                try:
                    state.use_vi = True
                    on = solve_lp(build_master(state, w))
                    state.use_vi = False
                    off = solve_lp(build_master(state, w))
                finally:
                    state.use_vi = saved
                battery.vi_pairs += 1
                if on.optimal and off.optimal and on.objective < off.objective - 1e-7 * (1 + abs(off.objective)):
                    battery.vi_violations.append((ev.node, w, on.objective, off.objective))
    return on_node


@pytest.fixture(scope="module")
def battery() -> Battery:
    b = Battery()
    start = time.perf_counter()
    for k in range(50):
        inst, sc = battery_case(k)
        want = [(p.f1, p.f2) for p in bruteforce.enumerate_front(inst, sc)]
        front_sols = _front_solutions(inst, sc)[0] if inst.n <= 8 else None
        for cfg in CONFIGS:
            ub, stats = run(inst, sc, cfg, on_node=_observer(b, front_sols, check_vi=True))
            b.runs += 1
            got = [(p.f1, p.f2) for p in ub.entries]
            if got != want or not stats.converged:
                b.mismatches.append((k, ex.setting_label(cfg)))
            b.lps[(k, ex.setting_label(cfg))] = stats.lps_solved
    b.seconds = time.perf_counter() - start
    return b


def test_criterion_1_oracle_exactness(battery):
    solver = battery.seconds - battery.observer_seconds
    ok = not battery.mismatches and battery.runs == 600 and solver < 600
    report(1, ok, f"{battery.runs - len(battery.mismatches)}/{battery.runs} runs equal the enumerated front; "
                  f"solver time {solver:.0f} s (< 600 s), plus {battery.observer_seconds:.0f} s of per-node checks")
    assert not battery.mismatches, battery.mismatches[:5]
    assert solver < 600


def test_criterion_2_reference_instance():
    inst, sc = reference_instance()
    # first use of the compiled flow kernel loads it from the numba cache; keep that out of the timing
    start = time.perf_counter()
    FlowSecondStage(inst, sc).solve_many([0], np.ones(inst.n))
    load = time.perf_counter() - start
    start = time.perf_counter()
    bad = []
    for cfg in CONFIGS:
        ub, _ = run(inst, sc, cfg)
        if [(p.f1, p.f2) for p in ub.entries] != T1_FRONT:
            bad.append(ex.setting_label(cfg))
    seconds = time.perf_counter() - start
    ok = not bad and seconds < 1.0
    report(2, ok, f"{len(CONFIGS) - len(bad)}/{len(CONFIGS)} configurations return the 5-point front "
                  f"in {seconds:.2f} s total (< 1 s; one-time kernel load {load:.2f} s excluded)")
    assert ok, bad


def test_criterion_3_cut_validity():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    invalid, loose, reported, not_violated = [], 0, 0, 0
    for k in range(200):
        params = (SMALL, TIGHT, GeneratorParams())[k % 3]
        n = int(rng.integers(3, 11))
        inst = generate_instance(n, 3000 + k, params)
        sc = generate_scenarios(inst, 4, 0.3, 4000 + k)
        nu = int(rng.integers(sc.count))
        z_l = rng.random(n)
        # cut from the default (min-cut) route, value from the LP route
        res = FlowSecondStage(inst, sc).solve(nu, z_l)
        cut = FlowSecondStage(inst, sc).cut(nu, z_l, res)
        q_lp = SecondStageSolver(inst, sc).solve(nu, z_l).q_value
        if abs(cut.bound_at(z_l) - q_lp) > 1e-6:
            loose += 1
        for z in binary_vectors(n):
            if cut.bound_at(z) > -bruteforce.coverage(inst, sc.demand[nu], z) + 1e-6:
                invalid.append((k, tuple(z)))
        # cuts reported by separation at a master solution
        state = MasterState(inst, sc, Settings(strategy="base"))
        state.apply_node({}, math.inf, math.inf)
        state.set_weights(tuple(rng.random(2) + 0.05))
        sol = state.solve()
        for c in separate_cuts(state, sol, "all_violated"):
            reported += 1
            theta = sol.primal[state.theta_col(c.scope)]
            if not theta < c.bound_at(sol.primal[:n]) - 1e-6:
                not_violated += 1
            for z in binary_vectors(n):
                if c.bound_at(z) > -bruteforce.coverage(inst, sc.demand[c.scope], z) + 1e-6:
                    invalid.append((k, "separated", tuple(z)))
    seconds = time.perf_counter() - start
    ok = not invalid and not loose and not not_violated and seconds < 120
    report(3, ok, f"200 cuts at fractional points plus {reported} separated cuts: {len(invalid)} invalid at a "
                  f"binary point, {loose} not tight at the generator, {not_violated} separated but not violated; "
                  f"{seconds:.0f} s (< 120 s)")
    assert ok


def test_criterion_4_lp_equals_flow():
    start = time.perf_counter()
    checks, wrong = 0, []
    for k in range(50):
        params = (SMALL, TIGHT, GeneratorParams())[k % 3]
        inst = generate_instance(5 + k % 6, 6000 + k, params)
        sc = generate_scenarios(inst, 3, 0.3, 7000 + k)
        lp = SecondStageSolver(inst, sc)
        for z in binary_vectors(inst.n):
            for nu in range(sc.count):
                q = lp.solve(nu, z).q_value
                flow = bruteforce.coverage(inst, sc.demand[nu], z)
                checks += 1
                if round(q) != -flow or abs(q - round(q)) > 1e-9:
                    wrong.append((k, tuple(z), nu, q, flow))
    seconds = time.perf_counter() - start
    ok = not wrong and seconds < 300
    report(4, ok, f"{checks - len(wrong)}/{checks} (z, scenario) pairs with LP optimum = -max flow; "
                  f"{seconds:.0f} s (< 300 s)")
    assert ok, wrong[:5]


def test_criterion_5_bound_set_structure(battery):
    ok = not battery.lb_failures and not battery.lost_points and battery.fathomed_checked > 0
    report(5, ok, f"{battery.lb_sets} LB sets ordered and convex ({len(battery.lb_failures)} failures); "
                  f"{battery.nodes_checked} nodes on n <= 8 ({battery.fathomed_checked} fathomed) lose "
                  f"{len(battery.lost_points)} front points")
    assert ok, (battery.lb_failures[:3], battery.lost_points[:3])


def test_criterion_6_valid_inequalities(battery):
    # groups are (instance, |N|) pairs, compared in the multi-cut mode
    wins = total = 0
    for k in range(50):
        total += 1
        wins += battery.lps[(k, "incumbent-vi")] <= battery.lps[(k, "incumbent")]
    share = wins / total
    ok = not battery.vi_violations and share >= 0.6
    report(6, ok, f"{battery.vi_pairs} (node, weights) pairs, {len(battery.vi_violations)} with a lower value "
                  f"under the valid inequalities; incumbent-vi needs no more LPs than incumbent on "
                  f"{wins}/{total} groups = {share:.0%} (>= 60%)")
    assert ok, battery.vi_violations[:3]


@pytest.mark.slow
def test_criterion_7_decomposition_at_scale():
    if os.environ.get("BOSFLP_QUICK", "") not in ("", "0"):
        report(7, False, "not run (BOSFLP_QUICK set)")
        pytest.skip("BOSFLP_QUICK set")
    budget = 1800.0
    wins, lines = 0, []
    all_converged = True
    for k in range(5):
        inst = generate_instance(25 + k, k, name=f"large{k}")
        sc = generate_scenarios(inst, 1000, 0.3, 100 + k)
        t0 = time.perf_counter()
        ub, vi = run(inst, sc, Settings(strategy="incumbent-vi", time_limit=budget))
        vi_wall = time.perf_counter() - t0
        all_converged &= vi.converged and vi_wall <= budget
        # a CPU limit equal to the decomposed wall time: hitting it already means a larger wall time
        t0 = time.perf_counter()
        ub2, nd = run(inst, sc, Settings(strategy="nodecomp", time_limit=vi_wall))
        nd_wall = time.perf_counter() - t0
        slower = (not nd.converged) or nd_wall > vi_wall
        wins += slower
        lines.append(f"n={inst.n}: incumbent-vi {vi_wall:.0f} s ({'converged' if vi.converged else 'NOT converged'}), "
                     f"nodecomp {nd_wall:.0f} s ({'converged' if nd.converged else 'stopped at that budget'})")
        print(lines[-1], file=sys.__stdout__, flush=True)
        if nd.converged and vi.converged:
            assert [(p.f1, p.f2) for p in ub.entries] == [(p.f1, p.f2) for p in ub2.entries]
    ok = all_converged and wins >= 4
    report(7, ok, f"incumbent-vi converged on {'all' if all_converged else 'not all'} 5 instances within "
                  f"{budget:.0f} s; nodecomp slower or out of budget on {wins}/5 (>= 4); " + "; ".join(lines))
    assert ok


def test_criterion_8_determinism():
    cases = [battery_case(k) for k in (3, 17, 40)] + [reference_instance()]
    differ = []
    runs = 0
    for inst, sc in cases:
        for cfg in CONFIGS:
            outs = []
            for _ in range(2):
                ub, stats = run(inst, sc, cfg)
                rec = ex.RunRecord.from_stats(inst, sc.count, ex.setting_label(cfg), stats)
                outs.append((ex.front_csv(ub.entries, sc.count).encode(), rec.counts()))
            runs += 1
            if outs[0] != outs[1]:
                differ.append((inst.name, ex.setting_label(cfg)))
    report(8, not differ, f"{runs - len(differ)}/{runs} repeated runs give byte-identical fronts and equal counts")
    assert not differ


def test_criterion_9_performance_profile():
    R = ex.RunRecord
    records = [
        R("g1", 5, 10, "A", 1, 1, 1, 2.0, True), R("g1", 5, 10, "B", 1, 1, 1, 4.0, True),
        R("g1", 5, 10, "C", 1, 1, 1, 1.0, False),
        R("g2", 5, 10, "A", 1, 1, 1, 3.0, True), R("g2", 5, 10, "B", 1, 1, 1, 3.0, True),
        R("g2", 5, 10, "C", 1, 1, 1, 6.0, True),
        R("g3", 5, 10, "A", 1, 1, 1, 0.5, False), R("g3", 5, 10, "B", 1, 1, 1, 5.0, True),
        R("g3", 5, 10, "C", 1, 1, 1, 0.1, False),
        R("g4", 5, 10, "A", 1, 1, 1, 9.0, False),
    ]
    # hand computation: g4 is dropped; best times 2, 3 and 5
    expected = {
        "A": [(1.0, 2 / 3)],
        "B": [(1.0, 2 / 3), (2.0, 1.0)],
        "C": [(1.0, 0.0), (2.0, 1 / 3)],
    }
    table = ex.performance_profile(records)
    monotone = all(all(b[1] >= a[1] and b[0] > a[0] for a, b in zip(s, s[1:])) for s in table.values())
    ok = table == expected and monotone
    report(9, ok, f"profiles {'equal' if table == expected else 'differ from'} the hand-computed steps, "
                  f"nondecreasing: {monotone}; a setting failing a group never reaches 1")
    assert ok, table
