from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from bosflp.bruteforce import (
    FlowNetwork,
    coverage,
    coverage_network,
    enumerate_front,
    max_flow,
    nondominated,
)
from bosflp.instance import GeneratorParams, Instance, ScenarioSet, generate_instance, generate_scenarios

from conftest import binary_vectors, small_case

T1_FRONT = [(0, 0), (2, -5), (5, -7), (6, -10), (9, -12)]


def test_no_open_facility(t1):
    inst, _ = t1
    assert max_flow(coverage_network(inst, [2, 5, 8], [0, 0, 0])) == 0


def test_reference_flows(t1):
    inst, _ = t1
    assert max_flow(coverage_network(inst, [2, 5, 8], [1, 1, 0])) == 7
    assert max_flow(coverage_network(inst, [2, 5, 8], [0, 0, 1])) == 5


def test_textbook_network():
    # two disjoint paths plus a cross arc; min cut is 5
    net = FlowNetwork(4, [(0, 2, 3), (0, 3, 2), (2, 3, 1), (2, 1, 2), (3, 1, 3)])
    assert max_flow(net) == 5


def test_negative_capacity_rejected():
    with pytest.raises(ValueError):
        FlowNetwork(2, [(0, 1, -1)])


def test_reference_front(t1):
    inst, sc = t1
    assert [(p.f1, p.f2) for p in enumerate_front(inst, sc)] == T1_FRONT


def test_zero_capacity_front():
    inst = generate_instance(6, 2, GeneratorParams(capacity=(0, 0)))
    sc = generate_scenarios(inst, 3, 0.3, 0)
    front = enumerate_front(inst, sc)
    assert [(p.f1, p.f2) for p in front] == [(0, 0)]


def test_single_node():
    inst = Instance(dist=[[0]], d_max=0, cost=[3], capacity=[10], demand_mean=[4])
    front = enumerate_front(inst, ScenarioSet([[4]]))
    assert [(p.f1, p.f2) for p in front] == [(0, 0), (3, -4)]


def test_guard():
    inst = generate_instance(21, 0)
    with pytest.raises(ValueError):
        enumerate_front(inst, generate_scenarios(inst, 1, 0.3, 0))


def test_front_sorted_and_nondominated():
    for seed in range(10):
        inst, sc = small_case(seed, n=7)
        front = enumerate_front(inst, sc)
        for p, q in zip(front, front[1:]):
            assert p.f1 < q.f1 and p.f2 > q.f2
        assert all(isinstance(p.f2, Fraction) for p in front)


def test_equal_images_keep_smallest_vector():
    from bosflp.bruteforce import FrontPoint

    pts = [FrontPoint(1, Fraction(-2), (1, 0)), FrontPoint(1, Fraction(-2), (0, 1))]
    assert nondominated(pts)[0].z == (0, 1)


def test_adding_a_facility_never_lowers_flow():
    for seed in range(8):
        inst, sc = small_case(seed, n=6, samples=2)
        for z in binary_vectors(inst.n):
            base = coverage(inst, sc.demand[0], z)
            for j in np.flatnonzero(z == 0):
                z2 = z.copy()
                z2[j] = 1
                assert coverage(inst, sc.demand[0], z2) >= base
