import numpy as np
import pytest

from bosflp import bruteforce
from bosflp.instance import ScenarioSet
from bosflp.lp import INF, solve_lp
from bosflp.master import (
    MasterState,
    Settings,
    Strategy,
    build_deterministic_equivalent,
    build_master,
    probe_order,
    select_partial_scenarios,
    separate_cuts,
)

from conftest import binary_vectors, small_case


def _state(inst, sc, strategy="base", **kw):
    state = MasterState(inst, sc, Settings(strategy=Strategy(strategy), **kw))
    state.apply_node({}, INF, INF)
    return state


def test_settings_validation():
    with pytest.raises(ValueError):
        Settings(cut_mode="triple")
    with pytest.raises(ValueError):
        Settings(partial_k=-1)
    assert Settings(strategy="nodecomp").strategy is Strategy.NO_DECOMPOSITION


def test_theta_floor_is_total_demand(t1):
    inst, sc = t1
    lp = build_master(_state(inst, sc), (0.0, 1.0))
    theta0 = inst.n  # first theta column follows the z columns
    assert lp.lower[theta0] == -13
    sol = solve_lp(lp)
    assert sol.primal[theta0] == pytest.approx(-13) and sol.primal[theta0 + 1] == pytest.approx(-15)


def test_valid_inequalities_pin_theta_at_closed_facilities(t1):
    inst, sc = t1
    state = _state(inst, sc, "validineq")
    state.apply_node({0: 0, 1: 0, 2: 0}, INF, INF)
    sol = solve_lp(build_master(state, (0.0, 1.0)))
    assert sol.objective == pytest.approx(0.0)


def test_partial_selection_example():
    sc = ScenarioSet([[4, 3, 6], [2, 5, 8], [3, 4, 7]])
    assert select_partial_scenarios(sc, 1) == [0, 2]
    assert select_partial_scenarios(sc, 2) == [0, 1, 2]
    with pytest.raises(ValueError):
        select_partial_scenarios(sc, 3)


def test_partial_selection_ties():
    sc = ScenarioSet([[1, 1]] * 5)
    assert select_partial_scenarios(sc, 2) == [0, 1, 2]


def test_probe_order():
    assert probe_order(2, [0, 1, 2, 3, 4], 5) == [3, 4, 0, 1, 2]
    assert probe_order(-1, [1, 3], 5) == [1, 3]
    assert probe_order(4, [0, 2, 4], 5) == [0, 2, 4]


def test_deterministic_equivalent_matches_oracle(t1):
    inst, sc = t1
    w = (0.3, 0.7)
    for z in binary_vectors(3):
        fix = {j: int(v) for j, v in enumerate(z)}
        sol = solve_lp(build_deterministic_equivalent(inst, sc, w, fix))
        f1, f2 = bruteforce.exact_objectives(inst, sc, z)
        assert sol.objective == pytest.approx(w[0] * f1 + w[1] * float(f2))


def test_deterministic_equivalent_size(t1):
    inst, sc = t1
    lp = build_deterministic_equivalent(inst, sc, (1, 1))
    assert lp.num_vars == inst.n + sc.count * (inst.n + len(inst.arcs))


def test_single_scenario_equivalent(t1):
    inst, sc = t1
    one = ScenarioSet(sc.demand[1:])
    fix = {0: 1, 1: 0, 2: 1}
    sol = solve_lp(build_deterministic_equivalent(inst, one, (0.5, 0.5), fix))
    q = -bruteforce.coverage(inst, one.demand[0], [1, 0, 1])
    assert sol.objective == pytest.approx(0.5 * 7 + 0.5 * q)


def test_first_cut_at_origin(t1):
    inst, sc = t1
    state = _state(inst, sc)
    # a tiny coverage weight drives theta to its floor while z stays closed
    state.set_weights((1.0, 1e-3))
    sol = state.solve()
    assert np.allclose(sol.primal[:3], 0)
    assert sol.primal[state.theta_col(0)] == pytest.approx(-13)
    cuts = separate_cuts(state, sol, "first_violated")
    assert len(cuts) == 1 and cuts[0].scope == 0
    assert state.last_cut_scenario == 0 and len(state.pool) == 1


def test_no_cut_once_theta_exact(t1):
    inst, sc = t1
    state = _state(inst, sc)
    state.set_weights((0.4, 0.6))
    sol = state.solve()
    for _ in range(100):
        if not separate_cuts(state, sol, "all_violated"):
            break
        sol = state.solve()
    z = sol.primal[:3]
    for nu in range(2):
        q, _ = state.scenario_value(nu, z)
        assert sol.primal[state.theta_col(nu)] >= q - 1e-6
    assert separate_cuts(state, sol, "first_violated") == []


def _l_shaped(state, w, mode):
    state.set_weights(w)
    sol = state.solve()
    values = [sol.objective]
    for _ in range(10_000):
        if not separate_cuts(state, sol, mode):
            return values
        sol = state.solve()
        values.append(sol.objective)
    raise AssertionError("cut loop did not end")


@pytest.mark.parametrize("mode", ["first_violated", "all_violated"])
@pytest.mark.parametrize("cut_mode", ["multi", "single"])
def test_cut_loop_monotone_and_finite(mode, cut_mode):
    for seed in range(6):
        inst, sc = small_case(seed, samples=5)
        state = _state(inst, sc, cut_mode=cut_mode)
        for w in [(1, 0.01), (1, 1), (0.01, 1)]:
            vals = _l_shaped(state, w, mode)
            assert all(b >= a - 1e-7 * (1 + abs(a)) for a, b in zip(vals, vals[1:]))


def test_lazy_working_set_equals_full_model():
    for seed in range(6):
        inst, sc = small_case(seed, samples=10)
        state = _state(inst, sc)
        rng = np.random.default_rng(seed)
        for _ in range(8):
            w = tuple(rng.random(2) + 0.01)
            _l_shaped(state, w, "all_violated")
            fix = {int(j): int(rng.integers(2)) for j in rng.choice(inst.n, 2, replace=False)}
            state.apply_node(fix, INF, INF)
            state.set_weights(w)
            lazy = state.solve()
            full = solve_lp(build_master(state, w))
            assert lazy.objective == pytest.approx(full.objective, abs=1e-7)
            state.apply_node({}, INF, INF)


def test_valid_inequalities_never_lower_the_master():
    rng = np.random.default_rng(1)
    for seed in range(10):
        inst, sc = small_case(seed, samples=5)
        state = _state(inst, sc, "validineq")
        _l_shaped(state, (1.0, 1.0), "first_violated")
        for _ in range(5):
            w = tuple(rng.random(2) + 1e-3)
            state.use_vi = True
            with_vi = solve_lp(build_master(state, w)).objective
            state.use_vi = False
            without = solve_lp(build_master(state, w)).objective
            assert with_vi >= without - 1e-9


def test_embedded_scenarios_have_no_theta(t1):
    inst, sc = t1
    state = _state(inst, sc, "nodecomp")
    assert state.decomposed == [] and state.theta_cols.size == 0
    state.set_weights((0.0, 1.0))
    assert state.solve().objective == pytest.approx(-12.0)


def test_partial_k_clamped_to_scenario_count(t1):
    inst, sc = t1
    state = _state(inst, sc, "partial", partial_k=4)
    assert state.embedded == [0, 1] and state.decomposed == []
