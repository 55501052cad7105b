import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import build, small_instances
from oracles import perm_tour
from cops._rng import SplitMix64
from cops.core import InvalidArgumentError, evaluate, route_cost, validate
from cops.io import GeneratorConfig, generate
from cops.tabu import (
    Move,
    SearchParams,
    _in_solution,
    init_state,
    initial_solution,
    insert_subgroup,
    next_neighbor,
    remove_subgroup,
    rotate_endpoint,
    solve_tabu,
    solve_tabu_best_of,
    trace_to_csv,
    two_opt,
)


def line_instance(n_clients=3, budget=100.0):
    pts = [(0, 0)] + [(i + 1, 0) for i in range(n_clients)]
    subs = [(0, [0])] + [(i + 1, [i + 1]) for i in range(n_clients)]
    clusters = [[0]] + [[i + 1] for i in range(n_clients)]
    return build(pts, subs, clusters, budget)


def three_ends(budget=10.0):
    # one client far out of reach, three end vertices at distance 1, 2, 3
    pts = [(0, 0), (100, 0), (0, 1), (0, 2), (0, 3)]
    subs = [(0, [0]), (5, [1]), (0, [2]), (0, [3]), (0, [4])]
    return build(pts, subs, [[0], [1], [2, 3, 4]], budget, end=2)


# ---------------------------------------------------------------- params


def test_search_params_defaults_and_checks():
    p = SearchParams()
    assert (p.alpha, p.beta, p.lambda_, p.old_removal) == (10, 300, 5, 300)
    assert SearchParams(old_removal_threshold=50).old_removal == 50
    with pytest.raises(ValueError):
        SearchParams(alpha=300, beta=300)
    with pytest.raises(ValueError):
        SearchParams(lambda_=0)


# ---------------------------------------------------------------- 2-opt


def test_two_opt_short_routes_unchanged():
    inst = line_instance(3)
    for r in ([0], [0, 2], [0, 3, 1]):
        assert two_opt(inst, r, True) == r


def test_two_opt_uncrosses_square():
    pts = [(0, 0), (1, 0), (1, 1), (0, 1)]
    inst = build(pts, [(0, [0]), (1, [1]), (1, [2]), (1, [3])], [[0], [1], [2], [3]], 10)
    crossed = [0, 2, 1, 3]
    assert route_cost(inst, crossed, True) == pytest.approx(2 + 2 * math.sqrt(2))
    out = two_opt(inst, crossed, True)
    assert route_cost(inst, out, True) == pytest.approx(4.0)
    assert out[0] == 0


def test_two_opt_never_worse_on_random_routes():
    rng = SplitMix64(5)
    for k in range(100):
        pts = [(rng.uniform(0, 100), rng.uniform(0, 100)) for _ in range(10)]
        inst = build(pts, [(0, [0])] + [(1, [i]) for i in range(1, 10)], [[0], list(range(1, 10))], 1)
        route = [0] + _shuffled(rng, range(1, 10))
        circ = k % 2 == 0
        out = two_opt(inst, route, circ)
        assert sorted(out) == sorted(route) and out[0] == 0
        if not circ:
            assert out[-1] == route[-1]
        assert route_cost(inst, out, circ) <= route_cost(inst, route, circ) + 1e-12


def _shuffled(rng, xs):
    xs = list(xs)
    rng.shuffle(xs)
    return xs


# ---------------------------------------------------------------- insert / remove


def test_insert_shared_vertices_is_pure_selection():
    pts = [(0, 0), (1, 0), (1, 1)]
    inst = build(pts, [(0, [0]), (2, [1, 2]), (3, [2])], [[0], [1], [2]], 10)
    sol = insert_subgroup(inst, evaluate(inst, [0], []), 1)
    again = insert_subgroup(inst, sol, 2)
    assert again.route == sol.route
    assert again.reward == sol.reward + 3


def test_insert_single_vertex_out_and_back():
    inst = build([(0, 0), (3, 4)], [(0, [0]), (1, [1])], [[0], [1]], 100)
    sol = insert_subgroup(inst, evaluate(inst, [0], []), 1)
    assert sol.route == (0, 1) and sol.cost == 10.0


def test_insert_rejects_cluster_clash_and_repeat():
    inst = build([(0, 0), (1, 0), (2, 0)], [(0, [0]), (1, [1]), (1, [2])], [[0], [1, 2]], 100)
    sol = insert_subgroup(inst, evaluate(inst, [0], []), 1)
    with pytest.raises(InvalidArgumentError):
        insert_subgroup(inst, sol, 2)
    with pytest.raises(InvalidArgumentError):
        insert_subgroup(inst, sol, 1)


def test_insert_cost_at_least_optimal_tour():
    rng = SplitMix64(11)
    for _ in range(40):
        n = rng.randint(2, 8)
        pts = [(rng.uniform(0, 50), rng.uniform(0, 50)) for _ in range(n)]
        subs = [(0, [0])] + [(1, [i]) for i in range(1, n)]
        inst = build(pts, subs, [[0]] + [[i] for i in range(1, n)], 1e9)
        sol = evaluate(inst, [0], [])
        for s in _shuffled(rng, range(1, n)):
            sol = insert_subgroup(inst, sol, s)
        assert sol.cost >= perm_tour(inst.dist, 0, range(n)) - 1e-9


def test_remove_only_subgroup_gives_bare_route():
    inst = line_instance(1)
    sol = insert_subgroup(inst, evaluate(inst, [0], []), 1)
    bare = remove_subgroup(inst, sol, 1)
    assert bare.route == (0,) and bare.reward == 0.0
    ends = three_ends(budget=1000)
    sol = insert_subgroup(ends, evaluate(ends, [0, 2], []), 1)
    bare = remove_subgroup(ends, sol, 1)
    assert bare.route == (0, 2) and bare.reward == 0.0


def test_remove_keeps_shared_vertex():
    pts = [(0, 0), (1, 0), (1, 1), (2, 2)]
    inst = build(pts, [(0, [0]), (2, [1, 2]), (3, [2, 3])], [[0], [1], [2]], 100)
    sol = evaluate(inst, [0, 1, 2, 3], [1, 2])
    out = remove_subgroup(inst, sol, 2)
    assert 2 in out.route and 3 not in out.route


def test_remove_never_increases_cost():
    for inst in small_instances(40, max_vertices=14, vertices=(1, 3)):
        big = inst.replace(budget=1e9)
        sol = initial_solution(big, SearchParams(lambda_=100))
        for s in sol.selected:
            assert remove_subgroup(big, sol, s).cost <= sol.cost + 1e-9


# ---------------------------------------------------------------- initial solution


def test_initial_solution_budget_zero():
    sol = initial_solution(line_instance(3, budget=0.0), SearchParams())
    assert sol.route == (0,) and sol.reward == 0.0


def test_initial_solution_everything_fits():
    inst = line_instance(4, budget=1000.0)
    sol = initial_solution(inst, SearchParams())
    assert sol.selected == (1, 2, 3, 4)


def test_initial_solution_prefers_profitability():
    # A: reward 10 over two vertices (5 per vertex); B: reward 9, one vertex
    pts = [(0, 0), (1, 0), (1, 1), (0, 1)]
    inst = build(pts, [(0, [0]), (10, [1, 2]), (9, [3])], [[0], [1, 2]], 100)
    sol = initial_solution(inst, SearchParams())
    assert sol.selected == (2,)


def test_infeasible_end_raises():
    from cops.core import InfeasibleInstanceError

    with pytest.raises(InfeasibleInstanceError):
        solve_tabu(three_ends(budget=0.5))


# ---------------------------------------------------------------- neighbourhood


def test_fresh_state_allows_non_tabu_insertion():
    inst = line_instance(3)
    params = SearchParams()
    start = evaluate(inst, [0], [])
    state = init_state(inst, params, start)
    assert all(state.eta[s] == -params.alpha for s in inst.client_subgroups)
    nb = next_neighbor(inst, state, params, SplitMix64(0))
    assert nb.move is Move.NON_TABU_INSERTION


def test_saturated_solution_forces_removal():
    inst = line_instance(3)
    params = SearchParams()
    full = evaluate(inst, [0, 1, 2, 3], [1, 2, 3])
    state = init_state(inst, params, full)
    nb = next_neighbor(inst, state, params, SplitMix64(0))
    assert nb.move is Move.RANDOM_REMOVAL
    for s in (1, 2, 3):
        state.eta[s] = params.alpha
    assert next_neighbor(inst, state, params, SplitMix64(0)).move is Move.NON_TABU_REMOVAL
    state.eta[2] = params.old_removal + 1
    nb = next_neighbor(inst, state, params, SplitMix64(0))
    assert (nb.move, nb.subgroup) == (Move.OLD_REMOVAL, 2)


def test_tabu_insertion_follows_aspiration():
    inst = line_instance(3)
    params = SearchParams()
    state = init_state(inst, params, evaluate(inst, [0], []))
    state.eta[1:] = [0, 0, 0]
    state.aspiration[1:] = [4.0, 7.0, 7.0]
    nb = next_neighbor(inst, state, params, SplitMix64(0))
    assert (nb.move, nb.subgroup) == (Move.TABU_INSERTION, 2)


def test_over_budget_insertions_are_skipped():
    inst = line_instance(3, budget=4.0)
    params = SearchParams()
    state = init_state(inst, params, evaluate(inst, [0], []))
    for seed in range(20):
        nb = next_neighbor(inst, state, params, SplitMix64(seed))
        assert nb.subgroup in (1, 2)
        assert validate(inst, nb.solution) == []
    tight = line_instance(3, budget=1.0)
    state = init_state(tight, params, evaluate(tight, [0], []))
    assert next_neighbor(tight, state, params, SplitMix64(0)) is None


# ---------------------------------------------------------------- endpoint rotation


def test_rotate_endpoint_rejects_circular():
    inst = line_instance(2)
    state = init_state(inst, SearchParams(), evaluate(inst, [0], []))
    with pytest.raises(InvalidArgumentError):
        rotate_endpoint(inst, state)


def test_rotate_endpoint_single_end_is_noop():
    pts = [(0, 0), (5, 0), (1, 0)]
    inst = build(pts, [(0, [0]), (1, [1]), (0, [2])], [[0], [1], [2]], 100, end=2)
    state = init_state(inst, SearchParams(), evaluate(inst, [0, 2], []))
    state.end_rotation_counter = 7
    assert rotate_endpoint(inst, state) == 2
    assert state.current.route == (0, 2) and state.end_rotation_counter == 0


def test_rotate_endpoint_ties_go_to_lowest_id():
    inst = three_ends(budget=100)
    state = init_state(inst, SearchParams(), evaluate(inst, [0, 2], []))
    state.eta[3] = state.eta[4] = -5
    assert rotate_endpoint(inst, state) == 3
    state.eta[4] = -50
    assert rotate_endpoint(inst, state) == 4
    assert state.eta[4] == 1 and state.eta[3] == 0


def test_rotation_period_is_beta_over_end_count():
    seen = []
    sol, stats = solve_tabu(three_ends(), SearchParams(beta=300), callback=lambda st, row: seen.append(st.end_rotation_counter))
    assert stats.iterations == 301 and stats.rotations == 3
    assert [i + 1 for i, c in enumerate(seen) if c == 0] == [100, 200, 300]
    one_end = build([(0, 0), (100, 0), (0, 1)], [(0, [0]), (5, [1]), (0, [2])], [[0], [1], [2]], 10, end=2)
    assert solve_tabu(one_end, SearchParams(beta=300))[1].rotations == 1


# ---------------------------------------------------------------- whole runs


def test_budget_zero_run():
    sol, _ = solve_tabu(line_instance(3, budget=0.0))
    assert sol.route == (0,) and sol.reward == 0.0


def _watch(inst, params):
    """Run with a callback that checks the per-iteration invariants."""
    prev_sel = set()
    removed_at: dict[int, int] = {}
    asp = None
    best = None
    log = []

    def cb(state, row):
        nonlocal prev_sel, asp, best
        assert validate(inst, state.current) == []
        assert validate(inst, state.best) == []
        inside = _in_solution(inst, state.current)
        for s, e in enumerate(state.eta):
            assert (e >= 1) if s in inside else (e <= 0), (row.iteration, s, e)
        if asp is not None:
            assert all(a >= b for a, b in zip(state.aspiration, asp))
        asp = list(state.aspiration)
        key = (state.best.reward, -state.best.cost)
        if best is not None:
            assert key[0] >= best[0] - 1e-9
            assert key >= (best[0] - 1e-9, best[1] - 1e-9) or key[0] > best[0]
        best = key
        sel = set(state.current.selected_subgroups)
        if row.move == Move.NON_TABU_INSERTION.value:
            s = row.subgroup
            if s in removed_at:
                assert row.iteration >= removed_at[s] + params.alpha
        for s in prev_sel - sel:
            removed_at[s] = row.iteration
        prev_sel = sel
        log.append(row.move)

    sol, stats = solve_tabu(inst, params, callback=cb)
    return sol, stats, log


def test_run_invariants_hold_every_iteration():
    moves = set()
    for inst in small_instances(25, max_vertices=14, vertices=(1, 3)):
        params = SearchParams(alpha=5, beta=60, seed=3)
        _, _, log = _watch(inst, params)
        moves.update(log)
    # the run exercised re-insertions, so the tenure check above had teeth
    assert {"non_tabu_insertion", "tabu_insertion", "random_removal"} <= moves


def test_determinism_of_solution_and_trace():
    inst = generate(GeneratorConfig(n_clusters=5, seed=9, circular=False))
    a, sa = solve_tabu(inst, SearchParams(seed=4, beta=80), record_trace=True)
    b, sb = solve_tabu(inst, SearchParams(seed=4, beta=80), record_trace=True)
    assert a == b
    assert trace_to_csv(sa.trace) == trace_to_csv(sb.trace)
    assert sa.improvements == sb.improvements


def test_best_of_runs_uses_consecutive_seeds():
    inst = generate(GeneratorConfig(n_clusters=4, seed=2))
    best, stats, runs = solve_tabu_best_of(inst, SearchParams(seed=7, beta=40), 3)
    assert [st.seed for _, st in runs] == [7, 8, 9]
    assert best.reward == max(s.reward for s, _ in runs)
    assert stats.seed in (7, 8, 9)


def test_max_iterations_caps_the_run():
    inst = generate(GeneratorConfig(n_clusters=4, seed=2))
    _, stats = solve_tabu(inst, SearchParams(max_iterations=7))
    assert stats.iterations == 7


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), factor=st.sampled_from([0.3, 0.6, 1.0]), circular=st.booleans())
def test_solver_output_is_always_feasible(seed, factor, circular):
    inst = generate(GeneratorConfig(n_clusters=4, budget_factor=factor, circular=circular, seed=seed))
    sol, _ = solve_tabu(inst, SearchParams(beta=40, seed=seed))
    assert validate(inst, sol) == []
    assert sol.reward <= inst.reward_upper_bound() + 1e-9
