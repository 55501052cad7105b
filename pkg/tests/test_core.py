import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import build, small_instances
from cops.core import (
    InvalidArgumentError,
    SemanticError,
    check_instance,
    edge_cost,
    empty_solution,
    evaluate,
    route_cost,
    validate,
)
from cops.exact import solve_exact
from cops.tabu import SearchParams, solve_tabu


@pytest.fixture
def square():
    # start at (0,0); two clusters, the second holding two subgroups
    pts = [(0, 0), (1, 0), (1, 1), (0, 1)]
    return build(pts, [(0, [0]), (3, [1]), (5, [2, 3]), (4, [3])], [[0], [1], [2, 3]], budget=10)


def test_edge_cost_euclidean_and_self():
    inst = build([(0, 0), (3, 4)], [(0, [0]), (1, [1])], [[0], [1]], budget=10)
    assert edge_cost(inst, 0, 1) == 5.0
    assert edge_cost(inst, 1, 1) == 0.0


def test_edge_cost_matrix_symmetric():
    m = ((0, 1, 2), (1, 0, 7.5), (2, 7.5, 0))
    inst = build(None, [(0, [0]), (1, [1]), (1, [2])], [[0], [1, 2]], budget=10, matrix=m)
    check_instance(inst)
    assert edge_cost(inst, 1, 2) == 7.5
    assert edge_cost(inst, 2, 1) == 7.5


def test_edge_cost_unknown_vertex():
    inst = build([(0, 0), (3, 4)], [(0, [0]), (1, [1])], [[0], [1]], budget=10)
    with pytest.raises(InvalidArgumentError):
        edge_cost(inst, 0, 5)


def test_route_cost_examples(square):
    assert route_cost(square, [0]) == 0.0
    two = build([(0, 0), (3, 4)], [(0, [0]), (1, [1])], [[0], [1]], budget=10)
    assert route_cost(two, [0, 1], circular=False) == 5.0
    assert route_cost(two, [0, 1], circular=True) == 10.0
    assert route_cost(square, [0, 1, 2, 3], circular=True) == 4.0
    with pytest.raises(InvalidArgumentError):
        route_cost(square, [])


def test_evaluate_rewards(square):
    assert evaluate(square, [0], []).reward == 0.0
    sol = evaluate(square, [0, 1, 2, 3], [1, 2])
    assert sol.reward == 8.0
    assert sol.cost == pytest.approx(4.0)


def test_evaluate_missing_vertex_is_reported_by_validate(square):
    sol = evaluate(square, [0, 2], [2])
    assert sol.reward == 5.0
    kinds = [v.constraint for v in validate(square, sol)]
    assert kinds == ["coverage"]


def test_validate_trivial_route_is_feasible(square):
    assert validate(square, evaluate(square, [0], [])) == []
    assert validate(square.replace(budget=0.0), evaluate(square, [0], [])) == []


def test_validate_budget_breach(square):
    sol = evaluate(square, [0, 1, 2, 3], [1, 2])
    over = square.replace(budget=sol.cost - 0.1)
    kinds = [v.constraint for v in validate(over, sol)]
    assert kinds == ["budget"]


def test_validate_two_subgroups_same_cluster(square):
    sol = evaluate(square, [0, 1, 2, 3], [2, 3])
    v = validate(square, sol)
    assert [x.constraint for x in v] == ["cluster"]
    assert v[0].entity == "cluster 2"


def test_validate_flags_start_duplicates_and_tampering(square):
    assert "start" in [v.constraint for v in validate(square, evaluate(square, [1, 0], []))]
    assert "duplicate-vertex" in [v.constraint for v in validate(square, evaluate(square, [0, 1, 1], []))]
    sol = evaluate(square, [0, 1], [1])
    forged = type(sol)(sol.route, sol.selected_subgroups, sol.cost - 1.0, sol.reward + 1.0)
    kinds = {v.constraint for v in validate(square, forged)}
    assert kinds == {"cost", "reward"}


def test_validate_non_circular_end_rules():
    pts = [(0, 0), (1, 0), (2, 0), (3, 0)]
    inst = build(pts, [(0, [0]), (2, [1]), (0, [2]), (0, [3])], [[0], [1], [2, 3]], budget=10, end=2)
    assert validate(inst, evaluate(inst, [0, 1, 2], [1])) == []
    kinds = [v.constraint for v in validate(inst, evaluate(inst, [0, 1], [1]))]
    assert kinds == ["end"]
    kinds = [v.constraint for v in validate(inst, evaluate(inst, [0, 2, 1, 3], [1]))]
    assert kinds == ["end"]


def test_incidental_coverage_is_not_rewarded(square):
    # route covers subgroups 2 and 3 but only 3 is selected
    sol = evaluate(square, [0, 2, 3], [3])
    assert sol.reward == 4.0
    assert validate(square, sol) == []


@pytest.mark.parametrize(
    "kwargs, entity",
    [
        (dict(clusters=[[0, 1], [2]]), "start cluster 0"),
        (dict(subgroups=[(0, [0, 1]), (1, [1]), (1, [2])]), "start cluster 0"),
        (dict(clusters=[[0], [1, 2], []]), "cluster 2"),
        (dict(clusters=[[0], [1, 5]]), "cluster 1"),
        (dict(subgroups=[(0, [0]), (1, [1]), (1, [9])]), "subgroup 2"),
        (dict(subgroups=[(0, [0]), (-1, [1]), (1, [2])]), "subgroup 1"),
        (dict(clusters=[[0], [1]]), "subgroup 2"),
        (dict(subgroups=[(0, [0]), (1, [1]), (1, [1])]), "vertex 2"),
    ],
)
def test_check_instance_rejects(kwargs, entity):
    base = dict(
        points=[(0, 0), (1, 0), (0, 1)],
        subgroups=[(0, [0]), (1, [1]), (1, [2])],
        clusters=[[0], [1, 2]],
        budget=5,
    )
    base.update(kwargs)
    with pytest.raises(SemanticError) as err:
        check_instance(build(**base))
    assert err.value.entity == entity


def test_end_cluster_needs_single_vertex_subgroups():
    pts = [(0, 0), (1, 0), (2, 0)]
    with pytest.raises(SemanticError) as err:
        check_instance(build(pts, [(0, [0]), (0, [1, 2])], [[0], [1]], budget=5, end=1))
    assert err.value.entity == "end cluster 1"


def test_matrix_must_be_symmetric():
    m = ((0, 1), (2, 0))
    with pytest.raises(SemanticError):
        check_instance(build(None, [(0, [0]), (1, [1])], [[0], [1]], budget=5, matrix=m))


def test_shared_vertices_and_multi_cluster_subgroups_are_legal():
    pts = [(0, 0), (1, 0), (1, 1)]
    inst = build(pts, [(0, [0]), (2, [1, 2]), (3, [2])], [[0], [1, 2], [2]], budget=10)
    check_instance(inst)
    assert inst.clusters_of[2] == (1, 2)


coords = st.tuples(st.integers(-50, 50), st.integers(-50, 50))


@settings(max_examples=60, deadline=None)
@given(st.lists(coords, min_size=2, max_size=9, unique=True), st.data())
def test_route_cost_reversal_invariant(pts, data):
    inst = build(pts, [(0, [0])] + [(1, [i]) for i in range(1, len(pts))], [[0], list(range(1, len(pts)))], budget=1)
    route = [0] + data.draw(st.permutations(list(range(1, len(pts)))))
    for circ in (True, False):
        fwd = route_cost(inst, route, circ)
        back = route_cost(inst, route[::-1], circ)
        assert fwd == pytest.approx(back, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(coords, min_size=2, max_size=9, unique=True), st.data())
def test_dropping_vertices_never_lengthens_euclidean_route(pts, data):
    inst = build(pts, [(0, [0])] + [(1, [i]) for i in range(1, len(pts))], [[0], list(range(1, len(pts)))], budget=1)
    route = [0] + data.draw(st.permutations(list(range(1, len(pts)))))
    keep = data.draw(st.lists(st.booleans(), min_size=len(route) - 1, max_size=len(route) - 1))
    sub = [0] + [v for v, k in zip(route[1:], keep) if k]
    for circ in (True, False):
        assert route_cost(inst, sub, circ) <= route_cost(inst, route, circ) + 1e-9


def test_solver_outputs_validate_and_respect_reward_bound():
    for inst in small_instances(30, max_vertices=10):
        for sol in (solve_exact(inst), solve_tabu(inst, SearchParams(beta=50))[0]):
            assert validate(inst, sol) == []
            assert sol.reward <= inst.reward_upper_bound() + 1e-9


def test_empty_solution_shapes():
    pts = [(0, 0), (5, 0), (1, 0), (2, 0)]
    inst = build(pts, [(0, [0]), (1, [1]), (0, [2]), (0, [3])], [[0], [1], [2, 3]], budget=10, end=2)
    sol = empty_solution(inst)
    assert sol.route == (0, 2)
    assert math.isclose(sol.cost, 1.0)
