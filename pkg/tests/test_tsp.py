import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from vrp_ppo.tsp import (COST_GRID, brute_force_tsp, christofides, christofides_cost,
                         cluster_costs, euler_shortcut, held_karp_cost, mst,
                         odd_vertex_matching, quantize, tour_cost)


def metric(k, seed):
    rng = np.random.default_rng(seed)
    return oracles.euclid(rng.uniform(0, 100, size=(k + 1, 2)))


def test_square_cluster():
    d = oracles.euclid([[0, 0], [0, 1], [1, 1], [1, 0]])
    assert brute_force_tsp(d, [1, 2, 3]).cost == pytest.approx(4.0)
    assert christofides_cost(d, [1, 2, 3]) == pytest.approx(4.0)


def test_degenerate_clusters():
    d = metric(3, 0)
    assert christofides(d, []).order == (0,)
    assert christofides_cost(d, []) == 0.0
    tour = christofides(d, [2])
    assert tour.order == (0, 2, 0)
    assert tour.cost == pytest.approx(2 * d[0, 2])


def test_christofides_visits_every_member_once():
    d = metric(9, 1)
    tour = christofides(d, range(1, 10))
    assert tour.order[0] == 0 and tour.order[-1] == 0
    assert sorted(tour.members) == list(range(1, 10))
    assert tour.cost == pytest.approx(tour_cost(d, tour.order))


def test_depot_in_members_rejected():
    with pytest.raises(ValueError):
        christofides(metric(3, 0), [0, 1])


def test_mst_matches_enumeration():
    for seed in range(15):
        d = metric(5, seed)
        vs = list(range(6))
        edges = mst(d, vs)
        assert len(edges) == 5
        assert sum(d[u, v] for u, v in edges) == pytest.approx(oracles.min_spanning_weight(d, vs))


def test_mst_tie_break_is_lexicographic():
    d = oracles.euclid([[0, 0], [1, 0], [0, 1], [1, 1]])
    # unit edges: (0,1) (0,2) (1,3) (2,3); lowest pairs first
    assert mst(d, [0, 1, 2, 3]) == [(0, 1), (0, 2), (1, 3)]


def test_exact_matching_is_minimal():
    for seed in range(10):
        d = metric(7, seed)
        vs = list(range(8))
        pairs = odd_vertex_matching(d, vs, "exact")
        assert sorted(v for p in pairs for v in p) == vs
        w = sum(d[u, v] for u, v in pairs)
        assert w == pytest.approx(oracles.min_perfect_matching_weight(d, vs))
        greedy = sum(d[u, v] for u, v in odd_vertex_matching(d, vs, "greedy"))
        assert greedy >= w - 1e-9


def test_matching_errors():
    d = metric(3, 0)
    with pytest.raises(ValueError):
        odd_vertex_matching(d, [0, 1, 2])
    with pytest.raises(ValueError):
        odd_vertex_matching(d, [0, 1], "optimal")


def test_euler_shortcut_errors():
    d = metric(4, 0)
    with pytest.raises(ValueError):
        euler_shortcut(d, [(0, 1), (1, 2)])
    with pytest.raises(ValueError):
        euler_shortcut(d, [(0, 1), (1, 0), (2, 3), (3, 2)])


def test_brute_force_agrees_with_oracles():
    for k in range(0, 8):
        d = metric(k, 100 + k)
        members = list(range(1, k + 1))
        bf = brute_force_tsp(d, members)
        assert bf.cost == pytest.approx(oracles.tsp_by_permutation(d, members))
        assert bf.cost == pytest.approx(held_karp_cost(d, members))


def test_brute_force_limit():
    d = metric(11, 0)
    with pytest.raises(ValueError):
        brute_force_tsp(d, range(1, 12))


def test_quantized_cluster_costs():
    d = metric(8, 5)
    X = np.zeros((2, 8), dtype=bool)
    X[0, :4] = True
    X[1, 4:] = True
    y = cluster_costs(d, X)
    assert y[0] == quantize(christofides_cost(d, [1, 2, 3, 4]))
    assert abs(y[1] - christofides_cost(d, [5, 6, 7, 8])) <= COST_GRID
    assert np.all(np.mod(y / COST_GRID, 1.0) == 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 9), st.integers(0, 100_000))
def test_christofides_within_bound(k, seed):
    d = metric(k, seed)
    members = range(1, k + 1)
    opt = held_karp_cost(d, members)
    c = christofides_cost(d, members)
    assert opt - 1e-9 <= c <= 1.5 * opt + 1e-9


def test_greedy_mode_is_feasible_for_large_clusters():
    d = metric(30, 2)
    tour = christofides(d, range(1, 31), "greedy")
    assert sorted(tour.members) == list(range(1, 31))
    exact = christofides(d, range(1, 31), "exact")  # downgrades past the limit
    assert sorted(exact.members) == list(range(1, 31))
