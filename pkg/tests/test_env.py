import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_instance
from vrp_ppo.env import (Action, InfeasibleError, feasible_clusters_mask, initial_solution,
                         make_state, move_mask, reward, step, total_cost, transition)
from vrp_ppo.instance import CvrpInstance, GeneratorConfig, generate
from vrp_ppo.tsp import cluster_costs


def line_instance(caps):
    coords = [[0, 0], [1, 0], [2, 0], [3, 0]]
    return CvrpInstance("line", coords, [[2, 3, 4]], [caps])


def test_initial_solution_is_feasible():
    for seed in range(10):
        inst = generate(GeneratorConfig("C3", (10, 30), (2, 5), seed=seed))
        s = initial_solution(inst)
        assert np.all(s.X.sum(axis=0) == 1)
        assert np.all(s.loads <= s.Q)
        assert np.array_equal(s.y, cluster_costs(inst.dist, s.X))


def test_uncapacitated_sweep_spreads_customers():
    inst = generate(GeneratorConfig("C1", (20, 20), (3, 3), seed=2))
    s = initial_solution(inst)
    assert np.all(s.X.sum(axis=1) > 0)


def test_tight_instance_uses_fallback():
    # demands only pack as {5,4} and {5,4}; a single sweep order may miss that
    inst = CvrpInstance("tight", [[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]],
                        [[5, 5, 4, 4]], [[9, 9]])
    s = initial_solution(inst)
    assert np.all(s.loads <= 9)


def test_infeasible_packing_raises():
    inst = CvrpInstance("nopack", [[0, 0], [1, 0], [0, 1], [-1, 0]], [[6, 6, 6]], [[10, 10]])
    with pytest.raises(InfeasibleError):
        initial_solution(inst)


def test_make_state_validation():
    inst = line_instance([10, 10])
    with pytest.raises(ValueError):
        make_state(inst, [[1, 1, 0], [1, 0, 1]])
    with pytest.raises(InfeasibleError):
        make_state(CvrpInstance("c", [[0, 0], [1, 0], [2, 0], [3, 0]], [[2, 3, 4]], [[5, 5]]),
                   [[1, 1, 1], [0, 0, 0]])


def test_masks():
    inst = line_instance([6, 6])
    s = make_state(inst, [[1, 1, 0], [0, 0, 1]])  # loads 5 and 4
    assert list(feasible_clusters_mask(s, 3)) == [False, True]  # 5 + 4 > 6
    assert list(feasible_clusters_mask(s, 1)) == [True, True]
    assert list(move_mask(s, 1, allow_noop=False)) == [False, True]
    assert list(move_mask(s, 3, allow_noop=False)) == [False, True]  # only its own cluster left


def test_transition_moves_one_customer():
    inst = line_instance([10, 10])
    s = make_state(inst, [[1, 1, 0], [0, 0, 1]])
    t = transition(s, Action(2, 1))
    assert t.cluster_of(2) == 1
    assert list(t.loads[0]) == [2, 7]
    assert np.array_equal(t.y, cluster_costs(inst.dist, t.X))
    assert s.cluster_of(2) == 0  # original untouched


def test_identity_and_errors():
    inst = line_instance([6, 6])
    s = make_state(inst, [[1, 1, 0], [0, 0, 1]])
    assert transition(s, Action(1, 0)) is s
    assert step(s, Action(1, 0)).reward == 0.0
    with pytest.raises(InfeasibleError):
        transition(s, Action(3, 0))
    with pytest.raises(ValueError):
        transition(s, Action(0, 0))
    with pytest.raises(ValueError):
        transition(s, Action(1, 2))


def test_reward_sign_is_cost_increase():
    inst = line_instance([10, 10])
    s = make_state(inst, [[1, 1, 1], [0, 0, 0]])
    res = step(s, Action(1, 1))
    assert res.reward == total_cost(res.next_state) - total_cost(s)
    assert res.reward > 0  # splitting a collinear route costs more
    assert reward(res.next_state, s) == -res.reward


def test_state_arrays_immutable():
    s = initial_solution(random_instance(6, 2, seed=1))
    with pytest.raises(ValueError):
        s.X[0, 0] = not s.X[0, 0]


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 10), st.integers(1, 3), st.integers(0, 10_000))
def test_random_walk_telescopes(n, m, seed):
    inst = random_instance(n, m, seed=seed, fill=0.7)
    rng = np.random.default_rng(seed)
    s = s0 = initial_solution(inst)
    total = 0.0
    for _ in range(15):
        j = int(rng.integers(1, n + 1))
        k = int(rng.choice(np.flatnonzero(feasible_clusters_mask(s, j))))
        res = step(s, Action(j, k))
        total += res.reward
        s = res.next_state
        assert np.all(s.X.sum(axis=0) == 1)
        assert np.all(s.loads <= s.Q)
    assert total == total_cost(s) - total_cost(s0)
