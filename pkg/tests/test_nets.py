import numpy as np
import pytest

from conftest import random_instance
from vrp_ppo import tensor as tc
from vrp_ppo.env import initial_solution, make_state, move_mask
from vrp_ppo.instance import CvrpInstance, GeneratorConfig, generate
from vrp_ppo.nets import (AgentBundle, NetConfig, actor1_forward, actor2_forward, critic_forward,
                          encode_state, joint_action_prob)


def test_encoding_shape_and_range():
    inst = generate(GeneratorConfig("C3", (12, 12), (3, 3), seed=1))
    s = initial_solution(inst)
    enc = encode_state(s)
    assert enc.shape == (6, 3, 12)
    assert np.all(np.isfinite(enc))
    assert enc.min() >= 0 and enc.max() <= 1
    assert np.array_equal(enc[1], s.X.astype(float))


def test_infinite_capacity_residual_channel():
    s = initial_solution(generate(GeneratorConfig("C1", (10, 10), (2, 2), seed=0)))
    enc = encode_state(s)
    assert np.all(enc[3] == 1.0) and np.all(enc[5] == 1.0)


def test_singleton_cluster_mean_distance_is_zero():
    inst = CvrpInstance("s", [[0, 0], [1, 0], [2, 0], [3, 0]], [[1, 1, 1]], [[5, 5]])
    s = make_state(inst, [[1, 0, 0], [0, 1, 1]])
    enc = encode_state(s)
    assert enc[2, 0, 0] == 0.0
    assert enc[2, 1, 1] == pytest.approx(s.A[2, 3])
    # customer 1 measured against cluster 1 = mean of its two members
    assert enc[2, 1, 0] == pytest.approx((s.A[1, 2] + s.A[1, 3]) / 2)


def test_encoding_equivariant_to_cluster_relabel():
    inst = random_instance(9, 3, seed=4, fill=0.6)
    s = initial_solution(inst)
    perm = [2, 0, 1]
    relabeled = make_state(inst, s.X[perm])
    assert np.allclose(encode_state(relabeled), encode_state(s)[:, perm])


def test_too_many_features():
    inst = random_instance(5, 2, l=2)
    with pytest.raises(ValueError):
        encode_state(initial_solution(inst), max_features=1)
    assert encode_state(initial_solution(inst), max_features=2).shape == (8, 2, 5)


def test_fresh_networks_are_uniform_and_zero_valued():
    agents = AgentBundle()
    s = initial_solution(random_instance(8, 3, seed=0, fill=0.6))
    pi1, h_bar = actor1_forward(agents, agents.encode(s))
    assert np.allclose(pi1.data, 1 / 8)
    pi2, h_hat = actor2_forward(agents, h_bar, 0, np.ones(3, dtype=bool))
    assert np.allclose(pi2.data, 1 / 3)
    assert critic_forward(agents, s.y, h_bar, h_hat, 100.0).item() == 0.0


def trained_like(seed=0):
    agents = AgentBundle(NetConfig(zero_final=False, seed=seed))
    return agents


@pytest.mark.parametrize("n,m", [(35, 3), (65, 4), (1, 1), (5, 7)])
def test_shapes_track_instance(n, m):
    agents = trained_like()
    inst = random_instance(n, m, seed=n, infinite=True)
    s = initial_solution(inst)
    pi1, h_bar = actor1_forward(agents, agents.encode(s))
    assert pi1.shape == (n,) and h_bar.shape == (m, n)
    assert abs(pi1.data.sum() - 1) < 1e-9
    mask = move_mask(s, 1)
    pi2, h_hat = actor2_forward(agents, h_bar, 0, mask)
    assert pi2.shape == (m,) and h_hat.shape == (m, n)
    assert abs(pi2.data.sum() - 1) < 1e-9
    assert np.isfinite(critic_forward(agents, s.y, h_bar, h_hat, 50.0).item())


def test_mask_zeroes_clusters():
    agents = trained_like(1)
    s = initial_solution(random_instance(6, 3, seed=2, fill=0.5))
    _, h_bar = actor1_forward(agents, agents.encode(s))
    pi2, _ = actor2_forward(agents, h_bar, 2, np.array([False, True, False]))
    assert list(pi2.data) == [0.0, 1.0, 0.0]
    pi2, _ = actor2_forward(agents, h_bar, 2, np.array([True, False, True]))
    assert pi2.data[1] == 0.0
    with pytest.raises(ValueError):
        actor2_forward(agents, h_bar, 2, np.zeros(3, dtype=bool))


def test_critic_shape_mismatch():
    agents = AgentBundle()
    with pytest.raises(ValueError):
        critic_forward(agents, np.zeros(2), np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(ValueError):
        critic_forward(agents, np.zeros(3), np.zeros((2, 3)), np.zeros((2, 3)))


def test_parameters_are_disjoint():
    agents = AgentBundle()
    ids = [id(p.data) for group in (agents.theta1, agents.theta2, agents.omega) for p in group]
    assert len(ids) == len(set(ids))


def test_gradient_isolation():
    agents = trained_like(2)
    s = initial_solution(random_instance(6, 2, seed=5, fill=0.7))
    pi1, h_bar = actor1_forward(agents, agents.encode(s))
    pi2, h_hat = actor2_forward(agents, h_bar, 1, np.ones(2, dtype=bool))
    v = critic_forward(agents, s.y, h_bar, h_hat, 10.0)
    tc.backward(v)
    assert all(p.grad is None for p in agents.theta1 + agents.theta2)
    assert any(p.grad is not None for p in agents.omega)
    tc.zero_grad(agents.omega)
    tc.backward(tc.log(pi1[0]) + tc.log(pi2[1]))
    assert all(p.grad is None for p in agents.omega)
    assert all(p.grad is not None for p in agents.theta1 + agents.theta2)


def test_joint_action_prob():
    assert joint_action_prob(np.array([1.0]), 0, np.array([1.0]), 0) == 1.0
    assert joint_action_prob(np.array([0.5, 0.5]), 0, np.array([0.2, 0.8]), 0) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        joint_action_prob(np.array([0.0, 1.0]), 0, np.array([1.0]), 0)


def test_replay_consistency():
    agents = trained_like(3)
    rng = np.random.default_rng(0)
    s = initial_solution(random_instance(10, 3, seed=7, fill=0.6))
    enc = agents.encode(s)
    pi1, h_bar = actor1_forward(agents, enc)
    j = tc.categorical_sample(pi1, rng)
    mask = move_mask(s, j + 1)
    pi2, _ = actor2_forward(agents, h_bar, j, mask)
    k = tc.categorical_sample(pi2, rng)
    p = joint_action_prob(pi1, j, pi2, k)
    pi1b, h_bar_b = actor1_forward(agents, enc)
    pi2b, _ = actor2_forward(agents, h_bar_b, j, mask)
    assert pi1b.data[j] * pi2b.data[k] == p
