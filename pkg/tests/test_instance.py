import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_instance
from vrp_ppo.instance import (EXACT, TSPLIB_NINT, CvrpInstance, GeneratorConfig, InstanceError,
                              adjacency_matrix, distance, generate, parse_cvrplib, read_cvrplib,
                              scale_adjacency, serialize_cvrplib)

# published best-known routes, customers numbered 1..31 (file node id minus one)
A_N32_ROUTES = [
    [21, 31, 19, 17, 13, 7, 26],
    [12, 1, 16, 30],
    [27, 24],
    [29, 18, 8, 9, 22, 15, 10, 25, 5, 20],
    [14, 28, 11, 4, 23, 3, 2, 6],
]


def test_a_n32_header(a_n32_path):
    inst = read_cvrplib(a_n32_path)
    assert inst.n == 31 and inst.m == 5 and inst.l == 1
    assert np.all(inst.capacities == 100)
    assert tuple(inst.coords[0]) == (82.0, 76.0)
    assert inst.total_demand()[0] == 410
    assert inst.edge_rounding == TSPLIB_NINT


def test_a_n32_known_optimum(a_n32_path):
    inst = read_cvrplib(a_n32_path)
    total = 0.0
    for route in A_N32_ROUTES:
        path = [0] + route + [0]
        total += sum(inst.dist[a, b] for a, b in zip(path, path[1:]))
        assert inst.demands[0, [c - 1 for c in route]].sum() <= 100
    assert total == 784


def test_nint_rounding():
    inst = CvrpInstance("t", [[0, 0], [3, 4], [1, 1]], [1, 1], [5], edge_rounding=TSPLIB_NINT)
    assert distance(inst, 0, 1) == 5
    assert distance(inst, 0, 2) == 1  # sqrt(2) -> 1
    exact = CvrpInstance("t", [[0, 0], [3, 4], [1, 1]], [1, 1], [5], edge_rounding=EXACT)
    assert distance(exact, 0, 2) == pytest.approx(math.sqrt(2))


def test_adjacency_properties():
    inst = random_instance(9, 3, seed=1)
    A = adjacency_matrix(inst)
    assert A.shape == (10, 10)
    assert np.allclose(A, A.T) and np.all(np.diag(A) == 0)
    S = scale_adjacency(A)
    assert S.max() == pytest.approx(1.0)
    assert np.all(scale_adjacency(np.zeros((3, 3))) == 0)


def test_depot_relocated_to_front():
    text = """NAME : reloc
TYPE : CVRP
DIMENSION : 3
EDGE_WEIGHT_TYPE : EUC_2D
CAPACITY : 10
NODE_COORD_SECTION
1 5 5
2 0 0
3 9 9
DEMAND_SECTION
1 3
2 0
3 4
DEPOT_SECTION
2
-1
EOF
"""
    inst = parse_cvrplib(text)
    assert tuple(inst.coords[0]) == (0.0, 0.0)
    assert list(inst.demands[0]) == [3.0, 4.0]
    assert inst.m == 1


@pytest.mark.parametrize("cut", ["CAPACITY", "NODE_COORD_SECTION", "DEPOT_SECTION"])
def test_missing_pieces_rejected(a_n32_path, cut):
    text = open(a_n32_path).read()
    lines = [ln for ln in text.splitlines() if not ln.strip().startswith(cut)]
    with pytest.raises(InstanceError):
        parse_cvrplib("\n".join(lines))


def test_empty_file_rejected():
    with pytest.raises(InstanceError):
        parse_cvrplib("   \n")


def test_infeasible_total_demand():
    text = serialize_cvrplib(random_instance(5, 2, seed=0)).replace("VEHICLES : 2", "VEHICLES : 1")
    with pytest.raises(InstanceError):
        parse_cvrplib(text)
    inst = parse_cvrplib(text, validate=False)
    assert inst.infeasible_features() == [0]


def test_non_euclidean_rejected(a_n32_path):
    text = open(a_n32_path).read().replace("EUC_2D", "GEO")
    with pytest.raises(InstanceError):
        parse_cvrplib(text)


@pytest.mark.parametrize("cls", ["C1", "C2", "C3"])
def test_generate_round_trip(cls):
    for seed in range(5):
        inst = generate(GeneratorConfig(cls, (5, 15), (2, 4), seed=seed))
        again = parse_cvrplib(serialize_cvrplib(inst))
        assert again == inst
        assert again.edge_rounding == EXACT


def test_generate_classes():
    c1 = generate(GeneratorConfig("C1", (20, 20), (3, 3), seed=4))
    assert np.all(np.isinf(c1.capacities))
    c3 = generate(GeneratorConfig("C3", (20, 20), (3, 3), seed=4))
    assert np.all(np.isfinite(c3.capacities))
    assert c3.total_capacity()[0] == pytest.approx(c3.total_demand()[0] / 0.8)
    c2 = generate(GeneratorConfig("C2", (40, 40), (3, 3), seed=4))
    pts = c2.coords[1:]
    left = np.hypot(pts[:, 0] - 25, pts[:, 1] - 50) <= 15 + 1e-9
    right = np.hypot(pts[:, 0] - 75, pts[:, 1] - 50) <= 15 + 1e-9
    assert np.all(left | right) and left.sum() == 20


def test_generate_is_deterministic():
    cfg = GeneratorConfig("C3", (10, 30), (2, 5), seed=11)
    assert generate(cfg) == generate(cfg)
    assert generate(cfg) != generate(GeneratorConfig("C3", (10, 30), (2, 5), seed=12))


def test_generator_config_validation():
    with pytest.raises(InstanceError):
        generate(GeneratorConfig("C9"))
    with pytest.raises(InstanceError):
        generate(GeneratorConfig("C1", n_range=(5, 3)))
    with pytest.raises(InstanceError):
        generate(GeneratorConfig("C1", m_range=(0, 2)))


def test_instance_arrays_read_only():
    inst = random_instance(4, 2)
    with pytest.raises(ValueError):
        inst.demands[0, 0] = 5


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 10_000))
def test_serialize_parse_property(n, m, seed):
    inst = random_instance(n, m, seed=seed, name=f"prop-{seed}")
    assert parse_cvrplib(serialize_cvrplib(inst)) == inst
