import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from vrp_ppo.instance import CvrpInstance  # noqa: E402

DATA = os.path.join(os.path.dirname(__file__), "data")


def random_instance(n, m, seed=0, fill=0.8, l=1, infinite=False, name=None):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 100, size=(n + 1, 2))
    demands = rng.integers(1, 11, size=(l, n)).astype(float)
    if infinite:
        caps = np.full((l, m), np.inf)
    else:
        # every single customer must fit some vehicle
        per = np.maximum(demands.sum(axis=1) / (m * fill), demands.max(axis=1))
        caps = np.tile(per[:, None], (1, m))
    return CvrpInstance(name or f"rand-{seed}", coords, demands, caps)


@pytest.fixture
def small_instance():
    return random_instance(7, 2, seed=3)


@pytest.fixture
def a_n32_path():
    return os.path.join(DATA, "A-n32-k5.vrp")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SCORECARD", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
