"""Experiment plumbing: dataset split, metrics files, solution files, checker."""

from __future__ import annotations

import csv
import hashlib
import os
import tempfile
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .env import State
from .instance import CvrpInstance

METRICS_MAGIC = "# vrp-ppo-metrics v1"
METRICS_COLUMNS = ("iter", "mean_return", "mean_adv", "kl_d", "beta",
                   "init_cost", "best_cost", "impr", "wall_ms")


class SolutionError(ValueError):
    pass


# --------------------------------------------------------------------------
# dataset


def split_key(seed: int, name: str) -> str:
    return hashlib.sha256(f"{seed}:{name}".encode()).hexdigest()


def split_dataset(names: Sequence[str], seed: int, test_fraction: float = 0.15) -> Tuple[List[str], List[str]]:
    """Deterministic train/test split: sort by a seeded hash, the first share is test.

    The result depends only on the set of names and the seed, not on listing order.
    At least one instance lands on each side when there are two or more.
    """
    ordered = sorted(set(names), key=lambda nm: (split_key(seed, nm), nm))
    n_test = int(round(test_fraction * len(ordered)))
    if len(ordered) >= 2:
        n_test = min(max(n_test, 1), len(ordered) - 1)
    test = sorted(ordered[:n_test])
    train = sorted(ordered[n_test:])
    return train, test


def list_dataset(folder: str) -> List[str]:
    return sorted(f for f in os.listdir(folder) if f.lower().endswith(".vrp"))


# --------------------------------------------------------------------------
# metrics


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


class MetricsWriter:
    """Append-only CSV sink. A new or empty file gets the magic line and the header."""

    def __init__(self, path: str, columns: Sequence[str] = METRICS_COLUMNS):
        self.path = path
        self.columns = tuple(columns)
        folder = os.path.dirname(os.path.abspath(path))
        os.makedirs(folder, exist_ok=True)
        fresh = not os.path.exists(path) or os.path.getsize(path) == 0
        if not fresh:
            with open(path) as fh:
                first = fh.readline().rstrip("\n")
                header = fh.readline().rstrip("\n")
            if first != METRICS_MAGIC or tuple(header.split(",")) != self.columns:
                raise ValueError(f"{path} is not a compatible metrics file")
        else:
            with open(path, "w", newline="") as fh:
                fh.write(METRICS_MAGIC + "\n")
                fh.write(",".join(self.columns) + "\n")

    def __call__(self, row: dict):
        with open(self.path, "a", newline="") as fh:
            fh.write(",".join(_fmt(row.get(c, "")) for c in self.columns) + "\n")
            fh.flush()


def read_metrics(path: str) -> List[dict]:
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != METRICS_MAGIC:
            raise ValueError(f"{path}: missing metrics magic line")
        return list(csv.DictReader(fh))


# --------------------------------------------------------------------------
# solutions


@dataclass(frozen=True)
class Solution:
    cost: float
    routes: Tuple[Tuple[int, ...], ...]  # each starts and ends at the depot


def solution_from_state(state: State) -> Solution:
    routes = []
    for tour in state.routes():
        order = tuple(int(v) for v in tour.order)
        routes.append(order if len(order) > 1 else (0, 0))
    dist = state.instance.dist
    cost = float(sum(route_cost(dist, r) for r in routes))
    return Solution(cost, tuple(routes))


def route_cost(dist: np.ndarray, route: Sequence[int]) -> float:
    return float(sum(dist[a, b] for a, b in zip(route[:-1], route[1:])))


def format_solution(sol: Solution) -> str:
    lines = [f"COST {sol.cost!r}"]
    for v, route in enumerate(sol.routes, 1):
        lines.append(f"ROUTE {v}: " + " ".join(str(i) for i in route))
    return "\n".join(lines) + "\n"


def parse_solution(text: str) -> Solution:
    cost, routes = None, []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("COST"):
            cost = float(line.split()[1])
        elif line.startswith("ROUTE"):
            _, _, body = line.partition(":")
            routes.append(tuple(int(t) for t in body.split()))
        else:
            raise SolutionError(f"unexpected line {line!r}")
    if cost is None:
        raise SolutionError("missing COST line")
    return Solution(cost, tuple(routes))


def check_solution(inst: CvrpInstance, sol: Solution, tol: float = 1e-6) -> List[str]:
    """Independent feasibility audit; returns a list of violations (empty if valid)."""
    problems = []
    if len(sol.routes) > inst.m:
        problems.append(f"{len(sol.routes)} routes for {inst.m} vehicles")
    seen = {}
    for v, route in enumerate(sol.routes):
        if len(route) < 2 or route[0] != 0 or route[-1] != 0:
            problems.append(f"route {v + 1} does not start and end at the depot")
        for i in route[1:-1]:
            if not 1 <= i <= inst.n:
                problems.append(f"route {v + 1} visits unknown node {i}")
            elif i in seen:
                problems.append(f"customer {i} visited twice")
            else:
                seen[i] = v
    missing = sorted(set(range(1, inst.n + 1)) - set(seen))
    if missing:
        problems.append(f"customers never visited: {missing}")
    for v, route in enumerate(sol.routes):
        if v >= inst.m:
            break
        custs = [i for i in route[1:-1] if 1 <= i <= inst.n]
        load = inst.demands[:, [i - 1 for i in custs]].sum(axis=1) if custs else np.zeros(inst.l)
        over = np.flatnonzero(load > inst.capacities[:, v] + tol)
        for f in over:
            problems.append(f"route {v + 1} exceeds capacity in feature {f}: "
                            f"{load[f]} > {inst.capacities[f, v]}")
    actual = sum(route_cost(inst.dist, r) for r in sol.routes)
    if abs(actual - sol.cost) > tol * max(1.0, abs(actual)):
        problems.append(f"stated cost {sol.cost} differs from route cost {actual}")
    return problems


def write_text(path: str, text: str):
    """Write via a temporary file and rename, so readers never see a partial file."""
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def summarize(rows: Iterable[dict]) -> dict:
    rows = list(rows)
    if not rows:
        return {"count": 0, "mean_impr": 0.0}
    return {"count": len(rows), "mean_impr": float(np.mean([r["impr"] for r in rows]))}
