"""Assign-then-route MDP: states, feasibility masks, transitions and rewards.

A state holds the m x n boolean assignment ``X`` (row v = cluster v, column i =
customer i+1) together with the per-cluster Christofides costs ``y`` and the
cached per-feature loads. States are immutable; :func:`transition` returns a
new one and recomputes ``y`` only for the two clusters touched by the move.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .instance import CvrpInstance, scale_adjacency
from .tsp import christofides, cluster_cost, cluster_costs, cluster_members

SWEEP_RETRIES = 50


class InfeasibleError(RuntimeError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class State:
    instance: CvrpInstance
    X: np.ndarray  # (m, n) bool
    y: np.ndarray  # (m,)
    loads: np.ndarray  # (l, m)
    matching: str = "exact"
    A: np.ndarray = field(default=None, repr=False)  # scaled (n+1)x(n+1)

    @property
    def D(self) -> np.ndarray:
        return self.instance.demands

    @property
    def Q(self) -> np.ndarray:
        return self.instance.capacities

    def cluster_of(self, j: int) -> int:
        """Cluster index holding customer ``j`` (1-based node id)."""
        return int(np.flatnonzero(self.X[:, j - 1])[0])

    def routes(self):
        return [christofides(self.instance.dist, cluster_members(self.X, v), self.matching)
                for v in range(self.X.shape[0])]

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return (self.instance is other.instance and self.matching == other.matching
                and np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y)
                and np.array_equal(self.loads, other.loads))

    __hash__ = object.__hash__


class Action(NamedTuple):
    node: int  # customer id, 1..n
    cluster: int  # 0..m-1


class StepResult(NamedTuple):
    next_state: State
    reward: float
    info: dict


def make_state(instance: CvrpInstance, X: np.ndarray, matching: str = "exact",
               A: Optional[np.ndarray] = None) -> State:
    X = np.asarray(X, dtype=bool).copy()
    if X.shape != (instance.m, instance.n):
        raise ValueError(f"assignment shape {X.shape} != {(instance.m, instance.n)}")
    if instance.n and not np.all(X.sum(axis=0) == 1):
        raise ValueError("every customer must belong to exactly one cluster")
    loads = instance.demands @ X.T.astype(float)
    if np.any(loads > instance.capacities):
        raise InfeasibleError("assignment exceeds a vehicle capacity")
    if A is None:
        A = _frozen(scale_adjacency(instance.dist))
    y = cluster_costs(instance.dist, X, matching)
    return State(instance, _frozen(X), _frozen(y), _frozen(loads), matching, A)


def _fits(loads, caps, d, v) -> bool:
    return bool(np.all(loads[:, v] + d <= caps[:, v]))


def _sweep(instance: CvrpInstance, offset: float) -> Optional[np.ndarray]:
    """Angular first-fit with a balanced per-vehicle quota; None on failure."""
    n, m = instance.n, instance.m
    D, Q = instance.demands, instance.capacities
    rel = instance.coords[1:] - instance.coords[0]
    theta = np.mod(np.arctan2(rel[:, 1], rel[:, 0]) - offset, 2 * np.pi)
    order = np.lexsort((np.arange(n), theta))
    quota = D.sum(axis=1) / m
    loads = np.zeros((instance.l, m))
    X = np.zeros((m, n), dtype=bool)
    v = 0
    for i in order:
        d = D[:, i]
        while v < m - 1 and (not _fits(loads, Q, d, v) or np.any(loads[:, v] >= quota)):
            v += 1
        target = v if _fits(loads, Q, d, v) else next(
            (u for u in range(m) if _fits(loads, Q, d, u)), None)
        if target is None:
            return None
        X[target, i] = True
        loads[:, target] += d
    return X


def _best_fit_decreasing(instance: CvrpInstance) -> Optional[np.ndarray]:
    D, Q = instance.demands, instance.capacities
    tot = np.maximum(D.sum(axis=1, keepdims=True), 1e-12)
    size = (D / tot).max(axis=0)
    order = np.lexsort((np.arange(instance.n), -size))
    loads = np.zeros((instance.l, instance.m))
    X = np.zeros((instance.m, instance.n), dtype=bool)
    for i in order:
        d = D[:, i]
        best, best_slack = None, np.inf
        for v in range(instance.m):
            if not _fits(loads, Q, d, v):
                continue
            slack = np.min((Q[:, v] - loads[:, v] - d) / tot[:, 0])
            if slack < best_slack:
                best, best_slack = v, slack
        if best is None:
            return None
        X[best, i] = True
        loads[:, best] += d
    return X


def initial_solution(instance: CvrpInstance, seed: int = 0, matching: str = "exact") -> State:
    """Sweep construction, then randomized-offset retries, then best-fit-decreasing."""
    X = _sweep(instance, 0.0)
    if X is None:
        rng = np.random.default_rng(seed)
        for _ in range(SWEEP_RETRIES):
            X = _sweep(instance, rng.uniform(0.0, 2 * np.pi))
            if X is not None:
                break
    if X is None:
        X = _best_fit_decreasing(instance)
    if X is None:
        raise InfeasibleError(f"{instance.name}: no feasible assignment found")
    return make_state(instance, X, matching)


def feasible_clusters_mask(state: State, j: int) -> np.ndarray:
    d = state.D[:, j - 1]
    mask = np.all(state.loads + d[:, None] <= state.Q, axis=0)
    mask[state.cluster_of(j)] = True
    return mask


def move_mask(state: State, j: int, allow_noop: bool = True) -> np.ndarray:
    """Feasibility mask for Actor 2; without ``allow_noop`` the current cluster is
    dropped whenever some other cluster can take ``j``."""
    mask = feasible_clusters_mask(state, j)
    if not allow_noop and mask.sum() > 1:
        mask[state.cluster_of(j)] = False
    return mask


def transition(state: State, action: Action) -> State:
    j, k = int(action.node), int(action.cluster)
    inst = state.instance
    if not 1 <= j <= inst.n:
        raise ValueError(f"node {j} is not a customer")
    if not 0 <= k < inst.m:
        raise ValueError(f"cluster {k} out of range")
    src = state.cluster_of(j)
    if src == k:
        return state
    if not feasible_clusters_mask(state, j)[k]:
        raise InfeasibleError(f"moving node {j} to cluster {k} violates capacity")
    X = state.X.copy()
    X[src, j - 1] = False
    X[k, j - 1] = True
    d = state.D[:, j - 1]
    loads = state.loads.copy()
    loads[:, src] -= d
    loads[:, k] += d
    y = state.y.copy()
    for v in (src, k):
        y[v] = cluster_cost(inst.dist, cluster_members(X, v), state.matching)
    return State(inst, _frozen(X), _frozen(y), _frozen(loads), state.matching, state.A)


def total_cost(state: State) -> float:
    return float(np.sum(state.y))


def reward(prev: State, nxt: State) -> float:
    """Cost difference between successive states (negative when the move helps)."""
    return float(np.sum(nxt.y) - np.sum(prev.y))


def step(state: State, action: Action) -> StepResult:
    nxt = transition(state, action)
    before, after = total_cost(state), total_cost(nxt)
    return StepResult(nxt, reward(state, nxt), {"cost_before": before, "cost_after": after})
