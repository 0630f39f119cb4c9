"""Cluster routing costs: Christofides with exact or greedy odd-vertex matching.

All routines work on a dense metric ``dist`` indexed by global node ids, so a
cluster is just a list of customer ids; the depot (node 0) is always added.
A brute-force permutation solver and a Held-Karp solver serve as oracles.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

log = logging.getLogger(__name__)

DEPOT = 0
EXACT_MATCHING_LIMIT = 12
BRUTE_FORCE_LIMIT = 10


@dataclass(frozen=True)
class Tour:
    order: Tuple[int, ...]  # starts and ends at the depot
    cost: float

    @property
    def members(self) -> Tuple[int, ...]:
        return self.order[1:-1]


def tour_cost(dist: np.ndarray, order: Sequence[int]) -> float:
    idx = np.asarray(order, dtype=int)
    if len(idx) < 2:
        return 0.0
    return float(dist[idx[:-1], idx[1:]].sum())


def _vertices(members: Iterable[int]) -> List[int]:
    mem = sorted(set(int(i) for i in members))
    if DEPOT in mem:
        raise ValueError("cluster members must not include the depot")
    return [DEPOT] + mem


def mst(dist: np.ndarray, vertices: Sequence[int]) -> List[Tuple[int, int]]:
    """Kruskal; ties broken by the lowest (i, j) pair."""
    vs = list(vertices)
    if len(vs) < 2:
        return []
    iu, ju = np.triu_indices(len(vs), k=1)
    va = np.asarray(vs)
    a, b = va[iu], va[ju]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    w = dist[a, b]
    order = np.lexsort((hi, lo, w))
    parent = {v: v for v in vs}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for e in order:
        u, v = int(lo[e]), int(hi[e])
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            edges.append((u, v))
            if len(edges) == len(vs) - 1:
                break
    return edges


def _greedy_matching(dist, odd: Sequence[int]) -> List[Tuple[int, int]]:
    pairs = sorted(
        (float(dist[u, v]), min(u, v), max(u, v)) for u, v in itertools.combinations(odd, 2)
    )
    used, out = set(), []
    for _, u, v in pairs:
        if u not in used and v not in used:
            used.update((u, v))
            out.append((u, v))
    return out


def _exact_matching(dist, odd: Sequence[int]) -> List[Tuple[int, int]]:
    vs = sorted(odd)
    k = len(vs)
    w = dist[np.ix_(vs, vs)]
    memo: Dict[int, Tuple[float, int]] = {0: (0.0, -1)}

    def solve(mask: int) -> float:
        if mask in memo:
            return memo[mask][0]
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        best, arg = np.inf, -1
        j_mask = rest
        while j_mask:
            j = (j_mask & -j_mask).bit_length() - 1
            j_mask &= j_mask - 1
            c = w[i, j] + solve(rest & ~(1 << j))
            if c < best:
                best, arg = c, j
        memo[mask] = (best, arg)
        return best

    full = (1 << k) - 1
    solve(full)
    out, mask = [], full
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = memo[mask][1]
        out.append((vs[i], vs[j]))
        mask &= ~((1 << i) | (1 << j))
    return out


def odd_vertex_matching(dist: np.ndarray, vertices: Sequence[int], mode: str = "exact") -> List[Tuple[int, int]]:
    """Perfect matching on an even vertex set.

    ``exact`` is a minimum-weight matching found by exhaustive search over
    pairings (bitmask recursion); above ``EXACT_MATCHING_LIMIT`` vertices it
    falls back to greedy.
    """
    vs = list(vertices)
    if len(vs) % 2:
        raise ValueError(f"matching needs an even vertex count, got {len(vs)}")
    if not vs:
        return []
    if mode == "exact":
        if len(vs) <= EXACT_MATCHING_LIMIT:
            return _exact_matching(dist, vs)
        log.debug("exact matching downgraded to greedy for %d odd vertices", len(vs))
    elif mode != "greedy":
        raise ValueError(f"unknown matching mode {mode!r}")
    return _greedy_matching(dist, vs)


def euler_shortcut(dist: np.ndarray, edges: Sequence[Tuple[int, int]], start: int = DEPOT) -> Tour:
    """Euler circuit of an even, connected multigraph, with repeated vertices skipped."""
    adj: Dict[int, List[int]] = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    if not adj:
        return Tour((start,), 0.0)
    odd = [v for v, nb in adj.items() if len(nb) % 2]
    if odd:
        raise ValueError(f"vertices with odd degree: {sorted(odd)}")
    if start not in adj:
        raise ValueError(f"start vertex {start} is not in the multigraph")
    for nb in adj.values():
        nb.sort(reverse=True)  # pop() yields the smallest neighbour first
    remaining = {v: list(nb) for v, nb in adj.items()}

    # Hierholzer
    stack, circuit = [start], []
    while stack:
        v = stack[-1]
        if remaining[v]:
            u = remaining[v].pop()
            remaining[u].remove(v)
            stack.append(u)
        else:
            circuit.append(stack.pop())
    circuit.reverse()
    if len(set(circuit)) != len(adj):
        raise ValueError("multigraph is not connected")

    seen, order = set(), []
    for v in circuit:
        if v not in seen:
            seen.add(v)
            order.append(v)
    order.append(start)
    return Tour(tuple(order), tour_cost(dist, order))


def christofides(dist: np.ndarray, members: Iterable[int], mode: str = "exact") -> Tour:
    vs = _vertices(members)
    if len(vs) == 1:
        return Tour((DEPOT,), 0.0)
    if len(vs) == 2:
        order = (DEPOT, vs[1], DEPOT)
        return Tour(order, tour_cost(dist, order))
    tree = mst(dist, vs)
    deg: Dict[int, int] = {}
    for u, v in tree:
        deg[u] = deg.get(u, 0) + 1
        deg[v] = deg.get(v, 0) + 1
    odd = [v for v in vs if deg.get(v, 0) % 2]
    matching = odd_vertex_matching(dist, odd, mode)
    return euler_shortcut(dist, tree + matching, DEPOT)


def christofides_cost(dist: np.ndarray, members: Iterable[int], mode: str = "exact") -> float:
    return christofides(dist, members, mode).cost


@lru_cache(maxsize=None)
def _perm_table(k: int) -> np.ndarray:
    # one representative per direction pair: first < last
    perms = np.array(list(itertools.permutations(range(k))), dtype=np.int8)
    if k >= 2:
        perms = perms[perms[:, 0] < perms[:, -1]]
    return perms


def brute_force_tsp(dist: np.ndarray, members: Iterable[int]) -> Tour:
    """Optimal depot tour by enumerating customer orders (at most 10 customers)."""
    vs = _vertices(members)
    cust = np.asarray(vs[1:], dtype=int)
    k = len(cust)
    if k > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} customers, got {k}")
    if k == 0:
        return Tour((DEPOT,), 0.0)
    perms = cust[_perm_table(k)]
    cost = dist[DEPOT, perms[:, 0]] + dist[perms[:, -1], DEPOT]
    if k > 1:
        cost = cost + dist[perms[:, :-1], perms[:, 1:]].sum(axis=1)
    best = int(np.argmin(cost))
    order = (DEPOT,) + tuple(int(x) for x in perms[best]) + (DEPOT,)
    return Tour(order, tour_cost(dist, order))


def held_karp_cost(dist: np.ndarray, members: Iterable[int]) -> float:
    """Exact depot tour cost by subset dynamic programming."""
    cust = _vertices(members)[1:]
    k = len(cust)
    if k == 0:
        return 0.0
    best: Dict[Tuple[int, int], float] = {}
    for a in range(k):
        best[(1 << a, a)] = float(dist[DEPOT, cust[a]])
    for mask in range(1, 1 << k):
        for last in range(k):
            if (mask, last) not in best:
                continue
            base = best[(mask, last)]
            for nxt in range(k):
                if mask & (1 << nxt):
                    continue
                key = (mask | (1 << nxt), nxt)
                c = base + float(dist[cust[last], cust[nxt]])
                if c < best.get(key, np.inf):
                    best[key] = c
    full = (1 << k) - 1
    return min(best[(full, a)] + float(dist[cust[a], DEPOT]) for a in range(k))


COST_GRID = 2.0 ** -20


def quantize(cost: float) -> float:
    """Snap to a dyadic grid so sums and differences of costs are exact in float64."""
    return round(cost / COST_GRID) * COST_GRID


def cluster_cost(dist: np.ndarray, members: Iterable[int], mode: str = "exact") -> float:
    return quantize(christofides_cost(dist, members, mode))


def cluster_members(X: np.ndarray, v: int) -> List[int]:
    """Customer ids (1-based) assigned to cluster ``v`` of an m x n assignment."""
    return [int(i) + 1 for i in np.flatnonzero(X[v])]


def cluster_costs(dist, X: np.ndarray, mode: str = "exact") -> np.ndarray:
    """Per-cluster Christofides cost ``y``; ``dist`` may be a metric or an instance."""
    dist = getattr(dist, "dist", dist)
    X = np.asarray(X, dtype=bool)
    return np.array([cluster_cost(dist, cluster_members(X, v), mode) for v in range(X.shape[0])])
