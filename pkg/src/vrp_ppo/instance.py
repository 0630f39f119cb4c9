"""CVRP problem data: the instance model, CVRPLIB/TSPLIB I/O and the C1/C2/C3 generators.

Node 0 is always the depot. Demands and capacities are stored per feature:
``demands`` has shape ``(l, n)`` (customers only) and ``capacities`` has shape
``(l, m)``. An uncapacitated vehicle is encoded with ``np.inf``, which compares
greater than any finite load.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

EXACT = "exact"
TSPLIB_NINT = "tsplib_nint"
INSTANCE_CLASSES = ("C1", "C2", "C3")


class InstanceError(ValueError):
    """Raised for malformed files, bad generator configs and infeasible totals."""


@dataclass(frozen=True, eq=False)
class CvrpInstance:
    name: str
    coords: np.ndarray  # (n+1, 2), row 0 = depot
    demands: np.ndarray  # (l, n)
    capacities: np.ndarray  # (l, m), np.inf = uncapacitated
    edge_rounding: str = EXACT
    _dist: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1, 2)
        demands = np.array(self.demands, dtype=float)
        if demands.ndim == 1:
            demands = demands[None, :]
        caps = np.array(self.capacities, dtype=float)
        if caps.ndim == 1:
            caps = caps[None, :]
        if self.edge_rounding not in (EXACT, TSPLIB_NINT):
            raise InstanceError(f"unknown edge rounding {self.edge_rounding!r}")
        if coords.shape[0] != demands.shape[1] + 1:
            raise InstanceError(
                f"{coords.shape[0]} coordinates for {demands.shape[1]} customers + depot"
            )
        if demands.shape[0] != caps.shape[0]:
            raise InstanceError("demands and capacities disagree on the feature count")
        if caps.shape[1] < 1:
            raise InstanceError("at least one vehicle is required")
        if np.any(demands < 0) or not np.all(np.isfinite(demands)):
            raise InstanceError("demands must be finite and non-negative")
        if np.any(caps <= 0) or np.any(np.isnan(caps)):
            raise InstanceError("capacities must be positive or infinite")
        for arr in (coords, demands, caps):
            arr.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "capacities", caps)
        dist = _pairwise(coords, self.edge_rounding)
        dist.setflags(write=False)
        object.__setattr__(self, "_dist", dist)

    @property
    def n(self) -> int:
        return self.demands.shape[1]

    @property
    def m(self) -> int:
        return self.capacities.shape[1]

    @property
    def l(self) -> int:  # noqa: E743
        return self.demands.shape[0]

    @property
    def dist(self) -> np.ndarray:
        """Full (n+1)x(n+1) metric, read-only."""
        return self._dist

    def total_demand(self) -> np.ndarray:
        return self.demands.sum(axis=1)

    def total_capacity(self) -> np.ndarray:
        return self.capacities.sum(axis=1)

    def infeasible_features(self) -> list:
        """Features whose total demand exceeds the fleet's total capacity."""
        dem, cap = self.total_demand(), self.total_capacity()
        return [f for f in range(self.l) if dem[f] > cap[f]]

    def check_feasible(self):
        bad = self.infeasible_features()
        if bad:
            f = bad[0]
            raise InstanceError(
                f"{self.name}: total demand {self.total_demand()[f]:g} of feature {f} "
                f"exceeds total capacity {self.total_capacity()[f]:g}"
            )

    def __eq__(self, other):
        if not isinstance(other, CvrpInstance):
            return NotImplemented
        return (
            self.name == other.name
            and self.edge_rounding == other.edge_rounding
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.demands, other.demands)
            and np.array_equal(self.capacities, other.capacities)
        )

    __hash__ = object.__hash__


def _pairwise(coords: np.ndarray, rounding: str) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    if rounding == TSPLIB_NINT:
        # TSPLIB nint: (int)(x + 0.5)
        d = np.floor(d + 0.5)
    np.fill_diagonal(d, 0.0)
    return d


def distance(instance: CvrpInstance, i: int, j: int) -> float:
    return float(instance.dist[i, j])


def adjacency_matrix(instance: CvrpInstance) -> np.ndarray:
    """(n+1)x(n+1) distance matrix including the depot row/column."""
    return np.array(instance.dist)


def scale_adjacency(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    top = A.max() if A.size else 0.0
    if top <= 0:
        return A.copy()
    return A / top


# --------------------------------------------------------------------------
# CVRPLIB / TSPLIB dialect

_MANDATORY = ("NAME", "DIMENSION", "CAPACITY", "EDGE_WEIGHT_TYPE")
_SECTIONS = ("NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION")
_K_SUFFIX = re.compile(r"-k(\d+)\s*$")


def parse_cvrplib(text: str, validate: bool = True) -> CvrpInstance:
    """Parse a TSPLIB-style CVRP file.

    Extension keys written by :func:`serialize_cvrplib` are honoured:
    ``EDGE_ROUNDING : EXACT`` switches off nint rounding and ``CAPACITY : -1``
    marks uncapacitated vehicles. With ``validate=False`` the total-demand
    feasibility check is skipped (used by ``inspect``).
    """
    if not text or not text.strip():
        raise InstanceError("empty instance file")
    header: dict = {}
    sections: dict = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        word = line.split()[0].rstrip(":")
        if word in _SECTIONS:
            current = word
            sections[current] = []
            continue
        if ":" in line and not line[0].isdigit() and not line[0] == "-":
            key, _, value = line.partition(":")
            header[key.strip().upper()] = value.strip()
            current = None
            continue
        if current is None:
            raise InstanceError(f"unexpected line outside any section: {line!r}")
        sections[current].append(line.split())

    for key in _MANDATORY:
        if key not in header:
            raise InstanceError(f"missing mandatory header {key}")
    for sec in _SECTIONS:
        if sec not in sections:
            raise InstanceError(f"missing mandatory section {sec}")
    if header["EDGE_WEIGHT_TYPE"].upper() != "EUC_2D":
        raise InstanceError(f"unsupported EDGE_WEIGHT_TYPE {header['EDGE_WEIGHT_TYPE']}")

    name = header["NAME"]
    dim = int(header["DIMENSION"])
    coords = {}
    for row in sections["NODE_COORD_SECTION"]:
        if len(row) != 3:
            raise InstanceError(f"bad NODE_COORD_SECTION row {row}")
        coords[int(row[0])] = (float(row[1]), float(row[2]))
    demands = {}
    for row in sections["DEMAND_SECTION"]:
        if len(row) != 2:
            raise InstanceError(f"bad DEMAND_SECTION row {row}")
        demands[int(row[0])] = float(row[1])
    depots = [int(r[0]) for r in sections["DEPOT_SECTION"] if int(r[0]) != -1]
    if len(depots) != 1:
        raise InstanceError(f"expected exactly one depot, got {depots}")
    depot = depots[0]
    ids = list(range(1, dim + 1))
    if sorted(coords) != ids or sorted(demands) != ids:
        raise InstanceError("NODE_COORD_SECTION/DEMAND_SECTION do not cover nodes 1..DIMENSION")
    if demands[depot] != 0:
        raise InstanceError(f"depot demand must be 0, got {demands[depot]:g}")

    order = [depot] + [i for i in ids if i != depot]
    xy = np.array([coords[i] for i in order])
    dem = np.array([[demands[i] for i in order[1:]]])

    cap = float(header["CAPACITY"])
    if cap == -1:
        cap = np.inf
    total = float(dem.sum())
    match = _K_SUFFIX.search(name)
    if "VEHICLES" in header:
        m = int(header["VEHICLES"])
    elif match:
        m = int(match.group(1))
    elif np.isinf(cap):
        m = 1
    else:
        m = max(1, math.ceil(total / cap))
    rounding = EXACT if header.get("EDGE_ROUNDING", "").upper() == "EXACT" else TSPLIB_NINT
    inst = CvrpInstance(name, xy, dem, np.full((1, m), cap), edge_rounding=rounding)
    if validate:
        inst.check_feasible()
    return inst


def read_cvrplib(path, validate: bool = True) -> CvrpInstance:
    with open(path) as fh:
        return parse_cvrplib(fh.read(), validate=validate)


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def serialize_cvrplib(inst: CvrpInstance) -> str:
    """Write ``inst`` in the CVRPLIB dialect read by :func:`parse_cvrplib`."""
    if inst.l != 1:
        raise InstanceError("the CVRPLIB dialect carries a single demand feature")
    caps = inst.capacities[0]
    if not np.all(caps == caps[0]):
        raise InstanceError("the CVRPLIB dialect requires equal vehicle capacities")
    cap = caps[0]
    lines = [f"NAME : {inst.name}", "TYPE : CVRP", f"DIMENSION : {inst.n + 1}"]
    lines.append("EDGE_WEIGHT_TYPE : EUC_2D")
    if inst.edge_rounding == EXACT:
        lines.append("EDGE_ROUNDING : EXACT")
    if not _K_SUFFIX.search(inst.name):
        lines.append(f"VEHICLES : {inst.m}")
    if np.isinf(cap):
        lines.append("COMMENT : CAPACITY -1 denotes uncapacitated vehicles")
        lines.append("CAPACITY : -1")
    else:
        lines.append(f"CAPACITY : {_num(cap)}")
    lines.append("NODE_COORD_SECTION")
    for i, (x, y) in enumerate(inst.coords):
        lines.append(f"{i + 1} {_num(x)} {_num(y)}")
    lines.append("DEMAND_SECTION")
    lines.append("1 0")
    for i, d in enumerate(inst.demands[0]):
        lines.append(f"{i + 2} {_num(d)}")
    lines += ["DEPOT_SECTION", "1", "-1", "EOF", ""]
    return "\n".join(lines)


# --------------------------------------------------------------------------
# synthetic instance classes

@dataclass(frozen=True)
class GeneratorConfig:
    cls: str = "C1"
    n_range: Tuple[int, int] = (30, 40)
    m_range: Tuple[int, int] = (3, 4)
    seed: int = 0
    capacity_fill_ratio: float = 0.8
    cluster_centers: Tuple[Tuple[float, float], Tuple[float, float]] = ((25.0, 50.0), (75.0, 50.0))
    cluster_radius: float = 15.0
    name: Optional[str] = None

    def validate(self):
        if self.cls not in INSTANCE_CLASSES:
            raise InstanceError(f"unknown instance class {self.cls!r}")
        for label, (lo, hi) in (("n_range", self.n_range), ("m_range", self.m_range)):
            if lo > hi:
                raise InstanceError(f"{label} {lo}..{hi} is empty")
        if self.n_range[0] < 0 or self.m_range[0] < 1:
            raise InstanceError("need n >= 0 customers and m >= 1 vehicles")
        if not 0 < self.capacity_fill_ratio <= 1:
            raise InstanceError("capacity_fill_ratio must lie in (0, 1]")
        if self.cluster_radius <= 0:
            raise InstanceError("cluster_radius must be positive")


DEPOT_XY = (50.0, 50.0)


def _disc(rng: np.random.Generator, center: Sequence[float], radius: float, k: int) -> np.ndarray:
    r = radius * np.sqrt(rng.random(k))
    phi = rng.uniform(0.0, 2 * np.pi, k)
    return np.column_stack([center[0] + r * np.cos(phi), center[1] + r * np.sin(phi)])


def generate(config: GeneratorConfig) -> CvrpInstance:
    """Sample one instance of class C1, C2 or C3; a pure function of ``config``."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = int(rng.integers(config.n_range[0], config.n_range[1] + 1))
    m = int(rng.integers(config.m_range[0], config.m_range[1] + 1))
    if config.cls == "C2":
        half = n // 2
        pts = np.vstack([
            _disc(rng, config.cluster_centers[0], config.cluster_radius, half),
            _disc(rng, config.cluster_centers[1], config.cluster_radius, n - half),
        ])
    else:
        pts = rng.uniform(0.0, 100.0, size=(n, 2))
    demands = rng.integers(1, 11, size=n).astype(float)
    if config.cls == "C1":
        caps = np.full((1, m), np.inf)
    else:
        cap = max(demands.sum(), 1.0) / (m * config.capacity_fill_ratio)
        caps = np.full((1, m), cap)
    name = config.name or f"{config.cls}-s{config.seed}-n{n + 1}-k{m}"
    coords = np.vstack([np.array(DEPOT_XY), pts])
    inst = CvrpInstance(name, coords, demands[None, :], caps, edge_rounding=EXACT)
    inst.check_feasible()
    return inst
