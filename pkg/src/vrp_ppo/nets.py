"""Actor 1 (node policy), Actor 2 (cluster policy) and the critic.

Every network is a stack of same-size convolutions over an (m, n) grid
(clusters x customers), so one parameter set serves any instance size.
Maps are collapsed by summation into node logits, cluster logits or a value.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Tuple

import numpy as np

from . import tensor as tc
from .env import State
from .tensor import ConvLayer, Tensor


@dataclass(frozen=True)
class NetConfig:
    hidden: int = 27
    out_channels: int = 4
    depth: int = 3
    kernel: int = 3
    max_features: int = 1
    zero_final: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def encoder_channels(self) -> int:
        return 4 + 2 * self.max_features


def encode_state(state: State, max_features: int = 1) -> np.ndarray:
    """(4 + 2*max_features, m, n) channels describing everything but ``y``.

    0: scaled customer-depot distance; 1: assignment X; 2: mean scaled
    distance from customer i to the other members of cluster v; 3: residual
    capacity ratio of cluster v (min over features); then demands and
    capacities per feature, both as fractions of that feature's total demand.
    Feature channels beyond the instance's l are zero.
    """
    inst = state.instance
    m, n, l = inst.m, inst.n, inst.l
    if l > max_features:
        raise ValueError(f"instance has {l} features, encoder supports {max_features}")
    A = state.A
    X = state.X.astype(float)
    enc = np.zeros((4 + 2 * max_features, m, n))
    enc[0] = A[0, 1:][None, :]
    enc[1] = X
    S = A[1:, 1:]
    others = X.sum(axis=1, keepdims=True) - X
    sums = X @ S
    enc[2] = np.divide(sums, others, out=np.zeros_like(sums), where=others > 0)
    Q, loads = inst.capacities, state.loads
    finite = np.isfinite(Q)
    ratio = np.ones_like(Q)
    ratio[finite] = (Q[finite] - loads[finite]) / Q[finite]
    enc[3] = ratio.min(axis=0)[:, None]
    tot = np.maximum(inst.demands.sum(axis=1), 1e-12)
    for f in range(l):
        enc[4 + f] = (inst.demands[f] / tot[f])[None, :]
        qf = np.where(np.isfinite(Q[f]), np.minimum(Q[f] / tot[f], 1.0), 1.0)
        enc[4 + max_features + f] = qf[:, None]
    return enc


class ConvNet:
    def __init__(self, in_channels: int, cfg: NetConfig, rng: np.random.Generator):
        widths = [in_channels] + [cfg.hidden] * (cfg.depth - 1) + [cfg.out_channels]
        self.layers = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            last = i == len(widths) - 2
            init = "zero" if (last and cfg.zero_final) else "he"
            self.layers.append(ConvLayer(a, b, cfg.kernel, rng=rng, init=init))

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = tc.relu(layer(x))
        return self.layers[-1](x)

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


class AgentBundle:
    """Actor 1 (theta1), Actor 2 (theta2) and critic (omega); no shared parameters."""

    def __init__(self, cfg: NetConfig = NetConfig()):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.actor1 = ConvNet(cfg.encoder_channels, cfg, rng)
        self.actor2 = ConvNet(2, cfg, rng)
        self.critic = ConvNet(3, cfg, rng)

    @property
    def theta1(self) -> List[Tensor]:
        return self.actor1.parameters()

    @property
    def theta2(self) -> List[Tensor]:
        return self.actor2.parameters()

    @property
    def omega(self) -> List[Tensor]:
        return self.critic.parameters()

    def named_parameters(self):
        for prefix, params in (("theta1", self.theta1), ("theta2", self.theta2), ("omega", self.omega)):
            for i, p in enumerate(params):
                yield f"{prefix}.{i}", p

    def encode(self, state: State) -> np.ndarray:
        return encode_state(state, self.cfg.max_features)


def actor1_forward(agents: AgentBundle, enc) -> Tuple[Tensor, Tensor]:
    """Node distribution pi1 (length n) and the embedding H_bar (m x n)."""
    fmap = agents.actor1(tc.as_tensor(enc))
    h_bar = tc.sum(fmap, axis=0)
    pi1 = tc.softmax(tc.sum(h_bar, axis=0))
    return pi1, h_bar


def actor2_forward(agents: AgentBundle, h_bar: Tensor, node: int, mask) -> Tuple[Tensor, Tensor]:
    """Cluster distribution pi2 for the chosen customer (0-based column ``node``)."""
    m, n = h_bar.shape
    h1 = np.zeros(n)
    h1[node] = 1.0
    x = tc.stack([h_bar, Tensor(np.tile(h1, (m, 1)))])
    fmap = agents.actor2(x)
    h_hat = tc.sum(fmap, axis=0)
    pi2 = tc.masked_softmax(tc.sum(h_hat, axis=1), mask)
    return pi2, h_hat


def critic_forward(agents: AgentBundle, y, h_bar, h_hat, cost_scale: float = 1.0) -> Tensor:
    """Scalar state value; the embeddings enter as constants."""
    hb = h_bar.data if isinstance(h_bar, Tensor) else np.asarray(h_bar, dtype=float)
    hh = h_hat.data if isinstance(h_hat, Tensor) else np.asarray(h_hat, dtype=float)
    if hb.shape != hh.shape:
        raise ValueError(f"embedding shapes differ: {hb.shape} vs {hh.shape}")
    y = np.asarray(y, dtype=float)
    m, n = hb.shape
    if y.shape != (m,):
        raise ValueError(f"cost vector of length {y.shape} for {m} clusters")
    scale = cost_scale if cost_scale > 0 else 1.0
    x = Tensor(np.stack([hb, hh, np.tile((y / scale)[:, None], (1, n))]))
    return tc.sum(agents.critic(x))


def joint_action_prob(pi1, j: int, pi2, k: int) -> float:
    """pi1[j] * pi2[k] for 0-based node column ``j`` and cluster ``k``."""
    p1 = pi1.data if isinstance(pi1, Tensor) else np.asarray(pi1)
    p2 = pi2.data if isinstance(pi2, Tensor) else np.asarray(pi2)
    p = float(p1[j] * p2[k])
    if p <= 0.0:
        raise ValueError(f"zero-probability action (node {j}, cluster {k})")
    return p
