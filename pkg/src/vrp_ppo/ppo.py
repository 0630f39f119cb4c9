"""Adaptive-KL PPO over the assign-then-route MDP.

Each rollout starts from a fresh instance and initial solution (optionally
shaken by a few unrecorded random moves), runs T steps
under the frozen policy and keeps only first-step data: the state s1, the
first action, the old distributions, the embeddings and the advantage
``A1 = sum_t gamma^t g_t - V(s1)``. The learning signal ``g_t`` is the cost
decrease of step t, i.e. the negated environment reward, so maximising the
surrogate drives the routing cost down.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from . import tensor as tc
from .env import Action, State, initial_solution, move_mask, step, total_cost
from .instance import CvrpInstance
from .nets import AgentBundle, actor1_forward, actor2_forward, critic_forward, joint_action_prob

log = logging.getLogger(__name__)

_TINY = np.finfo(np.float64).tiny

InstanceSource = Callable[[np.random.Generator], CvrpInstance]
Policy = Callable[[State, np.random.Generator], Action]


@dataclass
class Hyperparams:
    gamma: float = 0.99
    T: int = 10
    N: int = 8
    k: int = 100
    lr_actor: float = 1e-5
    lr_critic: float = 1e-5
    epochs_actor: int = 4
    epochs_critic: int = 4
    beta0: float = 1.0
    d_targ: float = 0.01
    matching: str = "exact"
    allow_noop: bool = True
    warmup_steps: int = 0

    def validate(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        for name in ("T", "N", "epochs_actor", "epochs_critic"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be non-negative")
        for name in ("lr_actor", "lr_critic", "beta0", "d_targ"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.matching not in ("exact", "greedy"):
            raise ValueError(f"unknown matching mode {self.matching!r}")


@dataclass
class RolloutRecord:
    s1: State
    enc1: np.ndarray
    action1: Action
    pi_old: float
    pi1_old: np.ndarray
    pi2_old: np.ndarray
    mask1: np.ndarray
    h_bar1: np.ndarray
    h_hat1: np.ndarray
    value1: float
    advantage: float
    ret: float
    cost_scale: float
    gains: List[float] = field(default_factory=list)
    initial_cost: float = 0.0
    final_cost: float = 0.0
    best_cost: float = 0.0


class Buffers:
    def __init__(self):
        self.rollout: List[RolloutRecord] = []
        self.iteration: List[RolloutRecord] = []

    def store(self, rec: RolloutRecord):
        self.rollout.clear()
        self.rollout.append(rec)
        self.iteration.extend(self.rollout)

    def clear(self):
        self.rollout.clear()
        self.iteration.clear()


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """sum_{t=1..T} gamma^t r_t."""
    return float(sum(gamma ** (t + 1) * r for t, r in enumerate(rewards)))


def first_step_advantage(rewards: Sequence[float], gamma: float, value: float) -> float:
    return discounted_return(rewards, gamma) - value


def update_beta(d: float, d_targ: float, beta: float) -> float:
    if d < d_targ / 1.5:
        return beta / 2
    if d > d_targ * 1.5:
        return beta * 2
    return beta


# --------------------------------------------------------------------------
# policies


def agent_policy(agents: AgentBundle, greedy: bool = False, allow_noop: bool = True) -> Policy:
    def act(state: State, rng: np.random.Generator) -> Action:
        with tc.no_grad():
            pi1, h_bar = actor1_forward(agents, agents.encode(state))
            j = int(np.argmax(pi1.data)) if greedy else tc.categorical_sample(pi1, rng)
            mask = move_mask(state, j + 1, allow_noop)
            pi2, _ = actor2_forward(agents, h_bar, j, mask)
            k = int(np.argmax(pi2.data)) if greedy else tc.categorical_sample(pi2, rng)
        return Action(j + 1, k)
    return act


def random_policy(allow_noop: bool = True) -> Policy:
    """Uniform customer, then a uniform cluster among those allowed by the move mask."""
    def act(state: State, rng: np.random.Generator) -> Action:
        j = int(rng.integers(1, state.instance.n + 1))
        k = int(rng.choice(np.flatnonzero(move_mask(state, j, allow_noop))))
        return Action(j, k)
    return act


def identity_policy(state: State, rng: np.random.Generator) -> Action:
    return Action(1, state.cluster_of(1))


# --------------------------------------------------------------------------
# rollouts


def run_rollout(instance_source: InstanceSource, agents: AgentBundle, hp: Hyperparams,
                rng: np.random.Generator) -> RolloutRecord:
    inst = instance_source(rng)
    state = initial_solution(inst, seed=int(rng.integers(2**32)), matching=hp.matching)
    if hp.warmup_steps:
        # unrecorded random moves so s1 also covers partly improved, partly perturbed solutions
        shake = random_policy(hp.allow_noop)
        for _ in range(int(rng.integers(hp.warmup_steps + 1))):
            state = step(state, shake(state, rng)).next_state
    init = total_cost(state)
    scale = init if init > 0 else 1.0
    first = None
    gains, best = [], init
    with tc.no_grad():
        for t in range(hp.T):
            enc = agents.encode(state)
            pi1, h_bar = actor1_forward(agents, enc)
            j = tc.categorical_sample(pi1, rng)
            mask = move_mask(state, j + 1, hp.allow_noop)
            pi2, h_hat = actor2_forward(agents, h_bar, j, mask)
            k = tc.categorical_sample(pi2, rng)
            if t == 0:
                value = critic_forward(agents, state.y, h_bar, h_hat, scale).item()
                first = dict(s1=state, enc1=enc, action1=Action(j + 1, k),
                             pi_old=joint_action_prob(pi1, j, pi2, k),
                             pi1_old=pi1.numpy(), pi2_old=pi2.numpy(), mask1=mask,
                             h_bar1=h_bar.numpy(), h_hat1=h_hat.numpy(), value1=value)
            res = step(state, Action(j + 1, k))
            gains.append(-res.reward)
            state = res.next_state
            best = min(best, total_cost(state))
    ret = discounted_return(gains, hp.gamma)
    return RolloutRecord(advantage=ret - first["value1"], ret=ret, cost_scale=scale, gains=gains,
                         initial_cost=init, final_cost=total_cost(state), best_cost=best, **first)


# --------------------------------------------------------------------------
# objectives


def actor_objective(records: Sequence[RolloutRecord], agents: AgentBundle, beta: float):
    """Negated adaptive-KL surrogate and the batch-mean KL (as a float).

    Per record: ratio * A1 - beta * (KL(pi1 || pi1_old) + KL(pi2 || pi2_old)),
    with the distributions recomputed on the stored s1 and first node.
    """
    terms, kls = [], []
    for rec in records:
        j, k = rec.action1.node - 1, rec.action1.cluster
        pi1, h_bar = actor1_forward(agents, rec.enc1)
        pi2, _ = actor2_forward(agents, h_bar, j, rec.mask1)
        ratio = pi1[j] * pi2[k] * (1.0 / rec.pi_old)
        # old probabilities that underflowed to 0 still lie in the support
        q1 = np.maximum(rec.pi1_old, _TINY)
        q2 = np.where(rec.mask1, np.maximum(rec.pi2_old, _TINY), 0.0)
        kl = tc.kl_categorical(pi1, q1) + tc.kl_categorical(pi2, q2)
        kls.append(kl.item())
        terms.append(ratio * rec.advantage - beta * kl)
    return -tc.mean(terms), float(np.mean(kls))


def mean_kl(records: Sequence[RolloutRecord], agents: AgentBundle) -> float:
    with tc.no_grad():
        return actor_objective(records, agents, 0.0)[1]


def critic_objective(records: Sequence[RolloutRecord], agents: AgentBundle):
    terms = []
    for rec in records:
        v = critic_forward(agents, rec.s1.y, rec.h_bar1, rec.h_hat1, rec.cost_scale)
        terms.append(tc.square(v - rec.ret))
    return tc.mean(terms)


# --------------------------------------------------------------------------
# training loop


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("VRP_PPO_THREADS", "1")))
    except ValueError:
        return 1


class Trainer:
    """Holds the mutable training state: agents, optimisers, beta and the iteration counter.

    Rollout ``r`` of iteration ``it`` draws from ``default_rng([seed, it, r])``,
    so results do not depend on thread count and a resumed run replays exactly.
    """

    def __init__(self, agents: AgentBundle, hp: Hyperparams, instance_source: InstanceSource,
                 seed: int = 0):
        hp.validate()
        self.agents, self.hp, self.source, self.seed = agents, hp, instance_source, seed
        self.actor_params = agents.theta1 + agents.theta2
        self.critic_params = agents.omega
        self.actor_opt = tc.AdamState(self.actor_params)
        self.critic_opt = tc.AdamState(self.critic_params)
        self.beta = hp.beta0
        self.iteration = 0
        self.buffers = Buffers()

    def _rollout(self, r: int) -> RolloutRecord:
        rng = np.random.default_rng([self.seed, self.iteration, r])
        return run_rollout(self.source, self.agents, self.hp, rng)

    def collect(self) -> List[RolloutRecord]:
        threads = min(_threads(), self.hp.N)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                records = list(pool.map(self._rollout, range(self.hp.N)))
        else:
            records = [self._rollout(r) for r in range(self.hp.N)]
        for rec in records:
            self.buffers.store(rec)
        return records

    def update(self) -> dict:
        batch = self.buffers.iteration
        hp = self.hp
        for _ in range(hp.epochs_actor):
            tc.zero_grad(self.actor_params)
            loss, _ = actor_objective(batch, self.agents, self.beta)
            tc.backward(loss)
            tc.adam_step(self.actor_params, [p.grad for p in self.actor_params], hp.lr_actor, self.actor_opt)
        d = mean_kl(batch, self.agents)
        for _ in range(hp.epochs_critic):
            tc.zero_grad(self.critic_params)
            loss = critic_objective(batch, self.agents)
            tc.backward(loss)
            tc.adam_step(self.critic_params, [p.grad for p in self.critic_params], hp.lr_critic, self.critic_opt)
        tc.zero_grad(self.actor_params + self.critic_params)
        self.beta = update_beta(d, hp.d_targ, self.beta)
        return {"kl_d": d}

    def iterate(self) -> dict:
        t0 = time.perf_counter()
        records = self.collect()
        stats = self.update()
        self.buffers.clear()
        self.iteration += 1
        init = np.array([r.initial_cost for r in records])
        best = np.array([r.best_cost for r in records])
        impr = np.where(init > 0, (init - best) / np.where(init > 0, init, 1.0), 0.0)
        return {
            "iter": self.iteration,
            "mean_return": float(np.mean([r.ret for r in records])),
            "mean_adv": float(np.mean([r.advantage for r in records])),
            "kl_d": stats["kl_d"],
            "beta": self.beta,
            "init_cost": float(init.mean()),
            "best_cost": float(best.mean()),
            "impr": float(impr.mean()),
            "wall_ms": (time.perf_counter() - t0) * 1e3,
        }

    def train(self, iterations: Optional[int] = None, sinks: Iterable[Callable[[dict], None]] = ()) -> List[dict]:
        sinks = list(sinks)
        rows = []
        for _ in range(self.hp.k if iterations is None else iterations):
            row = self.iterate()
            log.info("iter %d  return %.3f  kl %.4g  beta %.4g  impr %.4f",
                     row["iter"], row["mean_return"], row["kl_d"], row["beta"], row["impr"])
            for sink in sinks:
                sink(row)
            rows.append(row)
        return rows


def train(hp: Hyperparams, agents: AgentBundle, instance_source: InstanceSource, seed: int = 0,
          sinks: Iterable[Callable[[dict], None]] = ()):
    trainer = Trainer(agents, hp, instance_source, seed)
    rows = trainer.train(sinks=sinks)
    return agents, rows


# --------------------------------------------------------------------------
# evaluation


def improve(state: State, policy: Policy, steps: int, rng: np.random.Generator,
            time_budget: Optional[float] = None) -> State:
    """Apply ``steps`` policy moves (or stop at the wall-clock budget); return the best state seen."""
    best = state
    deadline = None if time_budget is None else time.perf_counter() + time_budget
    for _ in range(steps):
        if deadline is not None and time.perf_counter() >= deadline:
            break
        state = step(state, policy(state, rng)).next_state
        if total_cost(state) < total_cost(best):
            best = state
    return best


def evaluate(policy: Policy, instances: Sequence[CvrpInstance], T_eval: int, seed: int = 0,
             matching: str = "exact", time_budget: Optional[float] = None) -> List[dict]:
    rows = []
    for idx, inst in enumerate(instances):
        rng = np.random.default_rng([seed, idx])
        t0 = time.perf_counter()
        start = initial_solution(inst, seed=seed, matching=matching)
        best = improve(start, policy, T_eval, rng, time_budget)
        c0, c1 = total_cost(start), total_cost(best)
        rows.append({
            "instance": inst.name,
            "init_cost": c0,
            "best_cost": c1,
            "impr": (c0 - c1) / c0 if c0 > 0 else 0.0,
            "wall_ms": (time.perf_counter() - t0) * 1e3,
            "state": best,
        })
    return rows


def hyperparams_dict(hp: Hyperparams) -> dict:
    return asdict(hp)
