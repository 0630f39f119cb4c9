"""Train the policy for a few minutes on small C1 instances and compare it with random moves.

    python demos/train_small.py [iterations]

Around 0.3 s per iteration on one core; a few hundred iterations already beat random moves.
"""

import sys

import numpy as np

from vrp_ppo import AgentBundle, GeneratorConfig, Hyperparams, NetConfig, Trainer, generate
from vrp_ppo.ppo import agent_policy, evaluate, random_policy

CLASS = dict(cls="C1", n_range=(15, 25), m_range=(2, 3))


def source(rng):
    return generate(GeneratorConfig(**CLASS, seed=int(rng.integers(2**31))))


def main(iterations):
    hp = Hyperparams(T=1, N=16, k=iterations, lr_actor=1e-3, lr_critic=1e-3,
                     allow_noop=False, warmup_steps=20)
    agents = AgentBundle(NetConfig(seed=1))
    trainer = Trainer(agents, hp, source, seed=3)
    trainer.train(sinks=[lambda row: row["iter"] % 25 == 0 and print(
        f"iter {row['iter']:4d}  return {row['mean_return']:7.2f}  beta {row['beta']:.3g}  impr {row['impr']:.4f}")])

    held_out = [generate(GeneratorConfig(**CLASS, seed=10**6 + i)) for i in range(10)]
    for label, policy in (("agent", agent_policy(agents, allow_noop=False)),
                          ("random", random_policy(allow_noop=False))):
        rows = evaluate(policy, held_out, T_eval=50, seed=5)
        print(f"{label:6s} mean improvement over 50 steps: {np.mean([r['impr'] for r in rows]):.4f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200)
