"""Cluster-first route-second CVRP improvement with a PPO-trained CNN policy."""

from .instance import (CvrpInstance, GeneratorConfig, InstanceError, generate, parse_cvrplib,
                       read_cvrplib, serialize_cvrplib)
from .tsp import brute_force_tsp, christofides, christofides_cost, cluster_costs, held_karp_cost
from .env import (Action, InfeasibleError, State, initial_solution, move_mask, step, total_cost,
                  transition)
from .nets import AgentBundle, NetConfig, encode_state
from .ppo import (Hyperparams, Trainer, agent_policy, evaluate, improve, random_policy, run_rollout,
                  train)

__version__ = "0.1.0"

__all__ = [
    "CvrpInstance", "GeneratorConfig", "InstanceError", "generate", "parse_cvrplib", "read_cvrplib",
    "serialize_cvrplib",
    "brute_force_tsp", "christofides", "christofides_cost", "cluster_costs", "held_karp_cost",
    "Action", "InfeasibleError", "State", "initial_solution", "move_mask", "step", "total_cost",
    "transition",
    "AgentBundle", "NetConfig", "encode_state",
    "Hyperparams", "Trainer", "agent_policy", "evaluate", "improve", "random_policy", "run_rollout",
    "train",
]
