"""Load a CVRPLIB instance, build the starting solution and compare routing heuristics.

    python demos/instance_and_routing.py [path/to/instance.vrp]
"""

import os
import sys

from vrp_ppo import brute_force_tsp, christofides_cost, held_karp_cost, initial_solution, read_cvrplib
from vrp_ppo.bench import check_solution, solution_from_state

DEFAULT = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "A-n32-k5.vrp")


def main(path):
    inst = read_cvrplib(path)
    print(f"{inst.name}: n={inst.n} customers, m={inst.m} vehicles, capacity {inst.capacities[0, 0]:g}")
    state = initial_solution(inst)
    sol = solution_from_state(state)
    print(f"sweep start: cost {sol.cost:.1f}, checker problems: {check_solution(inst, sol) or 'none'}")
    for v, route in enumerate(sol.routes):
        members = route[1:-1]
        line = f"  vehicle {v}: {len(members)} stops, load {state.loads[0, v]:g}"
        line += f", christofides {christofides_cost(inst.dist, members):.1f}"
        if len(members) <= 10:
            line += f", optimum {brute_force_tsp(inst.dist, members).cost:.1f}"
        elif len(members) <= 14:
            line += f", optimum {held_karp_cost(inst.dist, members):.1f}"
        print(line)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else DEFAULT)
