"""``vrp-ppo`` command line: train, eval, solve, generate, inspect."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from . import bench, checkpoint
from .config import ConfigError, ExperimentConfig, load_config
from .env import initial_solution, total_cost
from .instance import CvrpInstance, InstanceError, generate, read_cvrplib, serialize_cvrplib
from .nets import AgentBundle
from .ppo import Trainer, agent_policy, evaluate, improve

log = logging.getLogger("vrp_ppo")

CHECKPOINT_NAME = "checkpoint.bin"
METRICS_NAME = "metrics.csv"
EVAL_NAME = "eval.csv"


class CommandError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# instance sources


def _dataset_split(cfg: ExperimentConfig):
    names = bench.list_dataset(cfg.dataset)
    if not names:
        raise CommandError(f"no .vrp files in {cfg.dataset}")
    train, test = bench.split_dataset(names, cfg.split_seed, cfg.test_fraction)
    return train, test


def _record_split(cfg: ExperimentConfig, train, test):
    path = os.path.join(cfg.out, "split.json")
    blob = {"seed": cfg.split_seed, "test_fraction": cfg.test_fraction, "train": train, "test": test}
    bench.write_text(path, json.dumps(blob, indent=2) + "\n")


def training_source(cfg: ExperimentConfig):
    if cfg.instance_class == "cvrplib":
        train, test = _dataset_split(cfg)
        _record_split(cfg, train, test)
        pool = [read_cvrplib(os.path.join(cfg.dataset, nm)) for nm in train]
        return lambda rng: pool[int(rng.integers(len(pool)))]
    return lambda rng: generate(cfg.generator(int(rng.integers(2**31))))


def test_instances(cfg: ExperimentConfig) -> List[CvrpInstance]:
    if cfg.instance_class == "cvrplib":
        train, test = _dataset_split(cfg)
        _record_split(cfg, train, test)
        return [read_cvrplib(os.path.join(cfg.dataset, nm)) for nm in test]
    return [generate(cfg.generator(cfg.eval_seed + i)) for i in range(cfg.eval_instances)]


# --------------------------------------------------------------------------
# commands


def cmd_train(cfg: ExperimentConfig) -> int:
    source = training_source(cfg)
    ckpt_out = os.path.join(cfg.out, CHECKPOINT_NAME)
    if cfg.checkpoint and os.path.exists(cfg.checkpoint):
        trainer = checkpoint.load_trainer(cfg.checkpoint, source, cfg.hyperparams())
        print(f"resuming from {cfg.checkpoint} at iteration {trainer.iteration}")
    elif cfg.checkpoint:
        raise CommandError(f"checkpoint {cfg.checkpoint} does not exist")
    else:
        trainer = Trainer(AgentBundle(cfg.net_config()), cfg.hyperparams(), source, seed=cfg.seed)
    writer = bench.MetricsWriter(os.path.join(cfg.out, METRICS_NAME))

    def report(row):
        print(f"iter {row['iter']}  return {row['mean_return']:.3f}  kl {row['kl_d']:.3g}  "
              f"beta {row['beta']:.3g}  impr {row['impr']:.4f}  {row['wall_ms']:.0f} ms", flush=True)

    def periodic(row):
        if cfg.checkpoint_every > 0 and row["iter"] % cfg.checkpoint_every == 0:
            checkpoint.save(ckpt_out, trainer)

    trainer.train(cfg.k, sinks=[writer, report, periodic])
    checkpoint.save(ckpt_out, trainer)
    print(f"checkpoint written to {ckpt_out}")
    return 0


def _load_policy(cfg: ExperimentConfig, required: bool):
    if cfg.checkpoint:
        if not os.path.exists(cfg.checkpoint):
            raise CommandError(f"checkpoint {cfg.checkpoint} does not exist")
        agents, header, _ = checkpoint.load_agents(cfg.checkpoint)
        allow_noop = header["hyperparams"].get("allow_noop", cfg.allow_noop)
    elif required:
        raise CommandError("a checkpoint is required")
    else:
        agents, allow_noop = AgentBundle(cfg.net_config()), cfg.allow_noop
    return agent_policy(agents, greedy=cfg.greedy_eval, allow_noop=allow_noop)


def cmd_eval(cfg: ExperimentConfig) -> int:
    policy = _load_policy(cfg, required=True)
    instances = test_instances(cfg)
    rows = evaluate(policy, instances, cfg.T_eval, seed=cfg.seed, matching=cfg.matching,
                    time_budget=cfg.eval_time_budget_seconds)
    writer = bench.MetricsWriter(os.path.join(cfg.out, EVAL_NAME))
    for row in rows:
        writer(dict(row, iter=row["instance"]))
        print(f"{row['instance']}  init {row['init_cost']:.2f}  best {row['best_cost']:.2f}  "
              f"impr {row['impr']:.4f}")
    print(f"mean improvement {bench.summarize(rows)['mean_impr']:.4f} over {len(rows)} instances")
    return 0


def cmd_solve(cfg: ExperimentConfig, instance_path: Optional[str]) -> int:
    if not instance_path:
        raise CommandError("solve needs an instance path")
    inst = read_cvrplib(instance_path)
    policy = _load_policy(cfg, required=False)
    start = initial_solution(inst, seed=cfg.seed, matching=cfg.matching)
    rng = np.random.default_rng([cfg.seed, 0])
    best = improve(start, policy, cfg.T_eval, rng, cfg.eval_time_budget_seconds)
    sol = bench.solution_from_state(best)
    problems = bench.check_solution(inst, sol)
    if problems:
        raise CommandError("solution failed the feasibility check: " + "; ".join(problems))
    path = os.path.join(cfg.out, f"{inst.name}.sol")
    bench.write_text(path, bench.format_solution(sol))
    print(f"initial cost {total_cost(start):.4f}  final cost {sol.cost:.4f}  -> {path}")
    return 0


def cmd_generate(cfg: ExperimentConfig) -> int:
    if cfg.instance_class == "cvrplib":
        raise CommandError("generate needs a synthetic class (C1, C2 or C3)")
    entries = []
    for i in range(cfg.count):
        gc = cfg.generator(cfg.seed + i)
        inst = generate(gc)
        fname = f"{inst.name}.vrp"
        bench.write_text(os.path.join(cfg.out, fname), serialize_cvrplib(inst))
        entry = {"file": fname, "seed": gc.seed, "class": gc.cls, "n": inst.n, "m": inst.m}
        if gc.cls == "C2":
            entry["cluster_centers"] = [list(c) for c in gc.cluster_centers]
            entry["cluster_radius"] = gc.cluster_radius
        entries.append(entry)
    manifest = {"instance_class": cfg.instance_class, "base_seed": cfg.seed,
                "n_range": [cfg.n_min, cfg.n_max], "m_range": [cfg.m_min, cfg.m_max],
                "capacity_fill_ratio": cfg.capacity_fill_ratio, "instances": entries}
    bench.write_text(os.path.join(cfg.out, "manifest.json"), json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(entries)} instances to {cfg.out}")
    return 0


def inspect_report(inst: CvrpInstance, matching: str = "exact") -> List[str]:
    lines = [f"name: {inst.name}", f"n: {inst.n}", f"m: {inst.m}", f"l: {inst.l}"]
    for f in range(inst.l):
        lines.append(f"feature {f}: total demand {inst.total_demand()[f]:g}, "
                     f"total capacity {inst.total_capacity()[f]:g}")
    bad = list(inst.infeasible_features())
    if bad:
        lines.append("verdict: infeasible (feature " + ", ".join(str(f) for f in bad)
                     + " demand exceeds capacity)")
        return lines
    try:
        state = initial_solution(inst, matching=matching)
    except Exception as exc:  # packing can still fail on tight instances
        lines.append(f"verdict: infeasible (no initial assignment: {exc})")
        return lines
    lines.append("verdict: feasible")
    lines.append(f"initial cost: {total_cost(state):.4f}")
    return lines


def cmd_inspect(cfg: ExperimentConfig, instance_path: Optional[str]) -> int:
    if not instance_path:
        raise CommandError("inspect needs an instance path")
    inst = read_cvrplib(instance_path, validate=False)
    print("\n".join(inspect_report(inst, cfg.matching)))
    return 0


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vrp-ppo", description="Assign-then-route CVRP improvement with PPO.")
    p.add_argument("mode", choices=["train", "eval", "solve", "generate", "inspect"])
    p.add_argument("instance", nargs="?", help="instance file (solve, inspect)")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--budget-seconds", type=float, dest="eval_time_budget_seconds")
    p.add_argument("--matching", choices=["exact", "greedy"])
    p.add_argument("--greedy-eval", action="store_true", default=None)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        overrides[key.strip()] = value
    for key in ("seed", "checkpoint", "out", "eval_time_budget_seconds", "matching", "greedy_eval"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    overrides["mode"] = args.mode
    try:
        cfg = load_config(args.config, **overrides)
        cfg.validate()
        if args.mode == "train":
            return cmd_train(cfg)
        if args.mode == "eval":
            return cmd_eval(cfg)
        if args.mode == "solve":
            return cmd_solve(cfg, args.instance)
        if args.mode == "generate":
            return cmd_generate(cfg)
        return cmd_inspect(cfg, args.instance)
    except (ConfigError, InstanceError, CommandError, checkpoint.CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
