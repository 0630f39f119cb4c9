"""Checkpoint container: a JSON header followed by little-endian float64 payload.

Layout::

    b"VRPPPO01"             8-byte magic
    uint64 (LE)             header length in bytes
    header                  UTF-8 JSON: version, net config, hyper-parameters,
                            beta, seed, iteration, tensor table
    payload                 concatenated float64 (LE) arrays, in table order

Every tensor (network weights and Adam moments) is listed in the table as
``{"name", "shape", "offset"}`` with ``offset`` counted in float64 elements.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from typing import Dict, Optional, Tuple

import numpy as np

from .nets import AgentBundle, NetConfig
from .ppo import Hyperparams, InstanceSource, Trainer

MAGIC = b"VRPPPO01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _atomic_write(path: str, blob: bytes):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack(header: dict, arrays: Dict[str, np.ndarray]) -> bytes:
    table, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        table.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    header = dict(header, tensors=table)
    head = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(chunks)


def _unpack(blob: bytes) -> Tuple[dict, Dict[str, np.ndarray]]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a vrp-ppo checkpoint")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + hlen].decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}")
    payload = np.frombuffer(blob[16 + hlen:], dtype="<f8")
    arrays = {}
    for entry in header["tensors"]:
        size = int(np.prod(entry["shape"], dtype=int))
        start = entry["offset"]
        arrays[entry["name"]] = payload[start:start + size].reshape(entry["shape"]).astype(np.float64)
    return header, arrays


def save(path: str, trainer: Trainer, extra: Optional[dict] = None):
    agents = trainer.agents
    arrays = {name: p.data for name, p in agents.named_parameters()}
    for tag, opt in (("adam_actor", trainer.actor_opt), ("adam_critic", trainer.critic_opt)):
        for i, (m, v) in enumerate(zip(opt.m, opt.v)):
            arrays[f"{tag}.m.{i}"] = m
            arrays[f"{tag}.v.{i}"] = v
    header = {
        "format_version": FORMAT_VERSION,
        "net_config": agents.cfg.to_dict(),
        "hyperparams": vars(trainer.hp).copy(),
        "beta": trainer.beta,
        "iteration": trainer.iteration,
        "rng": {"scheme": "default_rng([seed, iteration, rollout])", "seed": trainer.seed},
        "adam_steps": {"actor": trainer.actor_opt.t, "critic": trainer.critic_opt.t},
        "extra": extra or {},
    }
    _atomic_write(path, _pack(header, arrays))


def load_agents(path: str) -> Tuple[AgentBundle, dict, Dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        header, arrays = _unpack(fh.read())
    agents = AgentBundle(NetConfig(**header["net_config"]))
    for name, p in agents.named_parameters():
        if name not in arrays or arrays[name].shape != p.data.shape:
            raise CheckpointError(f"checkpoint tensor {name} missing or mis-shaped")
        p.data[...] = arrays[name]
    return agents, header, arrays


def load_trainer(path: str, instance_source: InstanceSource,
                 hp: Optional[Hyperparams] = None) -> Trainer:
    """Rebuild a trainer that continues exactly where the saved one stopped."""
    agents, header, arrays = load_agents(path)
    hp = hp or Hyperparams(**header["hyperparams"])
    trainer = Trainer(agents, hp, instance_source, seed=header["rng"]["seed"])
    trainer.beta = header["beta"]
    trainer.iteration = header["iteration"]
    for tag, opt, key in (("adam_actor", trainer.actor_opt, "actor"),
                          ("adam_critic", trainer.critic_opt, "critic")):
        opt.t = header["adam_steps"][key]
        for i in range(len(opt.m)):
            opt.m[i][...] = arrays[f"{tag}.m.{i}"]
            opt.v[i][...] = arrays[f"{tag}.v.{i}"]
    return trainer
