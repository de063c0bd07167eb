"""Versioned flat binary checkpoints with a JSON sidecar."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .agents import AgentConfig, make_agent

MAGIC = b"SFS1"


class CheckpointVersionError(ValueError):
    pass


def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def save_checkpoint(path, agent, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nets = agent.networks()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(nets)))
        for name, net in nets.items():
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<I", len(net.sizes)))
            fh.write(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
            for p in net.params():
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    side = {
        "format": MAGIC.decode(),
        "algorithm": agent.name,
        "obs_dim": agent.obs_dim,
        "act_dim": agent.act_dim,
        "hidden": agent.cfg.hidden,
        "updates": agent.updates,
        "extra": agent.extra_state(),
    }
    side.update(meta or {})
    _sidecar(path).write_text(json.dumps(side, indent=2, sort_keys=True))
    return path


def read_weights(path) -> dict:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointVersionError(f"unsupported checkpoint format {data[:4]!r}; expected {MAGIC!r}")
    off = 4
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    out = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + ln].decode()
        off += ln
        (nl,) = struct.unpack_from("<I", data, off)
        off += 4
        sizes = list(struct.unpack_from(f"<{nl}I", data, off))
        off += 4 * nl
        params = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            for shape in ((a, b), (b,)):
                cnt = int(np.prod(shape))
                params.append(np.frombuffer(data, dtype="<f8", count=cnt, offset=off).reshape(shape).copy())
                off += 8 * cnt
        out[name] = (sizes, params)
    return out


def load_checkpoint(path):
    """Rebuild the agent stored at ``path``; returns ``(agent, sidecar metadata)``."""
    path = Path(path)
    side = json.loads(_sidecar(path).read_text()) if _sidecar(path).exists() else {}
    if side.get("format", MAGIC.decode()) != MAGIC.decode():
        raise CheckpointVersionError(f"unsupported checkpoint format {side.get('format')!r}")
    weights = read_weights(path)
    algo = side.get("algorithm", "SAC")
    sizes = weights["actor"][0]
    agent = make_agent(algo, sizes[0], side.get("act_dim", sizes[-1] if algo == "TD3" else sizes[-1] // 2),
                       AgentConfig(hidden=side.get("hidden", sizes[1])))
    for name, net in agent.networks().items():
        if name not in weights:
            raise CheckpointVersionError(f"checkpoint lacks network {name!r}")
        if weights[name][0] != net.sizes:
            raise CheckpointVersionError(f"network {name!r} has sizes {weights[name][0]}, expected {net.sizes}")
        net.set_params(weights[name][1])
    agent.load_extra_state(side.get("extra", {}))
    agent.updates = side.get("updates", 0)
    return agent, side
