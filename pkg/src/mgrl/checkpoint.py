"""Binary checkpoint files for trained agents.

Layout: 4 magic bytes, little-endian u32 format version, little-endian u64
header length, UTF-8 JSON header, then raw little-endian float64 blocks for
every parameter array in the order declared by the header.  The JSON keys
are sorted so identical checkpoints are byte-identical.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .nets import DenseLayer, DenseNet

MAGIC = b"MGRL"
VERSION = 1


class VersionMismatch(RuntimeError):
    pass


class CorruptFile(RuntimeError):
    pass


def _net_spec(net):
    return [
        {
            "out": layer.weights.shape[0],
            "in": layer.weights.shape[1],
            "activation": layer.activation,
            "dropout": layer.dropout,
        }
        for layer in net.layers
    ]


def _net_blocks(net):
    out = []
    for layer in net.layers:
        out.append(layer.weights)
        out.append(layer.bias)
    return out


def _net_from_spec(spec):
    layers = [
        DenseLayer(
            np.zeros((entry["out"], entry["in"])),
            np.zeros(entry["out"]),
            entry["activation"],
            entry["dropout"],
        )
        for entry in spec
    ]
    return DenseNet(layers)


@dataclass
class Checkpoint:
    version: int
    order: int
    eq_kind: str
    actor: DenseNet
    critic: DenseNet
    log_std: np.ndarray
    config: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)


def save_checkpoint(ck: Checkpoint, path):
    header = {
        "order": ck.order,
        "eq_kind": ck.eq_kind,
        "actor": _net_spec(ck.actor),
        "critic": _net_spec(ck.critic),
        "log_std_len": int(len(ck.log_std)),
        "config": ck.config,
        "counters": ck.counters,
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(np.asarray(ck.log_std, dtype="<f8").tobytes())
        for block in _net_blocks(ck.actor) + _net_blocks(ck.critic):
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
    return path


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CorruptFile(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CorruptFile("bad magic bytes")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
        (hlen,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        try:
            header = json.loads(_read_exact(fh, hlen, "header"))
        except json.JSONDecodeError as exc:
            raise CorruptFile(f"unreadable header: {exc}") from exc

        def read_array(shape, what):
            n = int(np.prod(shape))
            data = _read_exact(fh, 8 * n, what)
            return np.frombuffer(data, dtype="<f8").reshape(shape).copy()

        log_std = read_array((header["log_std_len"],), "log_std")
        actor = _net_from_spec(header["actor"])
        critic = _net_from_spec(header["critic"])
        for net, name in ((actor, "actor"), (critic, "critic")):
            for i, layer in enumerate(net.layers):
                layer.weights[...] = read_array(layer.weights.shape, f"{name} W{i}")
                layer.bias[...] = read_array(layer.bias.shape, f"{name} b{i}")
        if fh.read(1):
            raise CorruptFile("trailing bytes after parameter blocks")
    return Checkpoint(
        version=version,
        order=header["order"],
        eq_kind=header["eq_kind"],
        actor=actor,
        critic=critic,
        log_std=log_std,
        config=header.get("config", {}),
        counters=header.get("counters", {}),
    )


def checkpoint_from_trainer(trainer, eq_kind, order, env_config=None):
    config = dict(vars(trainer.config)) if not isinstance(trainer.config, dict) else trainer.config
    config = {k: v for k, v in config.items()}
    if env_config is not None:
        config["env"] = env_config
    return Checkpoint(
        version=VERSION,
        order=order,
        eq_kind=eq_kind,
        actor=trainer.policy.net,
        critic=trainer.critic,
        log_std=trainer.policy.log_std,
        config=config,
        counters={
            "episodes": trainer.episodes_done,
            "total_steps": trainer.total_steps,
            "final_std": trainer.current_std(),
        },
    )
