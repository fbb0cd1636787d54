"""Binary checkpoint container.

Layout: 8-byte magic, 8-byte little-endian header length, UTF-8 JSON header,
then raw little-endian float64 tensors at the offsets listed in the header.
The format carries no timestamps, so identical state gives identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from recordgraph.nn.gat import GatConfig, GatModel
from recordgraph.nn.optim import AdamState
from recordgraph.objective import LossConfig

MAGIC = b"RGCKPT01"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 150
    base_lr: float = 1e-3
    dropout: float = 0.2
    heads: int = 4
    hidden_dim: int = 768
    leaky_slope: float = 0.2
    mode: str = "self_supervised"
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.mode not in ("self_supervised", "supervised"):
            raise ValueError(f"unknown training mode {self.mode!r}")
        if self.hidden_dim % self.heads:
            raise ValueError("hidden_dim must be divisible by heads")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        loss = LossConfig(**d.pop("loss", {}))
        return cls(loss=loss, **d)


@dataclass
class Checkpoint:
    model: GatModel
    adam: AdamState
    epoch: int  # completed epochs
    rng_state: dict
    config: TrainConfig
    config_hash: str
    trace: list[dict] = field(default_factory=list)


def model_hash(model: GatModel) -> str:
    h = hashlib.sha256()
    for name in sorted(model.params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    tensors: list[tuple[str, np.ndarray]] = []
    for name in sorted(ckpt.model.params):
        tensors.append(("param/" + name, ckpt.model.params[name]))
    for name in sorted(ckpt.adam.m):
        tensors.append(("adam_m/" + name, ckpt.adam.m[name]))
        tensors.append(("adam_v/" + name, ckpt.adam.v[name]))
    index, offset = [], 0
    for name, arr in tensors:
        nbytes = arr.size * 8
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = {
        "version": CHECKPOINT_VERSION,
        "config": ckpt.config.to_dict(),
        "config_hash": ckpt.config_hash,
        "gat": asdict(ckpt.model.config),
        "epoch": ckpt.epoch,
        "adam": {"step": ckpt.adam.step, "beta1": ckpt.adam.beta1, "beta2": ckpt.adam.beta2, "eps": ckpt.adam.eps},
        "rng_state": ckpt.rng_state,
        "trace": ckpt.trace,
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
    base = 16 + hlen
    arrays = {}
    for t in header["tensors"]:
        start = base + t["offset"]
        if start + t["nbytes"] > len(raw):
            raise CheckpointError(f"{path}: truncated at tensor {t['name']}")
        buf = raw[start : start + t["nbytes"]]
        arrays[t["name"]] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(t["shape"])
    params = {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("param/")}
    adam = AdamState(
        m={k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("adam_m/")},
        v={k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("adam_v/")},
        **header["adam"],
    )
    model = GatModel(GatConfig(**header["gat"]), params)
    return Checkpoint(
        model,
        adam,
        header["epoch"],
        header["rng_state"],
        TrainConfig.from_dict(header["config"]),
        header["config_hash"],
        header["trace"],
    )
