"""Self-describing model checkpoints.

Layout::

    b"ECGCKPT\\0"                magic, 8 bytes
    uint64 little-endian         length of the JSON header in bytes
    JSON header (utf-8)          format_version, model_kind, architecture,
                                 blocks [{name, shape}], step, seed, ...
    float64 little-endian blocks one per header entry, in header order

Parameters come first in declaration order, then batch-norm running
statistics, then (optionally) Adam moment estimates.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .models import DiscriminatorModel, GeneratorModel
from .nn import AdamState

MAGIC = b"ECGCKPT\0"
FORMAT_VERSION = 1
_MODELS = {"generator": GeneratorModel, "discriminator": DiscriminatorModel}


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class KindMismatchError(CheckpointError):
    pass


class ArchitectureMismatchError(CheckpointError):
    pass


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def _blocks(model, optimizer: AdamState | None):
    blocks = [(f"param.{k}", p.data) for k, p in model.parameters().items()]
    blocks += [(f"buffer.{k}", b) for k, b in model.buffers().items()]
    if optimizer is not None:
        for k in model.parameters():
            if k in optimizer.m:
                blocks.append((f"adam.m.{k}", optimizer.m[k]))
                blocks.append((f"adam.v.{k}", optimizer.v[k]))
    return blocks


def encode_checkpoint(model, step: int = 0, optimizer: AdamState | None = None,
                      extra: dict | None = None, config: dict | None = None) -> bytes:
    blocks = _blocks(model, optimizer)
    header = {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "architecture": model.config,
        "seed": model.seed,
        "step": int(step),
        "config_hash": config_hash(config or {}),
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
        "extra": extra or {},
    }
    if optimizer is not None:
        header["adam"] = {
            "t": optimizer.t, "alpha": optimizer.alpha, "beta1": optimizer.beta1,
            "beta2": optimizer.beta2, "epsilon": optimizer.epsilon,
        }
    head = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in blocks)
    return MAGIC + struct.pack("<Q", len(head)) + head + body


def save_checkpoint(model, path, step: int = 0, optimizer: AdamState | None = None,
                    extra: dict | None = None, config: dict | None = None) -> None:
    data = encode_checkpoint(model, step, optimizer, extra, config)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


class Checkpoint:
    """A decoded checkpoint: the rebuilt model plus its bookkeeping."""

    def __init__(self, model, header: dict, optimizer: AdamState | None):
        self.model = model
        self.header = header
        self.optimizer = optimizer

    @property
    def step(self) -> int:
        return self.header["step"]

    @property
    def extra(self) -> dict:
        return self.header.get("extra", {})


def decode_checkpoint(data: bytes, expect_kind: str | None = None) -> Checkpoint:
    if len(data) < 16 or data[:8] != MAGIC:
        raise CorruptCheckpointError("corrupt checkpoint: bad magic")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if 16 + hlen > len(data):
        raise CorruptCheckpointError("corrupt checkpoint: truncated header")
    try:
        header = json.loads(data[16 : 16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"corrupt checkpoint: unreadable header ({exc})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint format version {header.get('format_version')} unsupported (expected {FORMAT_VERSION})"
        )
    kind = header.get("model_kind")
    if kind not in _MODELS:
        raise CorruptCheckpointError(f"corrupt checkpoint: unknown model kind {kind!r}")
    if expect_kind is not None and kind != expect_kind:
        raise KindMismatchError(f"checkpoint holds a {kind}, expected a {expect_kind}")

    sizes = [int(np.prod(b["shape"])) for b in header["blocks"]]
    if 16 + hlen + 8 * sum(sizes) != len(data):
        raise CorruptCheckpointError("corrupt checkpoint: payload size does not match header")
    arrays, offset = {}, 16 + hlen
    for b, n in zip(header["blocks"], sizes):
        arrays[b["name"]] = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(b["shape"]).astype(np.float64)
        offset += 8 * n

    model = _MODELS[kind](seed=header.get("seed", 0), **header["architecture"])
    params, buffers = model.parameters(), model.buffers()
    expected = [f"param.{k}" for k in params] + [f"buffer.{k}" for k in buffers]
    present = [n for n in arrays if not n.startswith("adam.")]
    if present != expected:
        raise ArchitectureMismatchError("checkpoint blocks do not match the declared architecture")
    for k, p in params.items():
        a = arrays[f"param.{k}"]
        if a.shape != p.shape:
            raise ArchitectureMismatchError(f"{k}: checkpoint shape {a.shape} != architecture {p.shape}")
        p.data = a.copy()
    for k, buf in buffers.items():
        a = arrays[f"buffer.{k}"]
        if a.shape != buf.shape:
            raise ArchitectureMismatchError(f"{k}: checkpoint shape {a.shape} != architecture {buf.shape}")
        buf[...] = a

    optimizer = None
    if "adam" in header:
        a = header["adam"]
        optimizer = AdamState(a["alpha"], a["beta1"], a["beta2"], a["epsilon"], a["t"])
        for k in params:
            if f"adam.m.{k}" in arrays:
                optimizer.m[k] = arrays[f"adam.m.{k}"].copy()
                optimizer.v[k] = arrays[f"adam.v.{k}"].copy()
    return Checkpoint(model, header, optimizer)


def read_checkpoint(path, expect_kind: str | None = None) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes(), expect_kind)


def load_checkpoint(path, expect_kind: str | None = None):
    """Load just the model from ``path``."""
    return read_checkpoint(path, expect_kind).model
