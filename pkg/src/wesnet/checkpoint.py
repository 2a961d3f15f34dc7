"""Self-describing binary checkpoints.

Layout::

    b"WSNCKPT\\0"                     8-byte magic
    uint32 LE                         format version
    uint64 LE                         header length n
    n bytes                           UTF-8 JSON header (sorted keys)
    float64 LE, row-major             every tensor listed in the header, in order
    32 bytes                          SHA-256 of everything above

The header lists each tensor's name and shape, the network config, an
optional experiment snapshot and optional Adam scalars. Nothing
time-dependent is stored, so saving the same state twice gives the same
bytes. A JSON sidecar with the header and checksum sits next to the binary.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import CheckpointError, CheckpointVersionError, CorruptCheckpointError
from .network import AdamState, LayerParams, NetConfig, NetworkParams

MAGIC = b"WSNCKPT\0"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<IQ")
_DIGEST = 32


@dataclass
class Checkpoint:
    net_config: NetConfig
    params: NetworkParams
    adam: Optional[AdamState] = None
    experiment: Optional[dict] = None
    config_hash: Optional[str] = None

    @property
    def keep_fraction(self) -> float:
        return self.net_config.keep_fraction


def _tensor_list(params: NetworkParams, adam: Optional[AdamState]):
    items = list(params.named_tensors())
    if adam is not None:
        items.extend(adam.named_tensors())
    return items


def _header(ckpt: Checkpoint, tensors) -> dict:
    adam = None
    if ckpt.adam is not None:
        a = ckpt.adam
        adam = {"lr": a.lr, "beta1": a.beta1, "beta2": a.beta2, "epsilon": a.epsilon,
                "step": a.step}
    return {
        "format_version": FORMAT_VERSION,
        "net_config": ckpt.net_config.as_dict(),
        "keep_fraction": ckpt.net_config.keep_fraction,
        "experiment": ckpt.experiment,
        "config_hash": ckpt.config_hash,
        "adam": adam,
        "byte_order": "little",
        "dtype": "float64",
        "tensors": [{"name": n, "shape": list(np.shape(t))} for n, t in tensors],
    }


def encode(ckpt: Checkpoint) -> bytes:
    tensors = _tensor_list(ckpt.params, ckpt.adam)
    header = json.dumps(_header(ckpt, tensors), sort_keys=True, separators=(",", ":"),
                        allow_nan=True).encode("utf-8")
    parts = [MAGIC, _PREFIX.pack(FORMAT_VERSION, len(header)), header]
    for _, t in tensors:
        parts.append(np.ascontiguousarray(t, dtype="<f8").tobytes(order="C"))
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_checkpoint(params: NetworkParams, state: Optional[AdamState], cfg: NetConfig, path,
                    experiment: Optional[dict] = None, config_hash: Optional[str] = None) -> Path:
    """Write the binary checkpoint and its JSON sidecar, both atomically."""
    path = Path(path)
    ckpt = Checkpoint(cfg, params, state, experiment, config_hash)
    data = encode(ckpt)
    header = _header(ckpt, _tensor_list(params, state))
    header["sha256"] = data[-_DIGEST:].hex()
    try:
        _atomic_write(path, data)
        _atomic_write(sidecar_path(path),
                      (json.dumps(header, sort_keys=True, indent=2) + "\n").encode("utf-8"))
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def decode(data: bytes, source="<bytes>") -> Checkpoint:
    if len(data) < len(MAGIC) + _PREFIX.size + _DIGEST:
        raise CorruptCheckpointError(f"{source}: file too short ({len(data)} bytes)")
    if data[:len(MAGIC)] != MAGIC:
        raise CorruptCheckpointError(f"{source}: not a checkpoint (bad magic)")
    version, hlen = _PREFIX.unpack_from(data, len(MAGIC))
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpointError(f"{source}: checksum mismatch (truncated or modified)")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{source}: format version {version} is not supported (expected {FORMAT_VERSION})")
    start = len(MAGIC) + _PREFIX.size
    try:
        header = json.loads(body[start:start + hlen].decode("utf-8"))
        cfg = NetConfig(**header["net_config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"{source}: unreadable header: {exc}") from exc
    offset = start + hlen
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(body):
            raise CorruptCheckpointError(f"{source}: tensor {entry['name']} runs past the end")
        arrays[entry["name"]] = np.frombuffer(body, dtype="<f8", count=nbytes // 8,
                                              offset=offset).astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(body):
        raise CorruptCheckpointError(f"{source}: {len(body) - offset} trailing bytes")

    layers = []
    try:
        for r in range(cfg.layers):
            fields = {n: arrays[f"layer{r:03d}.{n}"] for n in LayerParams.TENSORS}
            fields["beta_in"] = arrays.get(f"layer{r:03d}.beta_in")
            layers.append(LayerParams(**fields))
    except KeyError as exc:
        raise CorruptCheckpointError(f"{source}: missing tensor {exc}") from exc
    adam = None
    if header.get("adam") is not None:
        adam = AdamState(**header["adam"])
        for name, arr in arrays.items():
            if name.startswith("adam.m."):
                adam.m[name[len("adam.m."):]] = arr
            elif name.startswith("adam.v."):
                adam.v[name[len("adam.v."):]] = arr
    return Checkpoint(cfg, NetworkParams(layers), adam, header.get("experiment"),
                      header.get("config_hash"))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(data, source=str(path))
