"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"NAMLCKPT" | u32 format version | u64 header length | header JSON | tensor blobs

The header holds the training config, the vocabulary digest, the category
index, the init scheme, a SHA-256 of the blob section, and one entry per
tensor (name, dtype, shape, offset, nbytes). Blobs are raw little-endian
arrays in header order. Serialisation is deterministic, so
save -> load -> save reproduces the same bytes.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .errors import CheckpointError, ConfigError, IncompatibleCheckpointError
from .tensor import Tensor
from .text import CategoryIndex

MAGIC = b"NAMLCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    config: TrainConfig
    params: dict
    vocab_hash: str
    categories: CategoryIndex
    meta: dict = field(default_factory=dict)


def to_bytes(params, config, vocab_hash, categories, meta=None):
    entries, blobs, offset = [], [], 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name].data if isinstance(params[name], Tensor) else params[name])
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = arr.tobytes(order="C")
        entries.append(
            {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    body = b"".join(blobs)
    header = {
        "config": config.to_dict(),
        "vocab_hash": vocab_hash,
        "categories": categories.to_dict(),
        "meta": meta or {},
        "blob_sha256": hashlib.sha256(body).hexdigest(),
        "tensors": entries,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)) + hbytes + body


def save_checkpoint(path, params, config, vocab_hash, categories, meta=None):
    data = to_bytes(params, config, vocab_hash, categories, meta)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def from_bytes(data, expected_vocab_hash=None, expected_config=None):
    if len(data) < _PREFIX.size:
        raise CheckpointError("checkpoint truncated: missing prefix")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise CheckpointError("checkpoint truncated inside header")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    body = memoryview(data)[start + hlen:]
    expected = sum(e["nbytes"] for e in header["tensors"])
    if len(body) != expected:
        raise CheckpointError(f"checkpoint truncated: {len(body)} of {expected} blob bytes")
    if hashlib.sha256(body).hexdigest() != header["blob_sha256"]:
        raise CheckpointError("checkpoint blob checksum mismatch")

    if expected_vocab_hash is not None and header["vocab_hash"] != expected_vocab_hash:
        raise IncompatibleCheckpointError("checkpoint was trained with a different vocabulary")
    try:
        config = TrainConfig.from_dict(header["config"])
    except ConfigError as exc:
        raise CheckpointError(f"checkpoint config invalid: {exc}") from None
    if expected_config is not None:
        diff = sorted(k for k, v in expected_config.to_dict().items() if header["config"].get(k) != v)
        if diff:
            raise IncompatibleCheckpointError(f"checkpoint config differs in {diff}")

    params = {}
    for e in header["tensors"]:
        arr = np.frombuffer(body, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=e["offset"]).reshape(e["shape"])
        params[e["name"]] = Tensor(arr.astype(arr.dtype.newbyteorder("="), copy=True), requires_grad=True,
                                   name=e["name"])
    return Checkpoint(config, params, header["vocab_hash"], CategoryIndex.from_dict(header["categories"]),
                      header.get("meta", {}))


def load_checkpoint(path, expected_vocab_hash=None, expected_config=None):
    """Read a checkpoint; raises CheckpointError on damage and
    IncompatibleCheckpointError on vocabulary/config mismatch."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    return from_bytes(data, expected_vocab_hash, expected_config)
