"""SLPW checkpoint serialization for trained networks.

SLPW file layout (little-endian):

====== ======= ================================================
offset size    field
====== ======= ================================================
0      4       magic ``b"SLPW"``
4      4       format version (u32, currently 1)
8      4       spec JSON length (u32)
12     ...     NetworkSpec as UTF-8 JSON
...    4       number of parameter tensors (u32)
...    ...     parameter tensors in declaration order
...    4       number of statistic tensors (u32)
...    ...     batch-norm running statistics in declaration order
====== ======= ================================================

Each tensor is framed as ``ndim`` (u32), ``ndim`` dimension sizes (u64
each), then the values as float64 little-endian.  The optimizer state for
resumable training lives in a sidecar file (magic ``b"SLPA"``) holding the
Adam step counter, the epoch count, the loss trace so far, and the moment
tensors.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .model import ConvSpec, EPNN, NetworkSpec
from .optim import AdamState

__all__ = [
    "CheckpointFormatError",
    "save_checkpoint",
    "load_checkpoint",
    "save_train_state",
    "load_train_state",
]

_MAGIC = b"SLPW"
_STATE_MAGIC = b"SLPA"
_VERSION = 1


class CheckpointFormatError(ValueError):
    """Raised when an SLPW/SLPA file is malformed; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


def _spec_to_json(spec: NetworkSpec) -> bytes:
    return json.dumps(dataclasses.asdict(spec), sort_keys=True).encode("utf-8")


def _spec_from_json(payload: bytes, offset: int) -> NetworkSpec:
    try:
        raw = json.loads(payload.decode("utf-8"))
        raw["conv_layers"] = tuple(
            ConvSpec(
                filters=c["filters"],
                kernel=tuple(c["kernel"]),
                stride=tuple(c["stride"]),
                padding=c.get("padding", "same"),
            )
            for c in raw["conv_layers"]
        )
        raw["branch_widths"] = tuple(raw["branch_widths"])
        raw["residual_links"] = tuple(tuple(l) for l in raw["residual_links"])
        spec = NetworkSpec(**raw)
        spec.validate()
        return spec
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"invalid spec payload: {exc}", offset) from exc


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(
                f"truncated file: wanted {n} bytes, {len(self.data) - self.pos} left",
                self.pos,
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def tensor(self) -> np.ndarray:
        ndim = self.u32()
        if ndim > 8:
            raise CheckpointFormatError(f"implausible tensor rank {ndim}", self.pos - 4)
        shape = tuple(self.u64() for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def _write_tensor(f, arr: np.ndarray):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    f.write(struct.pack("<I", arr.ndim))
    for dim in arr.shape:
        f.write(struct.pack("<Q", dim))
    f.write(arr.tobytes())


def save_checkpoint(path, model: EPNN):
    """Write the model's spec, parameters, and BN statistics to an SLPW file."""
    spec_json = _spec_to_json(model.spec)
    params = model.parameters()
    stats = model.stats()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<I", len(spec_json)))
        f.write(spec_json)
        f.write(struct.pack("<I", len(params)))
        for p in params:
            _write_tensor(f, p)
        f.write(struct.pack("<I", len(stats)))
        for s in stats:
            _write_tensor(f, s)


def load_checkpoint(path) -> EPNN:
    """Rebuild a model from an SLPW file; shapes are validated against the spec."""
    with open(path, "rb") as f:
        reader = _Reader(f.read())
    if reader.take(4) != _MAGIC:
        raise CheckpointFormatError("bad magic, not an SLPW file", 0)
    version = reader.u32()
    if version != _VERSION:
        raise CheckpointFormatError(f"unsupported version {version}", 4)
    spec = _spec_from_json(reader.take(reader.u32()), 12)
    model = EPNN(spec, init_seed=0)
    n_params = reader.u32()
    expected = len(model.parameters())
    if n_params != expected:
        raise CheckpointFormatError(
            f"spec implies {expected} parameter tensors, file has {n_params}",
            reader.pos - 4,
        )
    tensors = [reader.tensor() for _ in range(n_params)]
    try:
        model.load_parameters(tensors)
    except ValueError as exc:
        raise CheckpointFormatError(str(exc), reader.pos) from exc
    n_stats = reader.u32()
    if n_stats != len(model.stats()):
        raise CheckpointFormatError(
            f"spec implies {len(model.stats())} statistic tensors, file has {n_stats}",
            reader.pos - 4,
        )
    model.load_stats([reader.tensor() for _ in range(n_stats)])
    if reader.pos != len(reader.data):
        raise CheckpointFormatError(
            f"{len(reader.data) - reader.pos} trailing bytes", reader.pos
        )
    return model


def save_train_state(path, adam_state: AdamState, epoch: int, loss_trace):
    """Write the Adam moments and run progress to an SLPA sidecar file."""
    with open(path, "wb") as f:
        f.write(_STATE_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<Q", adam_state.step))
        f.write(struct.pack("<I", epoch))
        f.write(struct.pack("<I", len(loss_trace)))
        for value in loss_trace:
            f.write(struct.pack("<d", value))
        f.write(struct.pack("<I", len(adam_state.m)))
        for tensor in adam_state.m:
            _write_tensor(f, tensor)
        for tensor in adam_state.v:
            _write_tensor(f, tensor)


def load_train_state(path) -> tuple[AdamState, int, list[float]]:
    """Read an SLPA sidecar; returns (adam_state, epochs_completed, loss_trace)."""
    with open(path, "rb") as f:
        reader = _Reader(f.read())
    if reader.take(4) != _STATE_MAGIC:
        raise CheckpointFormatError("bad magic, not an SLPA file", 0)
    version = reader.u32()
    if version != _VERSION:
        raise CheckpointFormatError(f"unsupported version {version}", 4)
    step = reader.u64()
    epoch = reader.u32()
    trace = [reader.f64() for _ in range(reader.u32())]
    n = reader.u32()
    m = [reader.tensor() for _ in range(n)]
    v = [reader.tensor() for _ in range(n)]
    if reader.pos != len(reader.data):
        raise CheckpointFormatError(
            f"{len(reader.data) - reader.pos} trailing bytes", reader.pos
        )
    return AdamState(step=step, m=m, v=v), epoch, trace
