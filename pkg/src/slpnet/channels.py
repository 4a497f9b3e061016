"""Channel realization sampling and the SLPD dataset container format.

Random draws use numpy's Philox counter-based generator with one substream
per channel matrix (key ``seed * 2**64 + matrix_index``), so generation can
be parallelized or chunked without changing a single output byte.

SLPD file layout (little-endian):

====== ======= ==========================================
offset size    field
====== ======= ==========================================
0      4       magic ``b"SLPD"``
4      4       format version (u32, currently 1)
8      4       K, number of users (u32)
12     4      N_t, number of BS antennas (u32)
16     8      count, number of matrices (u64)
24     8      seed used at generation time (u64)
32     ...    count matrices, row-major, each entry as
              float64 (re) then float64 (im)
====== ======= ==========================================
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "sample_rayleigh",
    "sample_rician",
    "sample_awgn",
    "save_dataset",
    "load_dataset",
]

_MAGIC = b"SLPD"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIQQ")


class DatasetFormatError(ValueError):
    """Raised when an SLPD file is malformed; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


@dataclass
class Dataset:
    """An ordered collection of channel matrices sharing (K, N_t)."""

    channels: np.ndarray  # (count, K, N_t) complex128
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.complex128)
        if self.channels.ndim != 3:
            raise ValueError(f"channels must be (count, K, N_t), got {self.channels.shape}")

    @property
    def count(self) -> int:
        return self.channels.shape[0]

    @property
    def users(self) -> int:
        return self.channels.shape[1]

    @property
    def antennas(self) -> int:
        return self.channels.shape[2]


def _matrix_rng(seed: int, index: int) -> np.random.Generator:
    # Philox key = seed * 2**64 + index: one independent substream per matrix.
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + index))


def _draw_standard_matrices(K: int, n_t: int, count: int, seed: int) -> np.ndarray:
    """i.i.d. CN(0, 1) entries, one Philox substream per matrix."""
    out = np.empty((count, K, n_t), dtype=np.complex128)
    for i in range(count):
        g = _matrix_rng(seed, i)
        re = g.standard_normal((K, n_t))
        im = g.standard_normal((K, n_t))
        out[i] = (re + 1j * im) / np.sqrt(2.0)
    return out


def _check_dims(K: int, n_t: int, count: int):
    if K < 1 or n_t < 1 or count < 1:
        raise ValueError(f"K, N_t and count must all be >= 1, got {(K, n_t, count)}")


def sample_rayleigh(K: int, n_t: int, count: int, seed: int) -> Dataset:
    """Rayleigh fading: every entry i.i.d. CN(0, 1)."""
    _check_dims(K, n_t, count)
    channels = _draw_standard_matrices(K, n_t, count, seed)
    return Dataset(channels, seed=int(seed), meta={"model": "rayleigh"})


def sample_rician(K: int, n_t: int, count: int, k_factor: float, seed: int) -> Dataset:
    """Rician fading with K-factor ``kappa``.

    Each entry is ``sqrt(kappa/(kappa+1)) + sqrt(1/(kappa+1)) * CN(0, 1)``,
    drawn from the same underlying stream as :func:`sample_rayleigh` so
    ``kappa = 0`` reproduces the Rayleigh output bit for bit.
    """
    _check_dims(K, n_t, count)
    if k_factor < 0:
        raise ValueError(f"Rician K-factor must be >= 0, got {k_factor}")
    scatter = _draw_standard_matrices(K, n_t, count, seed)
    los = np.sqrt(k_factor / (k_factor + 1.0))
    if k_factor == 0:
        channels = scatter
    else:
        channels = los + np.sqrt(1.0 / (k_factor + 1.0)) * scatter
    return Dataset(channels, seed=int(seed), meta={"model": "rician", "k_factor": k_factor})


def sample_awgn(count: int, variance: float, seed: int) -> np.ndarray:
    """i.i.d. CN(0, variance) noise samples as a complex vector."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if variance <= 0:
        raise ValueError(f"noise variance must be > 0, got {variance}")
    g = np.random.Generator(np.random.Philox(key=int(seed)))
    re = g.standard_normal(count)
    im = g.standard_normal(count)
    return (re + 1j * im) * np.sqrt(variance / 2.0)


def save_dataset(d: Dataset, path) -> None:
    """Write ``d`` to ``path`` in the SLPD binary format."""
    header = _HEADER.pack(_MAGIC, _VERSION, d.users, d.antennas, d.count, d.seed)
    body = np.empty(d.channels.shape + (2,), dtype="<f8")
    body[..., 0] = d.channels.real
    body[..., 1] = d.channels.imag
    with open(path, "wb") as f:
        f.write(header)
        f.write(body.tobytes())


def load_dataset(path) -> Dataset:
    """Read an SLPD file; inverse of :func:`save_dataset`."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(
            f"file truncated: {len(raw)} bytes, header needs {_HEADER.size}", len(raw)
        )
    magic, version, K, n_t, count, seed = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}, expected {_MAGIC!r}", 0)
    if version != _VERSION:
        raise DatasetFormatError(f"unsupported format version {version}", 4)
    expected = _HEADER.size + count * K * n_t * 16
    if len(raw) != expected:
        raise DatasetFormatError(
            f"body length mismatch: file has {len(raw)} bytes, expected {expected}",
            min(len(raw), expected),
        )
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    pairs = flat.reshape(count, K, n_t, 2)
    channels = pairs[..., 0] + 1j * pairs[..., 1]
    return Dataset(channels, seed=seed, meta={})
