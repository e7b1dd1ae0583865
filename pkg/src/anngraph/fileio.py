"""Binary file formats for datasets (ANND) and graphs (ANNG).

Both are little-endian and end with a CRC32 over every preceding byte.

ANNG v1::

    b"ANNG" | u16 version | u64 n | u64 d | f64 tau | u8 model tag | f64 x k params
    | u64 seed | u64 x (n+1) offsets | u64 x E neighbor indices | u32 crc32

Model tags: 0 exact, 1 uniform (delta), 2 adaptive, 3 twosided (delta1, delta2).
Bit 0x80 of the tag marks a saturated threshold.

ANND v1::

    b"ANND" | u16 version | u64 n | u64 d | f64 omega | f64 x (n*d) row-major | u32 crc32
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .geometry import DensityParams
from .graph import Dataset, EdgeModel, NeighborGraph

GRAPH_MAGIC = b"ANNG"
DATASET_MAGIC = b"ANND"
VERSION = 1

_TAGS = {"exact": 0, "uniform": 1, "adaptive": 2, "twosided": 3}
_KINDS = {v: k for k, v in _TAGS.items()}
_SATURATE_BIT = 0x80


class FormatError(ValueError):
    """File is not a well-formed ANNG/ANND file."""


class ChecksumError(FormatError):
    pass


class VersionError(FormatError):
    pass


def write_atomic(path, payload: bytes) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def file_crc32(path) -> int:
    crc = 0
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            crc = zlib.crc32(chunk, crc)
    return crc & 0xFFFFFFFF


def _seal(body: bytes) -> bytes:
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def _unseal(raw: bytes, magic: bytes) -> memoryview:
    if len(raw) < 4:
        raise ChecksumError("file too short to carry a checksum")
    body, (stored,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored:
        raise ChecksumError("CRC32 mismatch (file truncated or corrupted)")
    if body[:4] != magic:
        raise FormatError(f"bad magic {bytes(body[:4])!r}, expected {magic!r}")
    if len(body) < 6:
        raise FormatError("missing version field")
    (version,) = struct.unpack_from("<H", body, 4)
    if version != VERSION:
        raise VersionError(f"unsupported format version {version} (this build reads {VERSION})")
    return memoryview(body)[6:]


class _Reader:
    def __init__(self, buf: memoryview):
        self.buf = buf
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise FormatError("unexpected end of data")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if count < 0 or self.pos + size > len(self.buf):
            raise FormatError("unexpected end of data")
        out = np.frombuffer(self.buf, dtype=dtype, count=count, offset=self.pos)
        self.pos += size
        return out

    def done(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes before checksum")


def graph_to_bytes(graph: NeighborGraph) -> bytes:
    model = graph.model
    tag = _TAGS[model.kind] | (_SATURATE_BIT if model.saturate else 0)
    params = {"exact": (), "adaptive": (), "uniform": (model.delta,), "twosided": (model.delta, model.delta2)}[model.kind]
    parts = [
        GRAPH_MAGIC,
        struct.pack("<HQQdB", VERSION, graph.n, graph.d, model.tau, tag),
        struct.pack(f"<{len(params)}d", *params),
        struct.pack("<Q", graph.seed),
        graph.offsets.astype("<u8").tobytes(),
        graph.indices.astype("<u8").tobytes(),
    ]
    return _seal(b"".join(parts))


def graph_from_bytes(raw: bytes) -> NeighborGraph:
    r = _Reader(_unseal(raw, GRAPH_MAGIC))
    n, d, tau, tag = r.take("<QQdB")
    kind = _KINDS.get(tag & ~_SATURATE_BIT)
    if kind is None:
        raise FormatError(f"unknown model tag {tag}")
    nparams = {"exact": 0, "adaptive": 0, "uniform": 1, "twosided": 2}[kind]
    params = r.take(f"<{nparams}d")
    (seed,) = r.take("<Q")
    offsets = r.array("<u8", n + 1).astype(np.int64)
    if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
        raise FormatError("malformed CSR offsets")
    indices = r.array("<u8", int(offsets[-1])).astype(np.int64)
    r.done()
    try:
        model = EdgeModel(kind, tau, *params, saturate=bool(tag & _SATURATE_BIT))
        return NeighborGraph(int(n), int(d), offsets, indices, model, int(seed))
    except ValueError as exc:
        raise FormatError(f"invalid graph contents: {exc}") from exc


def serialize(graph: NeighborGraph, path) -> None:
    write_atomic(path, graph_to_bytes(graph))


def deserialize(path) -> NeighborGraph:
    return graph_from_bytes(Path(path).read_bytes())


def dataset_to_bytes(data: Dataset) -> bytes:
    head = DATASET_MAGIC + struct.pack("<HQQd", VERSION, data.n, data.d, data.omega)
    return _seal(head + data.points.astype("<f8").tobytes())


def dataset_from_bytes(raw: bytes, allow_boundary: bool = True) -> Dataset:
    r = _Reader(_unseal(raw, DATASET_MAGIC))
    n, d, omega = r.take("<QQd")
    coords = r.array("<f8", n * d).astype(np.float64).reshape(n, d)
    r.done()
    try:
        params = DensityParams(int(n), int(d), allow_boundary=allow_boundary)
    except ValueError as exc:
        raise FormatError(f"invalid dataset header: {exc}") from exc
    if abs(params.omega - omega) > 1e-12 * max(1.0, omega):
        raise FormatError(f"stored omega {omega} disagrees with log2(n)/d = {params.omega}")
    try:
        return Dataset(coords, params)
    except ValueError as exc:
        raise FormatError(f"invalid dataset contents: {exc}") from exc


def save_dataset(data: Dataset, path) -> None:
    write_atomic(path, dataset_to_bytes(data))


def load_dataset(path, allow_boundary: bool = True) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes(), allow_boundary=allow_boundary)
