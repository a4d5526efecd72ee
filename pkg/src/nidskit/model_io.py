"""Versioned binary model container.

Every trained model (the CNN and each baseline) persists through the same
envelope: magic ``ENC1``, a format version, a kind tag, a JSON config
record, and length-prefixed named array blocks.  All integers and floats
are little-endian; arrays are float64, int64, or raw bytes (raw blocks
let ensemble models nest their members' containers).  Loading is
bit-exact: save followed by load reproduces every parameter bit.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .errors import DataError

MAGIC = b"ENC1"
VERSION = 1

_DTYPE_TAGS = {0: "<f8", 1: "<i8"}
_RAW_TAG = 2


class MagicMismatchError(DataError):
    pass


class VersionError(DataError):
    pass


class TruncationError(DataError):
    pass


class IoError(DataError):
    pass


def atomic_write(path, data: bytes) -> None:
    """Write via a temp file + rename so no partial artifact can exist."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack_block(name: str, value) -> bytes:
    name_b = name.encode("utf-8")
    head = struct.pack("<I", len(name_b)) + name_b
    if isinstance(value, (bytes, bytearray)):
        payload = bytes(value)
        return head + struct.pack("<BBQ", _RAW_TAG, 1, len(payload)) + payload
    arr = np.asarray(value)
    if arr.dtype.kind == "f":
        tag, arr = 0, arr.astype("<f8", copy=False)
    elif arr.dtype.kind in "iub":
        tag, arr = 1, arr.astype("<i8", copy=False)
    else:
        raise ValueError(f"block {name!r}: unsupported dtype {arr.dtype}")
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    payload = arr.tobytes(order="C")
    return head + struct.pack("<BB", tag, arr.ndim) + dims + struct.pack("<Q", len(payload)) + payload


def serialize(kind: str, config: dict, blocks: list) -> bytes:
    kind_b = kind.encode("utf-8")
    config_b = json.dumps(config, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<I", VERSION),
           struct.pack("<I", len(kind_b)), kind_b,
           struct.pack("<Q", len(config_b)), config_b,
           struct.pack("<I", len(blocks))]
    out.extend(_pack_block(name, value) for name, value in blocks)
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.block = "header"

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncationError(
                f"container truncated while reading {self.block} "
                f"(needed {n} bytes at offset {self.pos})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def deserialize(data: bytes):
    """Parse container bytes -> (kind, config, ordered [(name, value)])."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise MagicMismatchError(f"not a model container (expected magic {MAGIC!r})")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionError(f"unsupported container version {version}")
    (kind_len,) = r.unpack("<I")
    kind = r.take(kind_len).decode("utf-8")
    (cfg_len,) = r.unpack("<Q")
    config = json.loads(r.take(cfg_len).decode("utf-8"))
    (n_blocks,) = r.unpack("<I")
    blocks = []
    for i in range(n_blocks):
        r.block = f"block {i}"
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8")
        r.block = f"block {i} ({name})"
        tag, ndim = r.unpack("<BB")
        if tag == _RAW_TAG:
            (size,) = r.unpack("<Q")
            blocks.append((name, r.take(size)))
            continue
        if tag not in _DTYPE_TAGS:
            raise VersionError(f"block {name!r}: unknown dtype tag {tag}")
        dims = r.unpack(f"<{ndim}Q") if ndim else ()
        (size,) = r.unpack("<Q")
        arr = np.frombuffer(r.take(size), dtype=_DTYPE_TAGS[tag]).reshape(dims)
        blocks.append((name, arr.copy()))
    return kind, config, blocks


def save(path, kind: str, config: dict, blocks: list) -> None:
    atomic_write(path, serialize(kind, config, blocks))


def load(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read model file {path}: {exc}") from None
    return deserialize(data)
