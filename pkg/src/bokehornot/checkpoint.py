"""Checkpoint archive format.

Layout (all integers little-endian)::

    8 bytes   magic b"BOKEHCKP"
    uint32    format version
    uint64    header length in bytes
    header    UTF-8 JSON (sorted keys, compact separators)
    payload   raw arrays, C order, little-endian, packed back to back

The header carries the model config, training position, RNG state and an
``arrays`` index of ``{name, dtype, shape, offset, nbytes}`` entries whose
offsets are relative to the start of the payload. Writing the same state
twice yields identical bytes.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import BokehError

MAGIC = b"BOKEHCKP"
FORMAT_VERSION = 1
_DTYPES = {"f4": "<f4", "f8": "<f8", "i8": "<i8"}


class CheckpointError(BokehError):
    pass


def _le_array(arr):
    arr = np.ascontiguousarray(arr)
    kind = {np.dtype("float32"): "f4", np.dtype("float64"): "f8", np.dtype("int64"): "i8"}.get(arr.dtype)
    if kind is None:
        raise CheckpointError(f"unsupported array dtype {arr.dtype}")
    return kind, arr.astype(_DTYPES[kind], copy=False)


def dumps(header: dict, arrays: dict) -> bytes:
    index = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        kind, arr = _le_array(arrays[name])
        raw = arr.tobytes(order="C")
        index.append({"name": name, "dtype": kind, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    head = dict(header, format_version=FORMAT_VERSION, arrays=index)
    head_bytes = json.dumps(head, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(head_bytes)), head_bytes] + chunks)


def loads(blob: bytes):
    """Inverse of :func:`dumps`; returns ``(header, arrays)``."""
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint archive (bad magic)")
    version, head_len = struct.unpack_from("<IQ", blob, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(blob[start:start + head_len].decode("utf-8"))
    payload = memoryview(blob)[start + head_len:]
    arrays = {}
    for entry in header["arrays"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CheckpointError(f"truncated checkpoint: array {entry['name']}")
        arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(arr.dtype.newbyteorder("="))
    return header, arrays


def save(path, header: dict, arrays: dict) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(header, arrays))
    tmp.replace(path)


def load(path):
    return loads(Path(path).read_bytes())
