"""Self-describing binary container for named float64 tensors.

Layout (all integers little-endian)::

    bytes 0-7    magic  b"AEHRTNSR"
    bytes 8-11   uint32 format version (1)
    bytes 12-19  uint64 header length H
    next H bytes UTF-8 JSON header:
                 {"meta": {...}, "tensors": [{"name", "shape", "offset"}, ...]}
    payload      float64 ('<f8') tensor data, row-major, at the listed
                 byte offsets counted from the start of the payload

Used for model checkpoints and for cached feature matrices.
"""

import json
import struct

import numpy as np

from .errors import DataError

MAGIC = b"AEHRTNSR"
VERSION = 1


def write_container(path, tensors, meta=None):
    table, chunks, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        table.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"meta": meta or {}, "tensors": table}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)


def read_container(path):
    """Returns ``(tensors, meta)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise DataError(f"{path}: not a tensor container")
    version, hlen = struct.unpack_from("<IQ", blob, 8)
    if version != VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(blob[start : start + hlen].decode())
    payload = start + hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        off = payload + entry["offset"]
        if off + 8 * count > len(blob):
            raise DataError(f"{path}: truncated tensor {entry['name']}")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape)
        tensors[entry["name"]] = arr.astype(np.float64)
    return tensors, header["meta"]
