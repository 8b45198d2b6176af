"""Flat binary weight checkpoints.

Layout, all little-endian:

    bytes 0-7    magic ``HMKCKPT1``
    bytes 8-11   format version (u32)
    bytes 12-15  header length in bytes (u32)
    header       UTF-8 JSON: {"config": {...}, "tensors": [{name, shape,
                 offset}, ...]} with offsets relative to the payload start
    payload      concatenated float64 arrays, C order

A load followed by a save reproduces the file byte for byte, which the
CLI-level determinism checks rely on.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ParameterError
from .tensor import Tensor

MAGIC = b"HMKCKPT1"
FORMAT_VERSION = 1

PathLike = Union[str, Path]


def save_checkpoint(path: PathLike, params: dict[str, Tensor], config: dict) -> None:
    """Write parameter tensors plus a JSON-serializable config dict."""
    entries = []
    chunks = []
    offset = 0
    for name in sorted(params):
        source = params[name].data
        # ascontiguousarray promotes rank-0 to rank-1; record the true shape
        arr = np.ascontiguousarray(source, dtype="<f8")
        entries.append({"name": name, "shape": list(source.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"config": config, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def load_checkpoint(path: PathLike) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as (name -> array, config dict)."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ParameterError(f"not a checkpoint file: bad magic {raw[:8]!r}")
    version, header_len = struct.unpack_from("<II", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ParameterError(f"unsupported checkpoint version {version}")
    header_start = len(MAGIC) + 8
    header = json.loads(raw[header_start : header_start + header_len].decode("utf-8"))
    payload = raw[header_start + header_len :]
    params: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        params[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return params, header["config"]
