"""Binary checkpoint container: magic "HAS8", version, spec echo, tensor table.

All scalar fields and tensor payloads are little-endian; round-trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .blocks import ModelSpec
from .errors import DataFormatError

MAGIC = b"HAS8"
VERSION = 1

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def save_checkpoint(path: str, spec: ModelSpec, tensors: dict[str, np.ndarray], meta: dict | None = None):
    """Write a model spec and named tensor table to ``path``."""
    header = json.dumps({"spec": spec.to_dict(), "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name])
            code = "<f8" if arr.dtype == np.float64 else "<f4"
            arr = np.ascontiguousarray(arr.astype(_DTYPES[code], copy=False))
            name_b = name.encode()
            f.write(struct.pack("<I", len(name_b)))
            f.write(name_b)
            code_b = code.encode()
            f.write(struct.pack("<I", len(code_b)))
            f.write(code_b)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            payload = arr.tobytes()
            f.write(struct.pack("<Q", len(payload)))
            f.write(payload)


def _read(f, n: int, path: str, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise DataFormatError(f"{path}: truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path: str) -> tuple[ModelSpec, dict[str, np.ndarray], dict]:
    """Read back (spec, tensors, meta) from a checkpoint file."""
    with open(path, "rb") as f:
        magic = _read(f, 4, path, "magic")
        if magic != MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", _read(f, 4, path, "version"))
        if version != VERSION:
            raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", _read(f, 4, path, "header length"))
        header = json.loads(_read(f, hlen, path, "header"))
        spec = ModelSpec.from_dict(header["spec"])
        (count,) = struct.unpack("<I", _read(f, 4, path, "tensor count"))
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read(f, 4, path, "name length"))
            name = _read(f, nlen, path, "name").decode()
            (clen,) = struct.unpack("<I", _read(f, 4, path, "dtype length"))
            code = _read(f, clen, path, "dtype").decode()
            if code not in _DTYPES:
                raise DataFormatError(f"{path}: unknown dtype code {code!r} for tensor {name!r}")
            (ndim,) = struct.unpack("<I", _read(f, 4, path, "rank"))
            shape = struct.unpack(f"<{ndim}Q", _read(f, 8 * ndim, path, "shape"))
            (plen,) = struct.unpack("<Q", _read(f, 8, path, "payload length"))
            payload = _read(f, plen, path, f"tensor {name!r}")
            arr = np.frombuffer(payload, dtype=_DTYPES[code]).reshape(shape)
            tensors[name] = arr.copy()
        if f.read(1):
            raise DataFormatError(f"{path}: trailing bytes after tensor table")
    return spec, tensors, header.get("meta", {})
