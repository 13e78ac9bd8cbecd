"""Binary parameter checkpoints.

Layout (little-endian)::

    b"VXNN"  u32 version  u64 step_count  u32 n_entries
    per entry:
        u16 name_len, name (utf-8)
        u8 kind (0 = trainable, 1 = buffer)
        u8 dtype (4 = float32, 8 = float64)
        u8 ndim, ndim x u32 dims
        payload; trainable entries add the Adam first and second moments
"""

from __future__ import annotations

import io
import struct

import numpy as np

from ..errors import FormatError
from .optim import ParameterSet

MAGIC = b"VXNN"
VERSION = 1


def _write_array(fh, arr, code):
    fh.write(np.ascontiguousarray(arr, dtype="<f4" if code == 4 else "<f8").tobytes())


def _read_array(fh, shape, code):
    dt = np.dtype("<f4" if code == 4 else "<f8")
    n = int(np.prod(shape)) if shape else 1
    raw = fh.read(n * dt.itemsize)
    if len(raw) != n * dt.itemsize:
        raise FormatError("truncated checkpoint")
    return np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))


def write_params(fh, params: ParameterSet, buffers=None):
    buffers = buffers or {}
    fh.write(MAGIC)
    fh.write(struct.pack("<IQI", VERSION, params.step_count, len(params) + len(buffers)))
    entries = [(n, t.data, 0) for n, t in params.items()] + [(n, a, 1) for n, a in buffers.items()]
    for name, arr, kind in entries:
        raw = name.encode()
        code = 8 if arr.dtype == np.float64 else 4
        fh.write(struct.pack("<H", len(raw)) + raw)
        fh.write(struct.pack("<BBB", kind, code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        _write_array(fh, arr, code)
        if kind == 0:
            _write_array(fh, params.m[name], code)
            _write_array(fh, params.v[name], code)


def read_params(fh):
    """Return ``(ParameterSet, buffers)``."""
    if fh.read(4) != MAGIC:
        raise FormatError("not a voxsep parameter checkpoint")
    version, step, count = struct.unpack("<IQI", fh.read(16))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    params, buffers = ParameterSet(), {}
    params.step_count = step
    for _ in range(count):
        (nlen,) = struct.unpack("<H", fh.read(2))
        name = fh.read(nlen).decode()
        kind, code, ndim = struct.unpack("<BBB", fh.read(3))
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        arr = _read_array(fh, shape, code)
        if kind == 0:
            params.add(name, arr.copy())
            params.m[name] = _read_array(fh, shape, code).copy()
            params.v[name] = _read_array(fh, shape, code).copy()
        else:
            buffers[name] = arr.copy()
    return params, buffers


def save(path, params: ParameterSet, buffers=None):
    with open(path, "wb") as fh:
        write_params(fh, params, buffers)


def load(path):
    with open(path, "rb") as fh:
        return read_params(fh)


def to_bytes(params, buffers=None) -> bytes:
    buf = io.BytesIO()
    write_params(buf, params, buffers)
    return buf.getvalue()
