"""Binary weight files.

Layout (little-endian throughout): magic ``BSEG``, u32 version (1), u32
tensor count; then per tensor: u16 name length, UTF-8 name, u8 dtype code
(0 = float32), u8 rank, u32 dims[rank], raw row-major payload.

Loading parses and validates the whole file before touching the network, so
a truncated or mismatched file never leaves a partially-mutated model.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"BSEG"
VERSION = 1
DTYPE_F32 = 0


class WeightFileError(IOError):
    """Corrupt, truncated, or otherwise unreadable weight file."""


class WeightMismatchError(ValueError):
    """Weight file does not match the model's parameter registry."""

    def __init__(self, tensor: str, message: str):
        super().__init__(f"tensor {tensor!r}: {message}")
        self.tensor = tensor


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Serialize named arrays; writes a temp file then renames (atomic)."""
    payload = bytearray()
    payload += MAGIC
    payload += struct.pack("<II", VERSION, len(tensors))
    for name, arr in tensors.items():
        enc = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype=np.float32)
        payload += struct.pack("<H", len(enc))
        payload += enc
        payload += struct.pack("<BB", DTYPE_F32, a.ndim)
        payload += struct.pack(f"<{a.ndim}I", *a.shape)
        payload += a.tobytes()
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".",
                               suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_tensors(path) -> dict[str, np.ndarray]:
    """Parse a weight file fully into memory, validating structure."""
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    off = 0

    def take(n: int, what: str):
        nonlocal off
        if off + n > len(blob):
            raise WeightFileError(f"truncated weight file {path}: short read in {what}")
        chunk = view[off:off + n]
        off += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise WeightFileError(f"{path} is not a weight file (bad magic)")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise WeightFileError(f"{path}: unsupported version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = bytes(take(nlen, "name")).decode("utf-8")
        dtype_code, rank = struct.unpack("<BB", take(2, "dtype/rank"))
        if dtype_code != DTYPE_F32:
            raise WeightFileError(f"{path}: unknown dtype code {dtype_code} for {name!r}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        nbytes = 4 * int(np.prod(dims, dtype=np.int64)) if rank else 4
        if rank == 0:
            dims = ()
            nbytes = 4
        data = np.frombuffer(take(nbytes, f"payload of {name!r}"), dtype="<f4")
        tensors[name] = data.reshape(dims).copy()
    if off != len(blob):
        raise WeightFileError(f"{path}: {len(blob) - off} trailing bytes")
    return tensors


def save_weights(net, path) -> None:
    write_tensors(path, net.state_tensors())


def load_weights(net, path, encoder_only: bool = False):
    """Load a weight file into ``net`` (strict names + shapes).

    With ``encoder_only`` only ``enc*`` tensors are read and the decoder is
    left untouched; the file may then contain a full model or a bare encoder.
    Returns ``net``.
    """
    tensors = read_tensors(path)
    state = net.state_tensors()
    if encoder_only:
        tensors = {k: v for k, v in tensors.items() if k.startswith("enc")}
        missing = [k for k in state if k.startswith("enc") and k not in tensors]
    else:
        extra = [k for k in tensors if k not in state]
        if extra:
            raise WeightMismatchError(extra[0], "not present in the model registry")
        missing = [k for k in state if k not in tensors]
    if missing:
        raise WeightMismatchError(missing[0], "missing from the weight file")
    for name, arr in tensors.items():
        if name not in state:
            raise WeightMismatchError(name, "not present in the model registry")
        if arr.shape != state[name].shape:
            raise WeightMismatchError(
                name, f"shape {arr.shape} does not match model shape {state[name].shape}")
    net.load_state_tensors(tensors)
    return net
