"""Named parameter collections and the versioned checkpoint format.

Checkpoint layout (all integers little-endian):

    magic   "NHCK"
    version u32
    n_params u32
    per parameter: name_len u32, name UTF-8, ndim u32, dims u32 * ndim,
                   data float32 LE (row-major)
    trailer: global step counter u64 (absent in hand-built minimal files;
             read as 0)
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

from ..errors import FormatError, IoError, NumericsError, StructureError
from .tensor import Tensor

CHECKPOINT_MAGIC = b"NHCK"
CHECKPOINT_VERSION = 1


class ParameterStore:
    """Ordered name -> Tensor map with a global step counter."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.step = 0

    def add(self, name: str, data, requires_grad: bool = True) -> Tensor:
        if name in self._params:
            raise StructureError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float32), requires_grad=requires_grad)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def n_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def check_finite(self):
        for name, t in self._params.items():
            if not np.all(np.isfinite(t.data)):
                raise NumericsError(f"parameter {name!r} contains non-finite values")

    def shapes(self) -> dict:
        return {name: tuple(t.data.shape) for name, t in self._params.items()}


def validate_structure(store: ParameterStore, expected_shapes: dict) -> None:
    """Raise StructureError unless the store matches a model's shape map."""
    got = store.shapes()
    missing = sorted(set(expected_shapes) - set(got))
    extra = sorted(set(got) - set(expected_shapes))
    if missing or extra:
        raise StructureError(
            f"parameter names differ from the model definition "
            f"(missing {missing[:4]}, extra {extra[:4]})")
    for name, shape in expected_shapes.items():
        if got[name] != tuple(shape):
            raise StructureError(
                f"parameter {name!r} has shape {got[name]}, model expects {tuple(shape)}")


def save_params(store: ParameterStore, path) -> None:
    """Write the versioned binary checkpoint."""
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<II", CHECKPOINT_VERSION, len(store))
    for name, t in store.items():
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded)) + encoded
        out += struct.pack("<I", t.data.ndim)
        out += struct.pack(f"<{t.data.ndim}I", *t.data.shape)
        out += np.ascontiguousarray(t.data, dtype="<f4").tobytes()
    out += struct.pack("<Q", store.step)
    try:
        with open(path, "wb") as fh:
            fh.write(bytes(out))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_params(path) -> ParameterStore:
    """Read a checkpoint back; tensors are bit-identical to what was saved."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc

    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a parameter checkpoint (bad magic)")
    version, n_params = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")

    store = ParameterStore()
    offset = 12
    for _ in range(n_params):
        try:
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            if len(blob[offset:offset + name_len]) != name_len:
                raise FormatError(f"{path}: truncated name field")
            offset += name_len
            (ndim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            dims = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            count = int(np.prod(dims)) if ndim else 1
            raw = blob[offset:offset + 4 * count]
            if len(raw) != 4 * count:
                raise FormatError(f"{path}: truncated tensor data for {name!r}")
            offset += 4 * count
        except struct.error as exc:
            raise FormatError(f"{path}: truncated checkpoint ({exc})") from exc
        data = np.frombuffer(raw, dtype="<f4").reshape(dims)
        store.add(name, data.copy())
    if offset + 8 <= len(blob):
        (store.step,) = struct.unpack_from("<Q", blob, offset)
    return store
