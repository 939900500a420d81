"""Single-file array container.

Layout: one UTF-8 JSON header line terminated by ``\\n``, then the raw
little-endian C-order payload. The header holds ``magic``, ``dtype``,
``shape``, ``axes`` and a free-form ``meta`` dictionary.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeMismatchError

MAGIC = "OATv1"
DTYPES = {"f32": "<f4", "f64": "<f8", "c64": "<c8", "c128": "<c16"}
_CODES = {(np.dtype(v).kind, np.dtype(v).itemsize): k for k, v in DTYPES.items()}


@dataclass
class ArrayContainer:
    data: np.ndarray
    axes: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if (self.data.dtype.kind, self.data.dtype.itemsize) not in _CODES:
            raise ConfigError(f"unsupported dtype {self.data.dtype}")
        self.axes = tuple(self.axes) if self.axes else tuple(f"axis{i}" for i in range(self.data.ndim))
        if len(self.axes) != self.data.ndim:
            raise ShapeMismatchError(f"{len(self.axes)} axis labels for a {self.data.ndim}-D array")

    @property
    def dtype_code(self) -> str:
        return _CODES[(self.data.dtype.kind, self.data.dtype.itemsize)]

    def header(self) -> dict:
        return {"magic": MAGIC, "dtype": self.dtype_code, "shape": list(self.data.shape),
                "axes": list(self.axes), "meta": self.meta}

    def write(self, path):
        payload = np.ascontiguousarray(self.data, dtype=DTYPES[self.dtype_code]).tobytes(order="C")
        head = json.dumps(self.header(), sort_keys=True, allow_nan=False).encode("utf-8")
        if b"\n" in head:
            raise ConfigError("header must fit on one line")
        with open(path, "wb") as fh:
            fh.write(head + b"\n")
            fh.write(payload)

    @classmethod
    def read(cls, path) -> "ArrayContainer":
        raw = Path(path).read_bytes()
        end = raw.find(b"\n")
        if end < 0:
            raise ShapeMismatchError("missing header line")
        try:
            head = json.loads(raw[:end].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ShapeMismatchError(f"unreadable header: {exc}") from None
        if head.get("magic") != MAGIC:
            raise ShapeMismatchError(f"bad magic {head.get('magic')!r}")
        code = head.get("dtype")
        if code not in DTYPES:
            raise ShapeMismatchError(f"unknown dtype {code!r}")
        shape = tuple(int(s) for s in head["shape"])
        dt = np.dtype(DTYPES[code])
        payload = raw[end + 1:]
        expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if len(payload) != expected:
            raise ShapeMismatchError(f"payload has {len(payload)} bytes, header implies {expected}")
        data = np.frombuffer(payload, dtype=dt).reshape(shape).copy()
        return cls(data, tuple(head.get("axes", ())), head.get("meta", {}))


def write_array(path, data, axes=(), meta=None):
    ArrayContainer(data, tuple(axes), dict(meta or {})).write(path)


def read_array(path) -> ArrayContainer:
    return ArrayContainer.read(path)
