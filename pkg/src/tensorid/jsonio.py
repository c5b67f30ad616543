"""JSON wire formats.

Complex numbers are ``[re, im]`` pairs of decimal doubles.  Python's float
repr is the shortest round-tripping decimal, so writing and reading back is
bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .multilinear import Decomposition, Shape3, SimpleTensor, Tensor3

SCHEMA_VERSION = 1


def encode_complex(arr) -> list:
    """Nested lists of ``[re, im]`` mirroring the array shape."""
    arr = np.asarray(arr, dtype=complex)
    if arr.ndim == 0:
        z = complex(arr)
        return [z.real, z.imag]
    return [encode_complex(x) for x in arr]


def decode_complex(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def tensor_to_json(t: Tensor3) -> dict:
    return {"shape": list(t.shape.dims), "data": encode_complex(t.flat)}


def tensor_from_json(obj: dict) -> Tensor3:
    return Tensor3(Shape3(*obj["shape"]), decode_complex(obj["data"]))


def decomposition_to_json(d: Decomposition) -> dict:
    return {
        "shape": list(d.shape.dims),
        "terms": [{"a": encode_complex(t.a), "b": encode_complex(t.b), "c": encode_complex(t.c)} for t in d.terms],
    }


def decomposition_from_json(obj: dict) -> Decomposition:
    terms = tuple(
        SimpleTensor(decode_complex(t["a"]), decode_complex(t["b"]), decode_complex(t["c"])) for t in obj["terms"]
    )
    return Decomposition(terms, Shape3(*obj["shape"]))


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        if np.iscomplexobj(o):
            return encode_complex(o)
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, default=_default, indent=1, sort_keys=True, allow_nan=True)


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
