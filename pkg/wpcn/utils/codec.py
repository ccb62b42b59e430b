"""
Matrix Codec
============
Text encoding of complex arrays shared by every dump format (channels,
conic programs, allocations).

Layout: ``{"shape": [...], "data": [re_0, im_0, re_1, im_1, ...]}`` with the
elements enumerated in column-major (Fortran) order and each component a
64-bit float. Floats are written with ``repr`` precision, so encode/decode is
bit-exact.
"""

from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..errors import DimensionError

LAYOUT = "column-major complex128 as interleaved (re, im) float64 pairs"


def encode_matrix(array: Any) -> Dict[str, Any]:
    arr = np.asarray(array, dtype=np.complex128)
    flat = arr.ravel(order="F")
    data = np.empty(2 * flat.size, dtype=np.float64)
    data[0::2] = flat.real
    data[1::2] = flat.imag
    return {"shape": list(arr.shape), "data": data.tolist()}


def decode_matrix(record: Dict[str, Any]) -> np.ndarray:
    shape = tuple(int(s) for s in record["shape"])
    data = np.asarray(record["data"], dtype=np.float64)
    expected = 2 * int(np.prod(shape, dtype=np.int64))
    if data.size != expected:
        raise DimensionError(f"encoded matrix has {data.size} floats, shape {shape} needs {expected}")
    flat = data[0::2] + 1j * data[1::2]
    return flat.reshape(shape, order="F")


def encode_matrices(arrays: Sequence[Any]) -> List[Dict[str, Any]]:
    return [encode_matrix(a) for a in arrays]


def decode_matrices(records: Sequence[Dict[str, Any]]) -> List[np.ndarray]:
    return [decode_matrix(r) for r in records]


def encode_optional(array: Optional[Any]) -> Optional[Dict[str, Any]]:
    return None if array is None else encode_matrix(array)


def decode_optional(record: Optional[Dict[str, Any]]) -> Optional[np.ndarray]:
    return None if record is None else decode_matrix(record)


def encode_real(array: Any) -> List[float]:
    return np.asarray(array, dtype=np.float64).ravel().tolist()


def decode_real(values: Sequence[float]) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)
