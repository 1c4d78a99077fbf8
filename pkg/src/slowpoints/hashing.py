"""64-bit FNV-1a hashing for provenance links between artifacts."""

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


def fnv1a64_hex(data: bytes) -> str:
    return f"{fnv1a64(data):016x}"


def array_fingerprint(named_arrays) -> str:
    """Hash a name->array mapping; name order does not matter.

    Arrays are hashed as little-endian float64 bytes so the fingerprint is
    stable across platforms.
    """
    h = _FNV_OFFSET
    for name in sorted(named_arrays):
        arr = np.ascontiguousarray(named_arrays[name], dtype="<f8")
        for b in name.encode() + b"\x00" + arr.tobytes():
            h = ((h ^ b) * _FNV_PRIME) & _MASK
    return f"{h:016x}"
