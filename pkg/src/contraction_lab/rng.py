"""Counter-based splittable random streams.

Every stream is a numpy ``Philox`` generator whose 128-bit key is a BLAKE2b
digest of ``(master_seed, *labels)``. Distinct label tuples give independent,
bit-reproducible streams regardless of the order in which they are created.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np


def _encode(label) -> bytes:
    if isinstance(label, (bool, np.bool_)):
        return b"b" + (b"1" if label else b"0")
    if isinstance(label, (int, np.integer)):
        return b"i" + str(int(label)).encode()
    if isinstance(label, (float, np.floating)):
        return b"f" + struct.pack("<d", float(label))
    if isinstance(label, str):
        return b"s" + label.encode()
    raise TypeError(f"unsupported stream label {label!r}")


def stream_key(master_seed: int, *labels) -> int:
    """128-bit stream id for ``(master_seed, *labels)``."""
    h = hashlib.blake2b(digest_size=16)
    for part in (master_seed, *labels):
        enc = _encode(part)
        h.update(len(enc).to_bytes(4, "little"))
        h.update(enc)
    return int.from_bytes(h.digest(), "little")


def make_generator(master_seed: int, *labels) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, *labels)))


def derive_seed(master_seed: int, *labels) -> int:
    """63-bit integer seed, for recording in tables and sidecars."""
    return stream_key(master_seed, *labels) >> 65
