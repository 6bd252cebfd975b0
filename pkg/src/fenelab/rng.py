"""Counter-based random streams.

Every draw is addressed by ``(seed, channel, step, block)`` and produced by a
Philox generator whose key is ``(seed, channel)`` and whose counter starts at
``(0, block, step, 0)``.  Particles are grouped in fixed blocks of
``BLOCK`` consecutive ids; a block's numbers depend only on its address, so
results do not depend on how blocks are scheduled across workers.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument

BLOCK = 8192

INIT = 1
FLOW = 2
THERMAL = 3

_MASK64 = (1 << 64) - 1


def generator(seed: int, channel: int, step: int = 0, block: int = 0) -> np.random.Generator:
    if not 0 <= seed <= _MASK64:
        raise InvalidArgument(f"seed must be an unsigned 64-bit integer, got {seed}")
    key = np.array([seed, channel], dtype=np.uint64)
    counter = np.array([0, block, step, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normals(seed: int, channel: int, step: int, n: int, width: int,
            out: np.ndarray | None = None) -> np.ndarray:
    """Standard normals of shape ``(n, width)``; row ``i`` belongs to particle ``i``."""
    if out is None:
        out = np.empty((n, width))
    for b, lo in enumerate(range(0, n, BLOCK)):
        hi = min(lo + BLOCK, n)
        generator(seed, channel, step, b).standard_normal(out=out[lo:hi])
    return out


def uniforms(seed: int, channel: int, step: int, n: int, width: int) -> np.ndarray:
    out = np.empty((n, width))
    for b, lo in enumerate(range(0, n, BLOCK)):
        hi = min(lo + BLOCK, n)
        generator(seed, channel, step, b).random(out=out[lo:hi])
    return out


def shared_normals(seed: int, channel: int, step: int, n: int) -> np.ndarray:
    """One vector of ``n`` normals per step, identical for every particle."""
    return generator(seed, channel, step, 0).standard_normal(n)
