"""Counter-based Gaussian noise streams.

Every random draw in a run is addressed by ``(master_seed, kind, batch,
entity, step)`` and generated by a Philox4x32-10 block cipher, so a draw
never depends on how many other draws were made before it or in which
order particles are processed. This is what makes serial, chunked and
replayed runs bit-identical.

Counter layout for one Philox call::

    c0 = coordinate block (two normals per block)
    c1 = step index
    c2 = entity index
    c3 = stream kind | batch << 8

The 64-bit master seed is the Philox key.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S5 = np.uint64(5)
_S6 = np.uint64(6)
_TWO26 = np.uint64(67108864)
_TWO_M53 = 2.0**-53
_TWO_PI = 2.0 * np.pi


@numba.njit(cache=True)
def _philox4x32_10(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = c0 * _M0
        p1 = c2 * _M1
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0 = (hi1 ^ c1 ^ k0) & _MASK
        c1 = lo1
        c2 = (hi0 ^ c3 ^ k1) & _MASK
        c3 = lo0
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@numba.njit(cache=True)
def _to_unit(a, b):
    # 53-bit uniform in [0, 1)
    return float((a >> _S5) * _TWO26 + (b >> _S6)) * _TWO_M53


@numba.njit(cache=True)
def _normals_kernel(k0, k1, code, entities, step, out):
    dim = out.shape[1]
    nblocks = (dim + 1) // 2
    for e in range(entities.shape[0]):
        ent = entities[e]
        for blk in range(nblocks):
            r0, r1, r2, r3 = _philox4x32_10(np.uint64(blk), step, ent, code, k0, k1)
            u1 = _to_unit(r0, r1)
            u2 = _to_unit(r2, r3)
            rad = np.sqrt(-2.0 * np.log(1.0 - u1))
            theta = _TWO_PI * u2
            out[e, 2 * blk] = rad * np.cos(theta)
            if 2 * blk + 1 < dim:
                out[e, 2 * blk + 1] = rad * np.sin(theta)


@numba.njit(cache=True)
def _uniforms_kernel(k0, k1, code, entities, step, out):
    for e in range(entities.shape[0]):
        r0, r1, _, _ = _philox4x32_10(np.uint64(0), step, entities[e], code, k0, k1)
        out[e] = _to_unit(r0, r1)


def philox4x32(counter, key) -> tuple[int, int, int, int]:
    """Raw Philox4x32-10 block for a 4-word counter and 2-word key."""
    c = [np.uint64(v & 0xFFFFFFFF) for v in counter]
    k = [np.uint64(v & 0xFFFFFFFF) for v in key]
    return tuple(int(v) for v in _philox4x32_10(c[0], c[1], c[2], c[3], k[0], k[1]))


class StreamKind(enum.IntEnum):
    REAL_INIT = 0
    REAL_NOISE = 1
    VIRTUAL_INIT = 2
    VIRTUAL_NOISE = 3
    XI = 4


def _as_entities(entities) -> np.ndarray:
    arr = np.asarray(entities, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() > 0xFFFFFFFF):
        raise ValueError("entity indices must fit in 32 bits")
    return arr.astype(np.uint64)


@dataclass(frozen=True)
class NoiseStream:
    """A family of substreams sharing one master seed, kind and batch slot.

    Individual substreams are addressed by ``(entity, step)``; two different
    addresses give independent sequences and the same address always gives
    the same values.
    """

    master_seed: int
    kind: StreamKind
    batch: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if not 0 <= self.batch < 2**24:
            raise ValueError("batch slot out of range")

    @property
    def _key(self):
        seed = int(self.master_seed)
        return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)

    @property
    def _code(self):
        return np.uint64(int(self.kind) | (self.batch << 8))

    def normals(self, entities, step: int, dim: int) -> np.ndarray:
        """Standard normal draws of shape ``(len(entities), dim)``."""
        ents = _as_entities(entities)
        out = np.empty((ents.shape[0], dim), dtype=np.float64)
        k0, k1 = self._key
        _normals_kernel(k0, k1, self._code, ents, np.uint64(step), out)
        return out

    def uniforms(self, entities, step: int) -> np.ndarray:
        """Uniform draws on [0, 1), one per entity."""
        ents = _as_entities(entities)
        out = np.empty(ents.shape[0], dtype=np.float64)
        k0, k1 = self._key
        _uniforms_kernel(k0, k1, self._code, ents, np.uint64(step), out)
        return out

    def integers(self, entities, step: int, high: int) -> np.ndarray:
        """Uniform integers in ``[0, high)``, one per entity."""
        u = self.uniforms(entities, step)
        return np.minimum((u * high).astype(np.int64), high - 1)
