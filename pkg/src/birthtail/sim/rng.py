"""Counter-based uniform streams (Philox4x32-10).

Stream algorithm, version 1.  The j-th uniform of lane ``lane`` for
replicate ``rep`` under master seed ``seed`` is obtained from one Philox
block with

    key     = (seed & 0xffffffff, seed >> 32)
    counter = (j >> 1, lane, rep & 0xffffffff, rep >> 32)

taking output words (0, 1) for even j and (2, 3) for odd j, combined into a
53-bit double in [0, 1).  Exponential draws are -log1p(-u) / rate.

Every draw is a pure function of (seed, rep, lane, j), so the order in which
replicates are processed, the batch split and the thread count never change
a sample.  Lanes separate independent uses within one replicate: one per
urn agent, plus auxiliary lanes listed in the samplers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

STREAM_VERSION = 1

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S1 = np.uint64(1)
_S5 = np.uint64(5)
_S6 = np.uint64(6)
_TWO26 = 67108864.0
_TWO_M53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always", cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on a 4x32-bit counter with a 2x32-bit key (uint64 holders)."""
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        n0 = (p1 >> _S32) ^ c1 ^ k0
        n2 = (p0 >> _S32) ^ c3 ^ k1
        c1 = p1 & _MASK
        c3 = p0 & _MASK
        c0 = n0
        c2 = n2
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@nb.njit(inline="always", cache=True)
def uniform(seed, rep, lane, j):
    """The j-th uniform of a lane; all arguments are uint64."""
    o0, o1, o2, o3 = philox4x32(j >> _S1, lane, rep & _MASK, rep >> _S32,
                                seed & _MASK, seed >> _S32)
    if j & _S1:
        a, b = o2, o3
    else:
        a, b = o0, o1
    return (float(a >> _S5) * _TWO26 + float(b >> _S6)) * _TWO_M53


@nb.njit(inline="always", cache=True)
def exponential(seed, rep, lane, j, rate):
    return -np.log1p(-uniform(seed, rep, lane, j)) / rate


@nb.njit(cache=True, nogil=True)
def _fill_uniforms(seed, rep, lane, start, out):
    for i in range(out.shape[0]):
        out[i] = uniform(seed, rep, lane, start + np.uint64(i))


@nb.njit(cache=True, nogil=True)
def _raw_block(c0, c1, c2, c3, k0, k1):
    return philox4x32(c0, c1, c2, c3, k0, k1)


def philox_block(counter, key) -> tuple[int, int, int, int]:
    """Raw Philox4x32-10 output for a 4-word counter and 2-word key."""
    c = [np.uint64(int(v) & 0xFFFFFFFF) for v in counter]
    k = [np.uint64(int(v) & 0xFFFFFFFF) for v in key]
    return tuple(int(v) for v in _raw_block(*c, *k))


def as_seed(seed) -> int:
    s = int(seed)
    if not 0 <= s < 1 << 64:
        raise ValueError(f"master seed must be a 64-bit unsigned integer, got {seed}")
    return s


@dataclass(frozen=True)
class RngStream:
    """The substream of one replicate under a master seed."""

    master_seed: int
    replicate_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_seed", as_seed(self.master_seed))
        if not 0 <= int(self.replicate_index) < 1 << 64:
            raise ValueError("replicate index must be a non-negative 64-bit integer")
        object.__setattr__(self, "replicate_index", int(self.replicate_index))

    def uniforms(self, count: int, lane: int = 0, start: int = 0) -> np.ndarray:
        out = np.empty(int(count))
        _fill_uniforms(np.uint64(self.master_seed), np.uint64(self.replicate_index),
                       np.uint64(lane), np.uint64(start), out)
        return out

    def exponentials(self, count: int, lane: int = 0, start: int = 0) -> np.ndarray:
        return -np.log1p(-self.uniforms(count, lane, start))

    def child(self, offset: int) -> "RngStream":
        return RngStream(self.master_seed, self.replicate_index + offset)
