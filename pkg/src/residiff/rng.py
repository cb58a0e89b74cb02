"""Counter-based random numbers: Philox4x64-10 with a fixed block layout.

Reproducibility contract
------------------------
Every random quantity in this package is addressed, never drawn from mutable
state: the generator is the pure function

    raws = philox4x64(counter, key),   counter = (block, domain, 0, 0),
                                       key     = (seed, stream)

so a (seed, stream, domain, block) tuple always yields the same four uint64
words on every backend and at every thread count.  Streams index trajectories,
domains separate independent uses within one trajectory:

    domain 0   Gaussian stepping noise
    domain 1   lattice shift draws of the defragmented chain
    domain 2   initial conditions

Block layout for stepping noise: Gaussian m of a stream comes from philox
block m // 4.  A block's four words (r0, r1, r2, r3) produce four Gaussians
via two Box-Muller pairs,

    rad0 = sqrt(-2 ln u+(r0)),  g0 = rad0 cos(2 pi u(r1)),  g1 = rad0 sin(...)
    rad1 = sqrt(-2 ln u+(r2)),  g2 = rad1 cos(2 pi u(r3)),  g3 = rad1 sin(...)

with u+(r) = ((r >> 11) + 1) * 2^-53 in (0, 1] (log-safe) and
u(r) = (r >> 11) * 2^-53 in [0, 1).  The Cython kernel implements the same
pipeline with libm; raw words are bit-identical across backends, transformed
floats agree to ~1e-13 (numpy's vectorized log can differ from libm by 1 ulp).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
PHILOX_M1 = np.uint64(0xCA5A826395121157)
PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_SHIFT11 = np.uint64(11)
_ONE64 = np.uint64(1)
_U53 = 2.0 ** -53

DOMAIN_NOISE = 0
DOMAIN_SHIFT = 1
DOMAIN_INIT = 2

GAUSSIANS_PER_BLOCK = 4


def _mulhilo(a, b):
    """128-bit product of uint64s via 32-bit limbs: (high word, low word)."""
    lo = a * b
    a_hi = a >> _SHIFT32
    a_lo = a & _MASK32
    b_hi = b >> _SHIFT32
    b_lo = b & _MASK32
    t = a_lo * b_lo
    t = a_hi * b_lo + (t >> _SHIFT32)
    w1 = t & _MASK32
    w2 = t >> _SHIFT32
    t = a_lo * b_hi + w1
    hi = a_hi * b_hi + w2 + (t >> _SHIFT32)
    return hi, lo


def philox4x64(counter, key, rounds: int = 10):
    """Philox4x64 keyed permutation (10 rounds by default).

    counter: sequence of four uint64 scalars/arrays (broadcastable),
    key: sequence of two uint64 scalars/arrays.  Returns four uint64 arrays.
    Matches numpy.random.Philox output blocks (numpy's random_raw emits the
    block for counter + 1; tests account for the pre-increment).
    """
    with np.errstate(over="ignore"):
        shape = np.broadcast_shapes(
            *(np.shape(np.asarray(c)) for c in counter),
            *(np.shape(np.asarray(k)) for k in key),
        )
        c0, c1, c2, c3 = (
            np.broadcast_to(np.asarray(c, dtype=np.uint64), shape).copy()
            for c in counter
        )
        k0, k1 = (
            np.broadcast_to(np.asarray(k, dtype=np.uint64), shape).copy()
            for k in key
        )
        for _ in range(rounds):
            hi0, lo0 = _mulhilo(PHILOX_M0, c0)
            hi1, lo1 = _mulhilo(PHILOX_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + PHILOX_W0
            k1 = k1 + PHILOX_W1
    return c0, c1, c2, c3


def raw_block(seed: int, streams, block, domain: int = DOMAIN_NOISE):
    """Four raw uint64 words per stream for one counter block.

    streams may be a scalar or array; returns arrays shaped like streams.
    """
    return philox4x64(
        (np.uint64(block), np.uint64(domain), np.uint64(0), np.uint64(0)),
        (np.uint64(seed), np.asarray(streams, dtype=np.uint64)),
    )


def uniform_open(raw):
    """Map raw uint64 words to (0, 1]: ((r >> 11) + 1) * 2^-53."""
    return ((raw >> _SHIFT11) + _ONE64) * _U53


def uniform_halfopen(raw):
    """Map raw uint64 words to [0, 1): (r >> 11) * 2^-53."""
    return (raw >> _SHIFT11) * _U53


def gaussian_block(seed: int, streams, block, domain: int = DOMAIN_NOISE):
    """Four standard Gaussians per stream from one philox block.

    Returns an array of shape streams.shape + (4,), Gaussians in index order
    4*block .. 4*block + 3.
    """
    r0, r1, r2, r3 = raw_block(seed, streams, block, domain)
    rad0 = np.sqrt(-2.0 * np.log(uniform_open(r0)))
    ang0 = 2.0 * np.pi * uniform_halfopen(r1)
    rad1 = np.sqrt(-2.0 * np.log(uniform_open(r2)))
    ang1 = 2.0 * np.pi * uniform_halfopen(r3)
    out = np.empty(np.shape(rad0) + (4,), dtype=np.float64)
    out[..., 0] = rad0 * np.cos(ang0)
    out[..., 1] = rad0 * np.sin(ang0)
    out[..., 2] = rad1 * np.cos(ang1)
    out[..., 3] = rad1 * np.sin(ang1)
    return out


def gaussians(seed: int, streams, start: int, count: int,
              domain: int = DOMAIN_NOISE):
    """Gaussians with indices start .. start+count-1 for each stream.

    Generic (unaligned) access: whole blocks are generated and sliced, so any
    (start, count) window agrees with blockwise generation bit for bit.
    Returns shape streams.shape + (count,).
    """
    if count == 0:
        shape = np.shape(np.asarray(streams))
        return np.empty(shape + (0,), dtype=np.float64)
    first = start // GAUSSIANS_PER_BLOCK
    last = (start + count - 1) // GAUSSIANS_PER_BLOCK
    chunks = [
        gaussian_block(seed, streams, blk, domain)
        for blk in range(first, last + 1)
    ]
    flat = np.concatenate(chunks, axis=-1)
    lo = start - first * GAUSSIANS_PER_BLOCK
    return flat[..., lo:lo + count]


def uniforms(seed: int, streams, start: int, count: int,
             domain: int = DOMAIN_SHIFT):
    """Half-open uniforms with indices start .. start+count-1 per stream.

    Uniform index u maps to philox block u // 4, lane u % 4.
    """
    if count == 0:
        shape = np.shape(np.asarray(streams))
        return np.empty(shape + (0,), dtype=np.float64)
    first = start // 4
    last = (start + count - 1) // 4
    cols = []
    for blk in range(first, last + 1):
        lanes = raw_block(seed, streams, blk, domain)
        cols.append(np.stack(lanes, axis=-1))
    flat = np.concatenate(cols, axis=-1)
    lo = start - first * 4
    return uniform_halfopen(flat[..., lo:lo + count])


@dataclass(frozen=True)
class NoiseStream:
    """Addressable noise source: one (seed, stream) pair.

    Thin convenience wrapper over the module functions; carries no mutable
    state, so it is safe to share across threads.
    """

    seed: int
    stream: int

    def gaussians(self, start: int, count: int,
                  domain: int = DOMAIN_NOISE) -> np.ndarray:
        return gaussians(self.seed, self.stream, start, count, domain)

    def uniforms(self, start: int, count: int,
                 domain: int = DOMAIN_SHIFT) -> np.ndarray:
        return uniforms(self.seed, self.stream, start, count, domain)
