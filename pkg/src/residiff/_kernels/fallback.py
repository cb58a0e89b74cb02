"""Vectorized numpy stepping kernel: reference implementation.

Same contract as the compiled kernel in _mc.pyx; see that module for the
noise addressing scheme.  Raw Philox words are bit-identical between the
two, Gaussians and positions agree to transcendental-rounding tolerance
(exactly, for eps = 0).
"""

from __future__ import annotations

import numpy as np

from .. import rng

GUARD = 1e-12


def philox_probe(seed, stream, block, domain=0):
    r = rng.raw_block(seed, np.uint64(stream), block, domain)
    return tuple(int(v) for v in r)


def gaussian_probe(seed, stream, block, domain=0):
    g = rng.gaussian_block(seed, np.uint64(stream), block, domain)
    return tuple(float(v) for v in g)


def step_block_d1(x0, eps, n_steps, snaps, seed, stream0,
                  corners, slopes, offs, out):
    """Step a block of d = 1 trajectories; see _mc.step_block_d1."""
    x = np.array(x0, dtype=np.float64, copy=True)
    B = x.shape[0]
    streams = np.uint64(stream0) + np.arange(B, dtype=np.uint64)
    noisy = eps != 0.0
    si = 0
    n_snap = len(snaps)
    g4 = None
    for step in range(n_steps):
        if noisy and (step & 3) == 0:
            g4 = rng.gaussian_block(seed, streams, step >> 2,
                                    rng.DOMAIN_NOISE)
        n = np.floor(x)
        u = x - n
        over = u >= 1.0
        if over.any():
            n = n + over
            u = np.where(over, 0.0, u)
        ug = u + GUARD
        carry = ug >= 1.0
        if carry.any():
            n = n + carry
            u = np.where(carry, 0.0, u)
            ug = np.where(carry, GUARD, ug)
        j = np.searchsorted(corners, ug, side="right") - 1
        x = n + (offs[j] + slopes[j] * u)
        if noisy:
            x = x + eps * g4[:, step & 3]
        if si < n_snap and step + 1 == snaps[si]:
            out[:, si] = x
            si += 1
    return 0
