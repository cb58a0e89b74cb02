"""Counter-mode RNG: keyed-permutation correctness and addressability.

The whole reproducibility story rests on draws being pure functions of
(seed, stream, index), so these tests check the Philox block function
against numpy's implementation bit for bit and then the slicing algebra
of the addressed uniform/gaussian readers.
"""

import numpy as np
import pytest

from residiff import rng


def test_philox_matches_numpy_blocks():
    # numpy's random_raw emits the block for counter + 1 (pre-increment).
    cases = [
        ((0, 0, 0, 0), (0, 0)),
        ((12345, 678, 0, 2 ** 62), (42, 7)),
        ((2 ** 62, 5, 6, 7), (2 ** 62 - 1, 1)),
    ]
    for counter, key in cases:
        ref = np.random.Philox(counter=counter, key=key).random_raw(4)
        bumped = (np.uint64((counter[0] + 1) % 2 ** 64),) + tuple(
            np.uint64(c) for c in counter[1:])
        mine = rng.philox4x64(bumped, tuple(np.uint64(k) for k in key))
        assert all(int(a) == int(b) for a, b in zip(mine, ref))


def test_philox_vectorizes_over_streams():
    streams = np.arange(7, dtype=np.uint64)
    w0, w1, w2, w3 = rng.raw_block(3, streams, block=2)
    for j, s in enumerate(streams):
        s0, s1, s2, s3 = rng.raw_block(3, s, block=2)
        assert (int(w0[j]), int(w1[j]), int(w2[j]), int(w3[j])) == (
            int(s0), int(s1), int(s2), int(s3))


def test_uniforms_are_addressed_not_streamed():
    streams = np.arange(5, dtype=np.uint64)
    full = rng.uniforms(11, streams, 0, 12)
    part = rng.uniforms(11, streams, 4, 5)
    assert np.array_equal(full[:, 4:9], part)


def test_gaussians_are_addressed_not_streamed():
    streams = np.arange(4, dtype=np.uint64)
    full = rng.gaussians(7, streams, 0, 10)
    part = rng.gaussians(7, streams, 3, 4)
    assert np.array_equal(full[:, 3:7], part)


def test_domains_do_not_collide():
    streams = np.arange(6, dtype=np.uint64)
    a = rng.uniforms(5, streams, 0, 8, rng.DOMAIN_INIT)
    b = rng.uniforms(5, streams, 0, 8, rng.DOMAIN_SHIFT)
    assert not np.array_equal(a, b)


def test_seed_and_stream_separation():
    streams = np.arange(3, dtype=np.uint64)
    assert not np.array_equal(rng.uniforms(1, streams, 0, 4),
                              rng.uniforms(2, streams, 0, 4))
    one = rng.uniforms(1, np.uint64(0), 0, 64)
    two = rng.uniforms(1, np.uint64(1), 0, 64)
    assert not np.array_equal(one, two)


def test_uniform_ranges():
    streams = np.arange(16, dtype=np.uint64)
    u = rng.uniforms(0, streams, 0, 256)
    assert u.min() >= 0.0 and u.max() < 1.0
    v = rng.uniform_open(rng.raw_block(0, streams, 0)[0])
    assert v.min() > 0.0 and v.max() <= 1.0  # (0, 1]: safe under log


def test_gaussian_moments():
    streams = np.arange(64, dtype=np.uint64)
    g = rng.gaussians(9, streams, 0, 512)
    n = g.size
    assert abs(g.mean()) < 5 / np.sqrt(n)
    assert abs(g.var() - 1.0) < 5 * np.sqrt(2 / n)


def test_noise_stream_reads_single_stream():
    ns = rng.NoiseStream(seed=13, stream=2)
    block = ns.gaussians(0, 6)
    again = ns.gaussians(2, 2)
    assert np.array_equal(block[2:4], again)
    ref = rng.gaussians(13, np.uint64(2), 0, 6)
    assert np.array_equal(block, ref)
