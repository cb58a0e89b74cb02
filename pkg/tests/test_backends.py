"""Compiled stepping kernel vs pure-Python fallback.

The integer philox layer and noise-free stepping must agree bit for bit
(the extension is compiled without FMA contraction).  Gaussian draws may
differ by 1-2 ulp on rare values (C libm vs numpy vectorized
transcendentals), and expanding dynamics amplify ulps, so noisy
trajectories are compared statistically and at a one-step horizon only.
"""

import math

import numpy as np
import pytest

from residiff import _kernels, maps, process

HAVE_COMPILED = "cython" in _kernels.available_backends()

needs_compiled = pytest.mark.skipif(
    not HAVE_COMPILED, reason="compiled kernel not built")


def test_fallback_always_available():
    backs = _kernels.available_backends()
    assert "python" in backs
    assert _kernels.get_backend("python") is backs["python"]


def test_unknown_backend_rejected():
    with pytest.raises(KeyError):
        _kernels.get_backend("nope")


@needs_compiled
def test_philox_probe_matches():
    fast = _kernels.get_backend("cython")
    slow = _kernels.get_backend("python")
    for seed, stream, block in ((0, 0, 0), (123, 5, 2), (2 ** 63, 9, 17)):
        assert fast.philox_probe(seed, stream, block) == \
            slow.philox_probe(seed, stream, block)


@needs_compiled
def test_gaussian_probe_matches_within_transcendental_rounding():
    fast = _kernels.get_backend("cython")
    slow = _kernels.get_backend("python")
    for stream in range(256):
        a = fast.gaussian_probe(7, stream, 0)
        b = slow.gaussian_probe(7, stream, 0)
        for x, y in zip(a, b):
            assert abs(x - y) <= 2 * math.ulp(max(abs(x), abs(y)))


def test_backend_aliases_resolve():
    assert _kernels.get_backend("fallback") is _kernels.get_backend("python")
    assert _kernels.get_backend("numpy") is _kernels.get_backend("python")


@needs_compiled
def test_noise_free_stepping_bitwise_identical():
    m = maps.thirds_map()
    x0 = np.linspace(0.01, 0.99, 257)
    snaps = np.array([1, 5, 20, 64], dtype=np.int64)
    outs = {}
    for name in ("cython", "python"):
        kern = _kernels.get_backend(name)
        out = np.empty((x0.size, snaps.size))
        kern.step_block_d1(x0.copy(), 0.0, 64, snaps, 99, 0,
                           m.pos_corner, m.pos_slope, m.pos_off, out)
        outs[name] = out
    assert np.array_equal(outs["cython"], outs["python"])


@needs_compiled
def test_noisy_single_step_within_ulps():
    # one step = affine update + eps * gaussian; before chaos amplifies
    # anything the backends can only disagree on the gaussian's last bits
    m = maps.doubling_map()
    x0 = np.linspace(0.01, 0.99, 257)
    snaps = np.array([1], dtype=np.int64)
    outs = {}
    for name in ("cython", "python"):
        kern = _kernels.get_backend(name)
        out = np.empty((x0.size, 1))
        kern.step_block_d1(x0.copy(), 0.1, 1, snaps, 99, 0,
                           m.pos_corner, m.pos_slope, m.pos_off, out)
        outs[name] = out
    gap = np.abs(outs["cython"] - outs["python"]).max()
    assert gap <= 4 * math.ulp(2.0)


@needs_compiled
def test_ensemble_noise_free_moments_backend_invariant():
    m = maps.thirds_map()
    x0 = np.linspace(0.005, 0.995, 4096)
    a = process.simulate_ensemble(m, x0, 0.0, 40, 4096, seed=5,
                                  backend="cython")
    b = process.simulate_ensemble(m, x0, 0.0, 40, 4096, seed=5,
                                  backend="python")
    assert a.backend == "cython" and b.backend == "python"
    assert np.array_equal(a.at(40).mean, b.at(40).mean)
    assert np.array_equal(a.at(40).cov, b.at(40).cov)


@needs_compiled
def test_ensemble_noisy_moments_statistically_equivalent():
    m = maps.thirds_map()
    a = process.simulate_ensemble(m, "uniform", 0.05, 40, 8192, seed=5,
                                  backend="cython")
    b = process.simulate_ensemble(m, "uniform", 0.05, 40, 8192, seed=5,
                                  backend="python")
    sa, sb = a.at(40), b.at(40)
    # same seed, same addressed draws up to ulps: far closer than 1 SE
    assert abs(sa.mean[0] - sb.mean[0]) < 0.1 * sa.mean_se[0]
    assert abs(sa.cov[0, 0] - sb.cov[0, 0]) < 0.1 * sa.cov_se[0, 0]
