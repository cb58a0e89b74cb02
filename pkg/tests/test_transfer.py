"""Ulam discretization, corrector solve, and grid variance rate.

With a near-zero noise width every quadrature subsample lands a full
Gaussian mass in a single target cell, so the doubling-map kernel on a
coarse grid is exactly the half-half cell-splitting matrix -- an
independent closed form for the discretization.  The variance-rate
checks cross-validate against the exact-chain oracle built from the
same kernel entries.
"""

import numpy as np
import pytest

from residiff import maps, oracle, transfer
from residiff.errors import (ConfigError, MissingCorrector,
                             NoMixingWithinCap, NonpositiveEpsilon,
                             SeriesDivergence, UnsupportedDimension)


@pytest.fixture(scope="module")
def doubling_kernel():
    m = maps.doubling_map()
    return transfer.build_displacement_kernel(m, 0.1, transfer.UlamGrid(1, 128))


@pytest.fixture(scope="module")
def tiny_eps_kernel():
    # eps = 1e-9 puts every subsample >1e7 sigmas inside its target cell,
    # so the CDF differences saturate and the kernel is exact.
    m = maps.doubling_map()
    return transfer.build_displacement_kernel(m, 1e-9, transfer.UlamGrid(1, 8))


def test_ulam_grid_basics():
    g = transfer.UlamGrid.default(1)
    assert (g.d, g.G, g.S) == (1, 1024, 1024)
    g2 = transfer.UlamGrid.default(2)
    assert (g2.d, g2.G, g2.S) == (2, 16, 256)
    assert g2.centers.shape == (256, 2)
    assert g.h == 1.0 / 1024
    # wrapping and row-major flat indexing
    assert transfer.UlamGrid(1, 8).cell_of([-0.1])[0] == 7
    assert transfer.UlamGrid(2, 4).cell_of([[0.3, 0.8]])[0] == 1 * 4 + 3
    with pytest.raises(UnsupportedDimension):
        transfer.UlamGrid(3, 8)
    with pytest.raises(ConfigError):
        transfer.UlamGrid(1, 0)


def test_build_kernel_validation():
    m = maps.doubling_map()
    with pytest.raises(NonpositiveEpsilon):
        transfer.build_displacement_kernel(m, 0.0)
    with pytest.raises(ConfigError):
        transfer.build_displacement_kernel(m, 0.1, transfer.UlamGrid(1, 4))
    with pytest.raises(ConfigError):
        transfer.build_displacement_kernel(m, 0.1, transfer.UlamGrid(2, 16))
    with pytest.raises(ConfigError):
        transfer.build_displacement_kernel(m, 0.1, tail_tol=1.5)


def test_tiny_eps_doubling_kernel_is_exact(tiny_eps_kernel):
    k = tiny_eps_kernel
    G = 8
    P = k.torus_matrix
    expected = np.zeros((G, G))
    for g in range(G):
        expected[g, (2 * g) % G] = 0.5
        expected[g, (2 * g + 1) % G] = 0.5
    assert np.array_equal(P, expected)
    # unit jump exactly on the upper half (2u >= 1), none on the lower
    j1 = k.jump_index([1])
    assert np.array_equal(k.blocks[j1].sum(axis=1),
                          np.r_[np.zeros(4), np.ones(4)])
    assert sorted(map(tuple, k.jumps)) == [(0,), (1,)]
    # drift of the doubling lift is phi(x) - x = x, exactly the centers
    assert np.array_equal(k.mean_displacement()[:, 0], k.grid.centers[:, 0])
    # hand value: cell 6 -> targets 1.5625, 1.6875 from center 0.8125
    assert k.second_moment()[6] == 0.75 ** 2 / 2 + 0.875 ** 2 / 2


def test_rows_stochastic_columns_near(doubling_kernel):
    assert doubling_kernel.row_sum_error() <= 1e-14
    assert doubling_kernel.column_sum_error() <= 5.0 / 128
    assert np.all(doubling_kernel.blocks >= 0.0)


def test_corrector_modes_agree(doubling_kernel):
    lin = transfer.corrector_solve(doubling_kernel, mode="linear")
    ser = transfer.corrector_solve(doubling_kernel, mode="series", tol=1e-10)
    assert np.abs(lin.chi - ser.chi).max() <= 10 * 1e-10
    assert abs(lin.chi.mean()) <= 1e-12 and abs(ser.chi.mean()) <= 1e-12
    assert lin.residual <= 1e-12 and ser.residual <= 1e-10
    with pytest.raises(ConfigError):
        transfer.corrector_solve(doubling_kernel, mode="cg")


def test_series_divergence_on_permutation_chain():
    # cyclic shift is an L2 isometry: the Poisson series never contracts
    grid = transfer.UlamGrid(1, 8)
    blocks = np.roll(np.eye(8), 1, axis=1)[None]
    k = transfer.DisplacementKernel(grid, [[0]], blocks)
    with pytest.raises(SeriesDivergence):
        transfer.corrector_solve(k, mode="series", tol=1e-10, cap=200)


def test_kv_rate_matches_exact_chain_oracle(doubling_kernel):
    corr = transfer.corrector_solve(doubling_kernel)
    rate = transfer.kv_rate(doubling_kernel, corr, [1.0])
    spec = oracle.build_spec_from_map(maps.doubling_map(), 0.1, 128)
    rep = oracle.exact_variance_rate_dual(spec, [1.0])
    assert abs(rate - rep.rate_A) <= 1e-10


def test_kv_rate_argument_validation(doubling_kernel):
    corr = transfer.corrector_solve(doubling_kernel)
    with pytest.raises(ConfigError):
        transfer.kv_rate(doubling_kernel, corr, [1.0, 2.0])
    with pytest.raises(MissingCorrector):
        transfer.kv_rate(doubling_kernel, "chi", [1.0])
    other = transfer.corrector_solve(
        transfer.build_displacement_kernel(maps.doubling_map(), 0.1,
                                           transfer.UlamGrid(1, 16)))
    with pytest.raises(MissingCorrector):
        transfer.kv_rate(doubling_kernel, other, [1.0])


def test_mixing_time_modes_and_validation(doubling_kernel):
    t_it = transfer.mixing_time(doubling_kernel, mode="iterate")
    t_pw = transfer.mixing_time(doubling_kernel, mode="power")
    assert t_it == t_pw >= 1
    with pytest.raises(ConfigError):
        transfer.mixing_time(doubling_kernel, threshold=0.0)
    with pytest.raises(ConfigError):
        transfer.mixing_time(doubling_kernel, threshold=2.5)
    with pytest.raises(ConfigError):
        transfer.mixing_time(doubling_kernel, cap=0)
    with pytest.raises(ConfigError):
        transfer.mixing_time(doubling_kernel, mode="bisect")
    with pytest.raises(ConfigError):
        transfer.mixing_time(np.ones((3, 4)))


def test_mixing_time_cap_both_modes():
    for mode in ("iterate", "power"):
        with pytest.raises(NoMixingWithinCap):
            transfer.mixing_time(np.eye(16), cap=50, mode=mode)


def test_l1_uniform_distance_closed_forms():
    assert transfer.l1_uniform_distance(np.full((5, 5), 0.2)) == 0.0
    assert transfer.l1_uniform_distance(np.eye(5)) == 2.0 - 2.0 / 5.0


def test_cov_decay_bound(doubling_kernel):
    for n in (0, 1, 3, 6):
        lhs, rhs = transfer.cov_decay_check(doubling_kernel, 2, n, [1.0])
        assert lhs <= rhs + 1e-14
    lhs1, _ = transfer.cov_decay_check(doubling_kernel, 2, 1, [1.0])
    lhs3, _ = transfer.cov_decay_check(doubling_kernel, 2, 3, [1.0])
    assert lhs3 < lhs1  # geometric decay in the gap length
    with pytest.raises(ConfigError):
        transfer.cov_decay_check(doubling_kernel, -1, 0, [1.0])


def test_corrected_moments_variance_identity(doubling_kernel):
    corr = transfer.corrector_solve(doubling_kernel)
    mom = transfer.corrected_coordinate_moments(doubling_kernel, corr, [1.0],
                                                50, start=3)
    assert abs(mom.variance - mom.kv_sum) <= 1e-8
    mom0 = transfer.corrected_coordinate_moments(doubling_kernel, corr, [1.0],
                                                 0, start=3)
    assert mom0.variance == 0.0 and mom0.kv_sum == 0.0
    with pytest.raises(ConfigError):
        transfer.corrected_coordinate_moments(doubling_kernel, corr, [1.0],
                                              -1)
    with pytest.raises(ConfigError):
        transfer.corrected_coordinate_moments(doubling_kernel, corr, [1.0],
                                              5, start=128)


def test_kernel_binary_roundtrip(tiny_eps_kernel, tmp_path):
    path = tmp_path / "kern.rdk"
    tiny_eps_kernel.save_binary(path)
    back = transfer.DisplacementKernel.load_binary(path)
    assert np.array_equal(back.jumps, tiny_eps_kernel.jumps)
    assert np.array_equal(back.blocks, tiny_eps_kernel.blocks)
    assert back.eps == tiny_eps_kernel.eps
    assert back.tail_tol == tiny_eps_kernel.tail_tol
    bad = tmp_path / "junk.rdk"
    bad.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ConfigError):
        transfer.DisplacementKernel.load_binary(bad)


def test_kernel_text_roundtrip(tiny_eps_kernel, tmp_path):
    path = tmp_path / "kern.txt"
    tiny_eps_kernel.save_text(path)
    back = transfer.DisplacementKernel.load_text(path)
    assert np.array_equal(back.jumps, tiny_eps_kernel.jumps)
    assert np.array_equal(back.blocks, tiny_eps_kernel.blocks)  # %.17g is lossless
    missing = tmp_path / "nohdr.txt"
    missing.write_text("# columns: g gp j q\n0 0 0 1.0\n")
    with pytest.raises(ConfigError):
        transfer.DisplacementKernel.load_text(missing)


def test_thread_count_does_not_change_kernel():
    m = maps.thirds_map()
    grid = transfer.UlamGrid(1, 64)
    k1 = transfer.build_displacement_kernel(m, 0.1, grid, threads=1)
    k4 = transfer.build_displacement_kernel(m, 0.1, grid, threads=4)
    assert np.array_equal(k1.blocks, k4.blocks)
    assert np.array_equal(k1.jumps, k4.jumps)


def test_two_dimensional_quadrant_kernel():
    m = maps.quadrant_map()
    k = transfer.build_displacement_kernel(m, 0.1)
    assert k.d == 2 and k.S == 256
    assert k.row_sum_error() <= 1e-14
    assert k.mean_displacement().shape == (256, 2)
    assert transfer.mixing_time(k) <= 10
    corr = transfer.corrector_solve(k)
    assert corr.residual <= 1e-12
    rate = transfer.kv_rate(k, corr, [1.0, 0.0])
    assert rate > 0.0
    mom = transfer.corrected_coordinate_moments(k, corr, [1.0, 0.0], 30)
    assert abs(mom.variance - mom.kv_sum) <= 1e-8
