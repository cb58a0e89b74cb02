"""Exact lattice laws, stopped-walk covariance, and the MC rate sweep.

All closed forms here are derived by hand from the cell volumes and
targets: one-step laws are |E_i|-weighted target jumps, the doubling
stopped law is Binomial(theta + 1, 1/2), and the thirds map at eps = 1/2
is small enough to enumerate (crossing tuples (1), (2,1), (2,2)).
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from residiff import cylinders, diffusivity, maps
from residiff.diffusivity import LatticeDistribution
from residiff.errors import BoundViolation, ConfigError


def test_one_step_law_doubling():
    dist = diffusivity.one_step_cube_distribution(maps.doubling_map())
    assert dist.exact
    assert dist.as_dict() == {(0,): Fraction(1, 2), (1,): Fraction(1, 2)}
    assert dist.mean()[0] == Fraction(1, 2)


def test_one_step_law_thirds():
    dist = diffusivity.one_step_cube_distribution(maps.thirds_map())
    assert dist.as_dict() == {(0,): Fraction(1, 3), (1,): Fraction(2, 3)}


def test_one_step_law_constant_target_degenerate():
    dist = diffusivity.one_step_cube_distribution(maps.constant_target_map())
    assert dist.as_dict() == {(0,): Fraction(1)}
    assert diffusivity.D_w0(maps.constant_target_map())[0, 0] == 0


def test_one_step_law_quadrant_and_base():
    m = maps.quadrant_map()
    dist = diffusivity.one_step_cube_distribution(m)
    assert set(dist.points) == {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert all(p == Fraction(1, 4) for p in dist.probs)
    shifted = diffusivity.one_step_cube_distribution(m, base=[2, -1])
    assert shifted.prob((3, 0)) == Fraction(1, 4)
    # integer base broadcasts across axes
    again = diffusivity.one_step_cube_distribution(m, base=2)
    assert again.prob((2, 2)) == Fraction(1, 4)


def test_D_w0_exact_values():
    assert diffusivity.D_w0(maps.doubling_map())[0, 0] == Fraction(1, 4)
    assert diffusivity.D_w0(maps.thirds_map())[0, 0] == Fraction(2, 9)
    q = diffusivity.D_w0(maps.quadrant_map())
    assert q[0, 0] == q[1, 1] == Fraction(1, 4)
    assert q[0, 1] == q[1, 0] == 0


def test_stopped_law_doubling_is_binomial():
    # theta = 4 at eps = 0.1, so the stopped walk takes 5 fair steps
    dist = diffusivity.w_check_distribution(maps.doubling_map(), 0, 0.1)
    assert dist.exact
    assert dist.points == tuple((k,) for k in range(6))
    for k in range(6):
        assert dist.prob((k,)) == Fraction(math.comb(5, k), 2 ** 5)
    assert dist.covariance()[0, 0] == Fraction(5, 4)


def test_D_w_check_doubling_exact():
    assert diffusivity.D_w_check(maps.doubling_map(), 0.1)[0, 0] == Fraction(5, 4)


def test_D_w_check_is_the_product_form():
    m = maps.thirds_map()
    theta_bar = cylinders.mean_expansion_time(m, 0.1, mode="exact").exact
    got = diffusivity.D_w_check(m, 0.1)[0, 0]
    assert got == (1 + theta_bar) * Fraction(2, 9)


def test_stopped_law_wald_correction_regression():
    # Unequal volumes with nonzero mean jump: the product form and the
    # true stopped covariance differ.  thirds at eps = 1/2 enumerates to
    # tuples (1), (2,1), (2,2); theta_bar = 5/3; stopped law has
    # covariance 80/81 while (1 + theta_bar) * D_w0 = 16/27 = 48/81.
    m = maps.thirds_map()
    dist = diffusivity.w_check_distribution(m, 0, 0.5)
    assert dist.as_dict() == {(0,): Fraction(1, 9), (1,): Fraction(8, 27),
                              (2,): Fraction(8, 27), (3,): Fraction(8, 27)}
    assert dist.covariance()[0, 0] == Fraction(80, 81)
    assert diffusivity.D_w_check(m, 0.5)[0, 0] == Fraction(16, 27)
    assert cylinders.mean_expansion_time(m, 0.5, mode="exact").exact == Fraction(5, 3)


def test_stopped_law_montecarlo_agrees_with_exact():
    m = maps.doubling_map()
    exact = diffusivity.w_check_distribution(m, 0, 0.1)
    mc = diffusivity.w_check_distribution(m, 0, 0.1, mode="montecarlo",
                                          samples=200_000, seed=5)
    assert not mc.exact
    worst = max(abs(float(exact.prob(p)) - mc.prob(p)) for p in exact.points)
    assert worst <= 0.005  # ~4.5 binomial SEs at 2e5 samples
    with pytest.raises(ConfigError):
        diffusivity.w_check_distribution(m, 0, 0.1, mode="sampled")


def test_stopped_law_base_cube_only_shifts():
    m = maps.doubling_map()
    at0 = diffusivity.w_check_distribution(m, 0, 0.1)
    at3 = diffusivity.w_check_distribution(m, 3.7, 0.1)
    assert at3.as_dict() == at0.translated(3).as_dict()


def test_lattice_distribution_validation():
    with pytest.raises(ConfigError):
        LatticeDistribution(((0,), (1,)), (Fraction(1),))
    with pytest.raises(ConfigError):
        LatticeDistribution(((0,), (0,)), (Fraction(1, 2), Fraction(1, 2)))
    with pytest.raises(ConfigError):
        LatticeDistribution(((0,), (1,)), (0.7, 0.4))
    with pytest.raises(ConfigError):
        LatticeDistribution(((0,), (1,)), (Fraction(3, 2), Fraction(-1, 2)))
    dist = LatticeDistribution(((0,), (2,)), (Fraction(1, 4), Fraction(3, 4)))
    assert dist.prob((1,)) == Fraction(0) and isinstance(dist.prob((1,)), Fraction)
    assert dist.translated([-2]).points == ((-2,), (0,))
    with pytest.raises(ConfigError):
        dist.translated([1, 1])


def test_variance_rate_mc_validation():
    m = maps.doubling_map()
    with pytest.raises(ConfigError):
        diffusivity.variance_rate_mc(m, 0.1, [1.0], 1, 4096, seed=0)
    with pytest.raises(ConfigError):
        diffusivity.variance_rate_mc(m, 0.1, [1.0], 16, 100, seed=0)


def test_residual_sweep_report():
    m = maps.doubling_map()
    rep = diffusivity.residual_sweep(m, [0.2, 0.1], [1.0], n=256,
                                     trajectories=4096, seed=3)
    assert [r.eps for r in rep.rows] == [0.2, 0.1]
    base = 0.25  # v . D_w0 . v for the doubling map
    for r in rep.rows:
        assert r.lower_bound == rep.c_floor * base
        assert r.c_emp == r.rate / base
        assert r.rate >= r.lower_bound
        assert r.rate <= r.envelope + 1e-12
        assert abs(r.rate - r.kv_rate) <= 4 * r.rate_se
        assert r.t_mix >= 1
    csv_text = rep.to_csv()
    lines = csv_text.splitlines()
    assert lines[0] == ",".join(rep.CSV_COLUMNS)
    assert len(lines) == 3 and csv_text.endswith("\n")


def test_residual_sweep_validation_and_floor():
    m = maps.doubling_map()
    with pytest.raises(ConfigError):
        diffusivity.residual_sweep(m, [0.1, 0.2], [1.0], n=64,
                                   trajectories=4096)
    with pytest.raises(ConfigError):
        diffusivity.residual_sweep(m, [1.5], [1.0], n=64, trajectories=4096)
    with pytest.raises(BoundViolation):
        diffusivity.residual_sweep(m, [0.2, 0.1], [1.0], n=256,
                                   trajectories=4096, seed=3, c_floor=10.0)
