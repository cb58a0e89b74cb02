"""Cylinder geometry, expansion times, and exact crossing enumeration.

The expansion time theta(x) counts iterates until the surrounding
cylinder's volume drops to eps^d; for the doubling map volumes halve per
step, so theta is constant and known in closed form -- those values
anchor the checks here.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from residiff import cylinders, maps
from residiff.errors import (HypothesisViolated, NonpositiveEpsilon,
                             SymbolOutOfRange, TreeBudgetExceeded)


def test_check_eps_domain():
    assert cylinders.check_eps(0.25) == Fraction(1, 4)
    with pytest.raises(NonpositiveEpsilon):
        cylinders.check_eps(0.0)
    with pytest.raises(NonpositiveEpsilon):
        cylinders.check_eps(-0.1)
    with pytest.raises(HypothesisViolated):
        cylinders.check_eps(1.5)


def test_doubling_expansion_time_values():
    # 2^-m <= eps: first m is 4 at 0.1, 5 at 0.05, 6 at 0.02, at every x
    m = maps.doubling_map()
    for x in (0.05, 0.3, 0.5, 0.9):
        assert cylinders.expansion_time(m, x, 0.1) == 4
        assert cylinders.expansion_time(m, x, 0.05) == 5
        assert cylinders.expansion_time(m, x, 0.02) == 6


def test_expansion_time_bounds():
    # d ln(eps)/ln|E_1| <= theta < d ln(eps)/ln|E_M| + 1
    m = maps.doubling_map()
    lo, hi = cylinders.expansion_time_bounds(m, 0.1)
    assert math.isclose(lo, math.log(0.1) / math.log(0.5))
    assert math.isclose(hi, lo + 1)
    assert lo <= 4 < hi


def test_thirds_expansion_time_within_bounds():
    m = maps.thirds_map()
    lo, hi = cylinders.expansion_time_bounds(m, 0.1)
    seen = set()
    for x in np.linspace(0.01, 0.99, 37):
        t = cylinders.expansion_time(m, float(x), 0.1)
        assert lo <= t < hi
        seen.add(t)
    assert len(seen) > 1  # uneven branches make theta genuinely x-dependent


def test_locate_cylinder_is_first_small_cylinder():
    m = maps.thirds_map()
    eps = 0.1
    for x in (0.05, 0.2, 0.5, 0.95):
        cube, symbols = cylinders.locate_cylinder(m, x, eps)
        geom = cylinders.cylinder_geometry(m, cube, symbols)
        assert geom.contains(x)
        assert geom.volume <= Fraction(1, 10)
        parent = cylinders.cylinder_geometry(m, cube, symbols[:-1])
        assert parent.volume > Fraction(1, 10)


def test_cylinder_geometry_doubling():
    m = maps.doubling_map()
    geom = cylinders.cylinder_geometry(m, 0, (1, 2))
    # symbols name the cells the orbit visits; (1, 2) pins x in [1/4, 1/2)
    assert geom.side == Fraction(1, 4)
    assert geom.corner == (Fraction(1, 4),)
    assert geom.contains(0.3) and not geom.contains(0.6)
    assert geom.depth == 2 and geom.volume == Fraction(1, 4)


def test_cylinder_symbol_range():
    m = maps.doubling_map()
    with pytest.raises(SymbolOutOfRange):
        cylinders.cylinder_geometry(m, 0, (3,))


def test_shift_and_side_bookkeeping():
    m = maps.doubling_map()
    cube, rest = cylinders.shift_tuple(m, 0, (2, 1, 2))
    assert rest == (1, 2)
    assert cube == cylinders.end_cube(m, 0, (2,))
    assert cylinders.tuple_side(m, (2, 1, 2)) == Fraction(1, 8)


def test_mean_expansion_time_doubling_exact():
    m = maps.doubling_map()
    mt = cylinders.mean_expansion_time(m, 0.1, mode="exact")
    assert mt.exact == 4 and mt.value == 4.0


def test_mean_expansion_time_mc_agrees_with_exact():
    m = maps.thirds_map()
    exact = cylinders.mean_expansion_time(m, 0.1, mode="exact")
    mc = cylinders.mean_expansion_time(m, 0.1, mode="montecarlo",
                                       samples=20000, seed=3)
    assert abs(mc.value - exact.value) <= 4 * mc.standard_error


def test_crossing_tuples_total_probability():
    for m in (maps.doubling_map(), maps.thirds_map()):
        total = Fraction(0)
        lengths = set()
        for symbols, prob in cylinders.crossing_tuples(m, 0.1):
            total += prob
            lengths.add(len(symbols))
        assert total == 1
        if m.n_cells == 2 and m.volumes[0] == m.volumes[1]:
            assert lengths == {4}


def test_scale_partition_tiles_the_cube():
    m = maps.doubling_map()
    parts = cylinders.enumerate_scale_partition(m, 0.1)
    assert len(parts) == 16
    corners = sorted(p.corner[0] for p in parts)
    assert corners == [Fraction(i, 16) for i in range(16)]
    assert all(p.side == Fraction(1, 16) for p in parts)


def test_tree_budget_guard():
    with pytest.raises(TreeBudgetExceeded):
        list(cylinders.crossing_tuples(maps.thirds_map(), 0.01, budget=10))
