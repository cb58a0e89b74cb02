"""Symbolic cylinders and expansion times of the deterministic dynamics.

A symbol tuple s = (s_0, ..., s_{m-1}) with entries in 1..M names the points
of a cube whose first m itinerary cells are s: the cylinder C_{k,s} is the
half-open sub-cube of Q_k on which the j-th iterate lies in cell s_j (mod the
lattice).  Its side is the exact rational

    l_s = side(s_0) * ... * side(s_{m-1}),

the one-step shift acts by sigma(k, s) = (k + target(s_0), s[1:]), and the
end cube after m steps is J(k, s) = k + sum_j target(s_j).

The expansion time of a point x at noise level eps in (0, 1] is the first
m >= 1 at which the accumulated derivative along the orbit phi(x), ...,
phi^m(x) reaches eps^{-d}; equivalently the length of the minimal itinerary
prefix of phi(x) (of length >= 1) whose cylinder side drops to <= eps.  All
threshold comparisons are exact rational arithmetic against Fraction(eps).

The scale-eps partition of a cube collects the minimal crossing tuples: every
tuple with l_s <= eps whose parent prefix still has l > eps (length-1 tuples
count as minimal).  Enumeration is depth-first in lexicographic symbol order,
deterministic regardless of thread count, and guarded by a node budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

from . import rng
from .errors import (
    HypothesisViolated,
    NonpositiveEpsilon,
    SymbolOutOfRange,
    TreeBudgetExceeded,
)
from .maps import BernoulliMap

DEFAULT_TREE_BUDGET = 10 ** 7


def check_eps(eps: float) -> Fraction:
    """Validate eps in (0, 1] and return it as an exact rational."""
    eps = float(eps)
    if not eps > 0.0:
        raise NonpositiveEpsilon(f"eps must be positive, got {eps!r}")
    if eps > 1.0:
        raise HypothesisViolated(f"eps must lie in (0, 1], got {eps!r}")
    return Fraction(eps)


def _check_symbols(m: BernoulliMap, symbols) -> tuple[int, ...]:
    s = tuple(int(v) for v in symbols)
    for v in s:
        if not 1 <= v <= m.n_cells:
            raise SymbolOutOfRange(
                f"symbol {v} outside 1..{m.n_cells}")
    return s


def _cube_tuple(m: BernoulliMap, cube) -> tuple[int, ...]:
    if isinstance(cube, (int, np.integer)):
        if m.d != 1:
            raise SymbolOutOfRange(
                f"cube index for a d={m.d} map must be a {m.d}-vector")
        cube = (int(cube),)
    out = tuple(int(v) for v in cube)
    if len(out) != m.d:
        raise SymbolOutOfRange(f"cube index {cube} has wrong dimension")
    return out


def _cube_out(m: BernoulliMap, cube: tuple[int, ...]):
    return cube[0] if m.d == 1 else cube


def tuple_side(m: BernoulliMap, symbols) -> Fraction:
    """Exact cylinder side l_s (1 for the empty tuple)."""
    s = _check_symbols(m, symbols)
    side = Fraction(1)
    for v in s:
        side *= m.cells[v - 1].side
    return side


def shift_tuple(m: BernoulliMap, cube, symbols):
    """One-step shift sigma(k, s) = (k + target(s_0), s[1:])."""
    k = _cube_tuple(m, cube)
    s = _check_symbols(m, symbols)
    if not s:
        raise SymbolOutOfRange("cannot shift the empty tuple")
    t = m.cells[s[0] - 1].target
    return _cube_out(m, tuple(a + b for a, b in zip(k, t))), s[1:]


def end_cube(m: BernoulliMap, cube, symbols):
    """Cube reached after |s| steps: J(k, s) = k + sum target(s_j)."""
    k = list(_cube_tuple(m, cube))
    for v in _check_symbols(m, symbols):
        t = m.cells[v - 1].target
        k = [a + b for a, b in zip(k, t)]
    return _cube_out(m, tuple(k))


@dataclass(frozen=True)
class CylinderSet:
    """Half-open cube of points in Q_k sharing the itinerary prefix s."""

    cube: tuple[int, ...]
    symbols: tuple[int, ...]
    corner: tuple[Fraction, ...]
    side: Fraction

    @property
    def depth(self) -> int:
        return len(self.symbols)

    @property
    def volume(self) -> Fraction:
        return self.side ** len(self.corner)

    def contains(self, x) -> bool:
        pt = (x,) if isinstance(x, (int, float, Fraction)) else tuple(x)
        return all(
            c <= Fraction(float(v)) < c + self.side
            for c, v in zip(self.corner, pt))


def cylinder_geometry(m: BernoulliMap, cube, symbols) -> CylinderSet:
    """Exact corner and side of C_{k,s} by pulling the child cylinder back.

    Base case: the empty tuple names the whole cube.  Otherwise the cylinder
    is the branch-s_0 preimage, inside cube k, of C_{sigma(k, s)}.
    """
    k = _cube_tuple(m, cube)
    s = _check_symbols(m, symbols)
    if not s:
        return CylinderSet(k, s, tuple(Fraction(v) for v in k), Fraction(1))
    child_cube, child_s = shift_tuple(m, k, s)
    child = cylinder_geometry(m, _cube_tuple(m, child_cube), child_s)
    cell = m.cells[s[0] - 1]
    # invert phi_{s_0} + k on the child box: u_src = sign * (y - k - o) * h
    corner = [Fraction(0)] * m.d
    for a in range(m.d):
        row = cell.matrix[a]
        src = next(j for j, v in enumerate(row) if v != 0)
        sign = row[src]
        rel_lo = child.corner[a] - k[a] - cell.offset[a]
        if sign > 0:
            corner[src] = rel_lo * cell.side
        else:
            corner[src] = -(rel_lo + child.side) * cell.side
    corner = tuple(c + Fraction(ka) for c, ka in zip(corner, k))
    return CylinderSet(k, s, corner, child.side * cell.side)


def locate_cylinder(m: BernoulliMap, x, eps: float):
    """The minimal crossing cylinder containing x: (cube, symbols).

    Returns the shortest itinerary prefix of length >= 1 whose cylinder side
    is <= eps (so the parent prefix, possibly empty, still has side > eps).
    """
    eps_frac = check_eps(eps)
    x_arr = np.asarray(x, dtype=np.float64).reshape(1, m.d)
    cube, _, _ = m.locate_batch(x_arr)
    k = tuple(int(v) for v in cube[0])
    symbols = []
    side = Fraction(1)
    y = x_arr
    max_steps = _theta_upper_bound(m, eps) + 2
    for _ in range(max_steps):
        _, cell_idx, _ = m.locate_batch(y)
        i = int(cell_idx[0])
        symbols.append(i + 1)
        side *= m.cells[i].side
        if side <= eps_frac:
            return _cube_out(m, k), tuple(symbols)
        y = m.apply_batch(y)
    raise HypothesisViolated(
        f"itinerary did not cross scale eps={eps} within {max_steps} steps")


def _theta_upper_bound(m: BernoulliMap, eps: float) -> int:
    vol_max = max(float(c.volume) for c in m.cells)
    return int(m.d * math.log(eps) / math.log(vol_max)) + 1


def expansion_time(m: BernoulliMap, x, eps: float) -> int:
    """First m >= 1 with prod_{k=1..m} |det Dphi(phi^k(x))| >= eps^{-d}.

    The product starts at the first image phi(x); comparisons are exact
    rationals, so expansion_time(x) == len(locate_cylinder(phi(x), eps)[1]).
    """
    eps_frac = check_eps(eps)
    threshold = Fraction(1) / eps_frac ** m.d
    x_arr = np.asarray(x, dtype=np.float64).reshape(1, m.d)
    y = m.apply_batch(x_arr)
    prod = Fraction(1)
    max_steps = _theta_upper_bound(m, eps) + 2
    for step in range(1, max_steps + 1):
        _, cell_idx, _ = m.locate_batch(y)
        prod *= Fraction(1) / m.cells[int(cell_idx[0])].volume
        if prod >= threshold:
            return step
        y = m.apply_batch(y)
    raise HypothesisViolated(
        f"expansion time at eps={eps} exceeded {max_steps} steps")


def expansion_time_bounds(m: BernoulliMap, eps: float) -> tuple[float, float]:
    """Deterministic two-sided bound: d ln(eps)/ln|E_1| <= theta < d ln(eps)/ln|E_M| + 1."""
    check_eps(eps)
    vol_min = float(min(c.volume for c in m.cells))
    vol_max = float(max(c.volume for c in m.cells))
    lo = m.d * math.log(eps) / math.log(vol_min)
    hi = m.d * math.log(eps) / math.log(vol_max) + 1.0
    return lo, hi


def _crossing_tuples_dfs(m: BernoulliMap, eps_frac: Fraction, budget: int):
    sides = [c.side for c in m.cells]
    counter = [0]

    def walk(prefix, side):
        for i in range(1, m.n_cells + 1):
            counter[0] += 1
            if counter[0] > budget:
                raise TreeBudgetExceeded(
                    f"crossing-tuple enumeration exceeded {budget} nodes",
                    eps=float(eps_frac), budget=budget)
            child = prefix + (i,)
            child_side = side * sides[i - 1]
            if child_side <= eps_frac:
                yield child, child_side
            else:
                yield from walk(child, child_side)

    yield from walk((), Fraction(1))


def crossing_tuples(m: BernoulliMap, eps: float,
                    budget: int = DEFAULT_TREE_BUDGET
                    ) -> Iterator[tuple[tuple[int, ...], Fraction]]:
    """Depth-first enumeration of minimal crossing tuples (s, l_s).

    Yields every tuple of length >= 1 with l_s <= eps whose parent still has
    side > eps, in lexicographic order.  The tuples' volumes l_s^d sum to 1
    exactly: under the uniform measure the itinerary symbols are i.i.d. with
    P(symbol = i) = volume(E_i), and the crossing prefix is a stopping time.
    """
    yield from _crossing_tuples_dfs(m, check_eps(eps), budget)


def enumerate_scale_partition(m: BernoulliMap, eps: float, cube=0,
                              budget: int = DEFAULT_TREE_BUDGET
                              ) -> list[CylinderSet]:
    """All minimal crossing cylinders of one cube, with exact geometry.

    The result partitions Q_cube up to boundaries: the volumes sum to 1
    exactly (asserted).
    """
    eps_frac = check_eps(eps)
    k = _cube_tuple(m, cube)
    out = [
        cylinder_geometry(m, k, s)
        for s, _ in _crossing_tuples_dfs(m, eps_frac, budget)
    ]
    total = sum(c.volume for c in out)
    if total != 1:
        raise HypothesisViolated(
            f"scale partition volumes sum to {total}, expected 1")
    return out


@dataclass(frozen=True)
class MeanExpansionTime:
    """Cube-averaged expansion time, exact or Monte-Carlo."""

    value: float
    mode: str
    exact: Fraction | None = None
    standard_error: float = 0.0
    tuples: int = 0


def mean_expansion_time(m: BernoulliMap, eps: float, mode: str = "exact",
                        budget: int = DEFAULT_TREE_BUDGET,
                        samples: int = 100000, seed: int = 0,
                        ) -> MeanExpansionTime:
    """Average of the expansion time over a unit cube.

    exact mode: sum of |s| * l_s^d over minimal crossing tuples (the symbol
    process is i.i.d. with cell-volume weights, so each minimal tuple carries
    probability l_s^d).  montecarlo mode: vectorized sampling with the
    package RNG; returns a standard error.
    """
    eps_frac = check_eps(eps)
    if mode == "exact":
        total = Fraction(0)
        mass = Fraction(0)
        count = 0
        for s, side in _crossing_tuples_dfs(m, eps_frac, budget):
            total += len(s) * side ** m.d
            mass += side ** m.d
            count += 1
        if mass != 1:
            raise HypothesisViolated(
                f"crossing tuple probabilities sum to {mass}, expected 1")
        return MeanExpansionTime(value=float(total), mode="exact",
                                 exact=total, tuples=count)
    if mode != "montecarlo":
        raise ValueError(f"unknown mode {mode!r}")
    streams = np.arange(samples, dtype=np.uint64)
    u = rng.uniforms(seed, streams, 0, m.d, domain=rng.DOMAIN_INIT)
    x = u.reshape(samples, m.d)
    y = m.apply_batch(x)
    log_eps = math.log(eps)
    log_side = np.log(m.side_f)
    acc = np.zeros(samples)
    theta = np.zeros(samples, dtype=np.int64)
    active = np.ones(samples, dtype=bool)
    max_steps = _theta_upper_bound(m, eps) + 2
    for step in range(1, max_steps + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        _, cell_idx, _ = m.locate_batch(y[idx])
        acc[idx] += log_side[cell_idx]
        crossed = acc[idx] <= log_eps
        theta[idx[crossed]] = step
        active[idx[crossed]] = False
        still = idx[~crossed]
        if still.size:
            y[still] = m.apply_batch(y[still])
    if active.any():
        raise HypothesisViolated("Monte-Carlo expansion times did not cross")
    mean = float(theta.mean())
    se = float(theta.std(ddof=1) / math.sqrt(samples))
    return MeanExpansionTime(value=mean, mode="montecarlo",
                             standard_error=se, tuples=samples)
