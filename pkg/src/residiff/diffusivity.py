"""Effective-diffusivity estimators and the exact lattice-displacement laws.

The noise-free dynamics displaces the unit cube by an integer jump per
step: a point uniform in a cube lands in cube ``m + t_i`` with
probability ``|E_i|``.  This module computes that one-step law and its
covariance exactly, the stopped law observed after ``1 + theta`` steps
(``theta`` the expansion time), Monte Carlo variance-rate estimates for
the noisy process, and the residual-diffusivity sweep report.

Exactness policy: lattice laws derived from the partition geometry use
``fractions.Fraction`` throughout, so equalities in tests are exact;
Monte Carlo quantities are floats with batched standard errors.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from io import StringIO

import numpy as np

from . import rng as _rng
from .cylinders import (check_eps, crossing_tuples, end_cube,
                        mean_expansion_time, DEFAULT_TREE_BUDGET)
from .errors import BoundViolation, ConfigError
from .maps import BernoulliMap
from .process import BLOCK, simulate_ensemble


# -- lattice distributions ----------------------------------------------------


@dataclass(frozen=True)
class LatticeDistribution:
    """A finitely supported probability distribution on the integer lattice.

    ``points`` are distinct lattice vectors; ``probs`` are matching
    probabilities (Fractions for exact laws, floats for sampled ones)
    summing to one within 1e-12 (exactly, in the Fraction case).
    """

    points: tuple[tuple[int, ...], ...]
    probs: tuple

    def __post_init__(self):
        if len(self.points) != len(self.probs):
            raise ConfigError("points and probs must have equal length")
        if len(set(self.points)) != len(self.points):
            raise ConfigError("support points must be distinct")
        total = sum(self.probs)
        if abs(float(total) - 1.0) > 1e-12:
            raise ConfigError(f"probabilities sum to {float(total)}, not 1")
        if any(p < 0 for p in self.probs):
            raise ConfigError("probabilities must be nonnegative")

    @property
    def d(self) -> int:
        return len(self.points[0])

    @property
    def exact(self) -> bool:
        return all(isinstance(p, Fraction) for p in self.probs)

    def prob(self, point) -> Fraction | float:
        key = tuple(int(c) for c in np.atleast_1d(point))
        for pt, p in zip(self.points, self.probs):
            if pt == key:
                return p
        return Fraction(0) if self.exact else 0.0

    def as_dict(self) -> dict:
        return dict(zip(self.points, self.probs))

    def mean(self) -> np.ndarray:
        """First moment; object array of Fractions when the law is exact."""
        zero = Fraction(0) if self.exact else 0.0
        out = np.full(self.d, zero, dtype=object if self.exact else float)
        for pt, p in zip(self.points, self.probs):
            for a in range(self.d):
                out[a] += p * pt[a]
        return out

    def covariance(self) -> np.ndarray:
        """Covariance matrix (symmetric PSD); exact in the Fraction case."""
        mu = self.mean()
        zero = Fraction(0) if self.exact else 0.0
        out = np.full((self.d, self.d), zero,
                      dtype=object if self.exact else float)
        for pt, p in zip(self.points, self.probs):
            for a in range(self.d):
                for b in range(self.d):
                    out[a, b] += p * (pt[a] - mu[a]) * (pt[b] - mu[b])
        return out

    def translated(self, k) -> "LatticeDistribution":
        """The law of X + k."""
        shift = tuple(int(c) for c in np.atleast_1d(k))
        if len(shift) != self.d:
            raise ConfigError(f"shift must have {self.d} components")
        pts = tuple(tuple(a + b for a, b in zip(pt, shift))
                    for pt in self.points)
        return LatticeDistribution(pts, self.probs)


def _sorted_dist(acc: dict) -> LatticeDistribution:
    pts = tuple(sorted(acc))
    return LatticeDistribution(pts, tuple(acc[p] for p in pts))


def _as_lattice(m: BernoulliMap, point) -> tuple[int, ...]:
    arr = np.atleast_1d(np.asarray(point))
    if arr.shape != (m.d,):
        raise ConfigError(f"expected a lattice point of dimension {m.d}")
    return tuple(int(math.floor(float(c))) for c in arr)


def one_step_cube_distribution(m: BernoulliMap, base=0) -> LatticeDistribution:
    """Exact law of the cube index after one noise-free step from cube ``base``.

    A point uniform in any cube lies in (the translate of) cell ``E_i``
    with probability ``|E_i|`` and its image then sits in cube
    ``base + t_i``; cells sharing a target aggregate.
    """
    if isinstance(base, (int, np.integer)):
        cube = (int(base),) * m.d
    else:
        cube = _as_lattice(m, base)
    acc: dict = {}
    for cell in m.cells:
        pt = tuple(c + t for c, t in zip(cube, cell.target))
        acc[pt] = acc.get(pt, Fraction(0)) + cell.volume
    return _sorted_dist(acc)


def D_w0(m: BernoulliMap) -> np.ndarray:
    """Covariance of the one-step cube law, exact (object array of Fractions).

    ``sum_i |E_i| t_i t_i^T - m m^T`` with ``m = sum_i |E_i| t_i``; zero
    exactly when every cell has the same target.
    """
    return one_step_cube_distribution(m, 0).covariance()


# -- the stopped law -----------------------------------------------------------


def w_check_distribution(m: BernoulliMap, z, eps: float,
                         mode: str = "exact", samples: int = 100_000,
                         seed: int = 0,
                         budget: int = DEFAULT_TREE_BUDGET) -> LatticeDistribution:
    """Law of the cube index after ``1 + theta`` noise-free steps.

    The start point is uniform on the cube containing ``z`` (only
    ``floor(z)`` matters), ``theta`` is the expansion time of the orbit.
    Exact mode enumerates the minimal crossing tuples -- ``theta`` is
    constant on each -- and convolves the tuple's end-cube shift with one
    further one-step cube law (at time ``theta`` the orbit is uniform on
    its cube, so the extra step contributes an independent jump).
    """
    base = _as_lattice(m, z if np.ndim(z) else [z] * m.d)
    if mode == "exact":
        one = one_step_cube_distribution(m, 0)
        acc: dict = {}
        for symbols, side in crossing_tuples(m, eps, budget=budget):
            p_tuple = side ** m.d
            mid = end_cube(m, base, symbols)
            mid_t = (mid,) if m.d == 1 else tuple(mid)
            for pt, p in zip(one.points, one.probs):
                key = tuple(a + b for a, b in zip(mid_t, pt))
                acc[key] = acc.get(key, Fraction(0)) + p_tuple * p
        dist = _sorted_dist(acc)
        assert sum(dist.probs) == 1  # exact partition of the start cube
        return dist
    if mode != "montecarlo":
        raise ConfigError(f"unknown mode {mode!r}")
    eps_f = check_eps(eps)
    dets = [Fraction(1) / c.volume for c in m.cells]
    log_det = np.log([float(v) for v in dets])
    threshold = -m.d * math.log(eps)
    x = np.asarray(base, dtype=np.float64) + _rng.uniforms(
        seed, np.arange(samples, dtype=np.uint64), 0, m.d, _rng.DOMAIN_INIT)
    # step once (theta counts expansion along the orbit of phi(x)), then
    # keep stepping until the accumulated log-determinant crosses the
    # threshold; record the cube at that moment plus one extra step
    x = m.apply_batch(x)
    acc_log = np.zeros(samples)
    alive = np.ones(samples, dtype=bool)
    final = np.zeros((samples, m.d), dtype=np.int64)
    while alive.any():
        xa = x[alive]
        _, cell, _ = m.locate_batch(xa)
        acc_log[alive] += log_det[cell]
        xa = m.apply_batch(xa)
        x[alive] = xa
        crossed = acc_log[alive] >= threshold - 1e-12
        idx = np.flatnonzero(alive)[crossed]
        final[idx] = np.floor(x[idx]).astype(np.int64)
        alive[idx] = False
    counts: dict = {}
    for row in final:
        key = tuple(int(v) for v in row)
        counts[key] = counts.get(key, 0) + 1
    pts = tuple(sorted(counts))
    return LatticeDistribution(pts, tuple(counts[p] / samples for p in pts))


def D_w_check(m: BernoulliMap, eps: float,
              budget: int = DEFAULT_TREE_BUDGET) -> np.ndarray:
    """The product form ``(1 + theta_bar) * D_w0`` (object array, exact).

    This equals the covariance of :func:`w_check_distribution` exactly
    whenever the expansion time is deterministic (all cell volumes equal,
    e.g. the doubling map) or the mean one-step jump vanishes; in those
    cases the identity is verified here.  For other maps the stopped
    covariance picks up Wald correction terms coupling the stopping time
    to the accumulated jump -- use
    ``w_check_distribution(...).covariance()`` for the exact stopped law.
    """
    theta_bar = mean_expansion_time(m, eps, mode="exact", budget=budget).exact
    base = D_w0(m)
    result = np.full_like(base, Fraction(0))
    for a in range(m.d):
        for b in range(m.d):
            result[a, b] = (1 + theta_bar) * base[a, b]
    vols = set(c.volume for c in m.cells)
    mean_jump = one_step_cube_distribution(m, 0).mean()
    if len(vols) == 1 or all(v == 0 for v in mean_jump):
        cov = w_check_distribution(m, 0, eps, mode="exact",
                                   budget=budget).covariance()
        assert np.array_equal(cov, result), "stopped-law identity violated"
    return result


# -- Monte Carlo variance rates ------------------------------------------------


@dataclass
class VarianceRate:
    """Differenced variance-rate estimate ``(var_n - var_half) / (n - half)``.

    Differencing two horizons removes the O(1) additive offset that the
    corrector decomposition attributes to boundary terms, so the estimate
    converges to the asymptotic rate without a burn-in fit.  ``se`` is a
    batch-means standard error over the fixed trajectory blocks.
    """

    rate: float
    se: float
    n: int
    half: int
    var_n: float
    var_half: float
    trajectories: int


def variance_rate_mc(m, eps: float, v, n: int, trajectories: int,
                     seed: int, initial="uniform", threads: int = 1,
                     backend: str | None = None) -> VarianceRate:
    """Monte Carlo estimate of ``lim var(v . X_n) / n``."""
    if n < 2:
        raise ConfigError("need n >= 2 to difference two horizons")
    if trajectories < 2 * BLOCK:
        raise ConfigError(
            f"need at least {2 * BLOCK} trajectories for a batched SE")
    half = n // 2
    vv = np.atleast_1d(np.asarray(v, dtype=np.float64))
    res = simulate_ensemble(m, initial, eps, n, trajectories, seed,
                            snapshots=[half, n], directions=vv[None, :],
                            threads=threads, backend=backend,
                            collect_block_stats=True)
    var_half = float(res.at(half).direction_var[0])
    var_n = float(res.at(n).direction_var[0])
    rate = (var_n - var_half) / (n - half)
    blocks = res.block_direction_var  # (n_blocks, 2 snapshots, 1 direction)
    per_block = (blocks[:, 1, 0] - blocks[:, 0, 0]) / (n - half)
    se = float(np.std(per_block, ddof=1) / math.sqrt(per_block.shape[0]))
    return VarianceRate(rate=rate, se=se, n=n, half=half, var_n=var_n,
                        var_half=var_half, trajectories=trajectories)


# -- residual-diffusivity sweep -------------------------------------------------


@dataclass
class SweepRow:
    eps: float
    rate: float
    rate_se: float
    kv_rate: float          # nan when no grid solver applies
    lower_bound: float      # c_floor * v . D_w0 . v
    envelope: float         # C_env * |ln eps| * |v|^2
    t_mix: float            # nan when no grid solver applies
    c_emp: float            # rate / (v . D_w0 . v)


@dataclass
class SweepReport:
    v: np.ndarray
    c_floor: float
    C_env: float
    seed: int
    rows: list[SweepRow]

    CSV_COLUMNS = ("eps", "rate", "rate_se", "kv_rate", "lower_bound",
                   "envelope", "t_mix", "c_emp")

    def to_csv(self) -> str:
        buf = StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(f"{getattr(r, c):.17g}" for c in self.CSV_COLUMNS)
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def residual_sweep(m: BernoulliMap, eps_list, v, n: int = 4096,
                   trajectories: int = 16 * BLOCK, seed: int = 0,
                   c_floor: float = 0.2, use_kv: bool | None = None,
                   threads: int = 1, check_bounds: bool = True) -> SweepReport:
    """Variance rates over a decreasing list of noise levels.

    Each row carries the Monte Carlo rate, the grid (corrector) rate when
    a transfer-operator grid applies, the residual lower bound
    ``c_floor * v . D_w0 . v``, and the logarithmic envelope
    ``C_env |ln eps| |v|^2`` with ``C_env`` fit on the two largest noise
    levels.  With ``check_bounds`` the sweep asserts the floor and the
    envelope on every row and raises :class:`BoundViolation` otherwise.
    """
    eps_arr = [float(e) for e in eps_list]
    if len(eps_arr) < 1 or any(not 0 < e < 1 for e in eps_arr):
        raise ConfigError("eps values must lie in (0, 1)")
    if any(a <= b for a, b in zip(eps_arr, eps_arr[1:])):
        raise ConfigError("eps values must be strictly decreasing")
    vv = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if use_kv is None:
        use_kv = m.d <= 2
    base_quad = float(vv @ D_w0(m).astype(np.float64) @ vv)
    norm2 = float(vv @ vv)

    def one_eps(e: float):
        mc = variance_rate_mc(m, e, vv, n, trajectories, seed,
                              threads=1)
        kv = t_mix = float("nan")
        if use_kv:
            from . import transfer  # local import: transfer is optional here
            kern = transfer.build_displacement_kernel(
                m, e, transfer.UlamGrid.default(m.d))
            corr = transfer.corrector_solve(kern, mode="linear")
            kv = transfer.kv_rate(kern, corr, vv)
            t_mix = float(transfer.mixing_time(kern))
        return mc, kv, t_mix

    if threads > 1 and len(eps_arr) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            computed = list(pool.map(one_eps, eps_arr))
    else:
        computed = [one_eps(e) for e in eps_arr]

    fit = [mc.rate / (abs(math.log(e)) * norm2)
           for e, (mc, _, _) in zip(eps_arr[:2], computed[:2])]
    C_env = max(fit)

    rows = []
    for e, (mc, kv, t_mix) in zip(eps_arr, computed):
        envelope = C_env * abs(math.log(e)) * norm2
        c_emp = mc.rate / base_quad if base_quad > 0 else float("inf")
        rows.append(SweepRow(eps=e, rate=mc.rate, rate_se=mc.se, kv_rate=kv,
                             lower_bound=c_floor * base_quad,
                             envelope=envelope, t_mix=t_mix, c_emp=c_emp))
    report = SweepReport(v=vv, c_floor=c_floor, C_env=C_env, seed=seed,
                         rows=rows)
    if check_bounds and base_quad > 0:
        for r in rows:
            if r.c_emp < c_floor:
                raise BoundViolation(
                    f"empirical residual constant {r.c_emp:.4g} at eps "
                    f"{r.eps} fell below the floor {c_floor}")
            if r.rate > r.envelope * (1 + 1e-9):
                raise BoundViolation(
                    f"rate {r.rate:.4g} at eps {r.eps} exceeds the "
                    f"logarithmic envelope {r.envelope:.4g}")
    return report
