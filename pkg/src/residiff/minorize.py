"""Grid verification of the bump-function minorization chain (d = 1).

The minorization argument runs a density forward through the noisy map
and bounds it below, step by step, by members of a fixed bump family:

* ``F_*(x) = (pi/2)^d prod_i |sin(pi x_i)|`` -- the per-cube product-of-
  sines profile (principal Dirichlet eigenfunction shape), normalized
  here to unit mass per cube;
* ``F_{k,s}`` -- the same profile compressed onto the cylinder
  ``C_{k,s}`` via ``F_{k,s} = |C_{k,s}|^{-1} 1_{C_{k,s}} F_* o phi^|s|``.

One noisy step pushes ``F_{k,s}`` to at least ``exp(-a (lambda_s eps)^2)
F_{shift(k,s)}`` where ``lambda_s`` is the inverse cylinder side, and
iterating while the cylinder side stays >= eps keeps a cumulative factor
``beta >= exp(-1 / (1 - |E_M|^{2/d}))`` (largest cell volume ``|E_M|``).
A final defragmentation step -- mixing over the one-step cube-shift law
and convolving with the noise -- turns the bump lower bound into a
uniform Doeblin bound on a cube, and two such stopped steps minorize the
stopped chain by the cube-displacement law ``w_check``.

Everything here is verified on a one-dimensional grid of cell averages:
the map pushforward is an exact piecewise-affine splat, and the Gaussian
step uses the exact cell-average transfer kernel (second differences of
``Psi(z) = z Phi(z) + phi(z)``), so densities remain exact up to float
roundoff and the declared Gaussian tail cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import ndtr, ndtri

from . import cylinders
from .diffusivity import one_step_cube_distribution
from .errors import (BoundViolation, ConfigError, HypothesisViolated,
                     NonpositiveEpsilon, UnsupportedDimension,
                     WindowBudgetExceeded)
from .maps import BernoulliMap

_WINDOW_BUDGET = 1 << 22   # max grid cells a density window may occupy
_DEFAULT_GRID = 2048       # cells per unit length
_BOUNDARY_CELLS = 2        # cells excluded at support edges (F vanishes)


# -- bump family ----------------------------------------------------------------


def F_star(x) -> float:
    """Product-of-sines bump at one point: (pi/2)^d prod_i |sin(pi x_i)|.

    ``x`` is a scalar (d = 1) or a length-d sequence.  The prefactor
    gives every unit cube exactly unit mass (integral of (pi/2) |sin|
    over one period is 1 per axis).
    """
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.ndim != 1:
        raise ConfigError("F_star takes a single point")
    return float(np.prod((np.pi / 2.0) * np.abs(np.sin(np.pi * arr))))


def F_ks(m: BernoulliMap, k, s, x) -> float:
    """Cylinder bump at one point: |C_{k,s}|^{-1} 1_{C_{k,s}} F_* o phi^{|s|}.

    For the empty tuple this is ``1_{Q_k} F_*``.  Symbols are validated
    against the map (SymbolOutOfRange).
    """
    geom = cylinders.cylinder_geometry(m, k, s)
    pt = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if pt.shape != (m.d,):
        raise ConfigError(f"point must have dimension {m.d}")
    if not geom.contains(pt if m.d > 1 else float(pt[0])):
        return 0.0
    y = pt
    for _ in range(len(geom.symbols)):
        y = np.atleast_1d(m.apply(y if m.d > 1 else float(y[0])))
    return float(F_star(y) / geom.volume)


@dataclass(frozen=True)
class BumpFamily:
    """The bump profiles attached to one map, with the iteration constants.

    ``beta_theory = exp(-1 / (1 - |E_M|^{2/d}))`` is the epsilon- and
    depth-independent cumulative contraction bound (largest cell volume
    ``|E_M|``); the per-step Gaussian constant ``a`` is only asserted to
    exist and is fitted empirically by :func:`verify_bump_chain`.
    """

    m: BernoulliMap

    @property
    def c_norm(self) -> float:
        return (np.pi / 2.0) ** self.m.d

    @property
    def beta_theory(self) -> float:
        vol_max = float(max(self.m.volumes))
        return math.exp(-1.0 / (1.0 - vol_max ** (2.0 / self.m.d)))

    def F_star(self, x) -> float:
        return F_star(x)

    def F_ks(self, k, s, x) -> float:
        return F_ks(self.m, k, s, x)


# -- grid densities ---------------------------------------------------------------


@dataclass
class GridDensity:
    """Cell-average density on a window of whole unit intervals (d = 1).

    ``values[j]`` is the average density on ``[lo + j/G, lo + (j+1)/G)``;
    the window is ``[lo, lo + len(values)/G)`` and always spans whole
    unit intervals.  Mass is conserved by :func:`push_density` up to the
    declared Gaussian tail cutoff plus float roundoff.
    """

    lo: int
    G: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=np.float64)
        if self.G < 8:
            raise ConfigError(f"grid needs G >= 8 cells per unit, got {self.G}")
        if self.values.ndim != 1 or self.values.size % self.G:
            raise ConfigError("values must cover whole unit intervals")
        if self.values.min(initial=0.0) < -1e-12:
            raise ConfigError("densities must be nonnegative")
        np.clip(self.values, 0.0, None, out=self.values)

    @property
    def hi(self) -> int:
        return self.lo + self.values.size // self.G

    @property
    def h(self) -> float:
        return 1.0 / self.G

    @property
    def mass(self) -> float:
        return float(self.values.sum() / self.G)

    def x_centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.values.size) + 0.5) / self.G

    def cube_slice(self, k: int) -> slice:
        if not self.lo <= k < self.hi:
            raise ConfigError(f"cube {k} outside window [{self.lo}, {self.hi})")
        return slice((k - self.lo) * self.G, (k - self.lo + 1) * self.G)

    def min_on_cube(self, k: int, exclude: int = 0) -> float:
        vals = self.values[self.cube_slice(k)]
        if exclude:
            vals = vals[exclude:-exclude]
        return float(vals.min())

    def trimmed(self) -> "GridDensity":
        """Drop leading/trailing unit intervals that carry zero mass."""
        per_cube = self.values.reshape(-1, self.G).sum(axis=1)
        nz = np.flatnonzero(per_cube > 0.0)
        if nz.size == 0:
            return GridDensity(self.lo, self.G, self.values[:self.G] * 0.0)
        a, b = int(nz[0]), int(nz[-1]) + 1
        return GridDensity(self.lo + a, self.G,
                           self.values[a * self.G:b * self.G].copy())

    def to_csv(self, path) -> None:
        """Plot-ready dump: one `x,value` row per grid cell center."""
        xs = self.x_centers()
        with open(path, "w") as fh:
            fh.write("x,value\n")
            for x, v in zip(xs, self.values):
                fh.write(f"{x:.17g},{v:.17g}\n")


def delta_density(G: int, x: float) -> GridDensity:
    """Unit mass concentrated on the grid cell containing x."""
    lo = math.floor(x)
    vals = np.zeros(G)
    idx = min(int((x - lo) * G), G - 1)
    vals[idx] = float(G)
    return GridDensity(lo, G, vals)


def f_star_density(k: int, G: int) -> GridDensity:
    """Exact cell averages of 1_{Q_k} F_* (d = 1, sine integral)."""
    edges = np.arange(G + 1) / G
    prim = np.cos(np.pi * edges)        # -(1/pi) d/dx of (pi/2) sin has cos
    vals = (G / 2.0) * (prim[:-1] - prim[1:])
    return GridDensity(int(k), G, vals)


def f_ks_density(m: BernoulliMap, k, s, G: int) -> GridDensity:
    """Exact cell averages of F_{k,s} (d = 1).

    On the cylinder ``[c, c + l)`` the bump is ``(pi/(2l)) sin(pi (x-c)/l)``
    regardless of the composed branch orientations (the sine profile is
    symmetric under reflections of the cube), so every grid cell average
    is an exact sine integral over the overlap with the cylinder.
    """
    if m.d != 1:
        raise UnsupportedDimension("grid bump densities are d = 1 only")
    geom = cylinders.cylinder_geometry(m, k, s)
    c = float(geom.corner[0])
    ell = float(geom.side)
    k0 = int(geom.cube[0])
    edges = k0 + np.arange(G + 1) / G
    a = np.clip(edges[:-1], c, c + ell)
    b = np.clip(edges[1:], c, c + ell)
    ua = (a - c) / ell
    ub = (b - c) / ell
    vals = (G / 2.0) * (np.cos(np.pi * ua) - np.cos(np.pi * ub))
    return GridDensity(k0, G, vals)


# -- pushforward -----------------------------------------------------------------


def _phi_splat(m: BernoulliMap, f: GridDensity,
               budget: int) -> GridDensity:
    """Exact pushforward of a cell-average density by the piecewise-affine map.

    Source cells are subdivided at branch boundaries; each subinterval
    maps affinely onto an interval in the image, whose mass is spread
    over the target cells it overlaps.  Total mass is preserved exactly
    (up to float roundoff).
    """
    G = f.G
    h = f.h
    n = f.values.size
    src_edges = f.lo + np.arange(n + 1) / G
    fracs = m.pos_corner[:-1]
    interior = fracs[fracs > 0.0]
    if interior.size:
        cuts = (np.arange(f.lo, f.hi)[:, None] + interior[None, :]).ravel()
        edges = np.union1d(src_edges, cuts)
    else:
        edges = src_edges
    lo_e, hi_e = edges[:-1], edges[1:]
    width = hi_e - lo_e
    keep = width > 0.0
    lo_e, hi_e, width = lo_e[keep], hi_e[keep], width[keep]
    mids = 0.5 * (lo_e + hi_e)
    src = np.clip(((mids - f.lo) * G).astype(np.int64), 0, n - 1)
    mass = f.values[src] * width

    kk, cell, _ = m.locate_batch(mids[:, None])
    kk = kk[:, 0]
    off = m.off_f[cell][:, 0]
    slope = m.slope_f[cell][:, 0]
    y0 = kk + off + slope * (lo_e - kk)
    y1 = kk + off + slope * (hi_e - kk)
    ylo = np.minimum(y0, y1)
    yhi = np.maximum(y0, y1)

    out_lo = int(math.floor(float(ylo.min())))
    out_hi = max(int(math.ceil(float(yhi.max()))), out_lo + 1)
    n_out = (out_hi - out_lo) * G
    if n_out > budget:
        raise WindowBudgetExceeded(
            f"pushforward window needs {n_out} cells (budget {budget})")
    out = np.zeros(n_out)
    left = np.floor((ylo - out_lo) * G).astype(np.int64)
    length = yhi - ylo
    span = int(math.ceil(float(length.max()) * G)) + 1
    for step in range(span + 1):
        j = left + step
        cell_lo = out_lo + j * h
        frac = (np.minimum(yhi, cell_lo + h) - np.maximum(ylo, cell_lo))
        frac = np.clip(frac, 0.0, None) / length
        good = (frac > 0.0) & (j >= 0) & (j < n_out)
        if good.any():
            np.add.at(out, j[good], (mass * frac)[good])
    return GridDensity(out_lo, G, out * G)


def _gaussian_cell_kernel(eps: float, G: int, tail_tol: float) -> np.ndarray:
    """Exact cell-average transfer weights of the eps-Gaussian.

    A piecewise-constant density convolved with N(0, eps^2) and averaged
    back onto the grid mixes cell j into cell j+m with weight

        K_m = (eps G) [Psi((m+1)h/eps) - 2 Psi(m h/eps) + Psi((m-1)h/eps)],

    where ``Psi(z) = z Phi(z) + phi(z)`` (so K is a second difference of
    a convex function, hence nonnegative, and sums to 1 up to the tail).
    """
    h = 1.0 / G
    z_star = max(8.0, float(-ndtri(min(tail_tol, 0.1) / 4.0)) + 0.5)
    half = int(math.ceil(z_star * eps * G)) + 1
    ms = np.arange(-half, half + 1)

    def psi(z):
        return z * ndtr(z) + np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    kern = (eps * G) * (psi((ms + 1) * h / eps) - 2.0 * psi(ms * h / eps)
                        + psi((ms - 1) * h / eps))
    return np.clip(kern, 0.0, None)


def _gauss_blur(f: GridDensity, eps: float, tail_tol: float,
                budget: int) -> GridDensity:
    kern = _gaussian_cell_kernel(eps, f.G, tail_tol)
    half = kern.size // 2
    masses = np.convolve(f.values / f.G, kern)
    lo_cells = f.lo * f.G - half
    pad_lo = lo_cells % f.G
    new_lo = (lo_cells - pad_lo) // f.G
    pad_hi = (-(lo_cells + masses.size)) % f.G
    total = pad_lo + masses.size + pad_hi
    if total > budget:
        raise WindowBudgetExceeded(
            f"blurred window needs {total} cells (budget {budget})")
    vals = np.zeros(total)
    vals[pad_lo:pad_lo + masses.size] = masses * f.G
    return GridDensity(int(new_lo), f.G, vals)


def push_density(m: BernoulliMap, f: GridDensity, eps: float,
                 tail_tol: float = 1e-12,
                 budget: int = _WINDOW_BUDGET) -> GridDensity:
    """One noisy-map step of a density: exact phi-splat, then eps-Gaussian.

    With eps = 0 only the exact affine pushforward is applied.  The
    window grows by the map's displacement plus the Gaussian tail width;
    :class:`WindowBudgetExceeded` is raised when it would exceed
    ``budget`` cells.  Mass is conserved within ``tail_tol`` plus float
    roundoff.
    """
    if m.d != 1:
        raise UnsupportedDimension("grid pushforward is d = 1 only")
    if eps < 0.0:
        raise NonpositiveEpsilon(f"eps must be >= 0, got {eps}")
    out = _phi_splat(m, f, budget)
    if eps > 0.0:
        out = _gauss_blur(out, eps, tail_tol, budget)
    return out


def _shift_mix(m: BernoulliMap, f: GridDensity) -> GridDensity:
    """Density of V - I for V ~ f and I the one-step cube-shift law.

    I is distributed like the one-step cube displacement (probability
    |E_i| on each branch target, aggregated), so the mixed density is
    the probability-weighted superposition of integer translates.
    """
    law = one_step_cube_distribution(m, 0)
    shifts = [int(p[0]) for p in law.points]
    probs = [float(q) for q in law.probs]
    new_lo = f.lo - max(shifts)
    new_hi = f.hi - min(shifts)
    vals = np.zeros((new_hi - new_lo) * f.G)
    for t, p in zip(shifts, probs):
        a = (f.lo - t - new_lo) * f.G
        vals[a:a + f.values.size] += p * f.values
    return GridDensity(new_lo, f.G, vals)


def defrag_step(m: BernoulliMap, f: GridDensity, eps: float,
                tail_tol: float = 1e-12,
                budget: int = _WINDOW_BUDGET) -> GridDensity:
    """The defragmenting step: phi-push, mix over the I-shift, add noise."""
    out = _phi_splat(m, f, budget)
    out = _shift_mix(m, out)
    if eps > 0.0:
        out = _gauss_blur(out, eps, tail_tol, budget)
    return out


def _merge(parts: list[GridDensity]) -> GridDensity:
    lo = min(p.lo for p in parts)
    hi = max(p.hi for p in parts)
    G = parts[0].G
    vals = np.zeros((hi - lo) * G)
    for p in parts:
        a = (p.lo - lo) * G
        vals[a:a + p.values.size] += p.values
    return GridDensity(lo, G, vals)


def _theta_per_cell(m: BernoulliMap, G: int, eps: float) -> np.ndarray:
    """Expansion time at each grid-cell center of the unit interval.

    theta is periodic (the displacement is Z-periodic), so one period
    suffices; computed by accumulating cell volumes along the itinerary
    of phi(x) until the product drops to eps.
    """
    eps_f = float(cylinders.check_eps(eps))
    centers = (np.arange(G) + 0.5) / G
    y = m.apply_batch(centers[:, None])
    side = np.ones(G)
    theta = np.zeros(G, dtype=np.int64)
    active = np.ones(G, dtype=bool)
    vols = np.array([float(v) for v in m.volumes])
    for _ in range(cylinders._theta_upper_bound(m, eps) + 2):
        _, cell, _ = m.locate_batch(y)
        side[active] *= vols[cell[active]]
        theta[active] += 1
        active &= side > eps_f
        if not active.any():
            break
        y = m.apply_batch(y)
    if active.any():
        raise ConfigError("expansion-time iteration exceeded its bound")
    return theta


def z_step_density(m: BernoulliMap, f: GridDensity, eps: float,
                   tail_tol: float = 1e-12,
                   budget: int = _WINDOW_BUDGET) -> GridDensity:
    """One stopped-chain step of a density: 2 + theta noisy steps with the
    terminal I-shift, resolved by theta level.

    The stopped chain advances 2 + theta(z) map steps from state z and
    subtracts an independent I-shift at the end.  theta is constant on
    scale-partition cylinders, so the density is split by the theta
    value of each grid cell, each piece is propagated for its own
    horizon, and the results are summed.
    """
    if m.d != 1:
        raise UnsupportedDimension("stopped-step densities are d = 1 only")
    thetas = np.tile(_theta_per_cell(m, f.G, eps), f.hi - f.lo)
    parts = []
    for t in np.unique(thetas):
        mask = thetas == t
        if not f.values[mask].any():
            continue
        piece = GridDensity(f.lo, f.G, np.where(mask, f.values, 0.0)).trimmed()
        for _ in range(1 + int(t)):
            piece = push_density(m, piece, eps, tail_tol, budget)
        piece = defrag_step(m, piece, eps, tail_tol, budget)
        parts.append(piece)
    return _merge(parts)


# -- bump-chain verification --------------------------------------------------------


@dataclass
class BumpChainReport:
    """Per-step contraction ratios of the bump chain from one cylinder."""

    cube: int
    symbols: tuple
    eps: float
    G: int
    step_ratios: list      # rho_n = R_n / R_{n-1}, one per step
    cumulative: list       # R_n = min over interior cells of f_n / F_n
    lambdas: list          # inverse source-cylinder side per step
    a_per_step: list       # -ln(rho_n) / (lambda_n eps)^2
    a_fit: float           # max over steps (binding Gaussian constant)
    beta_emp: float        # final cumulative ratio R_{|s|}
    beta_theory: float     # exp(-1 / (1 - |E_M|^{2/d}))


def verify_bump_chain(m: BernoulliMap, k, s, eps: float,
                      G: int = _DEFAULT_GRID,
                      beta_slack: float = 0.05,
                      margin: int = _BOUNDARY_CELLS) -> BumpChainReport:
    """Push F_{k,s} through |s| noisy steps and measure the contraction.

    After n steps the density must stay above ``R_n F_{shift^n(k,s)}``
    with per-step factors ``rho_n >= exp(-a (lambda eps)^2)`` (lambda =
    inverse side of the source cylinder at that step).  Requires the
    iteration hypothesis ``l_s >= eps`` and d = 1.  Ratios are taken
    over interior grid cells (a ``margin``-cell layer at each support
    edge is excluded: the reference bump vanishes there, and cell-average
    resampling distorts ratios by O(1/margin)).  Raises
    :class:`BoundViolation` if the cumulative factor lands below
    ``beta_theory - beta_slack``.
    """
    if m.d != 1:
        raise UnsupportedDimension("bump-chain verification is d = 1 only")
    geom = cylinders.cylinder_geometry(m, k, s)
    if eps > 0.0 and geom.side < Fraction(float(eps)):
        raise HypothesisViolated(
            f"cylinder side {float(geom.side):g} < eps {eps}: the iteration "
            "hypothesis l_s >= eps fails")
    if not geom.symbols:
        raise ConfigError("the empty tuple has no steps to verify")

    f = f_ks_density(m, k, s, G)
    cube, symbols = int(geom.cube[0]), geom.symbols
    bumps = BumpFamily(m)
    step_ratios, cumulative, lambdas, a_steps = [], [], [], []
    r_prev = 1.0
    side = geom.side
    for _ in range(len(geom.symbols)):
        lam = float(1 / side)
        f = push_density(m, f, eps)
        cube, symbols = cylinders.shift_tuple(m, cube, symbols)
        side = cylinders.tuple_side(m, symbols)
        ref = f_ks_density(m, cube, symbols, G)
        support = np.flatnonzero(ref.values > 0.0)
        inner = support[margin:-margin]
        if inner.size == 0:
            raise ConfigError(
                f"grid G={G} too coarse to resolve the depth-{len(symbols)} "
                "cylinder interior")
        sl = f.cube_slice(int(cube))
        ratios = f.values[sl][inner] / ref.values[inner]
        r_n = float(ratios.min())
        rho = r_n / r_prev
        step_ratios.append(rho)
        cumulative.append(r_n)
        lambdas.append(lam)
        a_steps.append(-math.log(max(rho, 1e-300)) / (lam * eps) ** 2
                       if eps > 0 else 0.0)
        r_prev = r_n

    beta_emp = cumulative[-1]
    report = BumpChainReport(
        cube=int(geom.cube[0]), symbols=geom.symbols, eps=eps, G=G,
        step_ratios=step_ratios, cumulative=cumulative, lambdas=lambdas,
        a_per_step=a_steps, a_fit=max(a_steps), beta_emp=beta_emp,
        beta_theory=bumps.beta_theory)
    if beta_emp < report.beta_theory - beta_slack:
        raise BoundViolation(
            f"cumulative bump factor {beta_emp:.4f} fell below "
            f"beta_theory - slack = {report.beta_theory - beta_slack:.4f}")
    return report


# -- Doeblin verification -------------------------------------------------------------


@dataclass
class DoeblinReport:
    """Measured uniform lower constant for one minorization stage."""

    stage: str
    eps: float
    G: int
    constant: float
    target_cube: int | None = None
    theta: int | None = None
    details: dict = field(default_factory=dict)


def verify_doeblin(m: BernoulliMap, x, eps: float, stage: str,
                   G: int = _DEFAULT_GRID) -> DoeblinReport:
    """Measure the uniform Doeblin constant of one minorization stage.

    ``defrag``: starts from F_* on Q_0, applies one defragmenting step
    (phi, I-shift mix, eps-Gaussian) and reports the min density on Q_0
    -- the constant c' turning a bump bound into a uniform one.

    ``one_step``: propagates a delta at x for 2 + theta(x) noisy steps
    with the terminal I-shift and reports the min density over the cube
    of the noise-free orbit at time 1 + theta(x) -- the stopped chain's
    one-step constant c.

    ``two_step``: composes two stopped steps from x and reports the min
    over cubes of (two-step density) / w_check -- the constant by which
    the stopped two-step law dominates the cube-displacement law.
    """
    if m.d != 1:
        raise UnsupportedDimension("Doeblin verification is d = 1 only")
    if not 0.0 < eps <= 0.2:
        raise HypothesisViolated(
            f"Doeblin stages need eps in (0, 0.2], got {eps}")

    if stage == "defrag":
        f = defrag_step(m, f_star_density(0, G), eps)
        return DoeblinReport(stage=stage, eps=eps, G=G,
                             constant=f.min_on_cube(0), target_cube=0)

    x = float(np.atleast_1d(np.asarray(x, dtype=np.float64))[0])
    theta = cylinders.expansion_time(m, x, eps)
    orbit = x
    for _ in range(1 + theta):
        orbit = m.apply(orbit)
    target = int(math.floor(orbit))

    f = delta_density(G, x)
    for _ in range(1 + theta):
        f = push_density(m, f, eps)
    f = defrag_step(m, f, eps)

    if stage == "one_step":
        return DoeblinReport(stage=stage, eps=eps, G=G,
                             constant=f.min_on_cube(target),
                             target_cube=target, theta=theta)
    if stage != "two_step":
        raise ConfigError(f"unknown Doeblin stage {stage!r}")

    p2 = z_step_density(m, f, eps)
    law = _w_check_floats(m, target, eps)
    ratios = {}
    for cube, prob in law.items():
        ratios[cube] = p2.min_on_cube(cube) / prob if prob > 0 else np.inf
    worst = min(ratios, key=ratios.get)
    return DoeblinReport(stage=stage, eps=eps, G=G,
                         constant=float(ratios[worst]), target_cube=target,
                         theta=theta, details={"per_cube": ratios})


def _w_check_floats(m: BernoulliMap, base_cube: int, eps: float) -> dict:
    """The stopped cube-displacement law from a cube, as {cube: prob}."""
    from .diffusivity import w_check_distribution
    law = w_check_distribution(m, float(base_cube), eps)
    return {int(p[0]): float(q) for p, q in zip(law.points, law.probs)}
