"""Ulam-grid discretization of the noisy torus chain and its diffusivity.

The torus chain follows ``Y_{n+1} = phi(Y_n) + eps xi_n`` reduced mod
``Z^d`` while the integer part ``j = floor(.)`` taken before wrapping is
recorded as the step's lattice displacement.  On a uniform grid of
``G^d`` half-open cells the one-step law becomes a displacement-resolved
stochastic family ``q(g, g', j)``; summing over ``j`` gives the torus
transition matrix.  The chain preserves Lebesgue measure, so the uniform
law is stationary for the exact kernel and stationary up to the O(1/G)
discretization error for the grid kernel (rows sum to one exactly after
tail renormalization, column sums to one approximately).

Everything downstream is computed from this kernel: L1 mixing times,
the mean-zero drift corrector ``chi`` solving ``(P - I) chi = s_bar - s``,
the variance rate of ``v . Y_n`` as the stationary quadratic form of the
corrected increments, exact covariance-decay bounds for lagged
increments, and exact finite-horizon moments of the corrected coordinate
via a per-cell moment recursion.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (ConfigError, MissingCorrector, NoMixingWithinCap,
                     NonpositiveEpsilon, SeriesDivergence, SingularSystem,
                     UnsupportedDimension)

_QUAD_PER_AXIS = 4        # fixed midpoint subsamples per cell per axis
_DENSE_BUDGET = 1 << 26   # max float64 entries across all jump blocks
_MAGIC = b"RDK1"          # binary kernel file signature


# -- grid ---------------------------------------------------------------------


@dataclass(frozen=True)
class UlamGrid:
    """Uniform partition of the d-torus into G^d half-open cubes.

    Cells are indexed row-major: for d = 2 the cell (i0, i1) covering
    [i0/G, (i0+1)/G) x [i1/G, (i1+1)/G) has flat index i0 * G + i1.
    Production kernels built from a map require G >= 8 (enforced by
    :func:`build_displacement_kernel`); smaller grids are allowed only
    for hand-built kernels in degenerate checks.
    """

    d: int
    G: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise UnsupportedDimension(
                f"Ulam grids support d in {{1, 2}}, got d={self.d}")
        if self.G < 1:
            raise ConfigError(f"grid needs G >= 1 cells per axis, got {self.G}")

    @property
    def S(self) -> int:
        return self.G ** self.d

    @property
    def h(self) -> float:
        return 1.0 / self.G

    @property
    def centers(self) -> np.ndarray:
        """Cell centers, shape (S, d), in flat row-major cell order."""
        idx = np.indices((self.G,) * self.d).reshape(self.d, -1).T
        return (idx + 0.5) / self.G

    def cell_of(self, x) -> np.ndarray:
        """Flat cell index of each torus point (last axis = coordinates)."""
        arr = np.asarray(x, dtype=np.float64)
        if self.d == 1:
            arr = arr.reshape(-1, 1)
        else:
            arr = arr.reshape(-1, self.d)
        ix = np.clip((np.mod(arr, 1.0) * self.G).astype(np.int64),
                     0, self.G - 1)
        flat = ix[:, 0]
        for a in range(1, self.d):
            flat = flat * self.G + ix[:, a]
        return flat

    @classmethod
    def default(cls, d: int) -> "UlamGrid":
        """Grid fine enough for the built-in sweeps: 1024 cells in d = 1,
        16 per axis in d = 2 (dense kernels stay well under budget)."""
        return cls(1, 1024) if d == 1 else cls(2, 16)


# -- kernel -------------------------------------------------------------------


class DisplacementKernel:
    """Displacement-resolved one-step law of the discretized torus chain.

    ``blocks[k, g, g']`` is the probability, starting uniform in source
    cell ``g``, of landing in torus cell ``g'`` with integer displacement
    ``jumps[k]``.  Rows of the j-summed torus matrix sum to one (tail
    renormalization); column sums equal one up to the O(1/G)
    discretization error because the underlying chain preserves Lebesgue
    measure.
    """

    def __init__(self, grid: UlamGrid, jumps, blocks,
                 eps: float | None = None, tail_tol: float | None = None):
        self.grid = grid
        self.jumps = np.asarray(jumps, dtype=np.int64).reshape(-1, grid.d)
        self.blocks = np.ascontiguousarray(blocks, dtype=np.float64)
        if self.blocks.shape != (self.jumps.shape[0], grid.S, grid.S):
            raise ConfigError(
                f"blocks shape {self.blocks.shape} does not match "
                f"{self.jumps.shape[0]} jumps on S={grid.S} cells")
        if self.jumps.shape[0] == 0:
            raise ConfigError("a displacement kernel needs at least one jump")
        if np.any(self.blocks < -1e-15):
            raise ConfigError("kernel blocks must be nonnegative")
        self.eps = None if eps is None else float(eps)
        self.tail_tol = None if tail_tol is None else float(tail_tol)
        self._torus = None
        self._drift = None

    # -- basic views ----------------------------------------------------------

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def S(self) -> int:
        return self.grid.S

    @property
    def n_jumps(self) -> int:
        return int(self.jumps.shape[0])

    @property
    def torus_matrix(self) -> np.ndarray:
        """The j-marginal (S, S) torus transition matrix."""
        if self._torus is None:
            self._torus = self.blocks.sum(axis=0)
        return self._torus

    def jump_index(self, j) -> int:
        j = np.asarray(j, dtype=np.int64).reshape(self.d)
        hit = np.flatnonzero((self.jumps == j).all(axis=1))
        if hit.size == 0:
            raise KeyError(f"jump {tuple(j)} not present in kernel")
        return int(hit[0])

    def row_sum_error(self) -> float:
        """Max deviation of a torus-matrix row sum from 1."""
        return float(np.abs(self.torus_matrix.sum(axis=1) - 1.0).max())

    def column_sum_error(self) -> float:
        """Max deviation of a torus-matrix column sum from 1 (the
        doubly-stochastic defect, O(1/G) for measure-preserving maps)."""
        return float(np.abs(self.torus_matrix.sum(axis=0) - 1.0).max())

    # -- per-cell moments -------------------------------------------------------

    def mean_displacement(self) -> np.ndarray:
        """Per-cell one-step drift s(g) = E[Y_1 - Y_0 | g], shape (S, d)."""
        if self._drift is None:
            c = self.grid.centers
            out = np.zeros((self.S, self.d))
            for jump, block in zip(self.jumps, self.blocks):
                out += block @ (jump + c)
            out -= self.torus_matrix.sum(axis=1)[:, None] * c
            self._drift = out
        return self._drift

    def second_moment(self) -> np.ndarray:
        """Per-cell E[|Y_1 - Y_0|^2 | g], shape (S,)."""
        c = self.grid.centers
        out = np.zeros(self.S)
        first = np.zeros((self.S, self.d))
        for jump, block in zip(self.jumps, self.blocks):
            t = jump + c
            out += block @ (t * t).sum(axis=1)
            first += block @ t
        out -= 2.0 * (c * first).sum(axis=1)
        out += (c * c).sum(axis=1) * self.torus_matrix.sum(axis=1)
        return out

    # -- export ---------------------------------------------------------------

    def save_binary(self, path) -> None:
        """Portable little-endian dump.

        Layout: magic ``RDK1``; int64 d, G, nJ; float64 eps, tail_tol
        (NaN when unset); int64 per-axis window bounds jmin (d), jmax
        (d); int64 jump rows (nJ, d); float64 row-major blocks
        (nJ, S, S).
        """
        jmin = self.jumps.min(axis=0)
        jmax = self.jumps.max(axis=0)
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<3q", self.d, self.grid.G, self.n_jumps))
            fh.write(struct.pack(
                "<2d",
                float("nan") if self.eps is None else self.eps,
                float("nan") if self.tail_tol is None else self.tail_tol))
            fh.write(np.ascontiguousarray(jmin, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(jmax, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(self.jumps, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(self.blocks, dtype="<f8").tobytes())

    @classmethod
    def load_binary(cls, path) -> "DisplacementKernel":
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise ConfigError(f"{path}: not a displacement-kernel file")
            d, G, nj = struct.unpack("<3q", fh.read(24))
            eps, tail_tol = struct.unpack("<2d", fh.read(16))
            fh.read(2 * 8 * d)  # window bounds, reconstructible from jumps
            jumps = np.frombuffer(fh.read(8 * nj * d), dtype="<i8")
            jumps = jumps.reshape(nj, d).astype(np.int64)
            S = G ** d
            blocks = np.frombuffer(fh.read(8 * nj * S * S), dtype="<f8")
            blocks = blocks.reshape(nj, S, S).astype(np.float64)
        return cls(UlamGrid(int(d), int(G)), jumps, blocks,
                   eps=None if np.isnan(eps) else eps,
                   tail_tol=None if np.isnan(tail_tol) else tail_tol)

    def save_text(self, path) -> None:
        """Plain-text sparse triplets ``g g' j q`` (``g g' j0 j1 q`` in
        d = 2), one nonzero entry per line, for downstream verification."""
        with open(path, "w") as fh:
            fh.write(f"# residiff-kernel d={self.d} G={self.grid.G} "
                     f"nJ={self.n_jumps} eps={self.eps!r} "
                     f"tail_tol={self.tail_tol!r}\n")
            cols = "g gp j q" if self.d == 1 else "g gp j0 j1 q"
            fh.write(f"# columns: {cols}\n")
            for jump, block in zip(self.jumps, self.blocks):
                jtxt = " ".join(str(int(a)) for a in jump)
                rows, cols_ = np.nonzero(block)
                for g, gp in zip(rows, cols_):
                    fh.write(f"{g} {gp} {jtxt} {block[g, gp]:.17g}\n")

    @classmethod
    def load_text(cls, path) -> "DisplacementKernel":
        header = {}
        entries = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for tok in line[1:].split():
                        if "=" in tok:
                            key, _, val = tok.partition("=")
                            header[key] = val
                    continue
                parts = line.split()
                entries.append(parts)
        try:
            d = int(header["d"])
            G = int(header["G"])
        except KeyError as exc:
            raise ConfigError(f"{path}: missing kernel header field {exc}")
        eps = None if header.get("eps") == "None" else float(header["eps"])
        tail = (None if header.get("tail_tol") == "None"
                else float(header["tail_tol"]))
        grid = UlamGrid(d, G)
        jumps_seen: dict[tuple, int] = {}
        rows = []
        for parts in entries:
            g, gp = int(parts[0]), int(parts[1])
            j = tuple(int(a) for a in parts[2:2 + d])
            q = float(parts[2 + d])
            rows.append((j, g, gp, q))
            jumps_seen.setdefault(j, len(jumps_seen))
        jumps = sorted(jumps_seen)
        jpos = {j: k for k, j in enumerate(jumps)}
        blocks = np.zeros((len(jumps), grid.S, grid.S))
        for j, g, gp, q in rows:
            blocks[jpos[j], g, gp] += q
        return cls(grid, np.array(jumps, dtype=np.int64).reshape(-1, d),
                   blocks, eps=eps, tail_tol=tail)


# -- kernel construction --------------------------------------------------------


def _gauss_window_sigmas(tail_tol: float, d: int) -> float:
    """Half-width in sigma units keeping the omitted Gaussian mass below
    tail_tol (two tails per axis, union bound over axes)."""
    z = float(-ndtri(min(tail_tol, 0.1) / (4.0 * d)))
    return max(8.0, z + 0.5)


def build_displacement_kernel(m, eps, grid: UlamGrid | None = None,
                              tail_tol: float = 1e-12,
                              threads: int = 1) -> DisplacementKernel:
    """Ulam kernel by fixed-order midpoint quadrature of the wrapped Gaussian.

    Each source cell is represented by 4^d midpoint subsamples u (a
    refinement of the grid by 4 per axis, fixed order).  From u the
    one-step law is the Gaussian N(phi(u), eps^2 I) integrated over the
    lattice refinement of R^d, which yields the wrapped target cell and
    the integer displacement floor(.) simultaneously; per-axis interval
    masses are normal CDF differences.  The window is the smallest
    centred lattice box whose omitted mass stays below ``tail_tol`` and
    each subsample's mass is renormalized over the window (tail
    renormalization), so rows sum to one to float accuracy.

    ``threads`` parallelizes over source cells; cells write disjoint
    kernel rows and each row's content is scheduling-independent, so the
    result is deterministic for any thread count.
    """
    eps = float(eps)
    if not np.isfinite(eps) or eps <= 0.0:
        raise NonpositiveEpsilon(f"kernel construction needs eps > 0, got {eps}")
    d = int(m.d)
    if d not in (1, 2):
        raise UnsupportedDimension(f"Ulam kernels support d in {{1, 2}}, got {d}")
    if grid is None:
        grid = UlamGrid.default(d)
    if grid.d != d:
        raise ConfigError(f"grid dimension {grid.d} != map dimension {d}")
    if grid.G < 8:
        raise ConfigError("map-built kernels need G >= 8 cells per axis")
    if not 0.0 < tail_tol < 1.0:
        raise ConfigError(f"tail_tol must lie in (0, 1), got {tail_tol}")

    G, S, h = grid.G, grid.S, grid.h
    q = _QUAD_PER_AXIS
    rad = _gauss_window_sigmas(tail_tol, d) * eps

    if d == 1:
        u = (np.arange(S * q, dtype=np.float64) + 0.5) / (S * q)
        y = np.asarray(m.apply_batch(u[:, None]), dtype=np.float64)[:, 0]
        k_lo = np.floor((y - rad) * G).astype(np.int64)
        k_hi = np.floor((y + rad) * G).astype(np.int64)
        j_lo = int(np.min(k_lo // G))
        j_hi = int(np.max(k_hi // G))
        n_box = j_hi - j_lo + 1
        if n_box * S * S > _DENSE_BUDGET:
            raise ConfigError(
                f"dense kernel would need {n_box} x {S}^2 entries; reduce G "
                "or eps, or raise tail_tol")
        acc = np.zeros((n_box, S, S))
        w = 1.0 / q

        def fill(cells: range) -> None:
            for g in cells:
                for i in range(q):
                    si = g * q + i
                    ks = np.arange(k_lo[si], k_hi[si] + 1)
                    edges = np.arange(k_lo[si], k_hi[si] + 2) * h
                    cdf = ndtr((edges - y[si]) / eps)
                    mass = np.diff(cdf)
                    mass *= w / mass.sum()
                    jblk = ks // G
                    acc[jblk - j_lo, g, ks - jblk * G] += mass

        _run_cell_chunks(fill, S, threads)
        keep = [k for k in range(n_box) if acc[k].any()]
        jumps = np.array([[j_lo + k] for k in keep], dtype=np.int64)
        blocks = acc[keep]
    else:
        cell_i = np.indices((G, G)).reshape(2, -1).T          # (S, 2) row-major
        sub = (np.indices((q, q)).reshape(2, -1).T + 0.5) / q  # (q^2, 2)
        pts = ((cell_i[:, None, :] + sub[None, :, :]) / G).reshape(-1, 2)
        y = np.asarray(m.apply_batch(pts), dtype=np.float64)   # (S q^2, 2)
        k_lo = np.floor((y - rad) * G).astype(np.int64)
        k_hi = np.floor((y + rad) * G).astype(np.int64)
        j_lo = (k_lo // G).min(axis=0)
        j_hi = (k_hi // G).max(axis=0)
        n0, n1 = (int(a) for a in (j_hi - j_lo + 1))
        if n0 * n1 * S * S > _DENSE_BUDGET:
            raise ConfigError(
                f"dense kernel would need {n0 * n1} x {S}^2 entries; reduce "
                "G or eps, or raise tail_tol")
        acc = np.zeros((n0 * n1, S, S))
        w = 1.0 / (q * q)
        nsub = q * q

        def fill(cells: range) -> None:
            for g in cells:
                for i in range(nsub):
                    si = g * nsub + i
                    axis_mass, axis_j, axis_gp = [], [], []
                    for a in range(2):
                        ks = np.arange(k_lo[si, a], k_hi[si, a] + 1)
                        edges = np.arange(k_lo[si, a], k_hi[si, a] + 2) * h
                        cdf = ndtr((edges - y[si, a]) / eps)
                        mass = np.diff(cdf)
                        mass /= mass.sum()
                        jblk = ks // G
                        axis_mass.append(mass)
                        axis_j.append(jblk - j_lo[a])
                        axis_gp.append(ks - jblk * G)
                    joint = np.outer(axis_mass[0], axis_mass[1]) * w
                    jidx = (axis_j[0][:, None] * n1 + axis_j[1][None, :])
                    gp = (axis_gp[0][:, None] * G + axis_gp[1][None, :])
                    np.add.at(acc, (jidx.ravel(), g, gp.ravel()), joint.ravel())

        _run_cell_chunks(fill, S, threads)
        keep = [k for k in range(n0 * n1) if acc[k].any()]
        jumps = np.array([[j_lo[0] + k // n1, j_lo[1] + k % n1] for k in keep],
                         dtype=np.int64)
        blocks = acc[keep]

    kernel = DisplacementKernel(grid, jumps, blocks, eps=eps, tail_tol=tail_tol)
    err = kernel.row_sum_error()
    if err > 1e-10:
        raise ConfigError(f"kernel rows sum to 1 only within {err:.3e}")
    return kernel


def _run_cell_chunks(fill, S: int, threads: int) -> None:
    """Run fill() over source-cell ranges, optionally in parallel.

    Each cell's kernel row is computed independently and written to a
    disjoint slice, so any chunking gives identical results.
    """
    if threads <= 1 or S < 2 * threads:
        fill(range(S))
        return
    bounds = np.linspace(0, S, threads + 1).astype(int)
    chunks = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if a < b]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fill, chunks))


# -- mixing -------------------------------------------------------------------


def l1_uniform_distance(matrix) -> float:
    """Max over rows of the L1 distance to the uniform distribution."""
    P = np.asarray(matrix, dtype=np.float64)
    return float(np.abs(P - 1.0 / P.shape[0]).sum(axis=1).max())


def _as_torus_matrix(kernel) -> np.ndarray:
    if isinstance(kernel, DisplacementKernel):
        return kernel.torus_matrix
    P = np.asarray(kernel, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {P.shape}")
    return P


def _power_from_squares(squares: list[np.ndarray], n: int) -> np.ndarray:
    out = None
    for bit in range(n.bit_length()):
        if (n >> bit) & 1:
            out = squares[bit] if out is None else out @ squares[bit]
    return out


def mixing_time(kernel, threshold: float = 0.5, cap: int = 10_000,
                mode: str = "iterate") -> int:
    """Smallest T with every row of the T-step torus matrix within L1
    distance ``threshold`` of uniform.

    Uniform is stationary for the (doubly stochastic) torus matrix and
    one step contracts L1 distance to a stationary law, so the row
    distance is non-increasing in T.  ``iterate`` multiplies step by
    step; ``power`` brackets T by repeated squaring and bisects inside
    the bracket (both return the same T).  Raises
    :class:`NoMixingWithinCap` when no T <= cap works.
    """
    P = _as_torus_matrix(kernel)
    if not 0.0 < threshold <= 2.0:
        raise ConfigError(f"threshold must lie in (0, 2], got {threshold}")
    cap = int(cap)
    if cap < 1:
        raise ConfigError(f"cap must be >= 1, got {cap}")

    if mode == "iterate":
        M = P.copy()
        t = 1
        while True:
            dist = l1_uniform_distance(M)
            if dist < threshold:
                return t
            if t >= cap:
                raise NoMixingWithinCap(
                    f"row L1 distance {dist:.3e} after {t} steps (cap {cap})",
                    cap=cap, last_distance=dist)
            M = M @ P
            t += 1
    if mode != "power":
        raise ConfigError(f"unknown mixing mode {mode!r}")

    squares = [P]                      # squares[k] = P^(2^k)
    dist = l1_uniform_distance(P)
    if dist < threshold:
        return 1
    while dist >= threshold:
        if 2 ** (len(squares) - 1) >= cap:
            # distance is non-increasing, so failing at a power >= cap
            # means every t <= cap fails too
            raise NoMixingWithinCap(
                f"row L1 distance {dist:.3e} at t={2 ** (len(squares) - 1)} "
                f"(cap {cap})", cap=cap, last_distance=dist)
        squares.append(squares[-1] @ squares[-1])
        dist = l1_uniform_distance(squares[-1])
    lo = 2 ** (len(squares) - 2)       # distance >= threshold here
    hi = 2 ** (len(squares) - 1)       # distance < threshold here
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if l1_uniform_distance(_power_from_squares(squares, mid)) < threshold:
            hi = mid
        else:
            lo = mid
    if hi > cap:
        raise NoMixingWithinCap(
            f"mixing time {hi} exceeds cap {cap}", cap=cap,
            last_distance=l1_uniform_distance(_power_from_squares(squares, cap)))
    return hi


# -- corrector ------------------------------------------------------------------


@dataclass
class CorrectorSolution:
    """Mean-zero corrector chi with (P - I) chi = s_bar - s on the grid."""

    s: np.ndarray        # (S, d) per-cell one-step mean displacement
    s_bar: np.ndarray    # (d,) uniform average of s
    chi: np.ndarray      # (S, d), mean-zero per component
    residual: float      # sup norm of (P - I) chi - (s_bar - s)
    mode: str
    grid: UlamGrid | None = None


def corrector_solve(kernel: DisplacementKernel, mode: str = "linear",
                    tol: float = 1e-10, cap: int = 50_000) -> CorrectorSolution:
    """Solve the Poisson equation for the drift corrector.

    The discrete drift s(g) = E[Y_1 - Y_0 | g] has uniform mean s_bar;
    chi is the mean-zero solution of (P - I) chi = s_bar - s.  ``series``
    sums the contraction series chi = sum_{n>=0} P^n (s - s_bar) until
    the sup norm of the increment drops below ``tol`` (raising
    :class:`SeriesDivergence` if that never happens within ``cap``
    terms); ``linear`` solves the rank-corrected dense system
    (I - P + 11^T/S) chi = s - s_bar, whose solution is automatically
    mean-zero because the right side is.  Both agree within 10 tol.
    """
    P = kernel.torus_matrix
    S = P.shape[0]
    s = kernel.mean_displacement()
    s_bar = s.mean(axis=0)
    rhs = s - s_bar

    if mode == "series":
        chi = rhs.copy()
        term = rhs.copy()
        for _ in range(int(cap)):
            term = P @ term
            chi += term
            if np.abs(term).max() < tol:
                break
        else:
            raise SeriesDivergence(
                f"series increment still {np.abs(term).max():.3e} after "
                f"{cap} terms (tol {tol})")
    elif mode == "linear":
        A = np.eye(S) - P + 1.0 / S
        try:
            chi = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"corrector system is singular: {exc}")
        if not np.isfinite(chi).all():
            raise SingularSystem("corrector solve produced non-finite values")
    else:
        raise ConfigError(f"unknown corrector mode {mode!r}")

    chi = chi - chi.mean(axis=0)
    residual = float(np.abs((P @ chi - chi) - (s_bar - s)).max())
    return CorrectorSolution(s=s, s_bar=s_bar, chi=chi, residual=residual,
                             mode=mode, grid=kernel.grid)


# -- variance rate ---------------------------------------------------------------


def _corrected_square(kernel: DisplacementKernel,
                      corrector: CorrectorSolution, v: np.ndarray) -> np.ndarray:
    """Per-cell conditional second moment of the corrected increment:

    V_v(g) = E[(v . (j + c(g') + chi(g') - c(g) - chi(g) - s_bar))^2 | g].
    """
    base = (kernel.grid.centers + corrector.chi) @ v      # v.(c + chi)
    u = base + float(corrector.s_bar @ v)                 # source side + drift
    qt2 = np.zeros(kernel.S)
    qt1 = np.zeros(kernel.S)
    rows = kernel.torus_matrix.sum(axis=1)
    for jump, block in zip(kernel.jumps, kernel.blocks):
        t = base + float(jump @ v)
        qt2 += block @ (t * t)
        qt1 += block @ t
    return qt2 - 2.0 * u * qt1 + u * u * rows


def _check_corrector(kernel: DisplacementKernel, corrector) -> None:
    if not isinstance(corrector, CorrectorSolution):
        raise MissingCorrector(
            "a CorrectorSolution solved on this kernel is required")
    if corrector.chi.shape != (kernel.S, kernel.d):
        raise MissingCorrector(
            f"corrector shape {corrector.chi.shape} does not match the "
            f"kernel ({kernel.S} cells, d={kernel.d})")


def _check_direction(kernel: DisplacementKernel, v) -> np.ndarray:
    vv = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if vv.shape != (kernel.d,):
        raise ConfigError(f"direction must have shape ({kernel.d},)")
    return vv


def kv_rate(kernel: DisplacementKernel, corrector: CorrectorSolution,
            v) -> float:
    """Grid variance rate of v . Y_n via the corrected quadratic form.

    With zeta(y) = y + chi(y mod 1), the compensated increments
    v . (zeta(Y_{k+1}) - zeta(Y_k) - s_bar) are stationary martingale
    increments, so var(v . Y_n) grows at rate

        integral over the torus of V_v = mean over cells of V_v(g).
    """
    _check_corrector(kernel, corrector)
    vv = _check_direction(kernel, v)
    return float(_corrected_square(kernel, corrector, vv).mean())


# -- covariance decay --------------------------------------------------------------


def cov_decay_check(kernel: DisplacementKernel, m: int, n: int, v):
    """Exact lagged increment covariance against the mixing bound.

    Returns ``(lhs, rhs)`` where, for the chain started uniform,

        lhs = |cov(v . Delta_m, v . Delta_{m+n+1})|   (n steps between)
        rhs = 4 |v|^2 . sup_g ||q_n(g, .) - unif||_L1 . sup_g E[|Delta_0|^2|g]

    with the L1 norm taken between the n-step row densities and 1.
    Uniform is stationary up to the O(1/G) discretization defect, so m
    enters only through that defect.
    """
    m = int(m)
    n = int(n)
    if m < 0 or n < 0:
        raise ConfigError("m and n must be nonnegative")
    vv = _check_direction(kernel, v)
    P = kernel.torus_matrix
    S = kernel.S
    c = kernel.grid.centers @ vv                     # v . c as function of g
    drift = kernel.mean_displacement() @ vv          # E[v . Delta | g]

    pi = np.full(S, 1.0 / S)
    for _ in range(m):
        pi = P.T @ pi

    hn = drift.copy()                                # P^n drift
    for _ in range(n):
        hn = P @ hn

    joint = 0.0
    for jump, block in zip(kernel.jumps, kernel.blocks):
        t = c + float(jump @ vv)                     # v . (j + c') over g'
        joint += float(pi @ (block @ (t * hn)))
        joint -= float(pi @ (c * (block @ hn)))
    ex = float(pi @ drift)
    ey = float(pi @ (P @ hn))
    lhs = abs(joint - ex * ey)

    if n == 0:
        dist_n = l1_uniform_distance(np.eye(S))
    else:
        dist_n = l1_uniform_distance(np.linalg.matrix_power(P, n))
    m2 = float(kernel.second_moment().max())
    rhs = 4.0 * float(vv @ vv) * dist_n * m2
    return lhs, rhs


# -- exact finite-horizon moments ----------------------------------------------------


@dataclass
class HorizonMoments:
    """Exact moments of the corrected coordinate W_n = v . zeta(Y_n)
    after n steps from a single starting cell."""

    n: int
    mean: float       # E[W_n]
    variance: float   # var(W_n)
    kv_sum: float     # sum_{k < n} E[V_v(Y_k)]


def corrected_coordinate_moments(kernel: DisplacementKernel,
                                 corrector: CorrectorSolution, v, n: int,
                                 start: int = 0) -> HorizonMoments:
    """Exact mean and variance of v . zeta(Y_n) by per-cell recursion.

    Tracks, per torus cell, the occupation mass and the first and second
    moments of W = v . (accumulated displacement + c(Y~) + chi(Y~)),
    starting from the single cell ``start`` (time-zero variance is
    exactly zero).  For a corrector with zero residual the compensated
    process is a martingale, so variance equals kv_sum (the running sum
    of E[V_v(Y_k)]) up to roundoff -- the finite-horizon form of the
    variance-rate identity.
    """
    _check_corrector(kernel, corrector)
    vv = _check_direction(kernel, v)
    n = int(n)
    if n < 0:
        raise ConfigError("n must be nonnegative")
    S = kernel.S
    start = int(start)
    if not 0 <= start < S:
        raise ConfigError(f"start cell must lie in [0, {S})")

    base = (kernel.grid.centers + corrector.chi) @ vv   # u0(g) = v.(c + chi)
    Vv = _corrected_square(kernel, corrector, vv)

    p = np.zeros(S)
    p[start] = 1.0
    f = p * base
    q2 = p * base * base
    kv_sum = 0.0
    for _ in range(n):
        kv_sum += float(p @ Vv)
        new_p = np.zeros(S)
        new_f = np.zeros(S)
        new_q = np.zeros(S)
        pu = p * base
        fu = f * base
        pu2 = pu * base
        for jump, block in zip(kernel.jumps, kernel.blocks):
            t = base + float(jump @ vv)                 # t_j(g')
            bp = block.T @ p
            bf = block.T @ f
            new_p += bp
            new_f += bf + t * bp - block.T @ pu
            new_q += (block.T @ q2 + 2.0 * (t * bf - block.T @ fu)
                      + t * t * bp - 2.0 * t * (block.T @ pu)
                      + block.T @ pu2)
        p, f, q2 = new_p, new_f, new_q

    mean = float(f.sum())
    variance = float(q2.sum() - mean * mean)
    return HorizonMoments(n=n, mean=mean, variance=variance, kv_sum=kv_sum)
