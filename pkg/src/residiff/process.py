"""Trajectory simulation for noisy expanding maps.

Three layers:

* ``step`` / ``deterministic_orbit`` -- single-point stepping of
  ``x -> phi(x) + eps * xi`` with an explicit noise-injection hook so unit
  tests can feed exact ``xi`` values.
* ``simulate_ensemble`` -- many independent trajectories reduced to
  streaming moments (mean, covariance, directional variances) with
  standard errors.  Trajectories are processed in fixed blocks of
  ``BLOCK`` streams and the per-block partial moments are merged in block
  order, so the result is bit-for-bit reproducible for a fixed seed no
  matter how many threads run the blocks.
* ``simulate_Z`` -- the auxiliary chain observed at expansion stopping
  times: starting from ``x0`` the noisy orbit runs ``2 + theta(X)`` steps
  per stage (``theta`` the expansion time at the current point), and after
  each stage an independent integer shift ``I`` with ``P(I = t_i) = |E_i|``
  is subtracted from the accumulated displacement.  The recorded chain
  satisfies ``Z_n - X_{N_n} = -sum_k I_k`` exactly (an integer vector).

All randomness is addressed, never streamed: trajectory ``j`` reads
gaussians from stream ``j`` of the counter RNG, stage ``n`` shift draws
read uniform ``n - 1`` of the shift domain, so every value is a pure
function of ``(seed, stream, index)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import rng as _rng
from .cylinders import check_eps, expansion_time
from .errors import ConfigError, HypothesisViolated, NonpositiveEpsilon
from .maps import BernoulliMap
from .rng import NoiseStream

# Fixed RNG/merge block: results must not depend on the thread count, so
# both the stream partition and the moment-merge order are pinned to it.
BLOCK = 2048

# store_paths keeps (n_steps + 1) * trajectories * d floats; refuse
# anything past ~1 GiB instead of swapping.
_MAX_PATH_ELEMENTS = 2 ** 27


def _as_point(x, d: int) -> np.ndarray:
    pt = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if pt.shape != (d,):
        raise ConfigError(f"expected a point of dimension {d}, got shape {pt.shape}")
    return pt


def step(m, x, eps: float, noise=None, step_index: int = 0):
    """One noisy step ``phi(x) + eps * xi``.

    ``noise`` is either a :class:`~residiff.rng.NoiseStream` (a fresh
    standard Gaussian vector is read at ``step_index``), an explicit
    array-like ``xi`` (the injection hook for exact unit tests), or None
    when ``eps == 0``.  Scalar in, scalar out for one-dimensional maps.
    """
    if eps < 0:
        raise ConfigError("eps must be >= 0")
    scalar = np.ndim(x) == 0
    y = m.apply(x)
    if eps == 0.0:
        return y
    d = m.d
    if noise is None:
        raise ConfigError("eps > 0 requires a NoiseStream or explicit xi")
    if isinstance(noise, NoiseStream):
        xi = noise.gaussians(step_index * d, d)
    else:
        xi = np.asarray(noise, dtype=np.float64)
        if xi.shape not in ((d,), ()):
            raise ConfigError(f"injected noise must have shape ({d},)")
    out = np.atleast_1d(np.asarray(y, dtype=np.float64)) + eps * xi
    return float(out[0]) if scalar and d == 1 else out


def deterministic_orbit(m, x, n: int) -> np.ndarray:
    """The orbit ``phi(x), phi^2(x), ..., phi^n(x)`` (noise-free).

    Returns shape ``(n,)`` for scalar input on a one-dimensional map,
    ``(n, d)`` otherwise; ``n = 0`` gives an empty array.
    """
    if n < 0:
        raise ConfigError("orbit length must be >= 0")
    scalar = np.ndim(x) == 0 and m.d == 1
    pt = _as_point(x, m.d)
    out = np.empty((n, m.d))
    for k in range(n):
        pt = np.atleast_1d(np.asarray(m.apply(pt), dtype=np.float64))
        out[k] = pt
    return out[:, 0] if scalar else out


# -- ensemble moments --------------------------------------------------------


@dataclass
class SnapshotMoments:
    """Sample moments of the ensemble at one snapshot time.

    ``cov`` is the unbiased sample covariance.  ``mean_se`` is the
    classical ``sqrt(diag(cov) / n)``.  The covariance and directional
    variance SEs are batch-mean estimates over the fixed trajectory
    blocks; with fewer than eight full blocks they fall back to the
    normal-theory approximation (exact for Gaussian marginals, an
    underestimate for heavy-tailed ones, so prefer >= 8 * BLOCK
    trajectories when the error bar itself matters).
    """

    step: int
    n: int
    mean: np.ndarray
    mean_se: np.ndarray
    cov: np.ndarray
    cov_se: np.ndarray
    directions: np.ndarray
    direction_var: np.ndarray
    direction_var_se: np.ndarray


@dataclass
class EnsembleResult:
    eps: float
    seed: int
    trajectories: int
    backend: str
    snapshots: list[SnapshotMoments] = field(default_factory=list)
    paths: np.ndarray | None = None  # (n_snapshots, trajectories, d), opt-in
    # per-full-block unbiased directional variances (n_blocks, k, n_dirs),
    # opt-in; joint per-block statistics across snapshots support batched
    # standard errors of differenced estimators
    block_direction_var: np.ndarray | None = None

    def at(self, step: int) -> SnapshotMoments:
        for snap in self.snapshots:
            if snap.step == step:
                return snap
        raise KeyError(f"no snapshot at step {step}")


def _initial_block(m, initial, lo: int, nb: int, seed: int) -> np.ndarray:
    """Start positions for trajectories [lo, lo + nb), shape (nb, d)."""
    d = m.d
    if isinstance(initial, str):
        if initial != "uniform":
            raise ConfigError(f"unknown initial distribution {initial!r}")
        streams = np.arange(lo, lo + nb, dtype=np.uint64)
        return _rng.uniforms(seed, streams, 0, d, _rng.DOMAIN_INIT)
    if isinstance(initial, tuple) and len(initial) == 2 and initial[0] == "delta":
        return np.broadcast_to(_as_point(initial[1], d), (nb, d)).copy()
    arr = np.asarray(initial, dtype=np.float64)
    if arr.ndim == 0 or arr.shape == (d,):
        return np.broadcast_to(_as_point(arr, d), (nb, d)).copy()
    if arr.ndim == 1 and d == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ConfigError("custom initial positions must have shape (trajectories, d)")
    return arr[lo:lo + nb].astype(np.float64, copy=True)


def _block_positions_kernel(m, x0, eps, n_steps, pos_snaps, seed, lo, kern):
    """d = 1 hot path: positions (n_pos_snaps, nb) via the stepping kernel."""
    nb = x0.shape[0]
    out = np.empty((nb, len(pos_snaps)))  # kernel layout: trajectory-major
    if len(pos_snaps):
        kern.step_block_d1(
            np.ascontiguousarray(x0[:, 0]), float(eps), int(n_steps),
            np.asarray(pos_snaps, dtype=np.int64), int(seed) % 2 ** 64,
            int(lo), m.pos_corner, m.pos_slope, m.pos_off, out)
    return np.ascontiguousarray(out.T)[:, :, None]  # (k, nb, 1)


def _block_positions_symbolic(m, nb, n_steps, pos_snaps, seed, lo):
    """Noise-free dynamics from the uniform initial law, sampled exactly.

    Iterating the map in floats consumes one mantissa bit per unit of
    expansion, so a noise-free orbit freezes after ~53/log2(slope) steps
    and the ensemble variance stalls.  Under the uniform law the exact
    distribution is available without iterating: the symbol sequence is
    i.i.d. with P(i) = |E_i|, the cube index is the sum of the symbols'
    target jumps, and the in-cube remainder is uniform and independent of
    the first n symbols.  This path samples that representation directly
    (addressed draws: indices 0..d-1 seed the initial point, d-1+t the
    step-t symbol, then d per snapshot for the remainders).
    """
    d = m.d
    streams = np.arange(lo, lo + nb, dtype=np.uint64)
    cum = np.cumsum([float(v) for v in m.volumes])
    cum[-1] = 1.0
    targets = np.asarray(m.targets, dtype=np.int64)
    k = np.zeros((nb, d), dtype=np.int64)
    out = np.empty((len(pos_snaps), nb, d))
    si = 0
    done = 0
    chunk = 4096
    while si < len(pos_snaps):
        cnt = min(chunk, n_steps - done)
        u = _rng.uniforms(seed, streams, d + done, cnt, _rng.DOMAIN_INIT)
        jumps = targets[np.searchsorted(cum, u, side="right")]  # (nb, cnt, d)
        while si < len(pos_snaps) and pos_snaps[si] <= done + cnt:
            part = k + jumps[:, :pos_snaps[si] - done].sum(axis=1)
            rem = _rng.uniforms(seed, streams, d + n_steps + si * d, d,
                                _rng.DOMAIN_INIT)
            out[si] = part + rem
            si += 1
        k += jumps.sum(axis=1)
        done += cnt
    return out


def _block_positions_generic(m, x0, eps, n_steps, pos_snaps, seed, lo):
    """Any map, any d: vectorized stepping with addressed noise."""
    nb, d = x0.shape
    x = x0.copy()
    streams = np.arange(lo, lo + nb, dtype=np.uint64)
    out = np.empty((len(pos_snaps), nb, d))
    si = 0
    for k in range(n_steps):
        x = m.apply_batch(x)
        if eps != 0.0:
            xi = _rng.gaussians(seed, streams, k * d, d, _rng.DOMAIN_NOISE)
            x = x + eps * xi
        if si < len(pos_snaps) and k + 1 == pos_snaps[si]:
            out[si] = x
            si += 1
    return out


def _moments_of_block(pos, directions):
    """Per-snapshot centered sums of one block of positions (k, nb, d)."""
    nb = pos.shape[1]
    mean = pos.mean(axis=1)                      # (k, d)
    dev = pos - mean[:, None, :]
    m2 = np.einsum("knd,kne->kde", dev, dev)     # (k, d, d)
    proj = pos @ directions.T                    # (k, nb, nv)
    pmean = proj.mean(axis=1)
    pdev = proj - pmean[:, None, :]
    pm2 = np.einsum("knv,knv->kv", pdev, pdev)   # (k, nv)
    return nb, mean, m2, pmean, pm2


def _merge_moments(a, b):
    """Pooled centered sums of two disjoint samples (per snapshot)."""
    na, mean_a, m2_a, pmean_a, pm2_a = a
    nb, mean_b, m2_b, pmean_b, pm2_b = b
    n = na + nb
    delta = mean_b - mean_a
    mean = mean_a + delta * (nb / n)
    m2 = m2_a + m2_b + np.einsum("kd,ke->kde", delta, delta) * (na * nb / n)
    pdelta = pmean_b - pmean_a
    pmean = pmean_a + pdelta * (nb / n)
    pm2 = pm2_a + pm2_b + pdelta * pdelta * (na * nb / n)
    return n, mean, m2, pmean, pm2


def simulate_ensemble(m, initial, eps: float, n_steps: int, trajectories: int,
                      seed: int, snapshots=None, directions=None,
                      threads: int = 1, backend: str | None = None,
                      store_paths: bool = False,
                      collect_block_stats: bool = False) -> EnsembleResult:
    """Sample moments of ``X_n`` over independent noisy trajectories.

    ``initial`` is ``("delta", x)`` (or a bare point), ``"uniform"`` for
    uniform on the base cube, or an ``(trajectories, d)`` array of start
    positions.  ``snapshots`` lists the step counts at which moments are
    recorded (default: only ``n_steps``).  ``store_paths`` additionally
    keeps the raw positions at every snapshot.
    """
    if eps < 0:
        raise ConfigError("eps must be >= 0")
    if trajectories < 1:
        raise ConfigError("need at least one trajectory")
    if n_steps < 0:
        raise ConfigError("n_steps must be >= 0")
    d = m.d
    if snapshots is None:
        snapshots = [n_steps]
    snaps = sorted(set(int(s) for s in snapshots))
    if snaps and (snaps[0] < 0 or snaps[-1] > n_steps):
        raise ConfigError("snapshots must lie in [0, n_steps]")
    if not snaps:
        raise ConfigError("need at least one snapshot")
    if directions is None:
        dirs = np.eye(d)[:1] if d == 1 else np.zeros((0, d))
    else:
        dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        if dirs.shape[1] != d:
            raise ConfigError(f"directions must have {d} components")
    if store_paths and (n_steps + 1) * trajectories * d > _MAX_PATH_ELEMENTS:
        raise ConfigError("store_paths would exceed the in-memory path budget")

    want0 = snaps[0] == 0
    pos_snaps = [s for s in snaps if s > 0]
    hot = isinstance(m, BernoulliMap) and d == 1
    kern = _kernels.get_backend(backend) if hot else None
    if backend not in (None, "python", "numpy", "fallback") and not hot:
        raise ConfigError("compiled backend only applies to one-dimensional maps")

    n_blocks = (trajectories + BLOCK - 1) // BLOCK

    symbolic = (eps == 0.0 and isinstance(initial, str)
                and initial == "uniform" and isinstance(m, BernoulliMap))

    def run_block(b: int):
        lo = b * BLOCK
        nb = min(BLOCK, trajectories - lo)
        x0 = _initial_block(m, initial, lo, nb, seed)
        if symbolic:
            pos = _block_positions_symbolic(m, nb, n_steps, pos_snaps,
                                            seed, lo)
        elif hot:
            pos = _block_positions_kernel(m, x0, eps, n_steps, pos_snaps,
                                          seed, lo, kern)
        else:
            pos = _block_positions_generic(m, x0, eps, n_steps, pos_snaps,
                                           seed, lo)
        if want0:
            pos = np.concatenate([x0[None], pos], axis=0)
        return pos

    results: list = [None] * n_blocks
    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for b, pos in zip(range(n_blocks), pool.map(run_block, range(n_blocks))):
                results[b] = pos
    else:
        for b in range(n_blocks):
            results[b] = run_block(b)

    # merge in fixed block order: bit-reproducible for any thread count
    total = None
    block_cov = []   # unbiased per-block covariances, full blocks only
    block_pvar = []
    for b in range(n_blocks):
        stats = _moments_of_block(results[b], dirs)
        total = stats if total is None else _merge_moments(total, stats)
        if stats[0] == BLOCK:
            block_cov.append(stats[2] / (BLOCK - 1))
            block_pvar.append(stats[4] / (BLOCK - 1))

    n, mean, m2, pmean, pm2 = total
    if n > 1:
        cov = m2 / (n - 1)
        pvar = pm2 / (n - 1)
    else:
        cov = np.zeros_like(m2)
        pvar = np.zeros_like(pm2)
    mean_se = np.sqrt(np.maximum(np.einsum("kdd->kd", cov), 0.0) / n)

    if len(block_cov) >= 8:
        # distribution-free batch-means estimate over the fixed blocks
        nb_full = len(block_cov)
        cov_se = np.std(np.stack(block_cov), axis=0, ddof=1) / math.sqrt(nb_full)
        pvar_se = np.std(np.stack(block_pvar), axis=0, ddof=1) / math.sqrt(nb_full)
    else:
        # too few batches for a stable estimate: normal-theory formulas
        # var(cov_ij) = (cov_ii cov_jj + cov_ij^2) / (n - 1)
        denom = max(n - 1, 1)
        diag = np.einsum("kdd->kd", cov)
        cov_se = np.sqrt((np.einsum("kd,ke->kde", diag, diag) + cov ** 2)
                         / denom)
        pvar_se = np.abs(pvar) * math.sqrt(2.0 / denom)

    if kern is None:
        used = "python"  # generic path is pure numpy whatever is compiled
    else:
        used = next(name for name, mod in _kernels.available_backends().items()
                    if mod is kern)
    result = EnsembleResult(eps=float(eps), seed=int(seed),
                            trajectories=int(trajectories), backend=used)
    for i, s in enumerate(snaps):
        result.snapshots.append(SnapshotMoments(
            step=s, n=n, mean=mean[i], mean_se=mean_se[i],
            cov=cov[i], cov_se=cov_se[i], directions=dirs,
            direction_var=pvar[i], direction_var_se=pvar_se[i]))
    if store_paths:
        result.paths = np.concatenate([r for r in results], axis=1)
    if collect_block_stats and block_pvar:
        result.block_direction_var = np.stack(block_pvar)
    return result


# -- auxiliary chain at expansion stopping times ------------------------------


@dataclass
class ZTrace:
    """The stopped, defragmented chain.

    Row ``n`` holds the stage index, the stopping time ``N_n`` (total
    noisy steps taken), the position ``X_{N_n}``, the accumulated integer
    shift ``sum_{k<=n} I_k``, and ``Z_n = X_{N_n} - sum I_k``; row 0 is
    the initial condition with ``N_0 = 0`` and zero shift.  The identity
    ``Z_n - X_{N_n} = -sum I_k`` holds exactly in floating point (the
    shift is an integer vector of moderate size).
    """

    eps: float
    seed: int
    stage: np.ndarray          # (K + 1,) int64
    stop_time: np.ndarray      # (K + 1,) int64, N_n
    x_at_stop: np.ndarray      # (K + 1, d)
    shift: np.ndarray          # (K + 1, d) int64, cumulative sum of I
    z: np.ndarray              # (K + 1, d)
    x_path: np.ndarray | None = None  # (N_K + 1, d), opt-in

    @property
    def d(self) -> int:
        return self.z.shape[1]

    @property
    def stop_increments(self) -> np.ndarray:
        """N_{n+1} - N_n for every stage."""
        return np.diff(self.stop_time)

    def lattice_residual(self) -> np.ndarray:
        """Z_n - X_{N_n} + shift_n; exactly zero when the bookkeeping holds."""
        return self.z - self.x_at_stop + self.shift

    def lattice_ok(self) -> bool:
        return bool(np.all(self.lattice_residual() == 0.0))


class _BufferedGaussians:
    """Sequential reads of the addressed gaussian sequence of one stream."""

    _CHUNK = 4096

    def __init__(self, seed: int, stream: int, domain: int):
        self._seed, self._stream, self._domain = seed, stream, domain
        self._start = 0
        self._buf = np.empty(0)
        self._pos = 0

    def take(self, count: int) -> np.ndarray:
        while self._buf.shape[0] - self._pos < count:
            fresh = _rng.gaussians(self._seed, self._stream, self._start,
                                   self._CHUNK, self._domain)
            fresh = np.atleast_1d(np.squeeze(fresh))
            self._buf = np.concatenate([self._buf[self._pos:], fresh])
            self._pos = 0
            self._start += self._CHUNK
        out = self._buf[self._pos:self._pos + count]
        self._pos += count
        return out


def simulate_Z(m: BernoulliMap, x0, eps: float, z_steps: int, seed: int,
               store_path: bool = False) -> ZTrace:
    """Run the auxiliary chain for ``z_steps`` stages.

    Each stage advances the noisy orbit by ``2 + theta(X)`` steps, where
    ``theta`` is the expansion time at the current position, then draws an
    independent shift ``I`` with ``P(I = t_i) = |E_i|`` (the one-step cube
    law) and subtracts it from the running displacement.
    """
    eps_f = check_eps(eps)
    if eps_f >= 1:
        raise HypothesisViolated("the stopped chain requires eps < 1")
    if z_steps < 1:
        raise ConfigError("z_steps must be >= 1")
    d = m.d
    x = _as_point(x0, d)

    cum_vol = np.cumsum([float(v) for v in m.volumes])
    cum_vol[-1] = 1.0  # guard against float round-off in the last bin
    targets = np.asarray(m.targets, dtype=np.int64)

    noise = _BufferedGaussians(seed, 0, _rng.DOMAIN_NOISE)
    stage = np.arange(z_steps + 1, dtype=np.int64)
    stop_time = np.zeros(z_steps + 1, dtype=np.int64)
    x_at_stop = np.zeros((z_steps + 1, d))
    shift = np.zeros((z_steps + 1, d), dtype=np.int64)
    zpos = np.zeros((z_steps + 1, d))
    x_at_stop[0] = x
    zpos[0] = x
    path = [x.copy()] if store_path else None

    t = 0  # global noisy-step clock; gaussian index = t * d + axis
    acc_shift = np.zeros(d, dtype=np.int64)
    for n in range(1, z_steps + 1):
        theta = expansion_time(m, x, eps)
        for _ in range(2 + theta):
            x = np.atleast_1d(np.asarray(m.apply(x), dtype=np.float64))
            x = x + eps * noise.take(d)
            t += 1
            if store_path:
                path.append(x.copy())
        u = float(np.squeeze(_rng.uniforms(seed, 0, n - 1, 1,
                                           _rng.DOMAIN_SHIFT)))
        cell = int(np.searchsorted(cum_vol, u, side="right"))
        cell = min(cell, len(cum_vol) - 1)
        acc_shift = acc_shift + targets[cell]
        stop_time[n] = t
        x_at_stop[n] = x
        shift[n] = acc_shift
        zpos[n] = x - acc_shift
    return ZTrace(eps=float(eps), seed=int(seed), stage=stage,
                  stop_time=stop_time, x_at_stop=x_at_stop, shift=shift,
                  z=zpos,
                  x_path=np.stack(path) if store_path else None)


def save_trace(trace: ZTrace, path) -> None:
    """Binary dump of a ZTrace (numpy .npz)."""
    arrays = dict(eps=np.float64(trace.eps), seed=np.int64(trace.seed),
                  stage=trace.stage, stop_time=trace.stop_time,
                  x_at_stop=trace.x_at_stop, shift=trace.shift, z=trace.z)
    if trace.x_path is not None:
        arrays["x_path"] = trace.x_path
    np.savez(path, **arrays)


def load_trace(path) -> ZTrace:
    with np.load(path) as data:
        return ZTrace(
            eps=float(data["eps"]), seed=int(data["seed"]),
            stage=data["stage"], stop_time=data["stop_time"],
            x_at_stop=data["x_at_stop"], shift=data["shift"], z=data["z"],
            x_path=data["x_path"] if "x_path" in data else None)
