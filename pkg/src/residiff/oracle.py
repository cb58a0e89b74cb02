"""Exact finite-state laboratory for lattice-periodic displacement chains.

A chain here has a finite torus-state set of size S and an integer
displacement window: one step moves state g to state g' while the
position jumps by a lattice vector j, with probability q(g, g', j).
Everything is small enough to compute exactly (dense linear algebra and
moment recursions), so the central limit machinery can be validated to
machine precision, independent of Monte Carlo:

* the corrector identity -- the variance rate of ``v . J_n`` equals the
  stationary average of ``V_v(g) = E[(v.(j + chi(g') - chi(g)) - v.s)^2]``
  with ``(I - P) chi = s - s_bar`` -- checked against a direct
  second-moment recursion (``exact_variance_rate_dual``);
* the minorization lower bound -- if the displacement law from every
  state dominates ``beta * w(g, .)``, the rate is at least
  ``beta v . D_w_bar v`` with ``D_w_bar`` the uniform state-average of
  the ``w(g, .)`` covariances -- including its stopped-time variant
  (``minorization_bound_check``);
* shift-invariance is structural: the kernel is indexed by displacement,
  so the periodicity hypotheses hold by construction whenever the
  j-marginal is doubly stochastic (asserted at build time).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (BoundViolation, ConfigError, InvalidMinorizer,
                     InvalidStoppingSchedule, NotMixing, SingularSystem)

_ROW_TOL = 1e-14
_MINORIZER_TOL = 1e-12
_MIX_GAP = 1e-12
_MIX_CAP = 100_000
_RATE_PAIR = (4096, 8192)


def _as_jumps(jumps, d: int) -> np.ndarray:
    arr = np.asarray(jumps, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ConfigError(f"jumps must be (nJ, {d}) integer vectors")
    return arr


@dataclass
class PeriodicChainSpec:
    """Finite lattice-periodic chain: states, displacement window, kernel.

    ``blocks[k][g, g']`` is the probability of stepping from state g to
    state g' with displacement ``jumps[k]``.  Rows (summed over k and
    g') are stochastic within 1e-14.  ``column_tol`` bounds how far the
    j-marginal may sit from doubly stochastic: shift-invariance of the
    underlying dynamics enters only through that property, so it is
    asserted at construction.

    An optional minorizer declares ``beta`` and per-state displacement
    laws ``w[g]`` over ``w_jumps``; the kernel's j-marginal must then
    dominate ``beta * w(g, .)`` entrywise.
    """

    d: int
    jumps: np.ndarray
    blocks: np.ndarray
    beta: float | None = None
    w_jumps: np.ndarray | None = None
    w: np.ndarray | None = None
    name: str = ""
    column_tol: float = 1e-12

    def __post_init__(self):
        self.jumps = _as_jumps(self.jumps, self.d)
        self.blocks = np.asarray(self.blocks, dtype=np.float64)
        nJ = self.jumps.shape[0]
        if self.blocks.ndim != 3 or self.blocks.shape[0] != nJ \
                or self.blocks.shape[1] != self.blocks.shape[2]:
            raise ConfigError("blocks must be (nJ, S, S) matching jumps")
        if nJ == 0:
            raise ConfigError("spec needs at least one displacement")
        if len({tuple(j) for j in self.jumps}) != nJ:
            raise ConfigError("duplicate displacement vectors")
        if self.blocks.min() < 0.0:
            raise ConfigError("kernel entries must be nonnegative")
        rows = self.blocks.sum(axis=(0, 2))
        if np.abs(rows - 1.0).max() > _ROW_TOL:
            raise ConfigError(
                f"row sums deviate from 1 by {np.abs(rows - 1.0).max():.3e} "
                f"(> {_ROW_TOL})")
        cols = self.blocks.sum(axis=(0, 1))
        defect = float(np.abs(cols - 1.0).max())
        if defect > self.column_tol:
            raise ConfigError(
                f"j-marginal is not doubly stochastic: column defect "
                f"{defect:.3e} > {self.column_tol:.3e}")
        self._validate_minorizer()

    def _validate_minorizer(self):
        declared = [self.beta is not None, self.w is not None,
                    self.w_jumps is not None]
        if not any(declared):
            return
        if not all(declared):
            raise InvalidMinorizer("beta, w and w_jumps must come together")
        if not 0.0 < self.beta <= 1.0:
            raise InvalidMinorizer(f"beta must lie in (0, 1], got {self.beta}")
        self.w_jumps = _as_jumps(self.w_jumps, self.d)
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.shape != (self.S, self.w_jumps.shape[0]):
            raise InvalidMinorizer(
                f"w must be (S, nW) = ({self.S}, {self.w_jumps.shape[0]})")
        if self.w.min() < 0.0:
            raise InvalidMinorizer("minorizer weights must be nonnegative")
        if np.abs(self.w.sum(axis=1) - 1.0).max() > _MINORIZER_TOL:
            raise InvalidMinorizer("each w(g, .) must be a probability law")
        marg = self.jump_marginal()
        index = {tuple(j): k for k, j in enumerate(self.jumps)}
        for iw, j in enumerate(self.w_jumps):
            k = index.get(tuple(j))
            have = marg[:, k] if k is not None else np.zeros(self.S)
            need = self.beta * self.w[:, iw]
            if (have - need).min() < -_MINORIZER_TOL:
                raise InvalidMinorizer(
                    f"j-marginal fails to dominate beta*w at displacement "
                    f"{tuple(int(v) for v in j)}")

    @property
    def S(self) -> int:
        return self.blocks.shape[1]

    def torus_matrix(self) -> np.ndarray:
        """State transition matrix P = sum_k blocks[k]."""
        return self.blocks.sum(axis=0)

    def jump_marginal(self) -> np.ndarray:
        """(S, nJ): probability of each displacement from each state."""
        return self.blocks.sum(axis=2).T

    def drift(self) -> np.ndarray:
        """(S, d): expected displacement from each state."""
        return self.jump_marginal() @ self.jumps.astype(np.float64)

    def second_moment(self, v) -> np.ndarray:
        """(S,): E[(v . j)^2 | g] for each state."""
        vj = self.jumps.astype(np.float64) @ _as_direction(v, self.d)
        return self.jump_marginal() @ vj ** 2

    def w_covariance_average(self) -> np.ndarray:
        """Uniform state-average of the minorizer covariances D_w_bar."""
        if self.w is None:
            raise InvalidMinorizer("spec declares no minorizer")
        jw = self.w_jumps.astype(np.float64)
        mean = self.w @ jw                          # (S, d)
        sec = np.einsum("gi,ia,ib->gab", self.w, jw, jw)
        cov = sec - np.einsum("ga,gb->gab", mean, mean)
        return cov.mean(axis=0)

    # -- serialization (regression fixtures) ----------------------------------

    def to_json(self) -> dict:
        out = {
            "d": self.d,
            "name": self.name,
            "column_tol": self.column_tol,
            "jumps": self.jumps.tolist(),
            "blocks": self.blocks.tolist(),
        }
        if self.beta is not None:
            out["beta"] = float(self.beta)
            out["w_jumps"] = self.w_jumps.tolist()
            out["w"] = self.w.tolist()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "PeriodicChainSpec":
        return cls(d=int(data["d"]), jumps=data["jumps"],
                   blocks=data["blocks"], beta=data.get("beta"),
                   w_jumps=data.get("w_jumps"), w=data.get("w"),
                   name=data.get("name", ""),
                   column_tol=float(data.get("column_tol", 1e-12)))


def save_spec(spec: PeriodicChainSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_json(), fh, indent=1)
        fh.write("\n")


def load_spec(path) -> PeriodicChainSpec:
    with open(path) as fh:
        return PeriodicChainSpec.from_json(json.load(fh))


# -- exact rates ------------------------------------------------------------------


def _as_direction(v, d: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if arr.shape != (d,):
        raise ConfigError(f"direction must be a {d}-vector")
    if not np.isfinite(arr).all() or not arr.any():
        raise ConfigError("direction must be finite and nonzero")
    return arr


def stationary_distribution(spec: PeriodicChainSpec,
                            gap_tol: float = _MIX_GAP,
                            cap: int = _MIX_CAP) -> np.ndarray:
    """Stationary law by power squaring; NotMixing if rows never merge.

    Squares P until every column of P^n is constant within ``gap_tol``
    (so each row equals the stationary law) or n exceeds ``cap``.
    """
    power = spec.torus_matrix()
    steps = 1
    gap = float(np.max(power.max(axis=0) - power.min(axis=0)))
    while gap >= gap_tol:
        if steps > cap:
            raise NotMixing(
                f"power iteration gap {gap:.3e} after {steps} steps "
                f"(cap {cap})")
        power = power @ power
        steps *= 2
        gap = float(np.max(power.max(axis=0) - power.min(axis=0)))
    pi = power.mean(axis=0)
    return pi / pi.sum()


def _corrector(spec: PeriodicChainSpec, pi: np.ndarray) -> np.ndarray:
    """Solve (I - P + 1 pi^T) chi = s - s_bar; chi has pi-mean zero."""
    P = spec.torus_matrix()
    s = spec.drift()
    rhs = s - pi @ s
    A = np.eye(spec.S) - P + np.outer(np.ones(spec.S), pi)
    try:
        chi = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"corrector solve failed: {exc}") from exc
    return chi - pi @ chi


def _v_variance(spec: PeriodicChainSpec, chi: np.ndarray,
                v: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """V_v(g) = E[(v.j + v.chi(g') - v.chi(g) - v.s_bar)^2 | g]."""
    s_bar = pi @ spec.drift()
    chi_v = chi @ v
    shift = chi_v + float(s_bar @ v)
    out = np.zeros(spec.S)
    for k in range(spec.jumps.shape[0]):
        block = spec.blocks[k]
        t = float(spec.jumps[k] @ v) + chi_v
        rows = block.sum(axis=1)
        out += block @ t ** 2 - 2.0 * shift * (block @ t) + shift ** 2 * rows
    return out


def _moment_recursion(spec: PeriodicChainSpec, v: np.ndarray,
                      start: np.ndarray, horizons,
                      center: float = 0.0) -> dict:
    """Exact var(v . J_n) at each requested horizon.

    Tracks, per state g: probability mass, E[1{Y_n = g} (v.J_n)] and
    E[1{Y_n = g} (v.J_n)^2] -- O(n S^2 nJ) without path storage.
    Subtracting ``center`` (the stationary drift) from every increment
    leaves the variance unchanged but keeps the tracked moments O(1),
    avoiding loss of precision to the mean's square.
    """
    want = sorted(set(int(h) for h in horizons))
    vj = [float(j @ v) - center for j in spec.jumps]
    p = start.copy()
    m1 = np.zeros(spec.S)
    m2 = np.zeros(spec.S)
    out = {}
    if want and want[0] == 0:
        out[0] = 0.0
    for n in range(1, want[-1] + 1 if want else 0):
        np_, nm1, nm2 = np.zeros_like(p), np.zeros_like(m1), np.zeros_like(m2)
        for k in range(spec.jumps.shape[0]):
            BT = spec.blocks[k].T
            tp = BT @ p
            tm1 = BT @ m1
            np_ += tp
            nm1 += tm1 + vj[k] * tp
            nm2 += BT @ m2 + 2.0 * vj[k] * tm1 + vj[k] ** 2 * tp
        p, m1, m2 = np_, nm1, nm2
        if n in want:
            mean = m1.sum()
            out[n] = float(m2.sum() - mean ** 2)
    return out


@dataclass
class DualRateReport:
    """Variance rate of v . J_n computed two independent exact ways."""

    rate_A: float          # corrector identity: pi-average of V_v
    rate_B: float          # differenced second-moment recursion
    diff: float
    n_pair: tuple


def exact_variance_rate_dual(spec: PeriodicChainSpec, v,
                             n_pair: tuple = _RATE_PAIR,
                             tol: float = 1e-6) -> DualRateReport:
    """Cross-validate the corrector variance rate against moment recursion.

    rate_A solves the corrector system and averages ``V_v`` under the
    stationary law; rate_B differences the exact var(v . J_n) at the two
    horizons in ``n_pair`` (the O(1) corrector boundary term cancels and
    the remainder decays geometrically, so agreement is limited only by
    float accumulation).  Raises :class:`BoundViolation` when
    ``|A - B| > tol * max(1, A)``.
    """
    vv = _as_direction(v, spec.d)
    pi = stationary_distribution(spec)
    chi = _corrector(spec, pi)
    rate_a = float(pi @ _v_variance(spec, chi, vv, pi))
    n1, n2 = int(n_pair[0]), int(n_pair[1])
    if not 0 < n1 < n2:
        raise ConfigError("n_pair must be increasing positive horizons")
    var = _moment_recursion(spec, vv, pi, (n1, n2),
                            center=float(pi @ (spec.drift() @ vv)))
    rate_b = (var[n2] - var[n1]) / (n2 - n1)
    diff = abs(rate_a - rate_b)
    report = DualRateReport(rate_A=rate_a, rate_B=rate_b, diff=diff,
                            n_pair=(n1, n2))
    if diff > tol * max(1.0, rate_a):
        raise BoundViolation(
            f"dual variance rates disagree: A={rate_a!r} B={rate_b!r} "
            f"(diff {diff:.3e} > {tol:.0e}*max(1, A))")
    return report


@dataclass
class KvIdentityReport:
    """Finite-horizon check: var of the corrected coordinate vs sum of V_v."""

    n: int
    variance: float
    kv_sum: float
    diff: float


def kv_identity_check(spec: PeriodicChainSpec, v, n: int,
                      start: int = 0) -> KvIdentityReport:
    """Exact finite-n identity from a deterministic start.

    ``W_n = v . J_n - n v . s_bar + v . chi(Y_n)`` is a martingale, so
    from a fixed state var(W_n) equals ``sum_{k<n} E[V_v(Y_k)]``
    exactly; both sides are computed by recursion and compared.
    """
    vv = _as_direction(v, spec.d)
    pi = stationary_distribution(spec)
    chi = _corrector(spec, pi)
    v_var = _v_variance(spec, chi, vv, pi)
    chi_v = chi @ vv
    s_v = float(pi @ (spec.drift() @ vv))
    vj = [float(j @ vv) - s_v for j in spec.jumps]

    p = np.zeros(spec.S)
    p[int(start)] = 1.0
    f = chi_v * p
    q = chi_v ** 2 * p
    kv_sum = 0.0
    for _ in range(int(n)):
        kv_sum += float(p @ v_var)
        np_, nf, nq = np.zeros_like(p), np.zeros_like(f), np.zeros_like(q)
        for k in range(spec.jumps.shape[0]):
            BT = spec.blocks[k].T
            tp, tf = BT @ p, BT @ f
            tpc = BT @ (chi_v * p)
            t = vj[k] + chi_v          # added increment, by target state
            np_ += tp
            nf += tf + t * tp - tpc
            nq += (BT @ q + 2.0 * (t * tf - BT @ (chi_v * f))
                   + t ** 2 * tp - 2.0 * t * tpc + BT @ (chi_v ** 2 * p))
        p, f, q = np_, nf, nq
    mean = float(f.sum())
    variance = float(q.sum() - mean ** 2)
    return KvIdentityReport(n=int(n), variance=variance, kv_sum=kv_sum,
                            diff=abs(variance - kv_sum))


def cov_decay_check(spec: PeriodicChainSpec, m: int, n: int,
                    v) -> tuple[float, float]:
    """Stationary increment-covariance bound: (lhs, rhs), lhs <= rhs.

    lhs = |cov(v.Delta_m, v.Delta_{m+n+1})| from the stationary start;
    rhs = 4 |v|^2 sup_g ||p_n(g,.) - pi||_L1 sup_g E[(v.Delta)^2 | g],
    with the L1 distance of densities relative to the uniform measure.
    """
    vv = _as_direction(v, spec.d)
    pi = stationary_distribution(spec)
    s_v = spec.drift() @ vv
    P = spec.torus_matrix()
    Pn = np.linalg.matrix_power(P, int(n))
    hn = Pn @ s_v
    joint = 0.0
    for k in range(spec.jumps.shape[0]):
        joint += float(spec.jumps[k] @ vv) * float(pi @ (spec.blocks[k] @ hn))
    lhs = abs(joint - float(pi @ s_v) * float(pi @ (P @ hn)))
    l1 = float(np.max(np.abs(Pn * spec.S - 1.0).mean(axis=1)))
    rhs = 4.0 * float(vv @ vv) * l1 * float(spec.second_moment(vv).max())
    return lhs, rhs


# -- minorization bound -----------------------------------------------------------


@dataclass
class StoppingSchedule:
    """Deterministic stopping times: tau(n) integer, nondecreasing, >= gamma n."""

    gamma: float
    tau: Callable[[int], int]


@dataclass
class MinorizationReport:
    """Measured variance rate against the minorized lower bound."""

    rate: float
    bound: float
    passed: bool
    beta: float
    gamma: float
    d_w_bar: np.ndarray = field(repr=False, default=None)


def minorization_bound_check(spec: PeriodicChainSpec, v,
                             stopping: StoppingSchedule | tuple | None = None,
                             n_pair: tuple = _RATE_PAIR) -> MinorizationReport:
    """Assert the minorized variance lower bound rate >= beta (gamma) v.D_w_bar.v.

    Unstopped: the chain's variance rate (corrector identity) must be at
    least ``beta * v . D_w_bar v``.  Stopped: for a deterministic
    schedule ``tau_n >= gamma n`` the rate of var(v . J_{tau_n}) per
    unit n must be at least ``beta gamma v . D_w_bar v``.  Raises
    :class:`BoundViolation` when the bound fails by more than 1e-9.
    """
    vv = _as_direction(v, spec.d)
    if spec.beta is None:
        raise InvalidMinorizer("spec declares no minorizer")
    d_w_bar = spec.w_covariance_average()
    base = float(spec.beta) * float(vv @ d_w_bar @ vv)

    if stopping is None:
        rate = exact_variance_rate_dual(spec, vv, n_pair=n_pair).rate_A
        gamma = 1.0
        bound = base
    else:
        if isinstance(stopping, tuple):
            stopping = StoppingSchedule(*stopping)
        gamma = float(stopping.gamma)
        if gamma <= 0.0:
            raise InvalidStoppingSchedule("gamma must be positive")
        n1, n2 = int(n_pair[0]), int(n_pair[1])
        taus = []
        for nn in range(n2 + 1):
            t = stopping.tau(nn)
            if not isinstance(t, (int, np.integer)):
                raise InvalidStoppingSchedule(
                    f"tau({nn}) = {t!r} is not an integer (randomized or "
                    "real-valued schedules are not supported)")
            t = int(t)
            if t < 0 or t < gamma * nn - 1e-9:
                raise InvalidStoppingSchedule(
                    f"tau({nn}) = {t} violates tau_n >= gamma n")
            if taus and t < taus[-1]:
                raise InvalidStoppingSchedule("tau must be nondecreasing")
            taus.append(t)
        pi = stationary_distribution(spec)
        var = _moment_recursion(spec, vv, pi, (taus[n1], taus[n2]),
                                center=float(pi @ (spec.drift() @ vv)))
        rate = (var[taus[n2]] - var[taus[n1]]) / (n2 - n1)
        bound = gamma * base

    passed = rate >= bound - 1e-9
    report = MinorizationReport(rate=float(rate), bound=float(bound),
                                passed=passed, beta=float(spec.beta),
                                gamma=gamma, d_w_bar=d_w_bar)
    if not passed:
        raise BoundViolation(
            f"variance rate {rate!r} fell below the minorized bound "
            f"{bound!r} - 1e-9")
    return report


# -- spec builders ----------------------------------------------------------------


def build_spec_from_map(m, eps: float, G: int,
                        tail_tol: float = 1e-12) -> PeriodicChainSpec:
    """Wrap the Ulam displacement kernel of a map as an exact chain spec.

    Entries are reused verbatim (states = torus grid cells), so the
    oracle's j-marginal equals the torus transition matrix by
    construction.  The column (doubly-stochastic) defect is bounded by
    the quadrature error 5/G.
    """
    from . import transfer
    kern = transfer.build_displacement_kernel(
        m, eps, transfer.UlamGrid(m.d, int(G)), tail_tol=tail_tol)
    return PeriodicChainSpec(
        d=m.d, jumps=kern.jumps.copy(), blocks=kern.blocks.copy(),
        name=f"map-eps{eps:g}-G{G}", column_tol=max(1e-12, 5.0 / G))


def build_stopped_spec_from_map(m, eps: float, G: int = 64,
                                beta_slack: float = 1e-9
                                ) -> PeriodicChainSpec:
    """Two-stopped-step chain of a 1-d map, minorized by the stopped cube law.

    States are the G cells of the unit interval.  One chain step is two
    steps of the stopped (defragmented) process, whose transition
    density dominates a constant times the stopped cube-displacement law
    ``w_check``; the minorizer attaches that law per state (translated
    by the noise-free orbit cube) with beta measured from the kernel's
    own j-marginal, shrunk by ``beta_slack``.
    """
    from . import minorize
    from .cylinders import expansion_time
    from .diffusivity import w_check_distribution
    if m.d != 1:
        raise ConfigError("stopped-spec construction is d = 1 only")
    G = int(G)
    S = G
    masses = {}
    for g in range(S):
        vals = np.zeros(G)
        vals[g] = float(G)
        f = minorize.z_step_density(m, minorize.GridDensity(0, G, vals), eps)
        f = minorize.z_step_density(m, f, eps)
        grid_mass = f.values / G
        for cube in range(f.lo, f.hi):
            row = grid_mass[f.cube_slice(cube)]
            if row.sum() <= 1e-13:
                continue
            masses.setdefault(cube, np.zeros((S, S)))[g] = row
    jumps = sorted(masses)
    blocks = np.stack([masses[j] for j in jumps])
    # rows lose only the declared Gaussian tails; renormalize, then absorb
    # the last float rounding into each row's largest entry
    rows = blocks.sum(axis=(0, 2))
    blocks /= rows[None, :, None]
    resid = 1.0 - blocks.sum(axis=(0, 2))
    for g in range(S):
        k, gp = np.unravel_index(np.argmax(blocks[:, g, :]),
                                 (blocks.shape[0], S))
        blocks[k, g, gp] += resid[g]

    # per-state stopped cube law, translated by the noise-free orbit cube
    centers = (np.arange(S) + 0.5) / G
    laws: dict[int, dict[int, float]] = {}
    state_target = []
    for g in range(S):
        x = float(centers[g])
        theta = expansion_time(m, x, eps)
        y = x
        for _ in range(1 + theta):
            y = m.apply(y)
        target = int(math.floor(y))
        if target not in laws:
            law = w_check_distribution(m, float(target), eps)
            laws[target] = {int(p[0]): float(q)
                            for p, q in zip(law.points, law.probs)}
        state_target.append(target)
    w_jumps = sorted({j for law in laws.values() for j in law})
    w = np.zeros((S, len(w_jumps)))
    col = {j: i for i, j in enumerate(w_jumps)}
    for g in range(S):
        for j, q in laws[state_target[g]].items():
            w[g, col[j]] = q

    # largest beta the j-marginal supports, minus slack for float defects
    marg = blocks.sum(axis=2).T
    kcol = {j: k for k, j in enumerate(jumps)}
    ratio = np.inf
    for j, i in col.items():
        pos = w[:, i] > 0.0
        if not pos.any():
            continue
        have = marg[pos, kcol[j]] if j in kcol else np.zeros(pos.sum())
        ratio = min(ratio, float((have / w[pos, i]).min()))
    beta = max(ratio - beta_slack, 0.0)
    if not 0.0 < beta <= 1.0:
        raise InvalidMinorizer(
            f"measured dominance constant {ratio!r} unusable as beta")
    return PeriodicChainSpec(
        d=1, jumps=np.asarray(jumps, dtype=np.int64)[:, None], blocks=blocks,
        beta=beta, w_jumps=np.asarray(w_jumps, dtype=np.int64)[:, None], w=w,
        name=f"stopped-eps{eps:g}-G{G}", column_tol=max(1e-12, 5.0 / G))


def random_spec(seed: int, S: int = 5, n_components: int = 4,
                jump_range: int = 2, d: int = 1) -> PeriodicChainSpec:
    """Seeded random doubly stochastic chain on S states, window {-r..r}^d.

    A convex mixture of permutation matrices with attached displacement
    vectors, plus one uniform smoothing component (also doubly
    stochastic) that guarantees mixing and forbids absorbing states; the
    largest mixture weight goes to the smoothing component, so the gap
    contracts at least like (1 - 1/(n_components+1))^n.
    """
    rng = np.random.default_rng(seed)
    weights = np.sort(rng.dirichlet(np.ones(n_components + 1)))[::-1]
    acc = {}

    def add(jump, mat, alpha):
        acc[jump] = acc.get(jump, 0.0) + alpha * mat

    add(tuple(int(t) for t in rng.integers(-jump_range, jump_range + 1, d)),
        np.full((S, S), 1.0 / S), weights[0])
    for i in range(n_components):
        perm = np.zeros((S, S))
        perm[np.arange(S), rng.permutation(S)] = 1.0
        add(tuple(int(t) for t in rng.integers(-jump_range, jump_range + 1, d)),
            perm, weights[1 + i])
    jumps = sorted(acc)
    blocks = np.stack([acc[j] for j in jumps])
    return PeriodicChainSpec(d=d, jumps=np.asarray(jumps, dtype=np.int64),
                             blocks=blocks, name=f"random-{seed}")
