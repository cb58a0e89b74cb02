"""Piecewise-affine expanding torus maps with periodic displacement.

A map is described by M cells (axis-aligned half-open cubes) tiling the unit
cube.  Cell i, with lower corner c_i and side h_i, is mapped affinely and
bijectively onto a translate of the unit cube,

    phi_i(u) = O_i u / h_i + o_i,        u in E_i = c_i + [0, h_i)^d,

with O_i a signed permutation (the only orthogonal matrices taking an
axis-aligned cube to an axis-aligned cube) and o_i chosen so the image is
Q_t = t + [0, 1)^d for the integer target vector t = sigma0(i).  The map
extends to all of R^d by phi(x + k) = phi(x) + k for lattice k, so the
displacement phi(x) - x is Z^d-periodic.

Geometry is held in exact rational arithmetic (fractions.Fraction); float
mirrors are precomputed for the vectorized evaluation paths.  Cells are kept
sorted by nondecreasing volume, and "symbol" i means the 1-based index of the
i-th smallest cell throughout the package.

Float cell lookup uses a guard band: membership is evaluated at x + 1e-12 per
axis against the half-open cells, so a float within 1e-12 below a corner
resolves to the cell whose lower corner it approximates.  The rule is
identical in the compiled and numpy backends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    BoundaryUncovered,
    ConfigError,
    HypothesisViolated,
    InvalidMapError,
    NonOrthogonalMatrix,
    OverlappingCells,
    TargetCubeMismatch,
    UnsupportedDimension,
    VolumeDeficit,
)

GUARD = 1e-12

_FAILURE_CLASSES = {
    "OverlappingCells": OverlappingCells,
    "VolumeDeficit": VolumeDeficit,
    "NonOrthogonalMatrix": NonOrthogonalMatrix,
    "TargetCubeMismatch": TargetCubeMismatch,
    "BoundaryUncovered": BoundaryUncovered,
    "HypothesisViolated": HypothesisViolated,
}


def to_fraction(value) -> Fraction:
    """Parse an exact rational from int, float, Fraction, or "p/q" string."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        return Fraction(float(value))
    raise ConfigError(f"cannot interpret {value!r} as a rational number")


def _fraction_tuple(values, d: int, what: str) -> tuple[Fraction, ...]:
    if isinstance(values, (int, float, str, Fraction)):
        values = [values]
    out = tuple(to_fraction(v) for v in values)
    if len(out) != d:
        raise ConfigError(f"{what} has length {len(out)}, expected {d}")
    return out


@dataclass(frozen=True)
class PartitionCell:
    """One affine branch: half-open cube `corner + [0, side)^d` -> cube `target`."""

    corner: tuple[Fraction, ...]
    side: Fraction
    matrix: tuple[tuple[int, ...], ...]
    offset: tuple[Fraction, ...]
    target: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.corner)

    @property
    def volume(self) -> Fraction:
        return self.side ** self.d

    def image_corner(self) -> tuple[Fraction, ...]:
        """Exact lower corner of phi_i(E_i); equals `target` for a valid cell."""
        lo = []
        for a in range(self.d):
            row = self.matrix[a]
            s = next((j for j, m in enumerate(row) if m != 0), None)
            if s is None:
                raise NonOrthogonalMatrix(f"zero row in branch matrix: {row}")
            sign = row[s]
            if sign > 0:
                lo.append(self.corner[s] / self.side + self.offset[a])
            else:
                lo.append(-(self.corner[s] + self.side) / self.side + self.offset[a])
        return tuple(lo)


def make_cell(corner, side, target, matrix=None, offset=None,
              d: int | None = None) -> PartitionCell:
    """Build a cell, deriving the offset from the target when omitted."""
    if d is None:
        if isinstance(corner, (int, float, str, Fraction)):
            d = 1
        else:
            d = len(list(corner))
    corner = _fraction_tuple(corner, d, "corner")
    side = to_fraction(side)
    if isinstance(target, (int, np.integer)):
        target = [target]
    target = tuple(int(t) for t in target)
    if len(target) != d:
        raise ConfigError(f"target has length {len(target)}, expected {d}")
    if matrix is None:
        matrix = tuple(tuple(1 if i == j else 0 for j in range(d)) for i in range(d))
    else:
        matrix = tuple(tuple(int(round(float(v))) for v in row) for row in matrix)
    if offset is None:
        # offset so that the image lower corner lands exactly on the target
        offset = []
        for a in range(d):
            row = matrix[a]
            s = next(j for j, m in enumerate(row) if m != 0)
            if row[s] > 0:
                offset.append(Fraction(target[a]) - corner[s] / side)
            else:
                offset.append(Fraction(target[a]) + (corner[s] + side) / side)
        offset = tuple(offset)
    else:
        offset = _fraction_tuple(offset, d, "offset")
    return PartitionCell(corner, side, matrix, offset, target)


class BernoulliMap:
    """A validated piecewise-affine expanding map with sorted cells."""

    def __init__(self, cells: Sequence[PartitionCell]):
        if not cells:
            raise ConfigError("a map needs at least one cell")
        d = cells[0].d
        for c in cells:
            if c.d != d:
                raise ConfigError("cells have inconsistent dimensions")
        self.cells: tuple[PartitionCell, ...] = tuple(cells)
        self.d = d
        self._build_mirrors()

    # -- exact views ---------------------------------------------------------

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def volumes(self) -> tuple[Fraction, ...]:
        return tuple(c.volume for c in self.cells)

    @property
    def targets(self) -> tuple[tuple[int, ...], ...]:
        return tuple(c.target for c in self.cells)

    # -- float mirrors -------------------------------------------------------

    def _build_mirrors(self):
        M, d = self.n_cells, self.d
        self.corner_f = np.array(
            [[float(v) for v in c.corner] for c in self.cells])
        self.side_f = np.array([float(c.side) for c in self.cells])
        self.target_i = np.array([c.target for c in self.cells], dtype=np.int64)
        self.off_f = np.array([[float(v) for v in c.offset] for c in self.cells])
        # signed permutation decomposed per output axis: source axis and slope
        self.src_ax = np.zeros((M, d), dtype=np.int64)
        self.slope_f = np.zeros((M, d))
        for i, c in enumerate(self.cells):
            for a in range(d):
                s = next(j for j, m in enumerate(c.matrix[a]) if m != 0)
                self.src_ax[i, a] = s
                self.slope_f[i, a] = float(Fraction(c.matrix[a][s]) / c.side)
        self.det_f = np.array(
            [float(Fraction(1) / c.volume) for c in self.cells])
        if d == 1:
            order = np.argsort(self.corner_f[:, 0], kind="stable")
            self.pos_corner = np.concatenate(
                [self.corner_f[order, 0], [1.0]])
            self.pos_cell = order.astype(np.int64)
            self.pos_slope = self.slope_f[order, 0]
            self.pos_off = self.off_f[order, 0]

    # -- evaluation ----------------------------------------------------------

    def locate_batch(self, x: np.ndarray):
        """Cube, cell index, and local coordinate for each row of x (N, d).

        Applies the guard-band lookup documented in the module docstring.
        """
        x = np.asarray(x, dtype=np.float64)
        n = np.floor(x)
        u = x - n
        over = u >= 1.0  # floor rounding at a lattice point
        if over.any():
            n = n + over
            u = np.where(over, 0.0, u)
        carry = u + GUARD >= 1.0  # guard band at the top face
        if carry.any():
            n = n + carry
            u = np.where(carry, 0.0, u)
        if self.d == 1:
            idx_pos = np.searchsorted(
                self.pos_corner, u[:, 0] + GUARD, side="right") - 1
            cell = self.pos_cell[idx_pos]
        else:
            shifted = u + GUARD
            cell = np.full(x.shape[0], -1, dtype=np.int64)
            for i in range(self.n_cells):
                inside = np.all(
                    (shifted >= self.corner_f[i])
                    & (shifted < self.corner_f[i] + self.side_f[i]), axis=1)
                cell = np.where((cell < 0) & inside, i, cell)
            if (cell < 0).any():
                # tile + guard carry should make this unreachable for valid maps
                bad = np.flatnonzero(cell < 0)[0]
                raise InvalidMapError(f"no cell contains {x[bad]}")
        return n.astype(np.int64), cell, u

    def apply_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        n, cell, u = self.locate_batch(x)
        usrc = np.take_along_axis(u, self.src_ax[cell], axis=1)
        return n + (self.off_f[cell] + self.slope_f[cell] * usrc)

    def apply(self, x):
        """Map evaluation.

        For d = 1 every array element is a point (scalars return floats);
        for d >= 2 the last axis holds coordinates, shape (..., d).
        """
        arr = np.asarray(x, dtype=np.float64)
        scalar = arr.ndim == 0
        if self.d == 1:
            out = self.apply_batch(arr.reshape(-1, 1)).reshape(arr.shape)
            return float(out) if scalar else out
        return self.apply_batch(arr.reshape(-1, self.d)).reshape(arr.shape)

    def jacobian_det(self, x):
        """|det Dphi| at x: the cell's volume inverse, exact per branch."""
        arr = np.asarray(x, dtype=np.float64)
        scalar = arr.ndim == 0
        if self.d == 1:
            flat = arr.reshape(-1, 1)
            out_shape = arr.shape
        else:
            flat = arr.reshape(-1, self.d)
            out_shape = arr.shape[:-1]
        _, cell, _ = self.locate_batch(flat)
        det = self.det_f[cell]
        return float(det[0]) if scalar else det.reshape(out_shape)

    def __repr__(self):
        return f"BernoulliMap(d={self.d}, cells={self.n_cells})"


@dataclass(frozen=True)
class ShearMap:
    """Non-expanding periodic-displacement test map on the 2-torus.

    phi(x, y) = (x + amplitude * sin(2 pi y), y).  Measure preserving with
    Z^2-periodic displacement but no expansion; used to exercise the generic
    simulation path and known-variance checks (noise in y only diffuses as
    eps^2 per step along v = e2).
    """

    amplitude: float = 1.0

    @property
    def d(self) -> int:
        return 2

    def apply_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = x.copy()
        out[:, 0] = x[:, 0] + self.amplitude * np.sin(2.0 * np.pi * x[:, 1])
        return out

    def apply(self, x):
        arr = np.asarray(x, dtype=np.float64)
        return self.apply_batch(arr.reshape(-1, 2)).reshape(arr.shape)


@dataclass(frozen=True)
class ConstantShiftMap:
    """phi(x) = x + shift on R^1: constant drift, zero diffusivity."""

    shift: int = 1

    @property
    def d(self) -> int:
        return 1

    def apply_batch(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) + float(self.shift)

    def apply(self, x):
        arr = np.asarray(x, dtype=np.float64)
        out = arr + float(self.shift)
        return float(out) if arr.ndim == 0 else out


# -- validation ---------------------------------------------------------------


@dataclass
class MapValidationReport:
    ok: bool
    failures: list  # (error class name, message)
    checks: dict    # item name -> bool

    def raise_any(self):
        if not self.failures:
            return
        name, message = self.failures[0]
        cls = _FAILURE_CLASSES.get(name, InvalidMapError)
        if issubclass(cls, InvalidMapError):
            raise cls(message, report=self)
        raise cls(message)


def _snap_signed_permutation(matrix, d: int):
    """Return the exact signed permutation within 1e-12 of `matrix`, or None."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.shape != (d, d):
        return None
    snapped = np.rint(arr).astype(np.int64)
    if np.max(np.abs(arr - snapped)) > 1e-12:
        return None
    if not np.all(np.isin(snapped, (-1, 0, 1))):
        return None
    if np.any(np.abs(snapped).sum(axis=0) != 1) or np.any(
            np.abs(snapped).sum(axis=1) != 1):
        return None
    return tuple(tuple(int(v) for v in row) for row in snapped)


def _boxes_overlap(c1, h1, c2, h2, d) -> bool:
    for a in range(d):
        lo = max(c1[a], c2[a])
        hi = min(c1[a] + h1, c2[a] + h2)
        if hi <= lo:
            return False
    return True


def _exact_apply(m: BernoulliMap, y: tuple[Fraction, ...]):
    """Half-open exact evaluation (no guard band); returns None off the tiling."""
    n = tuple(Fraction(v.numerator // v.denominator) for v in y)  # exact floor
    u = tuple(v - w for v, w in zip(y, n))
    for c in m.cells:
        if all(c.corner[a] <= u[a] < c.corner[a] + c.side for a in range(m.d)):
            img = []
            for a in range(m.d):
                row = c.matrix[a]
                s = next(j for j, v in enumerate(row) if v != 0)
                img.append(n[a] + row[s] * u[s] / c.side + c.offset[a])
            return tuple(img)
    return None


def _check_boundary_d1(m: BernoulliMap):
    """Exact surjectivity of the open-cube union onto {0, 1} (d = 1)."""
    missing = []
    for x in (Fraction(0), Fraction(1)):
        found = False
        for c in m.cells:
            t = c.target[0]
            for n in (x - t - 1, x - t, x - t + 1):
                row = c.matrix[0]
                sign = row[0]
                u = (x - n - c.offset[0]) * c.side * sign
                if not (c.corner[0] <= u <= c.corner[0] + c.side):
                    continue
                if not (Fraction(0) < u < Fraction(1)):
                    continue  # preimage must be interior to its cube
                img = _exact_apply(m, (n + u,))
                if img is not None and img[0] == x:
                    found = True
                    break
            if found:
                break
        if not found:
            missing.append(float(x))
    return missing


def _check_boundary_mesh(m: BernoulliMap, mesh: int):
    """Sampled surjectivity onto the cube boundary for d = 2."""
    ts = (np.arange(mesh) + 0.5) / mesh
    faces = []
    for axis in range(2):
        for val in (0.0, 1.0):
            pts = np.empty((mesh, 2))
            pts[:, axis] = val
            pts[:, 1 - axis] = ts
            faces.append(pts)
    missing = []
    for pts in faces:
        covered = np.zeros(len(pts), dtype=bool)
        for i, c in enumerate(m.cells):
            t = np.array(c.target, dtype=np.float64)
            h = float(c.side)
            corner = m.corner_f[i]
            for na in range(-2, 2):
                for nb in range(-2, 2):
                    n = np.array([na, nb], dtype=np.float64)
                    # invert phi on cube n: u = sign * (x - n - o)[src] * h
                    rel = pts - n - m.off_f[i]
                    u = np.empty_like(pts)
                    for a in range(2):
                        s = m.src_ax[i, a]
                        u[:, s] = rel[:, a] * np.sign(m.slope_f[i, a]) * h
                    inside = np.all(
                        (u >= corner - 1e-12) & (u <= corner + h + 1e-12),
                        axis=1)
                    interior = np.all((u > 1e-12) & (u < 1 - 1e-12), axis=1)
                    cand = inside & interior & ~covered
                    if not cand.any():
                        continue
                    y = n + u[cand]
                    img = m.apply_batch(y)
                    good = np.max(np.abs(img - pts[cand]), axis=1) <= 1e-9
                    idx = np.flatnonzero(cand)
                    covered[idx[good]] = True
        if not covered.all():
            missing.extend(pts[~covered][:3].tolist())
    return missing


def validate_map(m: BernoulliMap, boundary_mesh: int = 10000,
                 raise_on_fail: bool = False) -> MapValidationReport:
    """Check the three structural assumptions of the map class.

    1. the cells are half-open cubes tiling the unit cube (disjoint, volumes
       summing to 1 within 1e-12, contained in the cube);
    2. each branch is an expanding affine bijection of its cell onto the
       declared target cube, with a signed-permutation orthogonal part;
    3. every boundary point of the unit cube has a preimage interior to some
       unit cube (exact enumeration for d = 1, >= `boundary_mesh` points per
       face for d = 2).
    """
    failures = []
    checks = {"tiling": True, "bijection": True, "boundary": True}
    d = m.d

    total = sum(c.volume for c in m.cells)
    if abs(total - 1) > Fraction(1, 10 ** 12):
        failures.append(("VolumeDeficit",
                         f"cell volumes sum to {float(total)!r}, not 1"))
        checks["tiling"] = False
    for c in m.cells:
        if any(v < 0 for v in c.corner) or c.side <= 0 or any(
                v + c.side > 1 for v in c.corner):
            failures.append(("VolumeDeficit",
                             f"cell {c.corner} side {c.side} leaves the unit cube"))
            checks["tiling"] = False
    for i in range(m.n_cells):
        for j in range(i + 1, m.n_cells):
            ci, cj = m.cells[i], m.cells[j]
            if _boxes_overlap(ci.corner, ci.side, cj.corner, cj.side, d):
                failures.append(("OverlappingCells",
                                 f"cells {i + 1} and {j + 1} overlap"))
                checks["tiling"] = False

    for i, c in enumerate(m.cells):
        if _snap_signed_permutation(c.matrix, d) is None:
            failures.append(("NonOrthogonalMatrix",
                             f"cell {i + 1} matrix {c.matrix} is not a signed "
                             "permutation within 1e-12"))
            checks["bijection"] = False
            continue
        if c.side >= 1:
            failures.append(("HypothesisViolated",
                             f"cell {i + 1} does not expand (side {c.side})"))
            checks["bijection"] = False
        if c.image_corner() != tuple(Fraction(t) for t in c.target):
            failures.append(("TargetCubeMismatch",
                             f"cell {i + 1} maps onto corner "
                             f"{tuple(float(v) for v in c.image_corner())}, "
                             f"declared target {c.target}"))
            checks["bijection"] = False

    if not failures:
        if d == 1:
            missing = _check_boundary_d1(m)
        elif d == 2:
            missing = _check_boundary_mesh(m, boundary_mesh)
        else:
            raise UnsupportedDimension(
                f"boundary surjectivity check supports d <= 2, got d={d}")
        if missing:
            failures.append(("BoundaryUncovered",
                             f"boundary points without interior preimage: "
                             f"{missing[:3]}"))
            checks["boundary"] = False

    report = MapValidationReport(ok=not failures, failures=failures,
                                 checks=checks)
    if raise_on_fail and failures:
        report.raise_any()
    return report


def bernoulli_map(cells: Iterable, validate: bool = True) -> BernoulliMap:
    """Sort cells by volume, snap matrices, validate, and build the map."""
    built = []
    for c in cells:
        if isinstance(c, PartitionCell):
            built.append(c)
        elif isinstance(c, dict):
            built.append(make_cell(**c))
        else:
            raise ConfigError(f"cannot interpret cell {c!r}")
    built.sort(key=lambda c: (c.volume, c.corner))
    snapped = []
    for c in built:
        sp = _snap_signed_permutation(c.matrix, c.d)
        snapped.append(PartitionCell(c.corner, c.side, sp or c.matrix,
                                     c.offset, c.target))
    m = BernoulliMap(snapped)
    if validate:
        validate_map(m, raise_on_fail=True)
    return m


# -- serialization ------------------------------------------------------------


def _frac_str(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def map_to_dict(m: BernoulliMap) -> dict:
    return {
        "dimension": m.d,
        "cells": [
            {
                "corner": [_frac_str(v) for v in c.corner],
                "side": _frac_str(c.side),
                "matrix": [list(row) for row in c.matrix],
                "offset": [_frac_str(v) for v in c.offset],
                "target": list(c.target),
            }
            for c in m.cells
        ],
    }


def map_from_dict(data: dict) -> BernoulliMap:
    if "cells" not in data:
        raise ConfigError("map description lacks a 'cells' section")
    d = int(data.get("dimension", 0)) or None
    cells = []
    for entry in data["cells"]:
        try:
            cells.append(make_cell(
                corner=entry["corner"], side=entry["side"],
                target=entry["target"], matrix=entry.get("matrix"),
                offset=entry.get("offset"), d=d))
        except KeyError as exc:
            raise ConfigError(f"cell entry missing field {exc}") from exc
    return bernoulli_map(cells)


def save_map(m: BernoulliMap, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(map_to_dict(m), fh, indent=2)
        fh.write("\n")


def load_map(path) -> BernoulliMap:
    """Load and re-validate a map description; refuses invalid maps."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return map_from_dict(data)


# -- example builders ----------------------------------------------------------


def doubling_map() -> BernoulliMap:
    """x -> 2x: two half cells with targets 0 and 1."""
    return bernoulli_map([
        make_cell(Fraction(0), Fraction(1, 2), 0),
        make_cell(Fraction(1, 2), Fraction(1, 2), 1),
    ])


def thirds_map() -> BernoulliMap:
    """Uneven two-branch map: [0,1/3) -> cube 0 (slope 3), [1/3,1) -> cube 1."""
    return bernoulli_map([
        make_cell(Fraction(0), Fraction(1, 3), 0),
        make_cell(Fraction(1, 3), Fraction(2, 3), 1),
    ])


def constant_target_map() -> BernoulliMap:
    """Doubling variant with both branches onto cube 0: zero net displacement."""
    return bernoulli_map([
        make_cell(Fraction(0), Fraction(1, 2), 0),
        make_cell(Fraction(1, 2), Fraction(1, 2), 0),
    ])


def uniform_map(branches: int) -> BernoulliMap:
    """x -> branches * x with cell k sent to cube k."""
    if branches < 2:
        raise ConfigError("need at least two branches")
    h = Fraction(1, branches)
    return bernoulli_map(
        [make_cell(k * h, h, k) for k in range(branches)])


def quadrant_map() -> BernoulliMap:
    """d = 2 doubling: four quarter cells onto the four cubes (t1, t2)."""
    h = Fraction(1, 2)
    cells = []
    for t1 in (0, 1):
        for t2 in (0, 1):
            cells.append(make_cell(
                (t1 * h, t2 * h), h, (t1, t2)))
    return bernoulli_map(cells)


BUILTIN_MAPS: dict[str, Callable[[], BernoulliMap]] = {
    "doubling": doubling_map,
    "thirds": thirds_map,
    "constant-target": constant_target_map,
    "quadrant": quadrant_map,
}


def resolve_map(name_or_path) -> BernoulliMap:
    """Builtin map name or path to a JSON description."""
    if isinstance(name_or_path, BernoulliMap):
        return name_or_path
    if name_or_path in BUILTIN_MAPS:
        return BUILTIN_MAPS[name_or_path]()
    return load_map(name_or_path)
