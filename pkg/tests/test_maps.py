"""Map construction, branch arithmetic, validation, and serialization."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from residiff import maps
from residiff.errors import (ConfigError, HypothesisViolated,
                             NonOrthogonalMatrix, OverlappingCells,
                             TargetCubeMismatch, VolumeDeficit)


def test_doubling_geometry():
    m = maps.doubling_map()
    assert m.d == 1 and m.n_cells == 2
    assert m.volumes == (Fraction(1, 2), Fraction(1, 2))
    assert m.targets == ((0,), (1,))


def test_doubling_apply_exact():
    m = maps.doubling_map()
    assert m.apply(0.25) == 0.5
    assert m.apply(0.75) == 1.5       # second branch: 1 + (2u - 1)
    assert m.apply(3.25) == 3.5       # Z-periodic lift: phi(k + u) = k + phi(u)
    assert m.apply(-0.75) == -0.5


def test_thirds_branches():
    m = maps.thirds_map()
    assert m.volumes == (Fraction(1, 3), Fraction(2, 3))
    # branch slopes 3 and 3/2 onto full cubes
    assert math.isclose(m.apply(1 / 6), 0.5, rel_tol=1e-15)
    assert math.isclose(m.apply(2 / 3), 1.5, rel_tol=1e-15)


def test_locate_batch_roundtrip():
    m = maps.thirds_map()
    x = np.array([0.05, 0.4, 1.9, -0.3, 7.2])
    n, cell, u = m.locate_batch(x[:, None])
    assert n.shape == (5, 1) and cell.shape == (5,) and u.shape == (5, 1)
    # x - floor(x) rounds once for negative x, so roundtrip is 1 ulp, not exact
    assert np.allclose(n[:, 0] + u[:, 0], x, rtol=1e-15, atol=1e-15)
    scalar = np.array([m.apply(v) for v in x])
    assert np.allclose(m.apply_batch(x[:, None])[:, 0], scalar, rtol=1e-15)


def test_quadrant_map_d2():
    m = maps.quadrant_map()
    assert m.d == 2 and m.n_cells == 4
    y = m.apply_batch(np.array([[0.25, 0.75]]))
    assert np.allclose(y, [[0.5, 1.5]])
    assert sorted(m.targets) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_make_cell_parses_fractions():
    c = maps.make_cell(corner=["1/3"], side="2/3", target=[1])
    assert c.corner == (Fraction(1, 3),) and c.side == Fraction(2, 3)


def test_validate_rejects_overlap():
    cells = [maps.make_cell(Fraction(0), Fraction(1, 2), 0),
             maps.make_cell(Fraction(1, 3), Fraction(1, 2), 1)]
    report = maps.validate_map(maps.bernoulli_map(cells, validate=False))
    assert not report.ok
    assert any(kind == "OverlappingCells" for kind, _ in report.failures)
    with pytest.raises(OverlappingCells):
        report.raise_any()


def test_validate_rejects_volume_deficit():
    cells = [maps.make_cell(Fraction(0), Fraction(1, 2), 0),
             maps.make_cell(Fraction(1, 2), Fraction(1, 4), 1)]
    report = maps.validate_map(maps.bernoulli_map(cells, validate=False))
    assert any(kind == "VolumeDeficit" for kind, _ in report.failures)
    with pytest.raises(VolumeDeficit):
        maps.bernoulli_map(cells)


def test_validate_rejects_non_expanding_cell():
    cells = [maps.make_cell(Fraction(0), Fraction(1), 0)]
    report = maps.validate_map(maps.bernoulli_map(cells, validate=False))
    assert any(kind == "HypothesisViolated" for kind, _ in report.failures)


def test_validate_rejects_bad_matrix():
    cells = [maps.make_cell(Fraction(0), Fraction(1, 2), 0,
                            matrix=[[2]]),
             maps.make_cell(Fraction(1, 2), Fraction(1, 2), 1)]
    report = maps.validate_map(maps.bernoulli_map(cells, validate=False))
    assert any(kind == "NonOrthogonalMatrix" for kind, _ in report.failures)


def test_validate_rejects_target_mismatch():
    # offset shifted so the image corner misses the declared target cube
    cells = [maps.make_cell(Fraction(0), Fraction(1, 2), 0,
                            offset=[Fraction(1, 4)]),
             maps.make_cell(Fraction(1, 2), Fraction(1, 2), 1)]
    report = maps.validate_map(maps.bernoulli_map(cells, validate=False))
    assert any(kind == "TargetCubeMismatch" for kind, _ in report.failures)


def test_builtin_maps_validate_clean():
    for name, builder in maps.BUILTIN_MAPS.items():
        report = maps.validate_map(builder())
        assert report.ok, (name, report.failures)


def test_serialization_roundtrip(tmp_path):
    for builder in (maps.doubling_map, maps.thirds_map, maps.quadrant_map):
        m = builder()
        m2 = maps.map_from_dict(maps.map_to_dict(m))
        assert m2.volumes == m.volumes and m2.targets == m.targets
        path = tmp_path / "m.json"
        maps.save_map(m, path)
        m3 = maps.load_map(path)
        assert m3.volumes == m.volumes and m3.targets == m.targets


def test_load_map_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError):
        maps.load_map(path)


def test_load_map_revalidates(tmp_path):
    data = maps.map_to_dict(maps.doubling_map())
    data["cells"][0]["side"] = "1/4"     # tiling broken
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(data))
    with pytest.raises(VolumeDeficit):
        maps.load_map(path)


def test_resolve_map_names_paths_and_instances(tmp_path):
    m = maps.resolve_map("doubling")
    assert m.n_cells == 2
    assert maps.resolve_map(m) is m
    path = tmp_path / "t.json"
    maps.save_map(maps.thirds_map(), path)
    assert maps.resolve_map(path).volumes == (Fraction(1, 3), Fraction(2, 3))


def test_uniform_map_branch_count():
    m = maps.uniform_map(5)
    assert m.volumes == tuple([Fraction(1, 5)] * 5)
    with pytest.raises(ConfigError):
        maps.uniform_map(1)
