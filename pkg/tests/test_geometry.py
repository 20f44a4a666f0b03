import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from gibbsperc.geometry import (BoxConfiguration, PeriodicBox, dump_snapshot, load_snapshot,
                                min_image_dist)

BOX = PeriodicBox(2, 10.0)


def test_min_image_examples():
    assert min_image_dist(BOX, (0.5, 0.5), (9.5, 0.5)) == pytest.approx(1.0)
    assert min_image_dist(BOX, (3.0, 4.0), (3.0, 4.0)) == 0.0
    assert min_image_dist(BOX, (0, 0), (5, 5)) == pytest.approx(5 * math.sqrt(2))


def test_displacement_representative_half_open():
    d = BOX.displacement((0.0, 0.0), (5.0, 0.0))
    assert -5.0 <= d[0] < 5.0


def test_wrap_canonicalizes():
    w = BOX.wrap((-1e-18, 10.0))
    assert np.all(w >= 0) and np.all(w < 10.0)
    assert BOX.contains(w)


def test_require_radius():
    BOX.require_radius(5.0)
    with pytest.raises(ValueError):
        BOX.require_radius(5.01)


def brute_neighbors(pts, x, r, box, periodic=True):
    out = []
    for i, p in enumerate(pts):
        diff = np.asarray(p) - np.asarray(x)
        if periodic:
            diff = diff - box.side * np.floor(diff / box.side + 0.5)
        d = float(np.sqrt(np.sum(diff**2)))
        if 0 < d <= r:
            out.append(i)
    return sorted(out)


def test_neighbors_empty_and_collinear():
    cfg = BoxConfiguration(BOX, 1.5)
    assert cfg.neighbors_within((1.0, 1.0), 1.2) == []
    cfg = BoxConfiguration(BOX, 1.5, [[4.0, 5.0], [5.0, 5.0], [6.0, 5.0]])
    got = sorted(i for i, _ in cfg.neighbors_within((5.0, 5.0), 1.2))
    assert got == [0, 2]


def test_neighbors_match_brute_force_many_queries():
    rng = np.random.default_rng(7)
    for trial in range(10):
        pts = rng.random((200, 2)) * 10.0
        cfg = BoxConfiguration(BOX, 1.5, pts)
        for _ in range(100):
            x = rng.random(2) * 10.0
            r = rng.uniform(0.05, 1.5)
            for metric in ("periodic", "free"):
                got = sorted(i for i, _ in cfg.neighbors_within(x, r, metric))
                assert got == brute_neighbors(cfg.points, x, r, BOX, metric == "periodic")


def test_neighbors_reported_distance():
    cfg = BoxConfiguration(BOX, 1.5, [[0.2, 5.0]])
    (i, d), = cfg.neighbors_within((9.9, 5.0), 1.0)
    assert i == 0 and d == pytest.approx(0.3)
    assert cfg.neighbors_within((9.9, 5.0), 1.0, metric="free") == []


def test_insert_remove_examples():
    cfg = BoxConfiguration(BOX, 1.5)
    cfg.insert_point((3.3, 4.4))
    assert len(cfg) == 1 and cfg.check_cells()
    assert cfg.cell_members(cfg.cell_id((3.3, 4.4))) == [0]
    cfg.remove_point(0)
    assert len(cfg) == 0 and cfg.check_cells()


def test_coincident_points_rejected():
    cfg = BoxConfiguration(BOX, 1.5, [[1.0, 1.0]])
    with pytest.raises(ValueError):
        cfg.insert_point((1.0, 1.0))


def test_out_of_range_index():
    cfg = BoxConfiguration(BOX, 1.5, [[1.0, 1.0]])
    with pytest.raises(IndexError):
        cfg.remove_point(1)


def test_move_canonicalizes():
    cfg = BoxConfiguration(BOX, 1.5, [[1.0, 1.0]])
    cfg.move_point(0, (-0.5, 10.5))
    assert np.allclose(cfg.points[0], (9.5, 0.5))
    assert cfg.check_cells()


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    cfg = BoxConfiguration(BOX, 1.5, rng.random((25, 2)) * 10)
    path = tmp_path / "snap.txt"
    dump_snapshot(cfg, path)
    assert path.read_text().splitlines()[0] == "# d=2 L=10.0 n=25"
    back = load_snapshot(path, 1.5)
    assert np.array_equal(back.points, cfg.points)
    assert back.box == cfg.box


def test_cell_side_covers_cutoff():
    cfg = BoxConfiguration(PeriodicBox(3, 7.0), 1.6)
    assert cfg.cell_side >= 1.6


# -- properties ------------------------------------------------------------------

pt = hnp.arrays(np.float64, 2, elements=st.floats(0, 10, exclude_max=True))


@given(pt, pt, pt)
def test_min_image_is_metric(x, y, z):
    dxy = min_image_dist(BOX, x, y)
    assert dxy >= 0
    assert dxy == pytest.approx(min_image_dist(BOX, y, x))
    assert dxy <= min_image_dist(BOX, x, z) + min_image_dist(BOX, z, y) + 1e-12
    assert dxy <= math.sqrt(2) * 5.0 + 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 2.0))
def test_neighbors_symmetric(seed, r):
    rng = np.random.default_rng(seed)
    cfg = BoxConfiguration(PeriodicBox(2, 8.0), 2.0, rng.random((60, 2)) * 8.0)
    nb = [set(i for i, _ in cfg.neighbors_within(p, r)) for p in cfg.points]
    for i, s in enumerate(nb):
        for j in s:
            assert i in nb[j]


@given(st.integers(0, 2**32 - 1), st.lists(st.tuples(st.integers(0, 39), pt), min_size=1, max_size=20))
def test_move_then_back_is_identity(seed, moves):
    rng = np.random.default_rng(seed)
    cfg = BoxConfiguration(BOX, 1.5, rng.random((40, 2)) * 10.0)
    original = cfg.points.copy()
    for i, x in moves:
        old = cfg.points[i].copy()
        cfg.move_point(i, x)
        cfg.move_point(i, old)
        assert np.array_equal(cfg.points, original)
    assert cfg.check_cells()


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_cells_consistent_after_mutations(seed, d):
    rng = np.random.default_rng(seed)
    box = PeriodicBox(d, 6.0)
    cfg = BoxConfiguration(box, 1.5)
    for _ in range(80):
        u = rng.random()
        if u < 0.5 or len(cfg) == 0:
            cfg.insert_point(rng.random(d) * 6.0)
        elif u < 0.75:
            cfg.remove_point(int(rng.integers(len(cfg))))
        else:
            cfg.move_point(int(rng.integers(len(cfg))), rng.normal(size=d) * 8.0)
    assert cfg.check_cells()
    assert np.all((cfg.points >= 0) & (cfg.points < 6.0))
