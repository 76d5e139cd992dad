import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgspectra.errors import DuplicatePointError, PreconditionError
from rgspectra.pointproc import (GridIndex, PointConfig, Window, insert_point, manual_config, neighbors_within,
                                 read_points_csv, remove_point, sample_poisson, stream, write_points_csv)


def test_window_geometry():
    w = Window(1, 4.0)
    assert w.half_side == 2.0
    assert w.contains([2.0]) and not w.contains([2.01])
    assert Window.from_side(2, 3.0).volume == 9.0
    with pytest.raises(PreconditionError):
        Window(2, 0.0)
    with pytest.raises(PreconditionError):
        Window(0, 1.0)


def test_tiny_window_is_almost_always_empty():
    empty = sum(sample_poisson(Window(2, 1e-6), stream(0, t)).n_points == 0 for t in range(200))
    assert empty >= 199


def test_poisson_count_mean():
    w = Window(1, 4.0)
    draws = stream(1).poisson(w.volume, size=100_000)
    assert abs(draws.mean() - 4.0) < 3 * np.sqrt(4.0 / draws.size)
    counts = np.array([sample_poisson(w, stream(2, t)).n_points for t in range(4000)])
    assert abs(counts.mean() - 4.0) < 3 * np.sqrt(4.0 / counts.size)
    cfg = sample_poisson(w, stream(2, 0))
    assert np.all(np.abs(cfg.points) <= 2.0)


def test_stream_determinism():
    a = sample_poisson(Window(2, 50.0), stream(7, 1, 2))
    b = sample_poisson(Window(2, 50.0), stream(7, 1, 2))
    c = sample_poisson(Window(2, 50.0), stream(7, 1, 3))
    assert a == b
    assert a != c


def test_insert_remove_roundtrip():
    cfg = sample_poisson(Window(2, 20.0), stream(4))
    back = remove_point(insert_point(cfg, [0.123, -0.456]))
    assert back == cfg
    assert back.points.tobytes() == cfg.points.tobytes()


def test_insert_into_empty():
    cfg = PointConfig(Window(2, 4.0), np.empty((0, 2)))
    assert insert_point(cfg, [0, 0]).n_points == 1


def test_insert_duplicate_and_outside():
    cfg = manual_config([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DuplicatePointError):
        insert_point(cfg, [1.0, 0.0])
    with pytest.raises(PreconditionError):
        insert_point(cfg, [5.0, 0.0])
    assert insert_point(cfg, [5.0, 0.0], exterior=True).n_points == 3


def test_points_are_read_only():
    cfg = manual_config([[0.0, 0.0]])
    with pytest.raises(ValueError):
        cfg.points[0, 0] = 1.0


def test_neighbors_within_examples():
    cfg = manual_config([0.0, 0.5, 2.0], volume=6.0)
    idx = GridIndex.build(cfg, 1.0)
    assert neighbors_within(idx, cfg, [0.0], 1.0) == [0, 1]
    assert neighbors_within(idx, cfg, [0.25], 0.0) == []
    with pytest.raises(PreconditionError):
        neighbors_within(idx, cfg, [0.0], -1.0)


@given(st.integers(0, 10_000), st.integers(1, 3), st.floats(0.0, 3.0), st.floats(0.3, 2.0))
def test_neighbors_within_matches_brute_force(seed, d, rho, cell):
    cfg = sample_poisson(Window(d, 30.0), stream(seed))
    x = stream(seed, 1).uniform(-2, 2, size=d)
    got = neighbors_within(GridIndex.build(cfg, cell), cfg, x, rho)
    want = [i for i, p in enumerate(cfg.points) if np.linalg.norm(p - x) <= rho]
    assert got == want


def test_points_csv_roundtrip(tmp_path):
    cfg = sample_poisson(Window(2, 10.0), stream(5))
    path = tmp_path / "p.csv"
    write_points_csv(cfg, path, seed=5)
    assert path.read_text().startswith("# rgspectra")
    back = read_points_csv(path)
    assert back == cfg
