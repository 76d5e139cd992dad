import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgspectra.errors import PreconditionError
from rgspectra.graphs import RGG, Adjacency, build_graph
from rgspectra.paths import (box_bound, box_bounds_upto, count_walks, count_walks_through, poisson_moment_bound,
                             poisson_raw_moment, walk_counts_upto, walk_mean_bound, walks_through_vertex)
from rgspectra.pointproc import PointConfig, Window, manual_config, sample_poisson, stream


def brute_walks(adj, m):
    a = adj.dense()
    return int(np.ones(adj.vertex_count) @ np.linalg.matrix_power(a, m - 1) @ np.ones(adj.vertex_count))


def test_walk_count_examples(triangle):
    assert count_walks(Adjacency.from_edges(1, []), 1).value == 1
    assert count_walks(triangle, 2).value == 6
    assert count_walks(triangle, 3).value == 12
    with pytest.raises(PreconditionError):
        count_walks(triangle, 0)


def test_anchored_walk_examples(path3):
    lone = Adjacency.from_edges(3, [(0, 1)])
    assert walks_through_vertex(lone, 3, 2, 2).value == 0
    assert walks_through_vertex(lone, 2, 1, 0).value == 1
    with pytest.raises(PreconditionError):
        walks_through_vertex(lone, 2, 3, 0)


@given(st.integers(0, 10_000), st.integers(2, 6))
def test_anchored_counts_are_reversal_symmetric(seed, m):
    cfg = sample_poisson(Window(2, 12.0), stream(seed))
    x = np.zeros(2) + 0.01
    for ell in range(1, m + 1):
        a = count_walks_through(cfg, RGG(1.0), m, ell, x).value
        b = count_walks_through(cfg, RGG(1.0), m, m + 1 - ell, x).value
        assert a == b


def test_walk_counts_match_matrix_powers():
    for t in range(20):
        adj = build_graph(sample_poisson(Window(2, 30.0), stream(5, t)), RGG(1.0))
        counts = walk_counts_upto(adj, 6)
        assert counts == [brute_walks(adj, m) for m in range(1, 7)]
        assert counts[3] == count_walks(adj, 4).value


def test_box_bound_examples():
    empty = PointConfig(Window(2, 16.0), np.empty((0, 2)))
    assert box_bound(empty, 1.0, 3) == 0
    pts = manual_config([[0.1, 0.1], [0.2, 0.3], [0.4, 0.2], [0.3, 0.35]], volume=1.0)
    L2 = count_walks(build_graph(pts, RGG(1.0)), 2).value
    assert box_bound(pts, 1.0, 2) >= pts.n_points ** 2 >= L2


@given(st.integers(0, 10_000), st.integers(1, 2), st.floats(0.5, 1.5))
def test_box_bound_dominates_walk_counts(seed, d, r):
    cfg = sample_poisson(Window(d, 40.0), stream(seed))
    walks = walk_counts_upto(build_graph(cfg, RGG(r)), 6)
    bounds = box_bounds_upto(cfg, r, 6)
    assert all(w <= b for w, b in zip(walks, bounds))
    assert bounds[2] == box_bound(cfg, r, 3)


def test_poisson_moment_bound():
    assert poisson_moment_bound(1.0, 1) == pytest.approx(1 / math.log(2))
    values = [poisson_moment_bound(lam, 4) for lam in (0.5, 1.0, 2.0, 4.0)]
    assert values == sorted(values)
    with pytest.raises(PreconditionError):
        poisson_moment_bound(0.0, 2)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_poisson_moments_below_bound(lam):
    z = np.random.default_rng(0).poisson(lam, size=200_000).astype(float)
    for m in range(1, 7):
        zm = z**m
        assert zm.mean() - 3 * zm.std() / math.sqrt(z.size) <= poisson_moment_bound(lam, m)
        assert poisson_raw_moment(lam, m) <= poisson_moment_bound(lam, m)


def test_poisson_raw_moment_values():
    assert poisson_raw_moment(2.0, 1) == 2.0
    assert poisson_raw_moment(2.0, 2) == 6.0
    assert poisson_raw_moment(1.0, 3) == 5.0


def test_walk_mean_bound():
    assert walk_mean_bound(10.0, 1.0, 1, 1) == pytest.approx(10 / math.log(2))
    assert walk_mean_bound(20.0, 1.0, 2, 3) == pytest.approx(2 * walk_mean_bound(10.0, 1.0, 2, 3))
    with pytest.raises(PreconditionError):
        walk_mean_bound(0.0, 1.0, 1, 1)
