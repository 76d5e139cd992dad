import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgspectra.errors import CapExceededError, PreconditionError
from rgspectra.graphs import KNN, RGG, RNG, build_graph
from rgspectra.pointproc import PointConfig, Window, manual_config, sample_poisson, stream
from rgspectra.scores import (add_one_cost, count_functional, diff_first, diff_second, edge_functional,
                              make_functional, score_diagonal, score_enumerated, sum_scores, support_check_score_diffs,
                              support_check_trace_second, surjections, trace_functional)
from rgspectra.spectral import TestFunction, trace_poly_walks

X2 = TestFunction.polynomial([0, 0, 1])
X3 = TestFunction.polynomial([0, 0, 0, 1])
TRI = [[0.0, 0.0], [0.5, 0.0], [0.25, 0.4]]


def test_surjection_counts():
    assert len(surjections(2, 2)) == 2
    assert len(surjections(3, 2)) == 6
    assert surjections(2, 3) == []
    with pytest.raises(CapExceededError):
        surjections(9, 2)


@given(st.integers(1, 6), st.integers(1, 6))
def test_surjection_count_matches_inclusion_exclusion(q, p):
    from math import comb
    want = sum((-1) ** j * comb(p, j) * (p - j) ** q for j in range(p + 1)) if p <= q else 0
    assert len(surjections(q, p)) == want


def test_score_examples():
    pair = manual_config([[0.0, 0.0], [0.5, 0.0]])
    for z in (0, 1):
        assert score_enumerated(z, pair, RGG(1.0), X2).value == 1
    tri = manual_config(TRI)
    for z in range(3):
        assert score_enumerated(z, tri, RGG(1.0), X3).value == 2
        assert score_diagonal(z, build_graph(tri, RGG(1.0)), X2).value == 2
        assert score_enumerated(z, tri, RGG(1.0), TestFunction.polynomial([0, 1])).value == 0
    lone = manual_config([[0.0, 0.0], [3.0, 0.0]])
    assert score_enumerated(0, lone, RGG(1.0), X2).value == 0


def test_score_requires_polynomial():
    f = TestFunction("sin", np.sin, np.cos, lambda t: -np.sin(t))
    with pytest.raises(PreconditionError):
        score_enumerated(0, manual_config(TRI), RGG(1.0), f)


@pytest.mark.parametrize("t", range(100))
def test_enumerated_and_diagonal_scores_agree(t):
    rng = stream(31, t)
    cfg = sample_poisson(Window(2, 8.0), rng)
    if cfg.n_points == 0:
        return
    model = [RGG(0.8), KNN(2), RNG()][t % 3]
    f = TestFunction.polynomial([int(v) for v in rng.integers(-3, 4, size=5)])
    adj = build_graph(cfg, model)
    z = int(rng.integers(cfg.n_points))
    a = score_enumerated(z, cfg, model, f, adj).value
    b = score_diagonal(z, adj, f).value
    assert abs(a - b) <= 1e-9 * max(1.0, abs(b))


def test_sum_of_scores_examples():
    empty = PointConfig(Window(2, 4.0), np.empty((0, 2)))
    assert sum_scores(empty, RGG(1.0), X2) == 0
    tri = manual_config(TRI)
    f = TestFunction.polynomial([0, 0, 1, 1])
    assert sum_scores(tri, RGG(1.0), f) == 12
    assert sum_scores(tri, RGG(1.0), f, route="enumerated") == 12
    # the constant term counts once per point
    assert sum_scores(tri, RGG(1.0), TestFunction.polynomial([2, 0, 1])) == 12


def test_add_one_cost_examples():
    empty = PointConfig(Window(2, 4.0), np.empty((0, 2)))
    assert add_one_cost(empty, RGG(1.0), X2) == 0
    one = manual_config([[0.5, 0.0]])
    assert add_one_cost(one, RGG(1.0), X2) == 2
    far = manual_config([[1.5, 0.0], [1.9, 0.3]], volume=16.0)
    assert add_one_cost(far, RGG(0.5), X3) == 0


def test_add_one_cost_can_remove_knn_edges():
    cfg = manual_config([[1.1, 0.0], [2.0, 0.0], [5.0, 0.0]])
    before = build_graph(cfg, KNN(1))
    aug = build_graph(manual_config([[1.1, 0.0], [2.0, 0.0], [5.0, 0.0], [0.0, 0.0]]), KNN(1))
    want = trace_poly_walks(aug, X2) - trace_poly_walks(before, X2)
    assert add_one_cost(cfg, KNN(1), X2) == want


def test_functional_differences():
    cfg = sample_poisson(Window(2, 20.0), stream(4))
    n = make_functional("count")
    assert diff_first(n, cfg, RGG(1.0), [0.1, 0.2]) == 1
    assert diff_second(n, cfg, RGG(1.0), [0.1, 0.2], [1.3, -2.0]) == 0
    tr = trace_functional(X2)
    assert diff_first(tr, cfg, RGG(1.0), [0.0, 0.0]) == add_one_cost(cfg, RGG(1.0), X2)
    with pytest.raises(PreconditionError):
        diff_second(tr, cfg, RGG(1.0), [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(PreconditionError):
        make_functional("nope")


def test_second_difference_of_isolated_pair_vanishes():
    cfg = manual_config([[5.0, 5.0]], volume=144.0)
    e = make_functional("edges")
    assert diff_second(e, cfg, RGG(1.0), [0.0, 0.0], [2.5, 0.0]) == 0


@given(st.integers(0, 10_000), st.sampled_from([RGG(1.0), KNN(1), RNG()]))
def test_second_difference_is_symmetric(seed, model):
    rng = stream(seed)
    cfg = sample_poisson(Window(2, 12.0), rng)
    x, y = rng.uniform(-2, 2, size=(2, 2))
    F = trace_functional(X3)
    assert diff_second(F, cfg, model, x, y) == diff_second(F, cfg, model, y, x)


def test_edge_and_count_functionals():
    tri = manual_config(TRI)
    assert edge_functional(tri, RGG(1.0)) == 3
    assert count_functional(tri, RGG(1.0)) == 3


def test_support_checks_small():
    a = support_check_score_diffs(RGG(1.0), trials=300, seed=5, dimension=2, volume=64.0)
    b = support_check_trace_second(RGG(1.0), trials=300, seed=6, dimension=1, volume=40.0)
    assert a.violations == 0 and b.violations == 0
    assert a.nonzero_inside > 0 and b.nonzero_inside > 0
