import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgspectra.errors import CapExceededError, DivergenceError, InexactWalkCountWarning, PreconditionError
from rgspectra.graphs import RGG, Adjacency, build_graph
from rgspectra.pointproc import Window, sample_poisson, stream
from rgspectra.spectral import (TestFunction, builtin, closed_walk_counts, diagonal_walk_counts, eigenvalues,
                                grid_lc_norm, lc_norm, sobolev_norms, trace_function, trace_poly_walks,
                                trace_weighted)


def poly(*c):
    return TestFunction.polynomial(c)


def test_known_spectra(triangle, path3):
    assert np.allclose(eigenvalues(triangle).eigenvalues, [-1, -1, 2])
    s = math.sqrt(2)
    assert np.allclose(eigenvalues(path3).eigenvalues, [-s, 0, s])
    assert np.array_equal(eigenvalues(Adjacency.from_edges(5, [])).eigenvalues, np.zeros(5))


def test_walk_traces_on_small_graphs(triangle, path3):
    assert trace_poly_walks(triangle, poly(0, 0, 1)) == 6
    assert trace_poly_walks(triangle, poly(0, 0, 0, 1)) == 6
    assert trace_poly_walks(path3, poly(0, 0, 0, 0, 1)) == 8
    assert trace_poly_walks(triangle, builtin("zero")) == 0
    assert trace_function(triangle, builtin("zero")) == 0


def test_rational_function_on_triangle(triangle):
    # f(-1) + f(-1) + f(2) = -1/2 - 1/2 + 2/5
    f = TestFunction("x/(1+x^2)", lambda t: t / (1 + t * t), None, None)
    assert trace_function(triangle, f) == pytest.approx(-3 / 5, abs=1e-12)


@pytest.mark.parametrize("t", range(100))
def test_eigen_and_walk_routes_agree(t):
    cfg = sample_poisson(Window(2, 30.0), stream(21, t))
    adj = build_graph(cfg, RGG(1.0))
    f = poly(0, 0, 1, 1)
    walks = trace_poly_walks(adj, f)
    assert abs(trace_function(adj, f) - walks) <= 1e-8 * max(1.0, abs(walks))


def test_sparse_and_dense_diagonals_agree():
    cfg = sample_poisson(Window(2, 500.0), stream(3))
    adj = build_graph(cfg, RGG(1.2))
    assert adj.vertex_count > 300
    sparse, _ = diagonal_walk_counts(adj, 6)
    sub = adj.subgraph(np.arange(200))
    dense, _ = diagonal_walk_counts(sub, 6)
    big = np.linalg.matrix_power(sub.dense(), 6).diagonal()
    assert np.array_equal(dense[6], big)
    full6 = np.linalg.matrix_power(adj.dense(), 6).diagonal()
    assert np.array_equal(sparse[6], full6)


def test_inexact_walk_counts_are_flagged():
    k = Adjacency.from_edges(60, [(i, j) for i in range(60) for j in range(i + 1, 60)])
    with pytest.warns(InexactWalkCountWarning):
        trace_poly_walks(k, TestFunction.polynomial([0] * 12 + [1]))
    counts, exact = closed_walk_counts(k, 12)
    assert not exact


def test_eigen_cap_applies_per_component():
    comps = [(3 * i, 3 * i + 1) for i in range(400)]
    adj = Adjacency.from_edges(1200, comps)
    assert len(eigenvalues(adj, cap=5)) == 1200
    with pytest.raises(CapExceededError):
        eigenvalues(Adjacency.from_edges(10, [(i, i + 1) for i in range(9)]), cap=5)


def test_weighted_trace(triangle):
    f = poly(0, 1)
    assert trace_weighted(triangle, f, 1.0) == pytest.approx(-2 * math.exp(-1) + 2 * math.exp(2), rel=1e-12)
    assert trace_weighted(Adjacency.from_edges(4, []), f, 1.0) == 0
    assert trace_weighted(triangle, builtin("zero"), 1.0) == 0
    with pytest.raises(PreconditionError):
        trace_weighted(triangle, poly(0, 0, 1), 0.0)
    with pytest.raises(PreconditionError):
        trace_weighted(triangle, poly(1, 1), 1.0)


def test_lc_norm_against_fine_grid():
    f = poly(0, 1)
    assert lc_norm(f, 1.0) == pytest.approx(grid_lc_norm(f, 1.0), abs=1e-6)
    assert lc_norm(builtin("zero"), 1.0) == 0
    with pytest.raises(DivergenceError):
        lc_norm(builtin("exp2abs"), 1.0)
    with pytest.raises(PreconditionError):
        lc_norm(f, 0.0)


def test_sobolev_norms_closed_forms():
    assert sobolev_norms(builtin("zero")) == (0.0, 0.0)
    a, b = sobolev_norms(builtin("gauss1"))
    # x e^{-x^2/2}: int x^2 e^{-x^2} and int (x^3 - 3x)^2 e^{-x^2}
    assert a == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-6)
    assert b == pytest.approx(15 * math.sqrt(math.pi) / 8, abs=1e-6)


def test_scaling_multiplies_norms_by_four():
    f = builtin("bump")
    a, b = sobolev_norms(f)
    a2, b2 = sobolev_norms(f.scaled(2.0))
    assert a2 == pytest.approx(4 * a, rel=1e-9)
    assert b2 == pytest.approx(4 * b, rel=1e-9)


def test_builtin_registry():
    assert builtin("poly:1,0,2").coefficients == (1, 0, 2)
    assert builtin("bump")(np.array([3.5]))[0] == 0
    with pytest.raises(PreconditionError):
        builtin("nope")


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=6), st.integers(0, 1000))
def test_polynomial_trace_is_linear(coeffs, seed):
    cfg = sample_poisson(Window(2, 15.0), stream(seed))
    adj = build_graph(cfg, RGG(1.0))
    total = trace_poly_walks(adj, TestFunction.polynomial(coeffs))
    parts = sum(a * trace_poly_walks(adj, TestFunction.polynomial([0] * q + [1]))
                for q, a in enumerate(coeffs) if a)
    assert total == parts
