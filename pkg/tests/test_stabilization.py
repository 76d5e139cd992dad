import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgspectra.errors import NotStabilizedError, PreconditionError
from rgspectra.graphs import KNN, RGG, RNG, build_graph
from rgspectra.pointproc import PointConfig, Window, manual_config, sample_poisson, sample_poisson_box, stream
from rgspectra.spectral import TestFunction
from rgspectra.stabilization import (ExteriorPatcher, SectorFan, _cost_rebuild, claims_hold, knn_event_holds,
                                     lens_claims, positivity_event_check, r1_knn, r1_knn_window, r1_rng, r2_knn,
                                     r_stab_rgg, rng_angle_check, rng_event_holds, rng_lens_sector_check,
                                     sample_knn_event, sample_rng_event, sector_indices, sector_of,
                                     stabilization_radius, straddling_chain_witness, survival_curve,
                                     verify_stabilization)


def power(m):
    return TestFunction.polynomial([0] * m + [1])


def fan_witness(J, radii, jitter=0.0):
    """Points at the given radii on the bisector of each of the J sectors."""
    w = 2 * math.pi / J
    pts = [[r * math.cos((j + 0.5) * w + jitter), r * math.sin((j + 0.5) * w + jitter)]
           for j in range(J) for r in radii]
    return manual_config(pts, volume=16.0)


def test_sector_examples():
    assert sector_indices(np.array([[1.0, 0.1]]), 6)[0] == 1
    fan = SectorFan((0.0, 0.0), 6)
    assert sector_of(fan, (0.0, 0.0)) is None
    assert sector_of(fan, (1.0, 0.1)) == 1
    # boundary rays go to the lower sector
    assert sector_indices(np.array([[1.0, 0.0]]), 6)[0] == 1
    ray = [math.cos(math.pi / 3), math.sin(math.pi / 3)]
    assert sector_indices(np.array([ray]), 6)[0] == 1


@given(st.floats(0.01, 2 * math.pi - 0.01), st.sampled_from([6, 13]))
def test_rotation_advances_sector(theta, J):
    w = 2 * math.pi / J
    if min(theta % w, w - theta % w) < 1e-6:
        return
    p = np.array([[math.cos(theta), math.sin(theta)]])
    q = np.array([[math.cos(theta + w), math.sin(theta + w)]])
    a, b = sector_indices(p, J)[0], sector_indices(q, J)[0]
    assert b == a % J + 1


def test_r1_examples():
    with pytest.raises(NotStabilizedError):
        r1_knn((0.0, 0.0), manual_config([[0.5, 0.1]]), 1)
    assert r1_knn((0.0, 0.0), fan_witness(6, [0.5, 0.8]), 1) == 1
    assert r1_rng((0.0, 0.0), fan_witness(13, [0.7])) == 1
    with pytest.raises(NotStabilizedError):
        r1_rng((0.0, 0.0), fan_witness(6, [0.7]))
    with pytest.raises(PreconditionError):
        r1_knn((0.0,), manual_config([0.5, 0.7]), 1)


@given(st.integers(0, 10_000))
def test_r1_knn_is_monotone_under_adding_points(seed):
    rng = stream(seed)
    cfg = sample_poisson(Window(2, 400.0), rng)
    extra = rng.uniform(-10, 10, size=(int(rng.integers(1, 30)), 2))
    try:
        before = r1_knn((0.0, 0.0), cfg, 1)
    except NotStabilizedError:
        return
    after = r1_knn((0.0, 0.0), cfg.with_points(np.vstack([cfg.points, extra])), 1)
    assert after <= before


@given(st.integers(0, 10_000))
def test_window_variant_never_exceeds_r1(seed):
    rng = stream(seed)
    cfg = sample_poisson(Window(2, 100.0), rng)
    x = rng.uniform(-5, 5, size=2)
    w = r1_knn_window(x, cfg, 1)
    try:
        assert w <= r1_knn(x, cfg, 1)
    except NotStabilizedError:
        pass


def test_window_variant_terminates_on_empty_config():
    cfg = PointConfig(Window(2, 16.0), np.empty((0, 2)))
    assert r1_knn_window((2.0, 2.0), cfg, 1) >= 1


def test_window_variant_equals_r1_for_huge_window():
    cfg = sample_poisson(Window(2, 400.0), stream(8))
    big = Window(2, 1e8)
    assert r1_knn_window((0.0, 0.0), cfg, 1, big) == r1_knn((0.0, 0.0), cfg, 1)


def test_rng_neighbours_are_shielded():
    for t in range(20):
        cfg = sample_poisson(Window(2, 300.0), stream(9, t))
        adj = build_graph(cfg, RNG())
        for i in range(0, cfg.n_points, 25):
            x = cfg.points[i]
            try:
                r = r1_rng(x, cfg)
            except NotStabilizedError:
                continue
            nb = adj.neighbors(i)
            assert np.all(np.linalg.norm(cfg.points[nb] - x, axis=1) <= r)


def test_r2_floor_and_dense_value():
    # a fine lattice fills every sector within distance 1, so the first admissible value is taken
    g = np.arange(-111.0, 111.01, 0.3) + 0.05
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    cfg = PointConfig(Window.from_side(2, 223.0), pts)
    assert r2_knn(cfg, 1, 1) == 100


def test_r2_needs_a_large_window():
    with pytest.raises(NotStabilizedError):
        r2_knn(sample_poisson(Window(2, 400.0), stream(1)), 1, 1)


def test_survival_curve_is_monotone():
    curve = survival_curve([100, 100, 101, 103])
    assert curve[0] == (100, 1.0)
    probs = [p for _, p in curve]
    assert probs == sorted(probs, reverse=True)
    assert probs[-1] == 0.0


def test_rgg_radius():
    assert r_stab_rgg(RGG(0.5), 4) == 2.0
    cfg = sample_poisson(Window(2, 100.0), stream(0))
    st_ = stabilization_radius(cfg, RGG(0.5), 4)
    assert st_.value == 2.0 and st_.kind == "RGG"


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_rgg_stabilization_by_rebuild(m):
    R = float(m)
    cfg = sample_poisson(Window.from_side(2, 2 * (R + 3)), stream(1, m))
    rep = verify_stabilization(cfg, RGG(1.0), power(m), R, 40, seed=m, engine="rebuild")
    assert rep.violations == 0 and rep.original_matches


def test_undersized_radius_is_detected():
    inner, outer = straddling_chain_witness(RGG(1.0), 4, 1.0)
    assert np.all(np.linalg.norm(inner, axis=1) <= 1.0) and np.all(np.linalg.norm(outer, axis=1) > 1.0)
    f = power(4)
    assert _cost_rebuild(inner, RGG(1.0), f) != _cost_rebuild(np.vstack([inner, outer]), RGG(1.0), f)
    with pytest.raises(PreconditionError):
        straddling_chain_witness(RGG(1.0), 4, 2.0)


@pytest.mark.parametrize("model", [KNN(1), KNN(2), RNG()], ids=str)
def test_patch_engine_matches_full_rebuild(model):
    fs = [TestFunction.polynomial([0, 1, 2, 1]), TestFunction.polynomial([1, 0, 1, 0, 1]), power(2)]
    for t in range(6):
        rng = stream(3, t)
        R = rng.uniform(30, 40)
        pts = sample_poisson_box([-R - 4] * 2, [R + 4] * 2, rng)
        nr = np.linalg.norm(pts, axis=1)
        inner, ext = pts[nr <= R], pts[nr > R]
        if t % 3 == 0:
            ext = ext[:3]
        patch = ExteriorPatcher(inner, model, R, band=4.0)
        g, g0 = patch.graphs(ext)
        full = np.vstack([inner, ext])
        assert g == build_graph(full, model)
        assert g0 == build_graph(np.vstack([full, [[0.0, 0.0]]]), model)
        for f in fs:
            assert patch.add_one_cost(f, ext) == pytest.approx(_cost_rebuild(full, model, f), abs=1e-9)


def test_patch_engine_rejects_other_models():
    cfg = sample_poisson(Window(2, 100.0), stream(0))
    with pytest.raises(PreconditionError):
        verify_stabilization(cfg, RGG(1.0), power(2), 2.0, 1, engine="patch")


def test_lens_sector_claim():
    y = np.array([3.0, 0.0])
    mid = y / 2
    assert np.linalg.norm(mid) <= 3 and np.linalg.norm(mid - y) <= 3
    out = rng_lens_sector_check(2000, seed=1)
    assert out["violations"] == 0
    assert out["sector_contained"] == 2000


def test_point_outside_the_sector_can_leave_the_lens():
    # at angle 2 pi / 3 + 0.2 from the axis and radius |y| the point is outside the lens
    y = np.array([1.0, 0.0])
    t = 2 * math.pi / 3 + 0.2
    p = np.array([math.cos(t), math.sin(t)])
    assert np.linalg.norm(p - y) > 1.0


def test_lens_angle_claims():
    rep = rng_angle_check(500, seed=2)
    assert rep.violations == 0
    assert rep.min_alpha >= 4 * math.pi / 13 - 1e-9
    assert rep.min_max_norm >= 1.0


def test_lens_claims_absent_when_origin_outside_lens():
    assert lens_claims([5.0, 0.0], [6.0, 0.0]) is None
    c = lens_claims([-2.0, 0.1], [2.0, -0.1])
    assert c is not None and claims_hold(c)


def test_positivity_events():
    w = Window.from_side(2, 8.0)
    assert knn_event_holds(sample_knn_event(w, stream(0)))
    assert rng_event_holds(sample_rng_event(w, stream(1)))
    assert not knn_event_holds(np.array([[3.0, 0.0], [3.1, 0.0]]))
    for model in (KNN(1), RNG()):
        rep = positivity_event_check(model, 10, seed=4)
        assert rep.violations == 0
    with pytest.raises(PreconditionError):
        positivity_event_check(KNN(2), 1)
