"""Sector-based stabilization radii, resampling checks and positivity events in the plane."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import poisson

from .errors import NotStabilizedError, PreconditionError
from .graphs import (KNN, RGG, RNG, Adjacency, GraphModel, _canonical, _delaunay_candidates, _rng_edges,
                     build_graph, knn_lists, lens_blocked)
from .pointproc import PointConfig, Window, sample_poisson, sample_poisson_box, stream
from .spectral import TestFunction, trace_poly_walks

log = logging.getLogger(__name__)

KNN_SECTORS = 6
RNG_SECTORS = 13
RNG_EPS = 1e-5


def _need_2d(d: int):
    if d != 2:
        raise PreconditionError("sector constructions are implemented in the plane only")


# --- sectors -----------------------------------------------------------------


@dataclass(frozen=True)
class SectorFan:
    """J open sectors of angle 2 pi / J at `apex`; sector 1 has its lower side horizontal."""

    apex: tuple
    sector_count: int
    radius: float = math.inf
    orientation: float = 0.0


def sector_indices(vectors: np.ndarray, J: int, orientation: float = 0.0) -> np.ndarray:
    """1-based sector of each vector; 0 for the zero vector.

    A vector on a boundary ray goes to the lower-indexed of the two adjacent
    sectors (the ray at angle 0 separates sector J from sector 1 and goes to 1).
    """
    v = np.asarray(vectors, dtype=float).reshape(-1, 2)
    width = 2 * math.pi / J
    ang = np.mod(np.arctan2(v[:, 1], v[:, 0]) - orientation, 2 * math.pi)
    s = np.floor(ang / width).astype(np.int64)
    s = np.minimum(s, J - 1)
    on_ray = (ang == s * width) & (s > 0)
    if np.any(on_ray):
        log.debug("%d point(s) on sector boundary rays assigned to the lower sector", int(on_ray.sum()))
    idx = np.where(on_ray, s, s + 1)
    return np.where(np.all(v == 0, axis=1), 0, idx)


def sector_of(fan: SectorFan, p) -> int | None:
    v = np.asarray(p, dtype=float) - np.asarray(fan.apex, dtype=float)
    _need_2d(v.size)
    if np.all(v == 0):
        log.debug("apex is not in any sector")
        return None
    if np.linalg.norm(v) >= fan.radius:
        return None
    return int(sector_indices(v[None, :], fan.sector_count, fan.orientation)[0])


def _sector_fill(x, points: np.ndarray, J: int, need: int) -> np.ndarray:
    """Per sector, the least integer l with at least `need` points in x + T_j(l); inf if never."""
    v = points - np.asarray(x, dtype=float)
    dist = np.linalg.norm(v, axis=1)
    sec = sector_indices(v, J)
    out = np.full(J, np.inf)
    for j in range(1, J + 1):
        ds = np.sort(dist[sec == j])
        if ds.size >= need:
            out[j - 1] = math.floor(ds[need - 1]) + 1
    return out


def _r1(x, config: PointConfig, J: int, need: int) -> int:
    _need_2d(config.dimension)
    fill = _sector_fill(x, config.points, J, need)
    if not np.all(np.isfinite(fill)):
        empty = [j + 1 for j in np.flatnonzero(~np.isfinite(fill))]
        raise NotStabilizedError(f"sectors {empty} at {tuple(np.round(x, 6))} never reach {need} point(s) in the window")
    return int(fill.max())


def r1_knn(x, config: PointConfig, k: int) -> int:
    return _r1(x, config, KNN_SECTORS, k + 1)


def r1_rng(x, config: PointConfig) -> int:
    return _r1(x, config, RNG_SECTORS, 1)


def _cone_reach_square(x, h: float, J: int, j: int) -> float:
    """sup |p - x| over p in the closed square [-h, h]^2 and the closed cone of sector j at x."""
    w = 2 * math.pi / J
    t1, t2 = (j - 1) * w, j * w
    u1 = np.array([math.cos(t1), math.sin(t1)])
    u2 = np.array([math.cos(t2), math.sin(t2)])
    x = np.asarray(x, dtype=float)

    def exit_dist(u):
        ts = [((h if ui > 0 else -h) - xi) / ui for ui, xi in zip(u, x) if abs(ui) > 1e-15]
        return max(0.0, min(ts))

    best = max(exit_dist(u1), exit_dist(u2))
    for cx in (-h, h):
        for cy in (-h, h):
            v = np.array([cx, cy]) - x
            if u1[0] * v[1] - u1[1] * v[0] >= 0 and v[0] * u2[1] - v[1] * u2[0] >= 0:
                best = max(best, float(np.linalg.norm(v)))
    return best


def r1_knn_window(x, config: PointConfig, k: int, window: Window | None = None) -> int:
    """Sector scan stopping at k + 1 points or once the sector stops gaining window area."""
    window = config.window if window is None else window
    _need_2d(window.dimension)
    fill = _sector_fill(x, config.points, KNN_SECTORS, k + 1)
    out = 1
    for j in range(1, KNN_SECTORS + 1):
        exhausted = math.floor(_cone_reach_square(x, window.half_side, KNN_SECTORS, j)) + 1
        out = max(out, int(min(fill[j - 1], exhausted)))
    return out


def _r1_rows(points: np.ndarray, tree: cKDTree, q: np.ndarray, J: int, need: int, lim: int, k: int):
    """R1 from k-neighbour lists; returns (values, rows the list could not decide)."""
    n = points.shape[0]
    kl = min(k, n)
    dist, idx = tree.query(q, k=kl)
    dist = dist.reshape(len(q), kl)
    idx = idx.reshape(len(q), kl)
    vec = points[idx] - q[:, None, :]
    sec = sector_indices(vec.reshape(-1, 2), J).reshape(len(q), kl)
    last = dist[:, -1] if kl < n else np.full(len(q), np.inf)
    if need == 1:
        # the zero vector (a query point matching itself) has sector 0 and is ignored
        first = np.full((len(q), J + 1), np.inf)
        np.minimum.at(first, (np.repeat(np.arange(len(q)), kl), sec.ravel()), dist.ravel())
        first = first[:, 1:]
    else:
        first = np.empty((len(q), J))
        for j in range(1, J + 1):
            cum = np.cumsum(sec == j, axis=1)
            pos = np.argmax(cum >= need, axis=1)
            first[:, j - 1] = np.where(cum[:, -1] >= need, dist[np.arange(len(q)), pos], np.inf)
    val = (np.floor(first) + 1).max(axis=1)
    # a sector still short of points is undecided while the list ends inside the cap
    undecided = (~np.isfinite(first)).any(axis=1) & (last < lim)
    val[val > lim] = np.inf
    return val, undecided


def _r1_batch(points: np.ndarray, tree: cKDTree, query: np.ndarray, J: int, need: int, cap: float,
              rounds=None) -> np.ndarray:
    """R1 for many query points; values above floor(cap) are reported as inf."""
    if rounds is None:
        # a 13-sector fan is rarely filled by fewer than 64 neighbours
        rounds = (64, 256) if need == 1 and J > 6 else (48, 160, 512)
    lim = math.floor(cap)
    out = np.empty(query.shape[0])
    pending = np.arange(query.shape[0])
    for k in rounds:
        chunk = max(1000, 2_000_000 // k)
        still = []
        for lo in range(0, pending.size, chunk):
            rows = pending[lo:lo + chunk]
            val, undecided = _r1_rows(points, tree, query[rows], J, need, lim, k)
            out[rows] = val
            still.append(rows[undecided])
        pending = np.concatenate(still) if still else pending[:0]
        if pending.size == 0:
            break
    for i in pending:
        cand = tree.query_ball_point(query[i], lim)
        v = _sector_fill(query[i], points[cand], J, need).max()
        out[i] = v if v <= lim else np.inf
    return out


def r2_radius(config: PointConfig, J: int, need: int, m: int, floor_scale: float = 100.0) -> int:
    """min{l >= floor_scale m^2 : R1(0) and R1(x) for points x in B(0, l) are all <= sqrt(l)}.

    Scans integers l while B(0, l + sqrt(l)) stays inside the window, so every
    R1 value that matters is computed from points actually observed.
    """
    _need_2d(config.dimension)
    if floor_scale != 100.0:
        log.warning("R2 floor scale %.3g differs from 100: non-default debug mode", floor_scale)
    start = math.ceil(floor_scale * m * m)
    h = config.window.half_side
    l_max = math.floor(((math.sqrt(1 + 4 * h) - 1) / 2) ** 2)
    while (l_max + 1) + math.sqrt(l_max + 1) <= h:
        l_max += 1
    while l_max > 0 and l_max + math.sqrt(l_max) > h:
        l_max -= 1
    if l_max < start:
        side = 2 * (start + math.sqrt(start)) + 2
        raise NotStabilizedError(f"window half-side {h:.1f} cannot certify R2 >= {start}; "
                                 f"needs volume >= {side * side:.0f}")
    pts = config.points
    norms = np.linalg.norm(pts, axis=1)
    sel = np.flatnonzero(norms <= l_max)
    tree = cKDTree(pts)
    cap = math.sqrt(l_max)
    query = np.vstack([np.zeros((1, 2)), pts[sel]])
    vals = _r1_batch(pts, tree, query, J, need, cap)
    r0, rx = vals[0], vals[1:]
    order = np.argsort(norms[sel])
    sorted_norms = norms[sel][order]
    prefix = np.maximum.accumulate(rx[order]) if rx.size else rx
    for ell in range(start, l_max + 1):
        cnt = np.searchsorted(sorted_norms, ell, side="right")
        worst = max(r0, prefix[cnt - 1] if cnt else 0.0)
        if worst <= math.sqrt(ell):
            return ell
    raise NotStabilizedError(f"no admissible l in [{start}, {l_max}] within the window")


def r2_knn(config: PointConfig, k: int, m: int, floor_scale: float = 100.0) -> int:
    return r2_radius(config, KNN_SECTORS, k + 1, m, floor_scale)


def r2_rng(config: PointConfig, m: int, floor_scale: float = 100.0) -> int:
    return r2_radius(config, RNG_SECTORS, 1, m, floor_scale)


def r_stab_rgg(model: RGG, m: int) -> float:
    return model.r * m


@dataclass(frozen=True)
class StabRadius:
    kind: str
    value: float
    anchor: tuple
    model: str


def stabilization_radius(config: PointConfig, model: GraphModel, m: int, floor_scale: float = 100.0) -> StabRadius:
    origin = (0.0,) * config.dimension
    if isinstance(model, RGG):
        return StabRadius("RGG", r_stab_rgg(model, m), origin, str(model))
    if isinstance(model, KNN):
        return StabRadius("R2", r2_knn(config, model.k, m, floor_scale), origin, str(model))
    return StabRadius("R2", r2_rng(config, m, floor_scale), origin, str(model))


def survival_curve(values, grid=None) -> list[tuple[int, float]]:
    """Empirical P(R >= l) on an integer grid."""
    v = np.asarray(values, dtype=float)
    grid = np.arange(int(v.min()), int(v.max()) + 2) if grid is None else grid
    return [(int(g), float(np.mean(v >= g))) for g in grid]


# --- exact patching of a fixed interior by an exterior ------------------------


class _Merged:
    """k-nearest queries over the union of two point sets (interior first)."""

    def __init__(self, inner: np.ndarray, inner_tree: cKDTree, outer: np.ndarray):
        self.inner = inner
        self.inner_tree = inner_tree
        self.outer = outer
        self.outer_tree = cKDTree(outer) if len(outer) else None
        self.offset = inner.shape[0]
        self.points = np.vstack([inner, outer]) if len(outer) else inner

    def knn(self, q: np.ndarray, k: int, exclude=None):
        parts_d, parts_i = [], []
        for tree, pts, off in ((self.inner_tree, self.inner, 0), (self.outer_tree, self.outer, self.offset)):
            if tree is None or len(pts) == 0:
                continue
            kk = min(k, len(pts))
            d, i = tree.query(q, k=kk)
            parts_d.append(d.reshape(len(q), kk))
            parts_i.append(i.reshape(len(q), kk) + off)
        d = np.hstack(parts_d)
        i = np.hstack(parts_i)
        if exclude is not None:
            d = np.where(i == np.asarray(exclude)[:, None], np.inf, d)
        o = np.lexsort((i, d), axis=1)
        return np.take_along_axis(d, o, axis=1)[:, :k], np.take_along_axis(i, o, axis=1)[:, :k]


def _lens_hits(points, a: np.ndarray, b: np.ndarray, hits) -> np.ndarray:
    """For each pair (a[t], b[t]) with candidate blocker lists hits[t], whether one lies in the open lens.

    points is an array or a callable mapping an index array to coordinates.
    """
    lens = np.fromiter((len(h) for h in hits), dtype=np.int64, count=len(hits))
    out = np.zeros(len(hits), dtype=bool)
    if lens.sum() == 0:
        return out
    owner = np.repeat(np.arange(len(hits)), lens)
    idx = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits if len(h)])
    p = points(idx) if callable(points) else points[idx]
    l2 = np.einsum("ij,ij->i", a - b, a - b)[owner]
    da = np.einsum("ij,ij->i", p - a[owner], p - a[owner])
    db = np.einsum("ij,ij->i", p - b[owner], p - b[owner])
    np.logical_or.at(out, owner, (da < l2) & (db < l2))
    return out


def _origin_in_lens(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    l2 = np.einsum("ij,ij->i", a - b, a - b)
    return (np.einsum("ij,ij->i", a, a) < l2) & (np.einsum("ij,ij->i", b, b) < l2)


def max_empty_radius(points: np.ndarray, radius: float, spacing: float = 1.0) -> float:
    """Upper bound on the radius of any point-free open disk centred in B(0, radius)."""
    tree = cKDTree(points)
    ticks = np.arange(-radius - spacing, radius + 2 * spacing, spacing)
    worst = 0.0
    for x in ticks:
        col = np.stack([np.full(ticks.size, x), ticks], axis=1)
        col = col[np.linalg.norm(col, axis=1) <= radius + spacing]
        if col.size:
            worst = max(worst, float(tree.query(col)[0].max()))
    return worst + spacing / math.sqrt(2)


class ExteriorPatcher:
    """Add-one cost at the origin for a fixed interior and varying exteriors.

    The interior graph is built once. Interior points must satisfy |x| <= radius
    and exterior points |a| > radius. For kNN only the lists of interior points
    whose k-th neighbour ball reaches past the radius, and of exterior points,
    are recomputed. For the RNG, candidate edges at exterior points come from a
    Delaunay triangulation of the exterior plus an interior band of width c:
    when no point-free disk of radius c/2 is centred in B(0, radius - c/2), an
    edge from an exterior point cannot end deeper than the band, since its empty
    lens would contain such a disk tangent at the deep endpoint. The same bound
    fixes the origin's own edges to interior points within distance c.
    """

    def __init__(self, inner: np.ndarray, model: GraphModel, radius: float, band: float = 5.0):
        if not isinstance(model, (KNN, RNG)):
            raise PreconditionError("patching is implemented for kNN and RNG")
        _need_2d(inner.shape[1])
        self.inner = np.asarray(inner, dtype=float)
        self.model = model
        self.radius = float(radius)
        self.tree = cKDTree(self.inner)
        n = self.inner.shape[0]
        norms = np.linalg.norm(self.inner, axis=1)
        if isinstance(model, KNN):
            self.lists = knn_lists(self.inner, model.k, tree=self.tree)
            far = self.inner[np.maximum(self.lists[:, -1], 0)]
            rho = np.where(self.lists[:, -1] >= 0, np.linalg.norm(far - self.inner, axis=1), np.inf)
            self.safe = norms + rho <= self.radius
            self.unsafe = np.flatnonzero(~self.safe)
            # safe rows keep their lists under every exterior: precompute their edges with and without the origin
            rows = np.flatnonzero(self.safe)
            k = model.k
            src = np.repeat(rows, k)
            dst = self.lists[rows].ravel()
            full = self.lists[rows, -1] >= 0
            closer = norms[rows] < rho[rows]
            displaced = np.zeros((rows.size, k), dtype=bool)
            displaced[:, -1] = closer & full
            keep = dst >= 0
            self.safe_g = np.stack([src[keep], dst[keep]], axis=1)
            keep0 = keep & ~displaced.ravel()
            self.safe_g0 = np.stack([src[keep0], dst[keep0]], axis=1)
            self.safe_to_origin = rows[closer]
            self.safe_displaced = self.lists[rows[closer & full], -1]
            return
        self.edges = build_graph(self.inner, model).edges
        a, b = self.inner[self.edges[:, 0]], self.inner[self.edges[:, 1]]
        self.origin_inside = _origin_in_lens(a, b)
        self.mid = 0.5 * (a + b)
        self.len = np.linalg.norm(a - b, axis=1)
        # the open lens sits inside B(mid, sqrt(3)/2 |a-b|)
        self.exposed = np.flatnonzero(np.linalg.norm(self.mid, axis=1) + np.sqrt(3) / 2 * self.len > self.radius)
        c = band
        while 2 * c < self.radius and max_empty_radius(self.inner, self.radius - c / 2, min(1.0, c / 8)) >= c / 2:
            c *= 2
        if 2 * c >= self.radius:
            raise NotStabilizedError("interior too sparse to certify a finite band; enlarge the radius")
        self.band = c
        self.band_idx = np.flatnonzero(norms > self.radius - c)
        core = np.flatnonzero(norms < c)
        local = np.vstack([np.zeros((1, 2)), self.inner[core]])
        cand = _rng_edges(local)
        cand = cand[(cand == 0).any(axis=1)]
        self.origin_nbrs = core[cand.max(axis=1) - 1]

    # kNN -------------------------------------------------------------------

    def _knn_edges(self, ext: np.ndarray):
        k = self.model.k
        n_in = self.inner.shape[0]
        merged = _Merged(self.inner, self.tree, ext)
        pts = merged.points
        n = pts.shape[0]
        origin = n
        redo = np.concatenate([self.unsafe, np.arange(n_in, n)])
        lists = np.full((redo.size, k), -1, dtype=np.int64)
        if redo.size and n > 1:
            d, i = merged.knn(pts[redo], k + 1, exclude=redo)
            got = np.where(np.isfinite(d[:, :k]), i[:, :k], -1)
            lists[:, :got.shape[1]] = got
        src = np.repeat(redo, k)
        dst = lists.ravel()
        keep = dst >= 0
        full = lists[:, -1] >= 0
        far = np.maximum(lists[:, -1], 0)
        q = pts[redo]
        rho = np.where(full, np.linalg.norm(pts[far] - q, axis=1), np.inf)
        # the origin has the largest index, so it displaces only on strict inequality
        closer = np.linalg.norm(q, axis=1) < rho
        displaced = np.zeros((redo.size, k), dtype=bool)
        displaced[:, -1] = closer & full
        keep0 = keep & ~displaced.ravel()
        d0, i0 = merged.knn(np.zeros((1, 2)), k)
        own = i0[0][np.isfinite(d0[0])]
        to_origin = np.concatenate([self.safe_to_origin, redo[closer]])
        g = np.concatenate([self.safe_g, np.stack([src[keep], dst[keep]], axis=1)])
        g0 = np.concatenate([self.safe_g0, np.stack([src[keep0], dst[keep0]], axis=1),
                             np.stack([to_origin, np.full(to_origin.size, origin)], axis=1),
                             np.stack([np.full(own.size, origin), own], axis=1)])
        touched = np.concatenate([[origin], to_origin, self.safe_displaced, lists[closer & full, -1]])
        return n, g, g0, touched

    # RNG -------------------------------------------------------------------

    def _rng_edges(self, ext: np.ndarray):
        n_in = self.inner.shape[0]
        n = n_in + ext.shape[0]
        origin = n
        edges, inside = self.edges, self.origin_inside
        new = np.empty((0, 2), dtype=np.int64)
        if len(ext):
            def at(idx):
                idx = np.asarray(idx)
                out = np.empty(idx.shape + (2,))
                ins = idx < n_in
                out[ins] = self.inner[idx[ins]]
                out[~ins] = ext[idx[~ins] - n_in]
                return out

            ext_tree = cKDTree(ext)
            ex = self.exposed
            if ex.size:
                hits = ext_tree.query_ball_point(self.mid[ex], np.sqrt(3) / 2 * self.len[ex] * (1 + 1e-9))
                blocked = _lens_hits(ext, self.inner[edges[ex, 0]], self.inner[edges[ex, 1]], hits)
                keep = np.ones(edges.shape[0], dtype=bool)
                keep[ex[blocked]] = False
                edges, inside = edges[keep], inside[keep]
            sub = np.concatenate([self.band_idx, np.arange(n_in, n)])
            sub_pts = at(sub)
            cand = _delaunay_candidates(sub_pts)
            if cand is None:
                iu, ju = np.triu_indices(sub.size, 1)
                cand = np.stack([iu, ju], axis=1)
            cand = _canonical(cand[(sub[cand] >= n_in).any(axis=1)], sub.size)
            # an edge with an exterior end and length <= c has its lens beyond radius - c
            a, b = sub_pts[cand[:, 0]], sub_pts[cand[:, 1]]
            length = np.linalg.norm(a - b, axis=1)
            short = length <= self.band
            blocked = np.zeros(cand.shape[0], dtype=bool)
            blocked[short] = lens_blocked(sub_pts, cand[short])
            longs = np.flatnonzero(~short)
            if longs.size:
                r = np.sqrt(3) / 2 * length[longs] * (1 + 1e-9)
                mids = 0.5 * (a[longs] + b[longs])
                h_in = self.tree.query_ball_point(mids, r)
                h_ex = ext_tree.query_ball_point(mids, r)
                hits = [list(x) + [j + n_in for j in y] for x, y in zip(h_in, h_ex)]
                blocked[longs] = _lens_hits(at, a[longs], b[longs], hits)
            keep = ~blocked
            new = sub[cand[keep]]
            edges = np.concatenate([edges, new])
            inside = np.concatenate([inside, _origin_in_lens(a[keep], b[keep])])
        g0 = np.concatenate([edges[~inside], np.stack([np.full(self.origin_nbrs.size, origin), self.origin_nbrs], axis=1)])
        touched = np.concatenate([[origin], edges[inside].ravel()])
        return n, edges, g0, touched

    # public ----------------------------------------------------------------

    def _edges(self, exterior):
        exterior = np.asarray(exterior, dtype=float).reshape(-1, 2)
        if exterior.size and np.linalg.norm(exterior, axis=1).min() <= self.radius:
            raise PreconditionError("exterior points must lie outside the interior ball")
        build = self._knn_edges if isinstance(self.model, KNN) else self._rng_edges
        return build(exterior)

    def graphs(self, exterior: np.ndarray):
        """(graph on interior + exterior, graph with the origin appended last)."""
        n, g, g0, _ = self._edges(exterior)
        return Adjacency.from_edges(n, g), Adjacency.from_edges(n + 1, g0)

    def add_one_cost(self, f: TestFunction, exterior: np.ndarray) -> float:
        """tr f(A0) - tr f(A) evaluated on the floor(m/2)-hop ball around changed vertices.

        Closed walks that avoid every endpoint of a changed edge use the same
        edges in both graphs and cancel; the rest stay within floor(m/2) hops.
        """
        n, g, g0, touched = self._edges(exterior)
        mark = np.zeros(n + 1, dtype=bool)
        mark[touched] = True
        both = np.concatenate([g, g0])
        for _ in range(f.degree // 2):
            hit = mark[both[:, 0]] | mark[both[:, 1]]
            mark[both[hit].ravel()] = True
        keep = np.flatnonzero(mark)
        relabel = np.full(n + 1, -1, dtype=np.int64)
        relabel[keep] = np.arange(keep.size)

        def local(e, size):
            e = relabel[e]
            e = e[(e >= 0).all(axis=1)]
            return Adjacency.from_edges(size, e)

        # the origin is the last kept vertex, so dropping it leaves labels intact
        with_origin = local(g0, keep.size)
        without = local(g, keep.size - 1)
        return trace_poly_walks(with_origin, f) - trace_poly_walks(without, f)


# --- resampling verification -------------------------------------------------


@dataclass(frozen=True)
class StabilizationReport:
    model: str
    m: int
    radius: float
    trials: int
    violations: int
    reference: float
    max_abs_diff: float
    original_matches: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def sample_exterior(window: Window, radius: float, rng, shell_width: float | None = None) -> np.ndarray:
    """Fresh unit-intensity Poisson points outside B(0, radius): on the window, or on a shell."""
    if shell_width is None:
        h = window.half_side
        pts = sample_poisson_box([-h] * window.dimension, [h] * window.dimension, rng)
        outer = math.inf
    elif window.dimension == 2:
        outer = radius + shell_width
        k = rng.poisson(math.pi * (outer * outer - radius * radius))
        rad = np.sqrt(rng.uniform(radius * radius, outer * outer, k))
        ang = rng.uniform(0, 2 * math.pi, k)
        pts = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    else:
        outer = radius + shell_width
        pts = sample_poisson_box([-outer] * window.dimension, [outer] * window.dimension, rng)
    nrm = np.linalg.norm(pts, axis=1)
    return pts[(nrm > radius) & (nrm <= outer)]


def _cost_rebuild(points: np.ndarray, model: GraphModel, f: TestFunction) -> float:
    origin = np.zeros((1, points.shape[1]))
    g = build_graph(points, model) if len(points) else Adjacency(0, np.empty((0, 2)))
    g0 = build_graph(np.vstack([points, origin]), model)
    t0 = trace_poly_walks(g, f) if len(points) else 0.0
    return trace_poly_walks(g0, f) - t0


def verify_stabilization(config: PointConfig, model: GraphModel, f: TestFunction, R: float,
                         resample_trials: int, seed: int = 0, shell_width: float | None = None,
                         engine: str = "auto") -> StabilizationReport:
    """Count exterior resamples that change the add-one cost at the origin.

    The reference is the cost on the interior alone (empty exterior), which is
    itself one admissible exterior. The original configuration is also checked.
    engine = 'rebuild' rebuilds every graph; 'patch' repairs a cached interior
    graph exactly (kNN / RNG in the plane); 'auto' patches large interiors.
    """
    pts = config.points
    inner_mask = np.linalg.norm(pts, axis=1) <= R
    inner = pts[inner_mask]
    patch = None
    if engine in ("auto", "patch") and isinstance(model, (KNN, RNG)) and config.dimension == 2:
        try:
            patch = ExteriorPatcher(inner, model, R) if engine == "patch" or inner.shape[0] > 5000 else None
        except NotStabilizedError:
            if engine == "patch":
                raise
            log.info("interior band not certified; rebuilding graphs for every resample")
    elif engine == "patch":
        raise PreconditionError("patching needs a kNN or RNG model in the plane")
    if patch is not None:
        cost = lambda ext: patch.add_one_cost(f, ext)
    else:
        cost = lambda ext: _cost_rebuild(np.vstack([inner, ext]) if len(ext) else inner, model, f)
    ref = cost(np.empty((0, config.dimension)))
    original = cost(pts[~inner_mask])
    violations = 0
    worst = abs(original - ref)
    for t in range(resample_trials):
        ext = sample_exterior(config.window, R, stream(seed, t), shell_width)
        v = cost(ext)
        worst = max(worst, abs(v - ref))
        violations += v != ref
    return StabilizationReport(str(model), f.degree, float(R), resample_trials, int(violations), float(ref),
                               float(worst), bool(original == ref))


def straddling_chain_witness(model: RGG, m: int, R: float) -> tuple[np.ndarray, np.ndarray]:
    """Interior chain from the origin and one exterior point it can reach in floor(m/2) hops.

    Closed walks of length m through the origin reach distance floor(m/2) r, so
    any R below that admits an exterior point that changes the add-one cost.
    """
    hops = m // 2
    if R >= hops * model.r:
        raise PreconditionError("no straddling chain exists at or beyond floor(m/2) r")
    step = 0.95 * model.r
    while hops * step <= R:
        step = 0.5 * (step + model.r)
    chain = np.array([[step * i, 0.0] for i in range(1, hops + 1)])
    inner = chain[np.linalg.norm(chain, axis=1) <= R]
    outer = chain[np.linalg.norm(chain, axis=1) > R]
    return inner, outer


# --- variance positivity events -----------------------------------------------


def _circle_lens_area(r1: float, r2: float, dist: float) -> float:
    if dist >= r1 + r2:
        return 0.0
    if dist <= abs(r1 - r2):
        return math.pi * min(r1, r2) ** 2
    a1 = r1 * r1 * math.acos((dist * dist + r1 * r1 - r2 * r2) / (2 * dist * r1))
    a2 = r2 * r2 * math.acos((dist * dist + r2 * r2 - r1 * r1) / (2 * dist * r2))
    tri = 0.5 * math.sqrt((-dist + r1 + r2) * (dist + r1 - r2) * (dist - r1 + r2) * (dist + r1 + r2))
    return a1 + a2 - tri


def _zero_truncated_poisson(mu: float, rng) -> int:
    u = rng.uniform(math.exp(-mu), 1.0)
    return max(1, int(poisson.ppf(u, mu)))


def sample_knn_event(window: Window, rng, caps: int = 32, cap_radius: float = 1 / 16) -> np.ndarray:
    """Poisson sample conditioned on: B(0,1) empty and each cap B(v_i, 1/16) minus B(0,1) occupied."""
    h = window.half_side
    centers = np.array([[math.cos(2 * math.pi * i / caps), math.sin(2 * math.pi * i / caps)] for i in range(caps)])
    base = sample_poisson_box([-h, -h], [h, h], rng)
    in_disk = np.linalg.norm(base, axis=1) < 1
    in_cap = (np.linalg.norm(base[:, None, :] - centers[None], axis=2) < cap_radius).any(axis=1)
    parts = [base[~in_disk & ~in_cap]]
    area = math.pi * cap_radius**2 - _circle_lens_area(1.0, cap_radius, 1.0)
    for c in centers:
        k = _zero_truncated_poisson(area, rng)
        got = []
        while len(got) < k:
            p = c + cap_radius * math.sqrt(rng.random()) * np.array(
                [math.cos(a := rng.uniform(0, 2 * math.pi)), math.sin(a)])
            if np.linalg.norm(p) >= 1:
                got.append(p)
        parts.append(np.array(got))
    return np.vstack(parts)


def sample_rng_event(window: Window, rng, eps: float = RNG_EPS) -> np.ndarray:
    """Poisson sample conditioned on: B(0,1) empty and every sector T_i(1+eps) occupied."""
    h = window.half_side
    base = sample_poisson_box([-h, -h], [h, h], rng)
    parts = [base[np.linalg.norm(base, axis=1) >= 1 + eps]]
    w = 2 * math.pi / RNG_SECTORS
    area = 0.5 * w * ((1 + eps) ** 2 - 1)
    for i in range(RNG_SECTORS):
        k = _zero_truncated_poisson(area, rng)
        rad = np.sqrt(rng.uniform(1.0, (1 + eps) ** 2, k))
        ang = rng.uniform(i * w, (i + 1) * w, k)
        parts.append(np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1))
    return np.vstack(parts)


def knn_event_holds(points: np.ndarray, gap: float = 0.25) -> bool:
    """B(0,1) empty and every point of the unit circle within `gap` of a point."""
    nrm = np.linalg.norm(points, axis=1)
    if np.any(nrm < 1):
        return False
    near = points[nrm <= 1 + gap]
    nrm = nrm[nrm <= 1 + gap]
    arcs = []
    for p, r in zip(near, nrm):
        cosd = (1 + r * r - gap * gap) / (2 * r)
        if cosd >= 1:
            continue
        half = math.acos(max(-1.0, cosd))
        c = math.atan2(p[1], p[0]) % (2 * math.pi)
        arcs.append((c - half, c + half))
    if not arcs:
        return False
    arcs.sort()
    start = arcs[0][0]
    reach = arcs[0][1]
    for a, b in arcs[1:]:
        if a > reach:
            return False
        reach = max(reach, b)
    return reach >= start + 2 * math.pi


def rng_event_holds(points: np.ndarray, eps: float = RNG_EPS) -> bool:
    nrm = np.linalg.norm(points, axis=1)
    if np.any(nrm < 1):
        return False
    sec = sector_indices(points[nrm < 1 + eps], RNG_SECTORS)
    return set(sec.tolist()) >= set(range(1, RNG_SECTORS + 1))


def _circle_intersections(c1, r1, c2, r2):
    d = float(np.linalg.norm(c2 - c1))
    a = (r1 * r1 - r2 * r2 + d * d) / (2 * d)
    hh = math.sqrt(max(r1 * r1 - a * a, 0.0))
    base = c1 + a * (c2 - c1) / d
    perp = np.array([-(c2 - c1)[1], (c2 - c1)[0]]) / d
    return base + hh * perp, base - hh * perp


def _angle(a, o, b) -> float:
    u, v = a - o, b - o
    c = float(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.acos(min(1.0, max(-1.0, c)))


@dataclass(frozen=True)
class LensClaims:
    """Witness quantities for one pair whose open lens contains the origin.

    max_norm and alpha belong to the chosen witness pair; min_norm is the
    smaller witness norm of that pair, a stronger quantity than the claim uses.
    """

    max_norm: float
    min_norm: float
    alpha: float
    s_angle: float
    sector_inside: bool
    pairs: int


def lens_claims(xi, xj, eps: float = RNG_EPS) -> LensClaims | None:
    """Witness points x, y on the lens boundary and the quantities bounding the angle at 0.

    x lies on the boundaries of B(xj, d) and B(mid, (1 + eps) d / 2) with
    <xi - x, x> < 0, and y likewise with the roles swapped. The sign
    conditions may admit two choices of each; the pair with the widest angle
    at the origin is the witness. Returns None when no pair exists.
    """
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    d = float(np.linalg.norm(xi - xj))
    mid = 0.5 * (xi + xj)
    rho = (1 + eps) * d / 2
    xs = [p for p in _circle_intersections(xj, d, mid, rho) if float((xi - p) @ p) < 0]
    ys = [p for p in _circle_intersections(xi, d, mid, rho) if float((xj - p) @ p) < 0]
    if not xs or not ys:
        return None
    zero = np.zeros(2)
    x, y = max(((x, y) for x in xs for y in ys), key=lambda q: _angle(q[1], zero, q[0]))
    s_pts = [p for p in _circle_intersections(xi, d, xj, d) if float(xi @ p) < 0]
    s_angle = _angle(y, s_pts[0], x) if s_pts else math.nan
    nx, ny = float(np.linalg.norm(x)), float(np.linalg.norm(y))
    w = 2 * math.pi / RNG_SECTORS
    arc = np.linspace(0, w, 65)[1:-1]
    inside = False
    for j in range(RNG_SECTORS):
        # the lens is convex and holds the origin, so a sector is inside once its arc is
        pts = (1 + eps) * np.stack([np.cos(j * w + arc), np.sin(j * w + arc)], axis=1)
        if np.all((np.linalg.norm(pts - xi, axis=1) <= d) & (np.linalg.norm(pts - xj, axis=1) <= d)):
            inside = True
            break
    return LensClaims(max(nx, ny), min(nx, ny), _angle(y, zero, x), float(s_angle), inside, len(xs) * len(ys))


def claims_hold(c: LensClaims, eps: float = RNG_EPS) -> bool:
    return c.alpha >= 4 * math.pi / RNG_SECTORS - 1e-9 and c.max_norm >= 1 + eps - 1e-12 and c.sector_inside


def sample_lens_triple(rng, d_range=(1.0, 8.0)):
    """Random (xi, xj) with the origin uniform in their lens and |xi|, |xj| >= 1."""
    while True:
        d = rng.uniform(*d_range)
        th = rng.uniform(0, 2 * math.pi)
        u = np.array([math.cos(th), math.sin(th)])
        a, b = -0.5 * d * u, 0.5 * d * u
        while True:
            o = rng.uniform(-d, d, 2)
            if np.linalg.norm(o - a) < d and np.linalg.norm(o - b) < d:
                break
        a, b = a - o, b - o
        if min(np.linalg.norm(a), np.linalg.norm(b)) >= 1:
            return a, b


@dataclass(frozen=True)
class AngleReport:
    samples: int
    evaluated: int
    min_alpha: float
    min_s_angle: float
    min_max_norm: float
    min_min_norm: float
    ambiguous: int
    sector_failures: int
    violations: int


def rng_angle_check(samples: int, seed: int = 0, eps: float = RNG_EPS) -> AngleReport:
    rng = stream(seed, 0)
    rows = []
    for _ in range(samples):
        xi, xj = sample_lens_triple(rng)
        c = lens_claims(xi, xj, eps)
        if c is not None:
            rows.append(c)
    viol = sum(not claims_hold(c, eps) for c in rows)
    return AngleReport(samples, len(rows), min(c.alpha for c in rows), float(np.nanmin([c.s_angle for c in rows])),
                       min(c.max_norm for c in rows), min(c.min_norm for c in rows),
                       sum(c.pairs > 1 for c in rows), sum(not c.sector_inside for c in rows), int(viol))


def rng_lens_sector_check(samples: int, seed: int = 0) -> dict:
    """Points of the 2 pi / 3 sector C(y) must lie in the lens of (0, y)."""
    rng = stream(seed, 1)
    violations = 0
    sector_contained = 0
    w = 2 * math.pi / RNG_SECTORS
    for _ in range(samples):
        y = rng.normal(size=2) * rng.uniform(0.1, 10)
        ry = float(np.linalg.norm(y))
        axis = math.atan2(y[1], y[0])
        t = axis + rng.uniform(-math.pi / 3, math.pi / 3)
        r = ry * math.sqrt(rng.random())
        p = r * np.array([math.cos(t), math.sin(t)])
        # closed lens: the sector boundary touches the lens boundary
        tol = 1e-12 * ry
        if not (np.linalg.norm(p) <= ry + tol and np.linalg.norm(p - y) <= ry + tol):
            violations += 1
        # some 13-sector lies inside C(y): its angular range fits in the 2 pi / 3 window
        lo = (axis - math.pi / 3) % (2 * math.pi)
        j = math.ceil(lo / w - 1e-12)
        start = j * w
        if ((start - lo) % (2 * math.pi)) + w <= 2 * math.pi / 3 + 1e-12:
            sector_contained += 1
    return {"samples": samples, "violations": violations, "sector_contained": sector_contained}


@dataclass(frozen=True)
class PositivityReport:
    model: str
    trials: int
    event_failures: int
    removed_edges: int
    claim_pairs: int
    claim_violations: int

    @property
    def violations(self) -> int:
        return self.event_failures + self.removed_edges + self.claim_violations


def positivity_event_check(model: GraphModel, trials: int, seed: int = 0, side: float = 8.0,
                           claim_pairs_per_trial: int = 20) -> PositivityReport:
    """Sample on the positivity event, insert the origin, and count removed edges."""
    window = Window.from_side(2, side)
    failures = removed = pairs = claim_viol = 0
    for t in range(trials):
        rng = stream(seed, t)
        if isinstance(model, KNN):
            if model.k != 1:
                raise PreconditionError("the kNN positivity event is stated for k = 1")
            pts = sample_knn_event(window, rng)
            failures += not knn_event_holds(pts)
        elif isinstance(model, RNG):
            pts = sample_rng_event(window, rng)
            failures += not rng_event_holds(pts)
        else:
            raise PreconditionError("positivity events are defined for kNN(1) and RNG")
        g = build_graph(pts, model)
        g0 = build_graph(np.vstack([pts, np.zeros((1, 2))]), model)
        before = {tuple(e) for e in g.edges.tolist()}
        after = {tuple(e) for e in g0.edges.tolist()}
        removed += len(before - after)
        if isinstance(model, RNG):
            near = pts[np.linalg.norm(pts, axis=1) < 4]
            cand = [(a, b) for a in range(len(near)) for b in range(a + 1, len(near))]
            rng.shuffle(cand)
            used = 0
            for a, b in cand:
                xi, xj = near[a], near[b]
                l2 = float((xi - xj) @ (xi - xj))
                if xi @ xi < l2 and xj @ xj < l2:
                    c = lens_claims(xi, xj)
                    if c is None:
                        continue
                    pairs += 1
                    claim_viol += not claims_hold(c)
                    used += 1
                    if used >= claim_pairs_per_trial:
                        break
    return PositivityReport(str(model), trials, failures, removed, pairs, claim_viol)


__all__ = [name for name in dir() if not name.startswith("_")]
