"""Random geometric, k-nearest-neighbour and relative neighbourhood graphs."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import PreconditionError
from .pointproc import PointConfig

log = logging.getLogger(__name__)

EDGE_CSV_VERSION = "# rgspectra edges v1"


@dataclass(frozen=True)
class RGG:
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise PreconditionError("RGG radius must be positive")

    def __str__(self):
        return f"rgg:{self.r:g}"


@dataclass(frozen=True)
class KNN:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise PreconditionError("KNN k must be a positive integer")

    def __str__(self):
        return f"knn:{self.k}"


@dataclass(frozen=True)
class RNG:
    def __str__(self):
        return "rng"


GraphModel = RGG | KNN | RNG


def parse_model(spec: str, r: float | None = None, k: int | None = None) -> GraphModel:
    """'rgg:1.5', 'knn:2', 'rng', or a bare name with r / k given separately."""
    name, _, arg = spec.strip().lower().partition(":")
    if name == "rgg":
        return RGG(float(arg) if arg else float(1.0 if r is None else r))
    if name == "knn":
        return KNN(int(arg) if arg else int(1 if k is None else k))
    if name == "rng":
        return RNG()
    raise PreconditionError(f"unknown graph model {spec!r}")


def _canonical(edges, n: int) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    e = np.sort(e, axis=1)
    e = e[e[:, 0] != e[:, 1]]
    key = np.unique(e[:, 0] * np.int64(n) + e[:, 1])
    return np.stack([key // n, key % n], axis=1)


@dataclass(frozen=True, eq=False)
class Adjacency:
    vertex_count: int
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Adjacency":
        return cls(int(n), _canonical(edges, max(int(n), 1)))

    def __eq__(self, other):
        if not isinstance(other, Adjacency):
            return NotImplemented
        return self.vertex_count == other.vertex_count and np.array_equal(self.edges, other.edges)

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def csr(self) -> sp.csr_matrix:
        n = self.vertex_count
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * i.size, dtype=np.int64)
        return sp.csr_matrix((data, (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.vertex_count).astype(np.int64)

    def neighbors(self, i: int) -> np.ndarray:
        m = self.csr
        return m.indices[m.indptr[i]:m.indptr[i + 1]]

    def dense(self) -> np.ndarray:
        return self.csr.toarray()

    def subgraph(self, keep) -> "Adjacency":
        """Induced subgraph on the sorted vertex subset `keep`, relabelled 0..len-1."""
        keep = np.asarray(keep, dtype=np.int64)
        relabel = np.full(self.vertex_count, -1, dtype=np.int64)
        relabel[keep] = np.arange(keep.size)
        e = relabel[self.edges]
        return Adjacency(keep.size, e[(e[:, 0] >= 0) & (e[:, 1] >= 0)])


def max_degree(adj: Adjacency) -> int:
    return int(adj.degrees.max()) if adj.vertex_count else 0


def triangle_count(adj: Adjacency) -> int:
    a = adj.csr
    return int((a @ a).multiply(a).sum()) // 6


# --- fast builders -----------------------------------------------------------


def _rgg_edges(points: np.ndarray, r: float) -> np.ndarray:
    if points.shape[0] < 2:
        return np.empty((0, 2), dtype=np.int64)
    return cKDTree(points).query_pairs(r, output_type="ndarray").astype(np.int64)


def knn_lists(points: np.ndarray, k: int, query=None, tree=None) -> np.ndarray:
    """Row i holds the k nearest other points of query[i] ordered by (distance, index).

    When query is None the query points are the configuration itself and
    self-matches are removed. Rows are padded with -1 when fewer than k exist.
    """
    n = points.shape[0]
    self_query = query is None
    q = points if self_query else np.asarray(query, dtype=float)
    out = np.full((q.shape[0], k), -1, dtype=np.int64)
    avail = n - 1 if self_query else n
    kk = min(k, avail)
    if kk <= 0 or q.shape[0] == 0:
        return out
    tree = cKDTree(points) if tree is None else tree
    want = min(kk + 1 + int(self_query), n)
    dist, idx = tree.query(q, k=want)
    dist = np.atleast_2d(dist).reshape(q.shape[0], want)
    idx = np.atleast_2d(idx).reshape(q.shape[0], want)
    rows = np.arange(q.shape[0])
    if self_query:
        dist = np.where(idx == rows[:, None], np.inf, dist)
    order = np.lexsort((idx, dist), axis=1)
    dist = np.take_along_axis(dist, order, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)
    out[:, :kk] = idx[:, :kk]
    if want < n:
        # points not returned are at least as far as the last returned one; when
        # that distance equals the cut a smaller index may be hiding beyond it
        cut = dist[:, kk - 1]
        nret = want - int(self_query)
        for i in np.flatnonzero(dist[:, nret - 1] <= cut):
            cand = np.array(tree.query_ball_point(q[i], cut[i] * (1 + 1e-12)), dtype=np.int64)
            if self_query:
                cand = cand[cand != i]
            d = np.linalg.norm(points[cand] - q[i], axis=1)
            o = np.lexsort((cand, d))
            out[i, :kk] = cand[o[:kk]]
    return out


def _knn_edges(points: np.ndarray, k: int) -> np.ndarray:
    n = points.shape[0]
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    nb = knn_lists(points, k)
    src = np.repeat(np.arange(n), nb.shape[1])
    dst = nb.ravel()
    ok = dst >= 0
    return np.stack([src[ok], dst[ok]], axis=1)


def _delaunay_candidates(points: np.ndarray) -> np.ndarray | None:
    n, d = points.shape
    if n <= d + 1:
        return None
    try:
        tri = Delaunay(points)
    except (QhullError, ValueError):
        return None
    s = tri.simplices
    pairs = [s[:, [a, b]] for a in range(d + 1) for b in range(a + 1, d + 1)]
    return np.concatenate(pairs)


def lens_blocked(points: np.ndarray, edges: np.ndarray, tree=None, k_local: int = 16) -> np.ndarray:
    """Boolean mask: some other point lies strictly inside both open balls of the edge."""
    n = points.shape[0]
    blocked = np.zeros(edges.shape[0], dtype=bool)
    if edges.shape[0] == 0:
        return blocked
    tree = cKDTree(points) if tree is None else tree
    kl = min(k_local, n)
    used = np.unique(edges)
    dist = np.empty((n, kl))
    idx = np.zeros((n, kl), dtype=np.int64)
    dq, iq = tree.query(points[used], k=kl)
    dist[used] = dq.reshape(len(used), kl)
    idx[used] = iq.reshape(len(used), kl)
    reach2 = dist[:, -1] ** 2 if kl < n else np.full(n, np.inf)
    a_all = points[edges[:, 0]]
    b_all = points[edges[:, 1]]
    d2 = np.einsum("ij,ij->i", a_all - b_all, a_all - b_all)
    # blockers lie within |a-b| of either endpoint, so a complete local list of
    # one endpoint decides the edge
    use_j = reach2[edges[:, 0]] <= d2 * (1 + 1e-9)
    anchor = np.where(use_j, edges[:, 1], edges[:, 0])
    covered = reach2[anchor] > d2 * (1 + 1e-9)
    rows = np.flatnonzero(covered)
    for lo in range(0, rows.size, 200_000):
        r = rows[lo:lo + 200_000]
        cand = idx[anchor[r]]
        pc = points[cand]
        a = a_all[r][:, None, :]
        b = b_all[r][:, None, :]
        da2 = np.einsum("ijk,ijk->ij", pc - a, pc - a)
        db2 = np.einsum("ijk,ijk->ij", pc - b, pc - b)
        endpoint = (cand == edges[r, 0][:, None]) | (cand == edges[r, 1][:, None])
        lim = d2[r][:, None]
        blocked[r] = ((da2 < lim) & (db2 < lim) & ~endpoint).any(axis=1)
    rest = np.flatnonzero(~covered)
    if rest.size:
        ia, ib = edges[rest, 0], edges[rest, 1]
        hits = tree.query_ball_point(points[ia], np.sqrt(d2[rest]) * (1 + 1e-9))
        sizes = np.fromiter((len(h) for h in hits), dtype=np.int64, count=rest.size)
        owner = np.repeat(np.arange(rest.size), sizes)
        cand = np.fromiter((c for h in hits for c in h), dtype=np.int64, count=int(sizes.sum()))
        p = points[cand]
        lim = d2[rest][owner]
        inside = ((np.einsum("ij,ij->i", p - points[ia][owner], p - points[ia][owner]) < lim)
                  & (np.einsum("ij,ij->i", p - points[ib][owner], p - points[ib][owner]) < lim)
                  & (cand != ia[owner]) & (cand != ib[owner]))
        hit = np.zeros(rest.size, dtype=bool)
        np.logical_or.at(hit, owner, inside)
        blocked[rest] = hit
    return blocked


def _rng_edges(points: np.ndarray) -> np.ndarray:
    n, d = points.shape
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    if d == 1:
        order = np.argsort(points[:, 0], kind="stable")
        return np.stack([order[:-1], order[1:]], axis=1)
    cand = _delaunay_candidates(points)
    if cand is None:
        iu, ju = np.triu_indices(n, 1)
        cand = np.stack([iu, ju], axis=1)
    cand = _canonical(cand, n)
    return cand[~lens_blocked(points, cand)]


def build_graph(config: PointConfig | np.ndarray, model: GraphModel) -> Adjacency:
    pts = config.points if isinstance(config, PointConfig) else np.asarray(config, dtype=float)
    n = pts.shape[0]
    if isinstance(model, RGG):
        e = _rgg_edges(pts, model.r)
    elif isinstance(model, KNN):
        e = _knn_edges(pts, model.k)
    elif isinstance(model, RNG):
        e = _rng_edges(pts)
    else:
        raise PreconditionError(f"unsupported model {model!r}")
    return Adjacency.from_edges(n, e)


# --- brute-force oracles -------------------------------------------------------


def brute_force_graph(config: PointConfig | np.ndarray, model: GraphModel) -> Adjacency:
    """Direct O(N^2) / O(N^3) evaluation of the edge rules, for testing."""
    pts = config.points if isinstance(config, PointConfig) else np.asarray(config, dtype=float)
    n = pts.shape[0]
    edges = []
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)) if n else np.zeros((0, 0))
    if isinstance(model, RGG):
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if dist[i, j] <= model.r]
    elif isinstance(model, KNN):
        for i in range(n):
            others = sorted((dist[i, j], j) for j in range(n) if j != i)
            edges += [(i, j) for _, j in others[:model.k]]
    elif isinstance(model, RNG):
        for i in range(n):
            for j in range(i + 1, n):
                dij = dist[i, j]
                if not any(dist[p, i] < dij and dist[p, j] < dij for p in range(n) if p != i and p != j):
                    edges.append((i, j))
    return Adjacency.from_edges(n, edges)


# --- neighbourhood axioms ------------------------------------------------------


@dataclass(frozen=True)
class AxiomReport:
    symmetric: bool
    subset: bool
    translation_invariant: bool

    @property
    def passed(self) -> bool:
        return self.symmetric and self.subset and self.translation_invariant


def directed_neighbourhoods(points: np.ndarray, model: GraphModel) -> list[set]:
    adj = build_graph(points, model)
    nb = [set() for _ in range(points.shape[0])]
    for i, j in adj.edges:
        nb[i].add(int(j))
        nb[j].add(int(i))
    return nb


def check_neighborhood_axioms(model: GraphModel, config: PointConfig, shift, neighborhood=None) -> AxiomReport:
    """Symmetry, subset and translation invariance of the neighbourhood map.

    `neighborhood(points, model) -> list of sets` may be swapped for a deliberately
    broken map to exercise the report.
    """
    neighborhood = directed_neighbourhoods if neighborhood is None else neighborhood
    pts = config.points
    nb = neighborhood(pts, model)
    n = pts.shape[0]
    symmetric = all(i in nb[j] for i in range(n) for j in nb[i])
    subset = all(j != i and 0 <= j < n for i in range(n) for j in nb[i])
    shifted = neighborhood(pts + np.asarray(shift, dtype=float), model)
    return AxiomReport(symmetric, subset, [set(s) for s in nb] == [set(s) for s in shifted])


def write_edges_csv(adj: Adjacency, path) -> None:
    with open(path, "w") as fh:
        fh.write(EDGE_CSV_VERSION + "\n")
        fh.write(f"# vertex_count={adj.vertex_count}\n")
        fh.write("i,j\n")
        for i, j in adj.edges:
            fh.write(f"{i},{j}\n")
