"""Walk counts L_m and the box-partition and Poisson-moment bounds on them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import PreconditionError
from .graphs import Adjacency, GraphModel, build_graph
from .pointproc import PointConfig, insert_point
from .spectral import EXACT_LIMIT


@dataclass(frozen=True)
class WalkCount:
    m: int
    value: float
    exact: bool
    variant: str = "total"


def _walk_vector(adj: Adjacency, steps: int):
    """A^steps 1 as an int64 vector, falling back to float past 2**53."""
    v = np.ones(adj.vertex_count, dtype=np.int64)
    exact = True
    a = adj.csr
    for _ in range(steps):
        v = a @ v
        if exact and v.size and v.max() > EXACT_LIMIT:
            exact = False
            v = v.astype(float)
    return v, exact


def count_walks(adj: Adjacency, m: int) -> WalkCount:
    """Number of m-vertex sequences with consecutive vertices adjacent: 1^T A^{m-1} 1."""
    if m < 1:
        raise PreconditionError("m must be >= 1")
    v, exact = _walk_vector(adj, m - 1)
    total = int(v.sum()) if exact else float(v.sum())
    return WalkCount(m, total, exact and total <= EXACT_LIMIT)


def walks_through_vertex(adj: Adjacency, m: int, ell: int, x: int) -> WalkCount:
    if not 1 <= ell <= m:
        raise PreconditionError("need 1 <= ell <= m")
    left, e1 = _walk_vector(adj, ell - 1)
    right, e2 = _walk_vector(adj, m - ell)
    value = left[x] * right[x]
    exact = e1 and e2 and value <= EXACT_LIMIT
    return WalkCount(m, int(value) if exact else float(value), exact, "anchored")


def count_walks_through(config: PointConfig, model: GraphModel, m: int, ell: int, x) -> WalkCount:
    """Walks of m vertices whose ell-th vertex is the inserted point x."""
    aug = insert_point(config, x, exterior=True)
    return walks_through_vertex(build_graph(aug, model), m, ell, aug.n_points - 1)


def box_counts(config: PointConfig, r: float) -> np.ndarray:
    """Point counts on the grid of side-r boxes covering the window (last box truncated)."""
    d = config.dimension
    side = config.window.side
    nb = max(1, math.ceil(side / r - 1e-12))
    idx = np.floor((config.points + config.window.half_side) / r).astype(np.int64)
    idx = np.clip(idx, 0, nb - 1)
    z = np.zeros((nb,) * d, dtype=np.int64)
    np.add.at(z, tuple(idx.T), 1)
    return z


def box_bound(config: PointConfig, r: float, m: int) -> float:
    """Sum over box sequences i_1..i_m with consecutive boxes adjacent or equal of prod Z_{i_j}."""
    if m < 1:
        raise PreconditionError("m must be >= 1")
    z = box_counts(config, r).astype(float)
    stencil = np.ones((3,) * z.ndim)
    v = z.copy()
    for _ in range(m - 1):
        v = z * ndimage.convolve(v, stencil, mode="constant", cval=0.0)
    return float(v.sum())


def poisson_moment_bound(lam: float, m: int, constant: float = 1.0) -> float:
    """(C m / log(m/lam + 1))^m; C = 1 bounds E[Z^m] for Z ~ Poisson(lam)."""
    if lam <= 0 or m < 1:
        raise PreconditionError("need lam > 0 and m >= 1")
    return (constant * m / math.log(m / lam + 1)) ** m


def poisson_raw_moment(lam: float, m: int) -> float:
    """Exact E[Z^m] = sum_k S(m, k) lam^k via Stirling numbers of the second kind."""
    s = [[0] * (m + 1) for _ in range(m + 1)]
    s[0][0] = 1
    for i in range(1, m + 1):
        for k in range(1, i + 1):
            s[i][k] = k * s[i - 1][k] + s[i - 1][k - 1]
    return float(sum(s[m][k] * lam**k for k in range(m + 1)))


def walk_mean_bound(n: float, r: float, d: int, m: int) -> float:
    """(n / r^d) (3^d)^{m-1} (m / log(m / r^d + 1))^m."""
    if min(n, r, d, m) <= 0:
        raise PreconditionError("all arguments must be positive")
    return (n / r**d) * (3**d) ** (m - 1) * poisson_moment_bound(r**d, m)


def walk_counts_upto(adj: Adjacency, m_max: int) -> list[int]:
    """[L_1, ..., L_{m_max}] from one sequence of products A^k 1."""
    v = np.ones(adj.vertex_count, dtype=np.int64)
    out = [int(v.sum())]
    for _ in range(m_max - 1):
        v = adj.csr @ v
        if v.size and v.max() > EXACT_LIMIT:
            raise PreconditionError("walk counts exceed exact integer range")
        out.append(int(v.sum()))
    return out


def box_bounds_upto(config: PointConfig, r: float, m_max: int) -> list[float]:
    z = box_counts(config, r).astype(float)
    stencil = np.ones((3,) * z.ndim)
    v = z.copy()
    out = [float(v.sum())]
    for _ in range(m_max - 1):
        v = z * ndimage.convolve(v, stencil, mode="constant", cval=0.0)
        out.append(float(v.sum()))
    return out
