"""Score functions, add-one costs and difference operators of trace functionals."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapExceededError, PreconditionError
from .graphs import RGG, Adjacency, GraphModel, build_graph
from .pointproc import PointConfig, Window, insert_point, sample_poisson, stream
from .spectral import EXACT_LIMIT, TestFunction, _flag, _poly_combine, trace_poly_walks

SURJECTION_CAP = 8
ENUMERATION_GUARD = 25
MAX_ENUMERATED_DEGREE = 5


@dataclass(frozen=True)
class Surjection:
    """An onto map {1..p'} -> {1..p}, stored as the tuple (pi(1), ..., pi(p'))."""

    values: tuple

    @property
    def source_size(self) -> int:
        return len(self.values)

    @property
    def target_size(self) -> int:
        return max(self.values)

    def __call__(self, j: int) -> int:
        # cyclic convention pi(p'+1) = pi(1)
        return self.values[(j - 1) % len(self.values)]


def surjections(p_prime: int, p: int) -> list[Surjection]:
    if p_prime > SURJECTION_CAP:
        raise CapExceededError(f"p' = {p_prime} exceeds the enumeration cap {SURJECTION_CAP}")
    if p < 1 or p > p_prime:
        return []
    return [Surjection(v) for v in itertools.product(range(1, p + 1), repeat=p_prime)
            if len(set(v)) == p]


@lru_cache(maxsize=None)
def _anchored_trie(q: int, p: int):
    """Surjections with pi(1) = 1 as a nested dict keyed by successive labels."""
    root: dict = {}
    for s in surjections(q, p):
        if s.values[0] != 1:
            continue
        node = root
        for v in s.values[1:]:
            node = node.setdefault(v, {})
    return root


@dataclass(frozen=True)
class ScoreValue:
    anchor: int
    value: float
    route: str


def _neighbour_sets(adj: Adjacency) -> list[set]:
    nb = [set() for _ in range(adj.vertex_count)]
    for i, j in adj.edges:
        nb[i].add(int(j))
        nb[j].add(int(i))
    return nb


def _within_hops(nb, z: int, hops: int) -> set:
    seen = {z}
    frontier = deque([(z, 0)])
    while frontier:
        v, h = frontier.popleft()
        if h == hops:
            continue
        for u in nb[v]:
            if u not in seen:
                seen.add(u)
                frontier.append((u, h + 1))
    return seen


def _count_labelled(nb, z: int, q: int, p: int) -> int:
    """Number of (pi, distinct tuple) pairs with every cyclic step adjacent.

    pi runs over onto maps {1..q} -> {1..p} with pi(1) = 1 and label 1 is
    pinned to the anchor z; labels 2..p take distinct vertices other than z.
    """
    trie = _anchored_trie(q, p)
    total = 0

    def walk(node, current, assigned, used):
        nonlocal total
        if not node:
            if z in nb[current] and len(assigned) == p:
                total += 1
            return
        for label, child in node.items():
            v = assigned.get(label)
            if v is not None:
                if v in nb[current]:
                    walk(child, v, assigned, used)
            else:
                for u in nb[current]:
                    if u not in used:
                        assigned[label] = u
                        used.add(u)
                        walk(child, u, assigned, used)
                        used.discard(u)
                        del assigned[label]

    walk(trie, z, {1: z}, {z})
    return total


def score_enumerated(z: int, config: PointConfig, model: GraphModel, f: TestFunction,
                     adj: Adjacency | None = None) -> ScoreValue:
    """Score of point z from the defining sum over labelled tuples and surjections."""
    if not f.is_polynomial:
        raise PreconditionError("scores are defined for polynomial test functions")
    m = f.degree
    if m > MAX_ENUMERATED_DEGREE:
        raise CapExceededError(f"degree {m} exceeds the enumeration limit {MAX_ENUMERATED_DEGREE}")
    adj = build_graph(config, model) if adj is None else adj
    nb = _neighbour_sets(adj)
    # a closed walk of length <= m from z never leaves floor(m/2) hops
    local = _within_hops(nb, z, m // 2)
    if len(local) > ENUMERATION_GUARD:
        raise CapExceededError(f"{len(local)} points near anchor {z}; the enumeration guard is {ENUMERATION_GUARD}")
    nb_local = {v: nb[v] & local for v in local}
    terms = []
    for q, a in enumerate(f.coefficients):
        if q < 2 or a == 0:
            continue
        for p in range(2, q + 1):
            cnt = _count_labelled(nb_local, z, q, p)
            if cnt:
                terms.append((a, cnt, math.factorial(p - 1)))
    if all(isinstance(a, int) for a, _, _ in terms):
        from fractions import Fraction
        value = float(sum(Fraction(a * c, fac) for a, c, fac in terms))
    else:
        value = math.fsum(a * c / fac for a, c, fac in terms)
    return ScoreValue(z, value, "enumerated")


def score_diagonal(z: int, adj: Adjacency, f: TestFunction) -> ScoreValue:
    """sum_{q >= 2} a_q (A^q)_{zz}."""
    counts, exact = anchored_closed_walks(adj, z, f.degree)
    _flag(exact)
    coeffs = list(f.coefficients)
    coeffs[0] = 0
    return ScoreValue(z, _poly_combine(coeffs, counts), "diagonal")


def anchored_closed_walks(adj: Adjacency, z: int, m: int) -> tuple[list, bool]:
    """[(A^q)_{zz} for q = 0..m] by repeated products with the indicator of z."""
    v = np.zeros(adj.vertex_count, dtype=np.int64)
    v[z] = 1
    out = [1]
    exact = True
    a = adj.csr
    for _ in range(m):
        v = a @ v
        if exact and v.size and v.max() > EXACT_LIMIT:
            exact = False
            v = v.astype(float)
        out.append(int(v[z]) if exact else float(v[z]))
    return out, exact


def sum_scores(config: PointConfig, model: GraphModel, f: TestFunction, route: str = "diagonal") -> float:
    """sum of scores over all points plus the constant term a_0 * N."""
    n = config.n_points
    if n == 0:
        return 0.0
    adj = build_graph(config, model)
    a0 = f.coefficients[0]
    if route == "enumerated":
        s = [score_enumerated(z, config, model, f, adj).value for z in range(n)]
    else:
        s = [score_diagonal(z, adj, f).value for z in range(n)] if f.degree >= 2 else [0.0]
    return math.fsum(s) + a0 * n


# --- functionals and difference operators ------------------------------------


def trace_functional(f: TestFunction):
    def F(config: PointConfig, model: GraphModel) -> float:
        return trace_poly_walks(build_graph(config, model), f) if config.n_points else 0.0
    F.__name__ = f"trace[{f.name}]"
    return F


def edge_functional(config: PointConfig, model: GraphModel) -> float:
    return float(build_graph(config, model).edge_count)


def count_functional(config: PointConfig, model: GraphModel) -> float:
    return float(config.n_points)


def score_functional(anchor: int, f: TestFunction):
    """Score of a fixed configuration index; insertions append, so the index is stable."""
    def F(config: PointConfig, model: GraphModel) -> float:
        return score_diagonal(anchor, build_graph(config, model), f).value
    F.__name__ = f"score[{anchor},{f.name}]"
    return F


FUNCTIONALS = {
    "trace": trace_functional,
    "edges": lambda: edge_functional,
    "count": lambda: count_functional,
    "score": score_functional,
}


def make_functional(name: str, *args):
    """Registry lookup: make_functional('trace', f), ('score', anchor, f), ('edges',), ('count',)."""
    if name not in FUNCTIONALS:
        raise PreconditionError(f"unknown functional {name!r}; known: {', '.join(FUNCTIONALS)}")
    return FUNCTIONALS[name](*args)


def diff_first(F, config: PointConfig, model: GraphModel, x, exterior: bool = True) -> float:
    return F(insert_point(config, x, exterior), model) - F(config, model)


def diff_second(F, config: PointConfig, model: GraphModel, x, y, exterior: bool = True) -> float:
    if np.array_equal(np.asarray(x, float), np.asarray(y, float)):
        raise PreconditionError("second difference needs x != y")
    cx = insert_point(config, x, exterior)
    cy = insert_point(config, y, exterior)
    cxy = insert_point(cx, y, exterior)
    return (F(cxy, model) - F(cx, model)) - (F(cy, model) - F(config, model))


def add_one_cost(config: PointConfig, model: GraphModel, f: TestFunction, x=None) -> float:
    """Tr f(A) after inserting x (default: the origin) minus before."""
    x = np.zeros(config.dimension) if x is None else x
    return diff_first(trace_functional(f), config, model, x)


# --- support checks ----------------------------------------------------------


@dataclass(frozen=True)
class SupportReport:
    trials: int
    violations: int
    max_abs_diff_beyond_radius: float
    nonzero_inside: int

    def as_dict(self) -> dict:
        return {"trials": self.trials, "violations": self.violations,
                "max_abs_diff_beyond_radius": self.max_abs_diff_beyond_radius,
                "nonzero_inside": self.nonzero_inside}


def _uniform_in_window(window: Window, rng) -> np.ndarray:
    return rng.uniform(-window.half_side, window.half_side, window.dimension)


def _point_at_distance(center, lo: float, hi: float, rng) -> np.ndarray:
    d = center.size
    u = rng.normal(size=d)
    u /= np.linalg.norm(u)
    return center + rng.uniform(lo, hi) * u


def _integer_poly(m: int, rng) -> TestFunction:
    coeffs = [0, 0] + [int(v) for v in rng.integers(0, 3, size=m - 1)]
    coeffs[m] = int(rng.integers(1, 3))
    return TestFunction.polynomial(coeffs)


def support_check_score_diffs(model: RGG, degrees=(2, 3), trials: int = 10_000, seed: int = 0,
                              dimension: int = 2, volume: float = 64.0) -> SupportReport:
    """Randomised check that score differences vanish for probes beyond m*r of the anchor.

    Each trial samples a configuration, an anchor z1 added to it, a polynomial of
    degree m with nonnegative integer coefficients, and probes x, y. One probe
    pair lies just outside radius m*r (first and second order), and one probe
    lies within r of z1 as a positive control.
    """
    if not isinstance(model, RGG):
        raise PreconditionError("the score support check is stated for random geometric graphs")
    window = Window(dimension, volume)
    violations = 0
    worst = 0.0
    inside = 0
    for t in range(trials):
        rng = stream(seed, t)
        m = int(degrees[t % len(degrees)])
        f = _integer_poly(m, rng)
        reach = m * model.r
        base = sample_poisson(window, rng)
        z1 = _uniform_in_window(window, rng)
        cfg = insert_point(base, z1, exterior=True)
        anchor = cfg.n_points - 1
        G = score_functional(anchor, f)
        x = _point_at_distance(z1, reach * (1 + 1e-9), reach + model.r, rng)
        # x is beyond the radius, so the pair qualifies wherever y falls
        y = _point_at_distance(z1, 0.0, reach + model.r, rng) if t % 2 else _uniform_in_window(window, rng)
        d1 = diff_first(G, cfg, model, x)
        d2 = diff_second(G, cfg, model, x, y)
        for v in (d1, d2):
            worst = max(worst, abs(v))
            violations += v != 0
        w = _point_at_distance(z1, 0.0, model.r, rng)
        inside += diff_first(G, cfg, model, w) != 0
    return SupportReport(trials, int(violations), worst, int(inside))


def support_check_trace_second(model: RGG, degrees=(2, 3), trials: int = 10_000, seed: int = 1,
                               dimension: int = 2, volume: float = 400.0) -> SupportReport:
    """Randomised check that D2_{x,y} Tr f(A) vanishes whenever |x - y| > 4 m r."""
    if not isinstance(model, RGG):
        raise PreconditionError("the trace support check is stated for random geometric graphs")
    window = Window(dimension, volume)
    violations = 0
    worst = 0.0
    inside = 0
    for t in range(trials):
        rng = stream(seed, t)
        m = int(degrees[t % len(degrees)])
        f = _integer_poly(m, rng)
        reach = 4 * m * model.r
        F = trace_functional(f)
        cfg = sample_poisson(window, rng)
        while True:
            x = _uniform_in_window(window, rng)
            y = _uniform_in_window(window, rng)
            if np.linalg.norm(x - y) > reach:
                break
        v = diff_second(F, cfg, model, x, y)
        worst = max(worst, abs(v))
        violations += v != 0
        w = _point_at_distance(x, 0.0, model.r, rng)
        inside += diff_second(F, cfg, model, x, w) != 0
    return SupportReport(trials, int(violations), worst, int(inside))
