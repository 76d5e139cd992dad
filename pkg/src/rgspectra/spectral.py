"""Linear eigenvalue statistics by closed-walk counting and by eigensolve, plus weighted norms."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import sympy
from scipy import integrate
from scipy.sparse.csgraph import connected_components

from .errors import (CapExceededError, DivergenceError, InexactWalkCountWarning,
                     PreconditionError, SpectralRangeError)
from .graphs import Adjacency

EXACT_LIMIT = 2**53
DENSE_CAP = 4000


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A test function with its first two derivatives.

    Polynomials carry their coefficients a_0..a_m; smooth functions carry numpy
    callables (derivatives usually obtained symbolically) and an optional
    compact support outside which all three vanish.
    """

    __test__ = False  # keep pytest from collecting this class

    name: str
    f: Callable
    df: Callable
    d2f: Callable
    coefficients: tuple | None = None
    support: tuple | None = None
    expr: object = field(default=None, repr=False)

    @property
    def is_polynomial(self) -> bool:
        return self.coefficients is not None

    @property
    def degree(self) -> int:
        if self.coefficients is None:
            raise PreconditionError(f"{self.name} is not a polynomial")
        c = self.coefficients
        return max((q for q, a in enumerate(c) if a != 0), default=0)

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    def scaled(self, s: float) -> "TestFunction":
        name = f"{s:g}*{self.name}"
        coeffs = None if self.coefficients is None else tuple(s * a for a in self.coefficients)
        expr = None if self.expr is None else s * self.expr
        return TestFunction(name, lambda x: s * self.f(x), lambda x: s * self.df(x),
                            lambda x: s * self.d2f(x), coeffs, self.support, expr)

    @classmethod
    def polynomial(cls, coefficients, name: str | None = None) -> "TestFunction":
        c = tuple(float(a) if not float(a).is_integer() else int(a) for a in coefficients) or (0,)
        arr = np.array(c, dtype=float)
        d1 = np.polynomial.polynomial.polyder(arr)
        d2 = np.polynomial.polynomial.polyder(arr, 2)
        pv = np.polynomial.polynomial.polyval
        name = name or "poly:" + ",".join(f"{a:g}" for a in c)
        return cls(name, lambda t: pv(t, arr), lambda t: pv(t, d1), lambda t: pv(t, d2), c)

    @classmethod
    def from_expr(cls, name: str, expr, support: tuple | None = None) -> "TestFunction":
        """Build from a sympy expression in the symbol x; derivatives by differentiation."""
        x = sympy.Symbol("x", real=True)
        expr = expr.subs({s: x for s in expr.free_symbols if s.name == "x"})
        fns = [sympy.lambdify(x, e, "numpy") for e in (expr, sympy.diff(expr, x), sympy.diff(expr, x, 2))]
        if support is not None:
            lo, hi = support
            fns = [_masked(fn, lo, hi) for fn in fns]
        else:
            fns = [_broadcast(fn) for fn in fns]
        return cls(name, *fns, None, support, expr)


def _broadcast(fn):
    def g(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(fn(t), dtype=float), t.shape).copy()
    return g


def _masked(fn, lo, hi):
    def g(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        inside = (t > lo) & (t < hi)
        if np.any(inside):
            with np.errstate(all="ignore"):
                out[inside] = fn(t[inside])
        return out
    return g


def _exp2abs() -> TestFunction:
    f = lambda t: np.exp(2 * np.abs(np.asarray(t, dtype=float)))
    return TestFunction("exp2abs", f, lambda t: 2 * np.sign(t) * f(t), lambda t: 4 * f(t))


def _zero() -> TestFunction:
    z = lambda t: np.zeros(np.shape(t))
    return TestFunction("zero", z, z, z, (0,))


def builtin(name: str) -> TestFunction:
    """Named test functions; `poly:a0,a1,...` gives a polynomial."""
    x = sympy.Symbol("x", real=True)
    if name.startswith("poly:"):
        return TestFunction.polynomial([float(v) for v in name[5:].split(",")], name)
    table = {
        "gauss1": lambda: TestFunction.from_expr("gauss1", x * sympy.exp(-x**2 / 2)),
        "gauss2": lambda: TestFunction.from_expr("gauss2", x**2 * sympy.exp(-x**2 / 2)),
        "bump": lambda: TestFunction.from_expr("bump", x * sympy.exp(1 - 1 / (1 - x**2 / 9)), (-3.0, 3.0)),
        "atan2x": lambda: TestFunction.from_expr("atan2x", sympy.atan(2 * x)),
        "xsech": lambda: TestFunction.from_expr("xsech", x * sympy.sech(x)),
        "exp2abs": _exp2abs,
        "zero": _zero,
    }
    if name not in table:
        raise PreconditionError(f"unknown test function {name!r}; known: poly:..., {', '.join(table)}")
    return table[name]()


BUILTIN_NAMES = ("gauss1", "gauss2", "bump", "atan2x", "xsech", "exp2abs", "zero")


# --- walk counts -------------------------------------------------------------


def _powers(adj: Adjacency, upto: int):
    """[A^0, A^1, ..., A^upto] as sparse matrices, int64 while exact, else float."""
    n = adj.vertex_count
    mats = [sp.identity(n, dtype=np.int64, format="csr"), adj.csr]
    exact = True
    for _ in range(2, upto + 1):
        nxt = mats[-1] @ adj.csr
        if exact and nxt.nnz and nxt.data.max() > EXACT_LIMIT:
            exact = False
        if not exact:
            nxt = nxt.astype(float)
        mats.append(nxt)
    return mats[:upto + 1], exact


def _flag(exact: bool):
    if not exact:
        warnings.warn("closed-walk counts exceed 2**53; values are approximate", InexactWalkCountWarning,
                      stacklevel=3)


DENSE_WALK_LIMIT = 300


def _dense_diagonals(adj: Adjacency, m: int) -> tuple[np.ndarray, bool]:
    # nonnegative integer entries below 2**53 keep every BLAS partial sum exact
    a = np.zeros((adj.vertex_count, adj.vertex_count))
    a[adj.edges[:, 0], adj.edges[:, 1]] = 1.0
    a[adj.edges[:, 1], adj.edges[:, 0]] = 1.0
    out = np.zeros((m + 1, adj.vertex_count))
    out[0] = 1.0
    p = np.eye(adj.vertex_count)
    half = [p]
    for _ in range((m + 1) // 2):
        half.append(half[-1] @ a)
    for q in range(1, m + 1):
        h = (q + 1) // 2
        out[q] = np.einsum("ij,ij->i", half[h], half[q - h])
    exact = bool(half[-1].max(initial=0) <= EXACT_LIMIT and out.max(initial=0) <= EXACT_LIMIT)
    return (out.astype(np.int64) if exact else out), exact


def diagonal_walk_counts(adj: Adjacency, m: int) -> tuple[np.ndarray, bool]:
    """Row q holds the diagonal of A^q, q = 0..m."""
    if adj.vertex_count <= DENSE_WALK_LIMIT:
        return _dense_diagonals(adj, m)
    mats, exact = _powers(adj, (m + 1) // 2)
    n = adj.vertex_count
    out = np.zeros((m + 1, n), dtype=np.int64 if exact else float)
    for q in range(m + 1):
        a = (q + 1) // 2
        row = np.asarray(mats[a].multiply(mats[q - a]).sum(axis=1)).ravel()
        if exact and row.size and np.abs(row).max() > EXACT_LIMIT:
            exact = False
            out = out.astype(float)
        out[q] = row
    return out, exact


def closed_walk_counts(adj: Adjacency, m: int) -> tuple[list, bool]:
    """[Tr A^0, ..., Tr A^m]; integers while exact."""
    diag, exact = diagonal_walk_counts(adj, m)
    sums = diag.sum(axis=1)
    if exact and np.abs(sums).max(initial=0) > EXACT_LIMIT:
        exact = False
    return [int(v) if exact else float(v) for v in sums], exact


def _poly_combine(coeffs, counts) -> float:
    if all(isinstance(a, int) for a in coeffs) and all(isinstance(c, int) for c in counts):
        return float(sum(a * c for a, c in zip(coeffs, counts)))
    return float(math.fsum(float(a) * float(c) for a, c in zip(coeffs, counts)))


def trace_poly_walks(adj: Adjacency, f: TestFunction) -> float:
    """Tr f(A) = sum_q a_q Tr A^q through closed-walk counts."""
    counts, exact = closed_walk_counts(adj, f.degree)
    _flag(exact)
    return _poly_combine(f.coefficients, counts)


# --- eigenvalues -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray

    def __len__(self):
        return self.eigenvalues.size


def eigenvalues(adj: Adjacency, cap: int = DENSE_CAP) -> Spectrum:
    """All eigenvalues, solving each connected component separately.

    Components of equal size are stacked and solved as one batch. The cap
    applies to the largest component.
    """
    n = adj.vertex_count
    if n == 0:
        return Spectrum(np.zeros(0))
    ncomp, labels = connected_components(adj.csr, directed=False)
    sizes = np.bincount(labels, minlength=ncomp)
    if sizes.max() > cap:
        raise CapExceededError(f"component of size {sizes.max()} exceeds the dense cap {cap}; "
                               "use trace_poly_walks for polynomial test functions")
    order = np.argsort(labels, kind="stable")
    starts = np.concatenate([[0], np.cumsum(sizes)])
    local = np.empty(n, dtype=np.int64)
    local[order] = np.arange(n) - starts[labels[order]]
    vals = [np.zeros(int((sizes == 1).sum()))]
    ei, ej = adj.edges[:, 0], adj.edges[:, 1]
    edge_comp = labels[ei]
    for s in np.unique(sizes[sizes > 1]):
        comps = np.flatnonzero(sizes == s)
        slot = np.full(ncomp, -1, dtype=np.int64)
        slot[comps] = np.arange(comps.size)
        block = np.zeros((comps.size, s, s))
        sel = slot[edge_comp] >= 0
        b, li, lj = slot[edge_comp[sel]], local[ei[sel]], local[ej[sel]]
        block[b, li, lj] = 1.0
        block[b, lj, li] = 1.0
        vals.append(np.linalg.eigvalsh(block).ravel())
    return Spectrum(np.sort(np.concatenate(vals)))


def trace_function(adj: Adjacency, f: TestFunction, spectrum: Spectrum | None = None) -> float:
    lam = (spectrum or eigenvalues(adj)).eigenvalues
    return float(math.fsum(np.asarray(f(lam), dtype=float)))


def trace_weighted(adj: Adjacency, f: TestFunction, c: float, spectrum: Spectrum | None = None) -> float:
    """Tr[f(A) e^{cA}]; requires c != 0 and f(0) = 0."""
    if c == 0:
        raise PreconditionError("the weighted trace requires c != 0")
    if abs(float(f(np.zeros(1))[0])) > 1e-12:
        raise PreconditionError(f"{f.name}: the weighted trace requires f(0) = 0")
    lam = (spectrum or eigenvalues(adj)).eigenvalues
    if lam.size and abs(c) * np.abs(lam).max() > 700:
        raise SpectralRangeError(f"c*max|lambda| = {abs(c) * np.abs(lam).max():.1f} > 700")
    return float(math.fsum(np.asarray(f(lam), dtype=float) * np.exp(c * lam)))


# --- norms -------------------------------------------------------------------


def sech(t):
    a = np.abs(np.asarray(t, dtype=float))
    e = np.exp(-a)
    return 2 * e / (1 + e * e)


def _integral(g: Callable, support=None, tol: float = 1e-12, t0: float = 4.0, t_max: float = 4096.0) -> float:
    """Integral of a nonnegative g over the line.

    Integrates outward over doubling shells until a shell adds less than tol of
    the running total; raises DivergenceError if the total is not finite or the
    range limit is reached first.
    """
    def quad(a, b):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            with np.errstate(all="ignore"):
                v, _ = integrate.quad(lambda t: float(g(np.array([t]))[0]), a, b, limit=400,
                                      epsabs=0.0, epsrel=1e-12)
        if not np.isfinite(v):
            raise DivergenceError(f"non-finite integral on [{a}, {b}]")
        return v

    if support is not None:
        lo, hi = support
        pieces = np.linspace(lo, hi, 9)
        return math.fsum(quad(a, b) for a, b in zip(pieces[:-1], pieces[1:]))
    total = quad(-t0, 0.0) + quad(0.0, t0)
    t = t0
    while True:
        shell = quad(-2 * t, -t) + quad(t, 2 * t)
        total += shell
        t *= 2
        if shell <= tol * total or (total == 0 and shell == 0 and t >= 64):
            return total
        if t >= t_max:
            raise DivergenceError(f"tail mass {shell:.3g} not negligible at |x| = {t:g}")


def lc_norm(f: TestFunction, c: float) -> float:
    """||f sech(c.)||^2 + ||f' sech(c.)||^2 + ||f'' sech(c.)||^2."""
    if c == 0:
        raise PreconditionError("the weighted norm requires c != 0")
    w = lambda t: sech(c * t) ** 2
    return math.fsum(_integral(lambda t, h=h: h(t) ** 2 * w(t), f.support) for h in (f.f, f.df, f.d2f))


def sobolev_norms(f: TestFunction) -> tuple[float, float]:
    """(||f||_2^2, ||f''||_2^2)."""
    return (_integral(lambda t: f.f(t) ** 2, f.support), _integral(lambda t: f.d2f(t) ** 2, f.support))


def grid_lc_norm(f: TestFunction, c: float, half_width: float = 60.0, points: int = 1_200_001) -> float:
    """Fixed-grid Simpson reference for lc_norm on [-half_width, half_width]."""
    t = np.linspace(-half_width, half_width, points)
    w = sech(c * t) ** 2
    return float(sum(integrate.simpson(h(t) ** 2 * w, x=t) for h in (f.f, f.df, f.d2f)))
