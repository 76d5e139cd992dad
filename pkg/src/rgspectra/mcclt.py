"""Monte Carlo harness: variance limits, Gaussianity, rates, Poincare and Stein terms."""

from __future__ import annotations

import json
import math
import multiprocessing
import os
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, stats

from .errors import CostGuardError, DegenerateVarianceWarning, PreconditionError
from .graphs import KNN, RGG, RNG, Adjacency, GraphModel, build_graph
from .pointproc import Window, ball_volume, sample_poisson, stream
from .spectral import TestFunction, eigenvalues, sobolev_norms, trace_function, trace_poly_walks, trace_weighted


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("RGSPECTRA_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass
class ExperimentConfig:
    dimension: int
    model: GraphModel
    f: TestFunction
    n_grid: list
    replicates: int = 1000
    seed: int = 0
    c: float | None = None
    weighted: bool = False
    workers: int = field(default_factory=default_workers)
    anderson: bool = False

    def __post_init__(self):
        self.n_grid = [float(n) for n in self.n_grid]
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise PreconditionError("n_grid must be strictly increasing")
        if not self.n_grid or self.n_grid[0] <= 0:
            raise PreconditionError("n_grid needs positive volumes")
        if self.replicates < 100:
            raise PreconditionError("at least 100 replicates are required")
        if self.weighted and not self.c:
            raise PreconditionError("the weighted statistic needs c != 0")

    def summary(self) -> dict:
        return {"dimension": self.dimension, "model": str(self.model), "f": self.f.name, "c": self.c,
                "weighted": self.weighted, "n_grid": self.n_grid, "replicates": self.replicates, "seed": self.seed}


# --- replicates ----------------------------------------------------------------


def statistic(adj: Adjacency, cfg: ExperimentConfig) -> float:
    if adj.vertex_count == 0:
        return 0.0
    if cfg.weighted:
        return trace_weighted(adj, cfg.f, cfg.c)
    if cfg.f.is_polynomial:
        return float(trace_poly_walks(adj, cfg.f))
    return trace_function(adj, cfg.f)


def replicate_graph(cfg: ExperimentConfig, grid_index: int, rep: int) -> Adjacency:
    window = Window(cfg.dimension, cfg.n_grid[grid_index])
    config = sample_poisson(window, stream(cfg.seed, grid_index, rep))
    return build_graph(config, cfg.model)


def _one(cfg: ExperimentConfig, grid_index: int, rep: int) -> float:
    return statistic(replicate_graph(cfg, grid_index, rep), cfg)


_POOL_CFG = None


def _pool_task(args):
    return [_one(_POOL_CFG, g, r) for g, r in args]


def _map_tasks(cfg: ExperimentConfig, tasks: list[tuple[int, int]]) -> list[float]:
    global _POOL_CFG
    if cfg.workers <= 1 or len(tasks) < 2:
        return [_one(cfg, g, r) for g, r in tasks]
    _POOL_CFG = cfg
    chunks = [tasks[i::cfg.workers] for i in range(cfg.workers)]
    # forked workers inherit the config, so test functions need not pickle
    with multiprocessing.get_context("fork").Pool(cfg.workers) as pool:
        parts = pool.map(_pool_task, chunks)
    out = [0.0] * len(tasks)
    for w, part in enumerate(parts):
        for j, v in enumerate(part):
            out[w + j * cfg.workers] = v
    return out


def run_replicates(cfg: ExperimentConfig) -> dict[float, np.ndarray]:
    """M independent statistics per volume; replicate (g, r) uses its own seed stream."""
    tasks = [(g, r) for g in range(len(cfg.n_grid)) for r in range(cfg.replicates)]
    values = np.array(_map_tasks(cfg, tasks), dtype=float).reshape(len(cfg.n_grid), cfg.replicates)
    return {n: values[g] for g, n in enumerate(cfg.n_grid)}


# --- variance ------------------------------------------------------------------


def jackknife_variance(x: np.ndarray) -> tuple[float, float]:
    """Unbiased sample variance and its jackknife standard error (closed form)."""
    x = np.asarray(x, dtype=float)
    m = x.size
    if m < 3:
        raise PreconditionError("need at least 3 samples")
    dev2 = (x - x.mean()) ** 2
    s2 = dev2.sum() / (m - 1)
    loo = ((m - 1) * s2 - m / (m - 1) * dev2) / (m - 2)
    se = math.sqrt((m - 1) / m * np.sum((loo - loo.mean()) ** 2))
    return float(s2), se


@dataclass(frozen=True)
class SigmaEstimate:
    volumes: list
    var_over_n: list
    var_over_n_se: list
    sigma2: float
    sigma2_se: float
    drift: float
    degenerate: bool


def estimate_sigma2(samples: dict[float, np.ndarray]) -> SigmaEstimate:
    if len(samples) < 2:
        raise PreconditionError("need at least two volumes")
    ns = sorted(samples)
    vals, ses = [], []
    for n in ns:
        v, se = jackknife_variance(samples[n])
        vals.append(v / n)
        ses.append(se / n)
    s2, se = vals[-1], ses[-1]
    drift = abs(vals[-1] - vals[-2]) / vals[-1] if vals[-1] > 0 else 0.0
    degenerate = s2 <= 2 * se
    if degenerate:
        warnings.warn("variance estimate is consistent with zero (degenerate limit)", DegenerateVarianceWarning,
                      stacklevel=2)
    return SigmaEstimate(ns, vals, ses, s2, se, drift, bool(degenerate))


def edge_statistic_variance_1d(length: float, r: float) -> float:
    """Var(Tr A^2) for the RGG on a Poisson process on an interval, by 1-d integration.

    With h = 1{|x-y| <= r} and g(x) = int h(x, y) dy over the interval, the
    Mecke formula gives Var(2 E) = 4 [ (1/2) int g + int g^2 ].
    """
    g = lambda x: min(x + r, length) - max(x - r, 0.0)
    brk = sorted({min(r, length), max(length - r, 0.0)})
    i1 = integrate.quad(g, 0, length, points=brk, epsabs=1e-12, epsrel=1e-13)[0]
    i2 = integrate.quad(lambda x: g(x) ** 2, 0, length, points=brk, epsabs=1e-12, epsrel=1e-13)[0]
    return 4 * (0.5 * i1 + i2)


def edge_statistic_variance_1d_closed(length: float, r: float) -> float:
    """Closed form of the same integral for length >= 2r."""
    if length < 2 * r:
        raise PreconditionError("closed form needs length >= 2r")
    return 4 * ((2 * r * length - r * r) / 2 + 4 * r * r * (length - 2 * r) + 14 * r**3 / 3)


# --- Gaussianity and rates -----------------------------------------------------------


@dataclass(frozen=True)
class Gaussianity:
    ks_stat: float
    ks_p: float
    dw: float
    ad_stat: float | None = None


def wasserstein_1d(a, b) -> float:
    a, b = np.sort(np.asarray(a, dtype=float)), np.sort(np.asarray(b, dtype=float))
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    return float(stats.wasserstein_distance(a, b))


def dw_hat(z: np.ndarray, sigma: float) -> float:
    """Mean gap between order statistics and N(0, sigma^2) quantiles at (i - 1/2)/M."""
    m = z.size
    q = sigma * stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    return float(np.mean(np.abs(np.sort(z) - q)))


def gaussianity_tests(samples, n: float, sigma2: float, anderson: bool = False) -> Gaussianity:
    """KS and quantile-coupled W1 distance of (X - mean)/sqrt(n) against N(0, sigma2)."""
    if not sigma2 > 0:
        raise PreconditionError("degenerate variance: the normalized test needs sigma^2 > 0")
    x = np.asarray(samples, dtype=float)
    z = (x - x.mean()) / math.sqrt(n)
    sd = math.sqrt(sigma2)
    ks = stats.kstest(z, "norm", args=(0.0, sd))
    ad = float(stats.anderson(z).statistic) if anderson else None
    return Gaussianity(float(ks.statistic), float(ks.pvalue), dw_hat(z, sd), ad)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float


def rate_fit(ns, dws, samples: dict | None = None, n_boot: int = 1000, seed: int = 0) -> RateFit:
    """Least-squares slope of log d_W on log n.

    With per-volume samples the interval comes from resampling replicates; the
    fitted Gaussian at each volume is refitted in every resample.
    """
    ns = np.asarray(ns, dtype=float)
    dws = np.asarray(dws, dtype=float)
    if ns.size < 3:
        raise PreconditionError("rate fit needs at least three volumes")
    if np.any(dws <= 0):
        raise PreconditionError("all distances must be positive")
    lx = np.log(ns)
    slope, intercept = np.polyfit(lx, np.log(dws), 1)
    if samples is not None:
        rng = stream(seed, 99)
        boot = np.empty(n_boot)
        for b in range(n_boot):
            row = []
            for n in ns:
                x = samples[n][rng.integers(0, len(samples[n]), len(samples[n]))]
                z = (x - x.mean()) / math.sqrt(n)
                row.append(dw_hat(z, z.std(ddof=1)))
            boot[b] = np.polyfit(lx, np.log(np.maximum(row, 1e-300)), 1)[0]
        lo, hi = np.percentile(boot, [2.5, 97.5])
    else:
        resid = np.log(dws) - (slope * lx + intercept)
        dof = ns.size - 2
        s2 = float(resid @ resid) / dof if dof else 0.0
        se = math.sqrt(s2 / float(((lx - lx.mean()) ** 2).sum()))
        t = stats.t.ppf(0.975, dof) if dof else 0.0
        lo, hi = slope - t * se, slope + t * se
    return RateFit(float(slope), float(intercept), float(lo), float(hi))


# --- CLT pipeline ----------------------------------------------------------------


@dataclass
class CltReport:
    config: dict
    per_n: list
    sigma2: float
    sigma2_se: float
    drift: float
    degenerate: bool
    rate: dict | None
    note: str = "samples are centred by their own mean"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def run_clt(cfg: ExperimentConfig, samples: dict | None = None, n_boot: int = 1000) -> tuple[CltReport, dict]:
    samples = run_replicates(cfg) if samples is None else samples
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateVarianceWarning)
        est = estimate_sigma2(samples)
    rows = []
    for n, v, se in zip(est.volumes, est.var_over_n, est.var_over_n_se):
        row = {"n": n, "mean": float(np.mean(samples[n])), "var_over_n": v, "var_over_n_se": se}
        if v > 0:
            g = gaussianity_tests(samples[n], n, v, cfg.anderson)
            row.update(ks_stat=g.ks_stat, ks_p=g.ks_p, dw=g.dw, ad_stat=g.ad_stat)
        rows.append(row)
    rate = None
    if len(rows) >= 3 and all(r.get("dw", 0) > 0 for r in rows):
        fit = rate_fit([r["n"] for r in rows], [r["dw"] for r in rows], samples, n_boot, cfg.seed)
        rate = asdict(fit)
    report = CltReport(cfg.summary(), rows, est.sigma2, est.sigma2_se, est.drift, est.degenerate, rate)
    return report, samples


def write_samples_csv(samples: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write("# rgspectra samples v1\n")
        fh.write("n,replicate,value\n")
        for n in sorted(samples):
            for i, v in enumerate(samples[n]):
                fh.write(f"{n:g},{i},{float(v)!r}\n")


def write_plots(samples: dict, outdir) -> list[str]:
    """Histogram and normal QQ plot of the standardized samples per n, as SVG. Needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "rgspectra"
    paths = []
    for n in sorted(samples):
        x = np.asarray(samples[n], dtype=float)
        sd = x.std(ddof=1)
        if sd <= 0:
            continue
        z = np.sort((x - x.mean()) / sd)
        q = stats.norm.ppf((np.arange(1, z.size + 1) - 0.5) / z.size)
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.5))
        ax1.hist(z, bins=40, density=True, color="0.7")
        grid = np.linspace(-4, 4, 200)
        ax1.plot(grid, stats.norm.pdf(grid), "k-")
        ax1.set_title(f"n = {n:g}")
        ax2.plot(q, z, ".", ms=2, color="k")
        ax2.plot([-4, 4], [-4, 4], "r-", lw=0.8)
        ax2.set_xlabel("normal quantile")
        ax2.set_ylabel("sample quantile")
        path = os.path.join(str(outdir), f"clt_n{n:g}.svg")
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
        paths.append(path)
    return paths


# --- local differences for the RGG -----------------------------------------------------


def _local_points(window: Window, probes: np.ndarray, rho: float, rng) -> np.ndarray:
    """Poisson points of the window within rho of some probe.

    Restricting the process to this set leaves every difference of a closed-walk
    count of length <= 2 rho / r at the probes unchanged for the RGG.
    """
    h = window.half_side
    lo = np.maximum(probes.min(axis=0) - rho, -h)
    hi = np.minimum(probes.max(axis=0) + rho, h)
    if np.any(hi <= lo):
        return np.empty((0, window.dimension))
    n = rng.poisson(float(np.prod(hi - lo)))
    pts = lo + (hi - lo) * rng.random((n, window.dimension))
    d = np.linalg.norm(pts[:, None, :] - probes[None, :, :], axis=2)
    return pts[(d <= rho).any(axis=1)]


def _subset_traces(points: np.ndarray, probes: np.ndarray, model: RGG, f: TestFunction, subsets) -> list[float]:
    """Tr f(A) on points plus each subset of probes; one graph, induced subgraphs."""
    base = points.shape[0]
    adj = build_graph(np.vstack([points, probes]), model)
    out = []
    for s in subsets:
        keep = np.concatenate([np.arange(base), base + np.asarray(s, dtype=np.int64)])
        out.append(float(trace_poly_walks(adj.subgraph(keep), f)))
    return out


def _locality_radius(model: GraphModel, f: TestFunction) -> float:
    return (f.degree // 2) * model.r * (1 + 1e-9) + 1e-12


def first_difference_samples(window: Window, model: GraphModel, f: TestFunction, probes: int, seed: int,
                             full: bool = False) -> np.ndarray:
    """n-weighted-free samples of D_x F for x uniform in the window and a fresh process each."""
    rng = stream(seed, 7)
    out = np.empty(probes)
    local = isinstance(model, RGG) and f.is_polynomial and not full
    h = window.half_side
    for p in range(probes):
        x = rng.uniform(-h, h, (1, window.dimension))
        sub = stream(seed, 8, p)
        if local:
            q = _local_points(window, x, _locality_radius(model, f), sub)
            a, b = _subset_traces(q, x, model, f, [(), (0,)])
        else:
            q = sample_poisson(window, sub).points
            g0 = build_graph(q, model)
            g1 = build_graph(np.vstack([q, x]), model)
            a = _trace_any(g0, f)
            b = _trace_any(g1, f)
        out[p] = b - a
    return out


def _trace_any(adj: Adjacency, f: TestFunction) -> float:
    if adj.vertex_count == 0:
        return 0.0
    return float(trace_poly_walks(adj, f)) if f.is_polynomial else trace_function(adj, f)


@dataclass(frozen=True)
class PoincareResult:
    n: float
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    margin: float

    @property
    def passed(self) -> bool:
        return self.margin >= -3.0


def poincare_check(cfg: ExperimentConfig, n: float, probes: int, rhs_scale: float = 1.0,
                   samples: np.ndarray | None = None) -> PoincareResult:
    """Var F against n * E[(D_x F)^2]; margin in combined standard errors."""
    if not cfg.f.is_polynomial:
        raise PreconditionError("the Poincare check uses polynomial test functions")
    if samples is None:
        sub = ExperimentConfig(cfg.dimension, cfg.model, cfg.f, [n], cfg.replicates, cfg.seed,
                               workers=cfg.workers)
        samples = run_replicates(sub)[float(n)]
    lhs, lhs_se = jackknife_variance(samples)
    window = Window(cfg.dimension, n)
    d = first_difference_samples(window, cfg.model, cfg.f, probes, cfg.seed + 1)
    sq = d * d
    rhs = rhs_scale * n * float(sq.mean())
    rhs_se = rhs_scale * n * float(sq.std(ddof=1)) / math.sqrt(probes)
    denom = math.hypot(lhs_se, rhs_se)
    margin = (rhs - lhs) / denom if denom > 0 else (0.0 if rhs >= lhs else -math.inf)
    return PoincareResult(float(n), lhs, lhs_se, rhs, rhs_se, float(margin))


# --- Malliavin-Stein terms ---------------------------------------------------------------


@dataclass(frozen=True)
class GammaEstimates:
    n: float
    gamma1: float
    gamma1_se: float
    gamma2: float
    gamma2_se: float
    gamma3: float
    gamma3_se: float
    probes: int
    inner: int
    beyond_support_probes: int
    beyond_support_nonzero: int
    variance: float | None = None
    bound: float | None = None


def _ball_sample(center: np.ndarray, radius: float, rng) -> np.ndarray:
    d = center.size
    v = rng.normal(size=d)
    v /= np.linalg.norm(v)
    return center + radius * rng.random() ** (1.0 / d) * v


def gamma_cost(probes: int, inner: int, probes3: int) -> int:
    """Number of trace evaluations a gamma run performs."""
    return 6 * probes * inner + 2 * probes3


def gamma_estimates(cfg: ExperimentConfig, n: float, probes: int = 4000, inner: int = 8,
                    probes3: int | None = None, beyond_probes: int = 200, max_evals: int = 5_000_000,
                    variance: float | None = None) -> GammaEstimates:
    """Importance-sampled estimates of the three Stein error integrals for the RGG.

    z is uniform in the window and x, y uniform in B(z, 4mr), weighted by
    n |B|^2; the second differences vanish outside that ball. Inner
    expectations average `inner` fresh local processes. Separately,
    `beyond_probes` pairs with |x - z| > 4mr are evaluated on full processes
    and every second difference must be exactly zero.
    """
    f, model = cfg.f, cfg.model
    if not (isinstance(model, RGG) and f.is_polynomial):
        raise PreconditionError("gamma estimates need the RGG and a polynomial test function")
    probes3 = probes if probes3 is None else probes3
    cost = gamma_cost(probes, inner, probes3)
    if cost > max_evals:
        raise CostGuardError(f"estimated {cost} trace evaluations exceed the guard {max_evals}")
    window = Window(cfg.dimension, n)
    h = window.half_side
    m = f.degree
    supp = 4 * m * model.r
    weight = n * ball_volume(cfg.dimension, supp) ** 2
    rho = _locality_radius(model, f)
    subsets = [(), (0,), (1,), (2,), (0, 2), (1, 2)]
    g1 = np.zeros(probes)
    g2 = np.zeros(probes)
    rng = stream(cfg.seed, 11)
    for p in range(probes):
        z = rng.uniform(-h, h, cfg.dimension)
        x = _ball_sample(z, supp, rng)
        y = _ball_sample(z, supp, rng)
        if not (window.contains(x) and window.contains(y)):
            continue
        pr = np.stack([x, y, z])
        a1 = a2 = 0.0
        for k in range(inner):
            q = _local_points(window, pr, rho, stream(cfg.seed, 12, p, k))
            t0, tx, ty, tz, txz, tyz = _subset_traces(q, pr, model, f, subsets)
            dx, dy = tx - t0, ty - t0
            dxz, dyz = txz - tx - tz + t0, tyz - ty - tz + t0
            a1 += dx * dx * dy * dy
            a2 += dxz * dxz * dyz * dyz
        a1 /= inner
        a2 /= inner
        g1[p] = weight * math.sqrt(a1) * math.sqrt(a2)
        g2[p] = weight * a2
    d = first_difference_samples(window, model, f, probes3, cfg.seed + 13)
    g3 = n * np.abs(d) ** 3
    nonzero = 0
    for p in range(beyond_probes):
        sub = stream(cfg.seed, 14, p)
        z = sub.uniform(-h, h, cfg.dimension)
        x = None
        for _ in range(1000):
            cand = sub.uniform(-h, h, cfg.dimension)
            if np.linalg.norm(cand - z) > supp:
                x = cand
                break
        if x is None:
            continue
        q = sample_poisson(window, sub).points
        t0, tx, tz, txz = _subset_traces(q, np.stack([x, z]), model, f, [(), (0,), (1,), (0, 1)])
        nonzero += (txz - tx - tz + t0) != 0
    se = lambda v: float(v.std(ddof=1) / math.sqrt(v.size))
    gam = (float(g1.mean()), se(g1), float(g2.mean()), se(g2), float(g3.mean()), se(g3))
    bound = None
    if variance is not None and variance > 0:
        bound = 4 * math.sqrt(gam[0]) / variance + math.sqrt(gam[2]) / variance + gam[4] / variance**1.5
    return GammaEstimates(float(n), *gam, probes, inner, beyond_probes, int(nonzero), variance, bound)


def scaling_check(a: float, a_se: float, b: float, b_se: float, factor: float = 4.0, k: float = 2.0):
    """Whether b / a is within k standard errors of `factor` (delta method)."""
    ratio = b / a
    se = ratio * math.hypot(a_se / a, b_se / b)
    return ratio, se, abs(ratio - factor) <= k * se


# --- weighted traces against Sobolev norms -----------------------------------------------


@dataclass(frozen=True)
class RatioRow:
    function: str
    n: float
    var_over_n: float
    var_over_n_se: float
    norm: float
    ratio: float
    ratio_se: float


def weighted_ratio_check(functions: list[TestFunction], c: float, n_grid, replicates: int = 1000,
                         dimension: int = 1, model: GraphModel = RGG(0.5), seed: int = 0):
    """Var(Tr[f(A) e^{cA}])/n divided by ||f||^2 + ||f''||^2, per function and volume.

    One spectrum per replicate serves every function. Returns the table and,
    per function, whether the ratio grows monotonically by more than two
    combined standard errors from the smallest to the largest volume.
    """
    if c == 0:
        raise PreconditionError("the weighted statistic needs c != 0")
    norms = {}
    for f in functions:
        a, b = sobolev_norms(f)
        if a + b == 0:
            raise PreconditionError(f"{f.name}: zero norm, ratio undefined")
        norms[f.name] = a + b
    rows = []
    for g, n in enumerate(n_grid):
        vals = np.empty((len(functions), replicates))
        for r in range(replicates):
            adj = build_graph(sample_poisson(Window(dimension, n), stream(seed, g, r)), model)
            spec = eigenvalues(adj)
            for i, f in enumerate(functions):
                vals[i, r] = trace_weighted(adj, f, c, spec) if adj.vertex_count else 0.0
        for i, f in enumerate(functions):
            v, se = jackknife_variance(vals[i])
            rows.append(RatioRow(f.name, float(n), v / n, se / n, norms[f.name], v / n / norms[f.name],
                                 se / n / norms[f.name]))
    growth = {}
    for f in functions:
        rs = [r for r in rows if r.function == f.name]
        inc = all(b.ratio > a.ratio for a, b in zip(rs, rs[1:]))
        growth[f.name] = bool(inc and rs[-1].ratio - rs[0].ratio > 2 * math.hypot(rs[0].ratio_se, rs[-1].ratio_se))
    return rows, growth


__all__ = [name for name in dir() if not name.startswith("_")]
