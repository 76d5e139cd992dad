"""Verification suites: each runs one acceptance check and reports metrics and a verdict."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .graphs import KNN, RGG, RNG, GraphModel, build_graph, max_degree, triangle_count
from .mcclt import (ExperimentConfig, gamma_estimates, gaussianity_tests, edge_statistic_variance_1d,
                    jackknife_variance, poincare_check, rate_fit, run_clt, run_replicates, scaling_check,
                    weighted_ratio_check)
from .paths import box_bounds_upto, walk_counts_upto, walk_mean_bound
from .pointproc import Window, sample_poisson, stream
from .scores import sum_scores, support_check_score_diffs, support_check_trace_second
from .spectral import TestFunction, builtin, closed_walk_counts, eigenvalues, trace_function, trace_poly_walks
from .stabilization import (positivity_event_check, r2_knn, r2_rng, rng_angle_check, rng_lens_sector_check,
                            sample_exterior, straddling_chain_witness, verify_stabilization, _cost_rebuild)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    elapsed: float = 0.0
    budget: float | None = None

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        budget = f" / {self.budget:.0f}s" if self.budget else ""
        return f"[{tag}] {self.name} ({self.elapsed:.1f}s{budget})"


def _finish(name: str, ok: bool, metrics: dict, start: float, budget: float | None) -> SuiteResult:
    elapsed = time.perf_counter() - start
    metrics["within_budget"] = budget is None or elapsed <= budget
    return SuiteResult(name, bool(ok and metrics["within_budget"]), metrics, elapsed, budget)


def power(m: int) -> TestFunction:
    return TestFunction.polynomial([0] * m + [1], f"x^{m}")


DEFAULT_MODELS = (RGG(1.0), KNN(2), RNG())


# 1 ---------------------------------------------------------------------------------------


def identities(models=DEFAULT_MODELS, configs: int = 200, dimension: int = 2, volume: float = 10.0,
               max_degree_: int = 5, seed: int = 0, budget: float | None = 60.0) -> SuiteResult:
    """Sum of scores by labelled enumeration, walk-count trace and eigenvalue trace agree."""
    start = time.perf_counter()
    worst = 0.0
    bad = 0
    checked = 0
    for mi, model in enumerate(models):
        for t in range(configs):
            rng = stream(seed, mi, t)
            cfg = sample_poisson(Window(dimension, volume), rng)
            deg = int(rng.integers(1, max_degree_ + 1))
            f = TestFunction.polynomial(list(rng.normal(size=deg + 1)), f"p{deg}")
            adj = build_graph(cfg, model)
            walks = trace_poly_walks(adj, f)
            enum = sum_scores(cfg, model, f, route="enumerated")
            eig = trace_function(adj, f)
            scale = max(1.0, abs(walks))
            err = max(abs(enum - walks), abs(eig - walks)) / scale
            worst = max(worst, err)
            bad += err > 1e-9
            checked += 1
    metrics = {"checked": checked, "violations": bad, "max_relative_error": worst,
               "models": [str(m) for m in models], "dimension": dimension}
    return _finish("identities", bad == 0, metrics, start, budget)


# 2 ---------------------------------------------------------------------------------------


def support(trials: int = 10_000, seed: int = 0, budget: float | None = 120.0) -> SuiteResult:
    start = time.perf_counter()
    a = support_check_score_diffs(RGG(1.0), trials=trials, seed=seed, dimension=2, volume=64.0)
    b = support_check_trace_second(RGG(1.0), trials=trials, seed=seed + 1, dimension=1, volume=40.0)
    metrics = {"score_differences": a.as_dict(), "trace_second_difference": b.as_dict()}
    ok = a.violations == 0 and b.violations == 0 and a.nonzero_inside > 0 and b.nonzero_inside > 0
    return _finish("support", ok, metrics, start, budget)


# 3 ---------------------------------------------------------------------------------------


def _sector_window(floor: float, shell: float) -> Window:
    side = 2 * (math.ceil(floor + math.sqrt(floor)) + shell + 2)
    return Window.from_side(2, side)


def stabilization(rgg_trials: int = 500, rgg_degrees=(1, 2, 3, 4), sector_trials: int = 200,
                  sector_degrees=(1, 2), shell: float = 5.0, seed: int = 0,
                  budget: float | None = 300.0) -> SuiteResult:
    """Resampling outside the stabilization radius leaves the add-one cost unchanged."""
    start = time.perf_counter()
    rows = []
    ok = True
    r = 1.0
    for m in rgg_degrees:
        R = r * m
        window = Window.from_side(2, 2 * (R + 3 * r))
        cfg = sample_poisson(window, stream(seed, 30, m))
        rep = verify_stabilization(cfg, RGG(r), power(m), R, rgg_trials, seed=seed + m, engine="rebuild")
        rows.append(rep.as_dict())
        ok &= rep.violations == 0 and rep.original_matches
    # positive control: a radius below the closed-walk reach lets an exterior point matter
    inner, outer = straddling_chain_witness(RGG(r), 4, r)
    c_in = _cost_rebuild(inner, RGG(r), power(4))
    c_out = _cost_rebuild(np.vstack([inner, outer]), RGG(r), power(4))
    control = c_in != c_out
    ok &= control
    for m in sector_degrees:
        floor = 100 * m * m
        window = _sector_window(floor, shell)
        cfg = sample_poisson(window, stream(seed, 31, m))
        for model, radius in ((KNN(1), lambda c: r2_knn(c, 1, m)), (RNG(), lambda c: r2_rng(c, m))):
            t0 = time.perf_counter()
            R = radius(cfg)
            t1 = time.perf_counter()
            rep = verify_stabilization(cfg, model, power(m), R, sector_trials, seed=seed + 10 * m,
                                       shell_width=shell, engine="patch")
            rows.append(dict(rep.as_dict(), radius_seconds=t1 - t0, resample_seconds=time.perf_counter() - t1))
            ok &= rep.violations == 0 and rep.original_matches
    return _finish("stabilization", ok, {"runs": rows, "positive_control_detected": control}, start, budget)


# 4 ---------------------------------------------------------------------------------------


def paths(replicates: int = 2000, volume: float = 100.0, r: float = 1.0, m_max: int = 6, seed: int = 0,
          budget: float | None = 120.0) -> SuiteResult:
    start = time.perf_counter()
    rows = []
    det_fail = 0
    exp_fail = 0
    for d in (1, 2):
        walks = np.empty((replicates, m_max))
        for t in range(replicates):
            cfg = sample_poisson(Window(d, volume), stream(seed, 40 + d, t))
            L = walk_counts_upto(build_graph(cfg, RGG(r)), m_max)
            B = box_bounds_upto(cfg, r, m_max)
            det_fail += sum(a > b for a, b in zip(L, B))
            walks[t] = L
        for m in range(1, m_max + 1):
            mean = walks[:, m - 1].mean() / volume
            se = walks[:, m - 1].std(ddof=1) / math.sqrt(replicates) / volume
            bound = walk_mean_bound(volume, r, d, m) / volume
            fail = mean - 3 * se > bound
            exp_fail += fail
            rows.append({"d": d, "m": m, "mean_over_n": mean, "se": se, "bound_over_n": bound})
    metrics = {"deterministic_failures": det_fail, "configs": 2 * replicates, "expectation_failures": exp_fail,
               "table": rows}
    return _finish("paths", det_fail == 0 and exp_fail == 0, metrics, start, budget)


# 5 ---------------------------------------------------------------------------------------


def variance(n: float = 1024.0, replicates: int = 2000, seed: int = 0, budget: float | None = 120.0) -> SuiteResult:
    start = time.perf_counter()
    cfg = ExperimentConfig(1, RGG(0.5), power(2), [n], replicates, seed)
    v, se = jackknife_variance(run_replicates(cfg)[float(n)])
    exact = edge_statistic_variance_1d(n, 0.5) / n
    rel = abs(v / n - exact) / exact
    metrics = {"sigma2_hat": v / n, "se": se / n, "exact": exact, "limit": 6.0, "relative_error": rel}
    return _finish("variance", rel <= 0.10, metrics, start, budget)


# 6, 7 -------------------------------------------------------------------------------------


def clt(replicates: int = 1000, seed: int = 7, n_boot: int = 200, budget: float | None = 600.0):
    """Gaussianity and variance drift (one result) and the d_W rate (another)."""
    start = time.perf_counter()
    cfg = ExperimentConfig(2, RGG(1.0), power(2), [64, 256, 1024], replicates, seed)
    report, _ = run_clt(cfg, n_boot=n_boot)
    last = report.per_n[-1]
    m6 = {"ks_p": last["ks_p"], "drift": report.drift, "per_n": report.per_n, "sigma2": report.sigma2}
    r6 = _finish("clt", last["ks_p"] > 0.01 and report.drift < 0.10, m6, start, budget)
    slope = report.rate["slope"]
    m7 = {"slope": slope, "ci": [report.rate["ci_low"], report.rate["ci_high"]],
          "dw": [row["dw"] for row in report.per_n]}
    r7 = SuiteResult("rate", -0.8 <= slope <= -0.2, m7, 0.0, None)
    return r6, r7


# 8 ---------------------------------------------------------------------------------------


def poincare(replicates: int = 2000, probes: int = 2000, seed: int = 0, budget: float | None = 300.0) -> SuiteResult:
    start = time.perf_counter()
    rows = []
    ok = True
    for m, n in ((2, 64), (2, 256), (3, 64)):
        cfg = ExperimentConfig(1, RGG(0.5), power(m), [n], replicates, seed + m)
        res = poincare_check(cfg, n, probes)
        rows.append({"f": f"x^{m}", "n": n, "lhs": res.lhs, "lhs_se": res.lhs_se, "rhs": res.rhs,
                     "rhs_se": res.rhs_se, "margin": res.margin})
        ok &= res.passed
    return _finish("poincare", ok, {"rows": rows}, start, budget)


# 9 ---------------------------------------------------------------------------------------


def stein(probes: int = 16000, inner: int = 8, probes3: int = 16000, seed: int = 0,
          budget: float | None = 600.0) -> SuiteResult:
    start = time.perf_counter()
    cfg = ExperimentConfig(1, RGG(0.5), power(2), [64, 256], 100, seed)
    est = [gamma_estimates(cfg, n, probes=probes, inner=inner, probes3=probes3) for n in (64, 256)]
    ok = all(e.beyond_support_nonzero == 0 for e in est)
    rows = {}
    for name in ("gamma1", "gamma2", "gamma3"):
        a, b = est
        ratio, se, fine = scaling_check(getattr(a, name), getattr(a, name + "_se"), getattr(b, name),
                                        getattr(b, name + "_se"))
        rows[name] = {"n64": getattr(a, name), "n256": getattr(b, name), "ratio": ratio, "ratio_se": se,
                      "consistent": fine}
        ok &= fine
    metrics = {"ratios": rows, "beyond_support_nonzero": [e.beyond_support_nonzero for e in est],
               "beyond_support_probes": [e.beyond_support_probes for e in est]}
    return _finish("stein", ok, metrics, start, budget)


# 10 --------------------------------------------------------------------------------------


def weighted(replicates: int = 1000, seed: int = 0, budget: float | None = 600.0) -> SuiteResult:
    start = time.perf_counter()
    funcs = [builtin(n) for n in ("gauss1", "gauss2", "bump")]
    rows, growth = weighted_ratio_check(funcs, 1.0, [64, 256, 1024], replicates, seed=seed)
    metrics = {"rows": [r.__dict__ for r in rows], "growth": growth,
               "max_ratio": max(r.ratio for r in rows)}
    return _finish("weighted", not any(growth.values()), metrics, start, budget)


# 11 --------------------------------------------------------------------------------------


def geometry(samples: int = 10_000, trials: int = 200, seed: int = 0, budget: float | None = 180.0) -> SuiteResult:
    start = time.perf_counter()
    sector = rng_lens_sector_check(samples, seed)
    angle = rng_angle_check(samples, seed)
    knn = positivity_event_check(KNN(1), trials, seed)
    rng = positivity_event_check(RNG(), trials, seed)
    ok = sector["violations"] == 0 and angle.violations == 0 and knn.violations == 0 and rng.violations == 0
    metrics = {"sector_in_lens": sector, "angle": angle.__dict__, "knn_event": knn.__dict__,
               "rng_event": rng.__dict__}
    return _finish("geometry", ok, metrics, start, budget)


# 12 --------------------------------------------------------------------------------------


def invariants(models=(RGG(1.0), KNN(1), KNN(3), RNG()), dimensions=(1, 2, 3), configs: int = 50,
               volume: float = 60.0, seed: int = 0, budget: float | None = None) -> SuiteResult:
    start = time.perf_counter()
    counts = {"trace_a": 0, "trace_a2": 0, "trace_a3": 0, "spectral_radius": 0, "inexact": 0}
    graphs = 0
    for mi, model in enumerate(models):
        for d in dimensions:
            for t in range(configs):
                cfg = sample_poisson(Window(d, volume), stream(seed, 120 + mi, d, t))
                adj = build_graph(cfg, model)
                counts_, exact = closed_walk_counts(adj, 3)
                t1, t2, t3 = counts_[1:]
                counts["inexact"] += not exact
                counts["trace_a"] += t1 != 0
                counts["trace_a2"] += t2 != 2 * adj.edge_count
                counts["trace_a3"] += t3 != 6 * triangle_count(adj)
                if adj.vertex_count:
                    lam = eigenvalues(adj).eigenvalues
                    counts["spectral_radius"] += np.abs(lam).max() > max_degree(adj) + 1e-9
                graphs += 1
    metrics = {"graphs": graphs, "violations": counts}
    return _finish("invariants", not any(counts.values()), metrics, start, budget)


ACCEPTANCE = ("identities", "support", "stabilization", "paths", "variance", "clt", "poincare", "stein",
              "weighted", "geometry", "invariants")
