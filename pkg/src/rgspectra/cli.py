"""Command-line runner: `rgspectra <subcommand> ...`.

Exit codes: 0 when every suite passes, 1 on a suite violation, 2 on usage or config errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import suites
from .config import load_config_resolved
from .errors import ConfigError, PreconditionError
from .graphs import KNN, RGG, RNG, build_graph, directed_neighbourhoods, check_neighborhood_axioms, max_degree
from .graphs import parse_model, write_edges_csv
from .mcclt import (ExperimentConfig, gamma_estimates, gaussianity_tests, poincare_check, rate_fit, run_clt,
                    write_plots, write_samples_csv)
from .pointproc import Window, sample_poisson, stream, write_points_csv
from .spectral import eigenvalues
from .stabilization import _cost_rebuild, stabilization_radius, verify_stabilization, straddling_chain_witness

MANIFEST_VERSION = "rgspectra manifest v1"
SPECTRUM_CSV_VERSION = "# rgspectra spectrum v1"


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    if isinstance(obj, (set, tuple)):
        return list(obj)
    return str(obj)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_plain)


@dataclasses.dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    artifacts: list = dataclasses.field(default_factory=list)
    wall_clock: float = 0.0
    summary: dict = dataclasses.field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.summary.values())

    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["version"] = MANIFEST_VERSION
        d["passed"] = self.passed
        return d


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so dispatch can return a code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _model_args(p, default="rgg"):
    p.add_argument("--model", choices=("rgg", "knn", "rng"), default=default)
    p.add_argument("--r", type=float, default=1.0, help="RGG connection radius")
    p.add_argument("--k", type=int, default=1, help="kNN neighbour count")
    p.add_argument("--d", type=int, default=2, help="dimension")
    p.add_argument("--seed", type=int, default=0)


def _model(a):
    if a.model == "rgg":
        return parse_model("rgg", r=a.r)
    if a.model == "knn":
        return parse_model("knn", k=a.k)
    return parse_model("rng")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rgspectra", description="Spectral statistics of random spatial networks.")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: RGSPECTRA_WORKERS or 1)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="sample a graph and dump points, edges and spectrum")
    _model_args(s)
    s.add_argument("--volume", type=float, default=100.0)
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("clt", help="Monte Carlo CLT pipeline or variance/CLT/weighted suites")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", help="experiment config file")
    g.add_argument("--suite", choices=("variance", "clt", "weighted"))
    s.add_argument("--out", help="output directory for report.json, samples.csv and plots")
    s.add_argument("--plots", action="store_true", help="also write SVG histograms and QQ plots")
    s.add_argument("--n-boot", type=int, default=None, help="bootstrap draws for the rate CI (1000; 200 in the suite)")
    s.add_argument("--quick", action="store_true", help="reduced replicate counts")

    s = sub.add_parser("stein", help="Poincare check or Stein-term estimates")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", help="experiment config file; estimates the Stein terms per grid point")
    g.add_argument("--suite", choices=("poincare", "gamma"))
    s.add_argument("--probes", type=int, default=4000)
    s.add_argument("--inner", type=int, default=8)
    s.add_argument("--out", help="output directory")
    s.add_argument("--quick", action="store_true")

    s = sub.add_parser("stabilize", help="stabilization radius and exterior resampling")
    s.add_argument("--model", choices=("rgg", "knn", "rng"), default=None,
                   help="single run for one model; omit to run the full suite")
    s.add_argument("--r", type=float, default=1.0)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--m", type=int, default=2, help="polynomial degree of f = x^m")
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output directory")
    s.add_argument("--quick", action="store_true")

    s = sub.add_parser("paths", help="walk counts against the box and moment bounds")
    s.add_argument("--replicates", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output directory")

    s = sub.add_parser("verify", help="exact-identity and invariant suites")
    s.add_argument("--suite", choices=("identities", "support", "invariants", "geometry", "all"), default=None,
                   help="run one acceptance suite; omit to check identities and invariants for --model")
    _model_args(s)
    s.add_argument("--configs", type=int, default=50)
    s.add_argument("--out", help="output directory")

    s = sub.add_parser("selftest", help="negative controls: each check must detect a planted failure")
    s.add_argument("--out", help="output directory")
    return p


def _suite_summary(results) -> dict:
    return {r.name: r.passed for r in results}


def _suite_payload(results) -> list:
    return [{"name": r.name, "passed": r.passed, "elapsed": r.elapsed, "budget": r.budget, "metrics": r.metrics}
            for r in results]


def _write_json(out, name, obj, manifest: RunManifest):
    if not out:
        return
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        fh.write(dumps(obj) + "\n")
    manifest.artifacts.append(path)


# --- subcommands ------------------------------------------------------------------------


def cmd_simulate(a, manifest: RunManifest):
    model = _model(a)
    cfg = sample_poisson(Window(a.d, a.volume), stream(a.seed))
    adj = build_graph(cfg, model)
    spec = eigenvalues(adj)
    pts, edges, lam = (os.path.join(a.out, f) for f in ("points.csv", "edges.csv", "spectrum.csv"))
    write_points_csv(cfg, pts, a.seed)
    write_edges_csv(adj, edges)
    with open(lam, "w") as fh:
        fh.write(SPECTRUM_CSV_VERSION + "\n")
        fh.write("eigenvalue\n")
        for v in spec.eigenvalues:
            fh.write(f"{float(v)!r}\n")
    manifest.artifacts += [pts, edges, lam]
    rho = float(np.abs(spec.eigenvalues).max()) if len(spec) else 0.0
    result = {"points": cfg.n_points, "edges": adj.edge_count, "max_degree": max_degree(adj),
              "spectral_radius": rho}
    manifest.summary = {"simulate": True}
    return result


def cmd_clt(a, manifest: RunManifest):
    if a.suite:
        scale = dict(replicates=200) if a.quick else {}
        if a.suite == "clt":
            results = list(suites.clt(n_boot=a.n_boot or 200, **scale))
        else:
            results = [getattr(suites, a.suite)(**scale)]
        manifest.summary = _suite_summary(results)
        return _suite_payload(results)
    cfg, resolved = load_config_resolved(a.config)
    if a.workers is not None:
        cfg = dataclasses.replace(cfg, workers=a.workers)
    if a.quick:
        cfg = dataclasses.replace(cfg, replicates=max(100, cfg.replicates // 10))
    manifest.config = resolved
    manifest.seed = cfg.seed
    report, samples = run_clt(cfg, n_boot=a.n_boot or 1000)
    if a.out:
        path = os.path.join(a.out, "samples.csv")
        write_samples_csv(samples, path)
        manifest.artifacts.append(path)
        if a.plots:
            manifest.artifacts += write_plots(samples, a.out)
    _write_json(a.out, "report.json", dataclasses.asdict(report), manifest)
    manifest.summary = {"clt": not report.degenerate}
    return dataclasses.asdict(report)


def cmd_stein(a, manifest: RunManifest):
    if a.suite:
        if a.suite == "poincare":
            r = suites.poincare(**(dict(replicates=300, probes=500) if a.quick else {}))
        else:
            r = suites.stein(**(dict(probes=1000, probes3=1000) if a.quick else {}))
        manifest.summary = _suite_summary([r])
        return _suite_payload([r])
    cfg, resolved = load_config_resolved(a.config)
    manifest.config = resolved
    manifest.seed = cfg.seed
    rows = [dataclasses.asdict(gamma_estimates(cfg, n, probes=a.probes, inner=a.inner)) for n in cfg.n_grid]
    _write_json(a.out, "gamma.json", rows, manifest)
    manifest.summary = {"stein": all(r["beyond_support_nonzero"] == 0 for r in rows)}
    return rows


def cmd_stabilize(a, manifest: RunManifest):
    if a.model is None:
        kw = dict(rgg_trials=50, sector_trials=10, sector_degrees=(1,)) if a.quick else {}
        r = suites.stabilization(**kw)
        manifest.summary = _suite_summary([r])
        return _suite_payload([r])
    model = RGG(a.r) if a.model == "rgg" else KNN(a.k) if a.model == "knn" else RNG()
    f = suites.power(a.m)
    if isinstance(model, RGG):
        radius = a.r * a.m
        window = Window.from_side(2, 2 * (radius + 3 * a.r))
        cfg = sample_poisson(window, stream(a.seed, 30, a.m))
        rep = verify_stabilization(cfg, model, f, radius, a.trials, seed=a.seed, engine="rebuild")
        found = {"radius": radius, "kind": "r*m"}
    else:
        floor = 100 * a.m * a.m
        cfg = sample_poisson(suites._sector_window(floor, 5.0), stream(a.seed, 31, a.m))
        st = stabilization_radius(cfg, model, a.m)
        rep = verify_stabilization(cfg, model, f, st.value, a.trials, seed=a.seed, shell_width=5.0, engine="patch")
        found = dataclasses.asdict(st)
    out = {"radius": found, "report": rep.as_dict()}
    manifest.summary = {"stabilize": rep.violations == 0 and rep.original_matches}
    _write_json(a.out, "stabilize.json", out, manifest)
    return out


def cmd_paths(a, manifest: RunManifest):
    r = suites.paths(replicates=a.replicates, seed=a.seed)
    manifest.summary = _suite_summary([r])
    _write_json(a.out, "paths.json", r.metrics["table"], manifest)
    return _suite_payload([r])


def cmd_verify(a, manifest: RunManifest):
    if a.suite:
        names = ("identities", "support", "invariants", "geometry") if a.suite == "all" else (a.suite,)
        results = [getattr(suites, n)() for n in names]
    else:
        model = _model(a)
        results = [suites.identities(models=(model,), configs=a.configs, dimension=a.d, seed=a.seed),
                   suites.invariants(models=(model,), dimensions=(a.d,), configs=a.configs, seed=a.seed)]
    manifest.summary = _suite_summary(results)
    return _suite_payload(results)


# --- negative controls ------------------------------------------------------------------


def _shifted_rgg(points, model):
    """Connects points only in the right half-plane: breaks translation invariance."""
    nb = [set() for _ in range(points.shape[0])]
    for i in range(points.shape[0]):
        for j in range(points.shape[0]):
            if i != j and points[i, 0] > 0 and points[j, 0] > 0 and np.linalg.norm(points[i] - points[j]) <= 1:
                nb[i].add(j)
    return nb


def _directed_knn(points, model):
    """Out-neighbours only: breaks symmetry."""
    d = np.linalg.norm(points[:, None] - points[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    return [{int(np.argmin(row))} for row in d]


def selftest_controls(seed: int = 0) -> dict:
    """Each entry is True when the check flags the planted failure."""
    out = {}
    cfg = ExperimentConfig(1, RGG(0.5), suites.power(2), [64], 400, seed)
    out["poincare_rhs_times_0.1"] = not poincare_check(cfg, 64, 500, rhs_scale=0.1).passed
    g = gaussianity_tests(np.full(500, 3.0), 1.0, 1.0)
    out["ks_rejects_constant_sample"] = g.ks_p < 0.01
    fit = rate_fit([64, 256, 1024], [0.1, 0.1, 0.1], n_boot=50)
    out["rate_flat_dw_outside_band"] = not (-0.8 <= fit.slope <= -0.2)
    inner, outer = straddling_chain_witness(RGG(1.0), 4, 1.0)
    f = suites.power(4)
    out["stabilization_radius_too_small"] = _cost_rebuild(inner, RGG(1.0), f) != _cost_rebuild(
        np.vstack([inner, outer]), RGG(1.0), f)
    pts = sample_poisson(Window(2, 30.0), stream(seed, 900))
    out["axioms_translation_broken"] = not check_neighborhood_axioms(
        RGG(1.0), pts, (5.0, 0.0), _shifted_rgg).translation_invariant
    out["axioms_symmetry_broken"] = not check_neighborhood_axioms(KNN(1), pts, (0.0, 0.0), _directed_knn).symmetric
    out["axioms_reference_passes"] = check_neighborhood_axioms(
        RGG(1.0), pts, (5.0, 0.0), directed_neighbourhoods).passed
    return out


def cmd_selftest(a, manifest: RunManifest):
    controls = selftest_controls()
    manifest.summary = dict(controls)
    return controls


COMMANDS = {"simulate": cmd_simulate, "clt": cmd_clt, "stein": cmd_stein, "stabilize": cmd_stabilize,
            "paths": cmd_paths, "verify": cmd_verify, "selftest": cmd_selftest}


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if a.workers is not None:
        os.environ["RGSPECTRA_WORKERS"] = str(a.workers)
    out = getattr(a, "out", None)
    if out:
        os.makedirs(out, exist_ok=True)
    seed = getattr(a, "seed", 0)
    manifest = RunManifest(a.command, {k: v for k, v in sorted(vars(a).items()) if k != "command"}, seed)
    start = time.perf_counter()
    try:
        result = COMMANDS[a.command](a, manifest)
    except (ConfigError, PreconditionError, FileNotFoundError) as exc:
        print(f"rgspectra: error: {exc}", file=sys.stderr)
        return 2
    manifest.wall_clock = time.perf_counter() - start
    if out:
        path = os.path.join(out, "manifest.json")
        manifest.artifacts.append(path)
        with open(path, "w") as fh:
            fh.write(dumps(manifest.as_dict()) + "\n")
    print(dumps({"subcommand": a.command, "passed": manifest.passed, "summary": manifest.summary,
                 "result": result}))
    return manifest.exit_code()


def main() -> None:
    sys.exit(cli_dispatch())
