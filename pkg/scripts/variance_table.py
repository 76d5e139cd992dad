"""Var(Tr A^2)/n on the line (r = 1/2) against the exact finite-window value and the limit 6."""

import argparse

from rgspectra.graphs import RGG
from rgspectra.mcclt import ExperimentConfig, edge_statistic_variance_1d, jackknife_variance, run_replicates
from rgspectra.suites import power


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--n", type=float, nargs="+", default=[64, 256, 1024, 4096])
    p.add_argument("--replicates", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    cfg = ExperimentConfig(1, RGG(0.5), power(2), a.n, a.replicates, a.seed)
    samples = run_replicates(cfg)
    print(f"{'n':>8} {'sigma2_hat':>11} {'se':>8} {'exact':>8} {'rel_err':>8}")
    for n in a.n:
        v, se = jackknife_variance(samples[float(n)])
        exact = edge_statistic_variance_1d(n, 0.5) / n
        print(f"{n:8g} {v / n:11.4f} {se / n:8.4f} {exact:8.4f} {abs(v / n - exact) / exact:8.4f}")
    print("limit: 6")


if __name__ == "__main__":
    main()
