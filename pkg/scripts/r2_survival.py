"""Empirical survival function of the sector stabilization radius for kNN(1) and the RNG."""

import argparse
import math

from rgspectra.graphs import KNN, RNG
from rgspectra.pointproc import Window, sample_poisson, stream
from rgspectra.stabilization import r2_knn, r2_rng, survival_curve


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    floor = 100 * a.m * a.m
    half = 2 * floor + math.sqrt(2 * floor) + 2
    for name, radius in (("knn1", lambda c: r2_knn(c, 1, a.m)), ("rng", lambda c: r2_rng(c, a.m))):
        values = [radius(sample_poisson(Window.from_side(2, 2 * half), stream(a.seed, 70, t)))
                  for t in range(a.trials)]
        print(f"{name}: R2 values {sorted(values)}")
        for ell, s in survival_curve(values):
            print(f"  P(R2 >= {ell}) = {s:.3f}")


if __name__ == "__main__":
    main()
