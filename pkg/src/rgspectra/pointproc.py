"""Homogeneous Poisson samples on cube windows, point insertion and a grid index."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicatePointError, PreconditionError

CSV_VERSION = "# rgspectra points v1"


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...), e.g. key = (grid index, replicate)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class Window:
    """The cube [-s/2, s/2]^d with s = volume**(1/d)."""

    dimension: int
    volume: float

    def __post_init__(self):
        if self.dimension < 1:
            raise PreconditionError("dimension must be >= 1")
        if not self.volume > 0:
            raise PreconditionError("volume must be positive")

    @property
    def side(self) -> float:
        return float(self.volume) ** (1.0 / self.dimension)

    @property
    def half_side(self) -> float:
        return 0.5 * self.side

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.abs(x) <= self.half_side))

    @classmethod
    def from_side(cls, dimension: int, side: float) -> "Window":
        return cls(dimension, float(side) ** dimension)


@dataclass(frozen=True, eq=False)
class PointConfig:
    window: Window
    points: np.ndarray
    provenance: str = "manual"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.window.dimension)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.window.dimension

    def __len__(self):
        return self.n_points

    def __eq__(self, other):
        if not isinstance(other, PointConfig):
            return NotImplemented
        return self.window == other.window and np.array_equal(self.points, other.points)

    def with_points(self, points, provenance=None) -> "PointConfig":
        return PointConfig(self.window, points, self.provenance if provenance is None else provenance)

    def restrict(self, mask) -> "PointConfig":
        return self.with_points(self.points[np.asarray(mask)])


def manual_config(points, volume: float | None = None) -> PointConfig:
    """Wrap explicit coordinates; the window defaults to the smallest centred cube holding them."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    d = pts.shape[1]
    if volume is None:
        h = float(np.max(np.abs(pts))) if pts.size else 0.5
        volume = (2.0 * max(h, 0.5)) ** d
    return PointConfig(Window(d, volume), pts, "manual")


def sample_poisson(window: Window, rng: np.random.Generator, provenance: str = "sampled") -> PointConfig:
    n = rng.poisson(window.volume)
    h = window.half_side
    pts = rng.uniform(-h, h, size=(n, window.dimension))
    return PointConfig(window, pts, provenance)


def sample_poisson_box(lo, hi, rng: np.random.Generator) -> np.ndarray:
    """Unit-intensity Poisson points on the box prod [lo_i, hi_i]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = rng.poisson(float(np.prod(hi - lo)))
    return lo + (hi - lo) * rng.random((n, lo.size))


def insert_point(config: PointConfig, x, exterior: bool = False) -> PointConfig:
    x = np.asarray(x, dtype=float).reshape(config.dimension)
    if not exterior and not config.window.contains(x):
        raise PreconditionError(f"point {x} lies outside the window; pass exterior=True for probes")
    if config.n_points and np.any(np.all(config.points == x, axis=1)):
        raise DuplicatePointError(f"point {x} already present")
    return config.with_points(np.vstack([config.points, x[None, :]]))


def remove_point(config: PointConfig, index: int = -1) -> PointConfig:
    return config.with_points(np.delete(config.points, index, axis=0))


@dataclass(frozen=True, eq=False)
class GridIndex:
    cell_size: float
    cells: dict = field(repr=False)

    @classmethod
    def build(cls, config: PointConfig, cell_size: float = 1.0) -> "GridIndex":
        if not cell_size > 0:
            raise PreconditionError("cell_size must be positive")
        keys = np.floor(config.points / cell_size).astype(np.int64)
        cells: dict = {}
        for i, key in enumerate(map(tuple, keys)):
            cells.setdefault(key, []).append(i)
        return cls(cell_size, {k: np.array(v, dtype=np.int64) for k, v in cells.items()})

    def candidates(self, x, rho: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.floor((x - rho) / self.cell_size).astype(np.int64)
        hi = np.floor((x + rho) / self.cell_size).astype(np.int64)
        span = int(np.prod(hi - lo + 1))
        if span > len(self.cells):
            hits = [v for k, v in self.cells.items() if np.all(k >= lo) and np.all(k <= hi)]
        else:
            ranges = [range(a, b + 1) for a, b in zip(lo, hi)]
            hits = [self.cells[k] for k in itertools.product(*ranges) if k in self.cells]
        return np.concatenate(hits) if hits else np.empty(0, dtype=np.int64)


def neighbors_within(index: GridIndex, config: PointConfig, x, rho: float) -> list[int]:
    """Indices of points p with |p - x| <= rho, ascending."""
    if rho < 0:
        raise PreconditionError("rho must be >= 0")
    cand = index.candidates(x, rho)
    if cand.size == 0:
        return []
    diff = config.points[cand] - np.asarray(x, dtype=float)
    keep = np.einsum("ij,ij->i", diff, diff) <= rho * rho
    return sorted(int(i) for i in cand[keep])


def write_points_csv(config: PointConfig, path, seed: int | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_VERSION + "\n")
        fh.write("dim,volume,seed\n")
        fh.write(f"{config.dimension},{config.window.volume!r},{'' if seed is None else seed}\n")
        for p in config.points:
            fh.write(",".join(repr(float(v)) for v in p) + "\n")


def read_points_csv(path) -> PointConfig:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    d_str, vol_str, seed_str = lines[1].split(",")
    d = int(d_str)
    pts = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]], dtype=float).reshape(-1, d)
    prov = f"seed={seed_str}" if seed_str else "manual"
    return PointConfig(Window(d, float(vol_str)), pts, prov)


def ball_volume(d: int, radius: float) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * radius**d
