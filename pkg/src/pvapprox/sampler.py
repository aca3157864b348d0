"""Homogeneous Poisson point process realisations in a dilated window."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geom import Box, DimensionError, Shape, bounding_box, unit_ball_volume

__all__ = [
    "Window",
    "NucleusSet",
    "stream",
    "simulation_window",
    "sample_ppp",
    "label_nuclei",
    "write_realization_csv",
]

SEED_MASK = (1 << 64) - 1


def stream(seed, *keys: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, *keys)``.

    Keys go into the ``SeedSequence`` entropy, so replication ``i`` of a run
    draws from the same stream whatever order or process it is executed in.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    entropy = [int(seed) & SEED_MASK, *(int(k) & SEED_MASK for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class Window:
    box: Box
    margin: float

    @property
    def volume(self) -> float:
        return self.box.volume

    def boundary_distance(self, pts: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.box.lower), np.asarray(self.box.upper)
        return np.minimum(pts - lo, hi - pts).min(axis=1)


def simulation_window(shape: Shape, lam: float, safety: float = 4.0) -> Window:
    """Bounding box of ``shape`` dilated by an edge-effect margin.

    ``margin = safety * max((log lam / (kappa_d lam))^(1/d), lam^(-1/d))``. The
    chance that a ball of that radius is empty decays like
    ``lam^(-safety^d)`` once the first branch dominates.
    """
    if not lam > 0:
        raise ValueError(f"intensity must be positive, got {lam}")
    if not safety >= 1:
        raise ValueError(f"safety factor must be >= 1, got {safety}")
    d = shape.dim
    kd = unit_ball_volume(d)
    core = (math.log(lam) / (kd * lam)) ** (1.0 / d) if lam > 1 else 0.0
    margin = safety * max(core, lam ** (-1.0 / d))
    return Window(bounding_box(shape, margin), margin)


def sample_ppp(window: Window | Box, lam: float, seed) -> np.ndarray:
    """Poisson(lam * Vol) many i.i.d. uniform points in the window box.

    Returns an (N, d) array; N = 0 is a valid outcome. Deterministic in ``seed``.
    """
    if not lam > 0:
        raise ValueError(f"intensity must be positive, got {lam}")
    box = window.box if isinstance(window, Window) else window
    rng = stream(seed)
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    n = rng.poisson(lam * box.volume)
    return lo + (hi - lo) * rng.random((n, box.dim))


@dataclass(frozen=True, eq=False)
class NucleusSet:
    points: np.ndarray
    labels: np.ndarray
    intensity: float | None = None
    seed: int | None = None
    window: Window | None = None

    def __post_init__(self):
        self.points.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)

    @property
    def inside(self) -> np.ndarray:
        return self.points[self.labels]

    @property
    def outside(self) -> np.ndarray:
        return self.points[~self.labels]


def label_nuclei(
    points,
    shape: Shape,
    intensity: float | None = None,
    seed: int | None = None,
    window: Window | None = None,
) -> NucleusSet:
    pts = np.array(points, dtype=float, copy=True)
    if pts.ndim == 1 and pts.size == 0:
        pts = pts.reshape(0, shape.dim)
    if pts.ndim != 2 or pts.shape[1] != shape.dim:
        raise DimensionError(f"points of shape {pts.shape} do not match a {shape.dim}-d shape")
    labels = np.asarray(shape.contains(pts), dtype=bool).copy()
    return NucleusSet(pts, labels, intensity, seed, window)


def write_realization_csv(nuclei: NucleusSet, path) -> None:
    d = nuclei.dim
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{i + 1}" for i in range(d)] + ["label"])
        for p, lab in zip(nuclei.points, nuclei.labels):
            writer.writerow([repr(float(v)) for v in p] + [int(lab)])
