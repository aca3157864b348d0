"""Set covariogram ``g_A(x) = Vol((A + x) & A)`` and quantities derived from it.

Closed forms are used where they exist (balls via the regularised incomplete
beta representation of spherical caps, boxes via products of overlaps).
Shapes built from disjoint unions / nested differences are expanded into a
signed sum over primitive pairs; pairs without a closed form (ball-box) and
shapes without an exact decomposition fall back to Monte Carlo over a sample
cloud drawn once at construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy.special import betainc, ndtri, roots_legendre
from scipy.stats import qmc

from .geom import Ball, Box, DimensionError, Shape, bounding_box, sphere_area, unit_ball_volume

__all__ = [
    "ConvergenceError",
    "AngularRule",
    "angular_rule",
    "ball_intersection_volume",
    "CovariogramEvaluator",
    "has_closed_form",
    "covariogram",
    "SphericalAggregate",
    "spherical_aggregate",
    "DerivativeEstimate",
    "directional_derivative_at_zero",
    "perimeter_from_covariogram",
]


class ConvergenceError(RuntimeError):
    """A numerical limit did not settle within the requested tolerance."""


# -- angular quadrature on S^(d-1) ---------------------------------------------


@dataclass(frozen=True)
class AngularRule:
    """Nodes ``directions`` (n, d) on the unit sphere with surface weights."""

    directions: np.ndarray
    weights: np.ndarray
    kind: str

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Apply the rule along the last axis of ``values``."""
        return np.asarray(values) @ self.weights


def angular_rule(
    d: int,
    n: int | None = None,
    kind: Literal["auto", "uniform", "qmc", "product"] = "auto",
    seed: int = 20120101,
) -> AngularRule:
    """Quadrature rule on S^(d-1).

    d=1: the two points +-1 with counting measure. d=2: ``n`` (default 256)
    equispaced angles. d>=3: ``n`` (default 4096) scrambled-Sobol directions
    pushed to the sphere through the Gaussian quantile map, equal weights; or
    for d=3 a Gauss-Legendre(z) x uniform(phi) product rule.
    """
    if d < 1:
        raise ValueError("dimension must be positive")
    if d == 1:
        return AngularRule(np.array([[1.0], [-1.0]]), np.ones(2), "points")
    if kind == "auto":
        kind = "uniform" if d == 2 else "qmc"
    if kind == "uniform":
        if d != 2:
            raise ValueError("uniform angular grid is only defined for d=2")
        n = n or 256
        theta = 2 * np.pi * np.arange(n) / n
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
        return AngularRule(dirs, np.full(n, 2 * np.pi / n), kind)
    if kind == "product":
        if d != 3:
            raise ValueError("product angular rule is implemented for d=3 only")
        n = n or 4096
        nz = max(2, int(round(math.sqrt(n / 2))))
        nphi = max(4, n // nz)
        z, wz = roots_legendre(nz)
        phi = 2 * np.pi * (np.arange(nphi) + 0.5) / nphi
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1 - zz**2)
        dirs = np.column_stack([(s * np.cos(pp)).ravel(), (s * np.sin(pp)).ravel(), zz.ravel()])
        w = np.repeat(wz, nphi) * (2 * np.pi / nphi)
        return AngularRule(dirs, w, kind)
    if kind == "qmc":
        n = n or 4096
        u = qmc.Sobol(d, scramble=True, seed=seed).random(n)
        g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
        return AngularRule(dirs, np.full(n, sphere_area(d) / n), kind)
    raise ValueError(f"unknown angular rule kind {kind!r}")


# -- closed forms ----------------------------------------------------------------


def _cap_volume(r: float, h: np.ndarray, d: int) -> np.ndarray:
    """Volume of the cap of height ``h`` (0 <= h <= 2r) cut from a d-ball."""
    h = np.clip(h, 0.0, 2 * r)
    full = unit_ball_volume(d) * r**d
    small = np.minimum(h, 2 * r - h)
    z = np.clip((2 * r * small - small**2) / r**2, 0.0, 1.0)
    cap = 0.5 * full * betainc((d + 1) / 2, 0.5, z)
    return np.where(h <= r, cap, full - cap)


def ball_intersection_volume(r1: float, r2: float, t, d: int) -> np.ndarray:
    """Volume of the intersection of d-balls of radii r1, r2 with centres ``t`` apart."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    full = unit_ball_volume(d) * min(r1, r2) ** d
    inside = t <= abs(r1 - r2)
    out[inside] = full
    lens = ~inside & (t < r1 + r2)
    if lens.any():
        tt = t[lens]
        a = (tt**2 + r1**2 - r2**2) / (2 * tt)
        out[lens] = _cap_volume(r1, r1 - a, d) + _cap_volume(r2, r2 - (tt - a), d)
    return out


def _box_cross(p: Box, q: Box, x: np.ndarray) -> np.ndarray:
    lo = np.maximum(np.asarray(p.lower) + x, np.asarray(q.lower))
    hi = np.minimum(np.asarray(p.upper) + x, np.asarray(q.upper))
    return np.prod(np.clip(hi - lo, 0.0, None), axis=1)


def _ball_cross(p: Ball, q: Ball, x: np.ndarray) -> np.ndarray:
    t = np.linalg.norm(np.asarray(p.center) + x - np.asarray(q.center), axis=1)
    return ball_intersection_volume(p.radius, q.radius, t, p.dim)


class _CloudCross:
    """Monte Carlo ``Vol((P + x) & Q)`` with a cloud fixed at construction."""

    def __init__(self, p: Shape, q: Shape, n_points: int, rng: np.random.Generator):
        box = bounding_box(q)
        lo, hi = np.asarray(box.lower), np.asarray(box.upper)
        self.p = p
        self.box_volume = box.volume
        self.cloud = lo + (hi - lo) * rng.random((n_points, q.dim))
        self.in_q = q.contains(self.cloud)
        self.cloud_q = self.cloud[self.in_q]

    def fraction(self, x: np.ndarray) -> np.ndarray:
        n = len(self.cloud)
        return np.array([np.count_nonzero(self.p.contains(self.cloud_q - xi)) / n for xi in x])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.box_volume * self.fraction(x)


# -- evaluator -------------------------------------------------------------------


def has_closed_form(shape: Shape) -> bool:
    """True if the analytic covariogram of ``shape`` needs no sampling."""
    if shape.analytic_volume is None:
        return False
    kinds = {type(p) for _, p in shape.primitives()}
    return kinds <= {Ball} or kinds <= {Box}


class CovariogramEvaluator:
    """Evaluate ``g_A`` for a fixed shape.

    ``mode="analytic"`` uses closed forms where possible (with automatic
    Monte Carlo fallback for pairs that lack one); ``mode="monte_carlo"``
    estimates every value from ``n_points`` uniform samples in the bounding
    box, drawn once from ``seed``.
    """

    def __init__(
        self,
        shape: Shape,
        mode: Literal["analytic", "monte_carlo"] = "analytic",
        n_points: int = 1_000_000,
        seed: int = 0,
    ):
        if mode not in ("analytic", "monte_carlo"):
            raise ValueError(f"unknown covariogram mode {mode!r}")
        if n_points <= 0:
            raise ValueError("n_points must be positive")
        self.shape = shape
        self.n_points = int(n_points)
        self.seed = seed
        rng = np.random.default_rng(seed)
        self._terms: list[tuple[int, Callable[[np.ndarray], np.ndarray]]] = []
        self._cloud: _CloudCross | None = None
        if mode == "analytic" and shape.analytic_volume is not None:
            prims = list(shape.primitives())
            for si, p in prims:
                for sj, q in prims:
                    self._terms.append((si * sj, self._cross(p, q, rng)))
        else:
            mode = "monte_carlo"
            self._cloud = _CloudCross(shape, shape, self.n_points, rng)
        self.mode = mode
        self.g0 = float(self._eval(np.zeros((1, shape.dim)))[0])

    def _cross(self, p: Shape, q: Shape, rng) -> Callable[[np.ndarray], np.ndarray]:
        if isinstance(p, Ball) and isinstance(q, Ball):
            return lambda x: _ball_cross(p, q, x)
        if isinstance(p, Box) and isinstance(q, Box):
            return lambda x: _box_cross(p, q, x)
        return _CloudCross(p, q, self.n_points, rng)

    @property
    def is_exact(self) -> bool:
        return self.mode == "analytic" and not any(isinstance(f, _CloudCross) for _, f in self._terms)

    def _eval(self, x: np.ndarray) -> np.ndarray:
        if self._cloud is not None:
            return self._cloud(x)
        total = np.zeros(len(x))
        for sign, term in self._terms:
            total += sign * term(x)
        # signed sums can dip a rounding error below zero
        return np.maximum(total, 0.0)

    def __call__(self, x):
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.shape.dim:
            raise DimensionError(f"offset has dimension {pts.shape[1]}, shape has {self.shape.dim}")
        out = self._eval(pts)
        return float(out[0]) if single else out

    def standard_error(self, x) -> np.ndarray | float:
        """Binomial standard error of a Monte Carlo value (0 for closed forms)."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if self._cloud is None:
            se = np.zeros(len(pts))
        else:
            p = self._cloud.fraction(pts)
            se = self._cloud.box_volume * np.sqrt(p * (1 - p) / self.n_points)
        return float(se[0]) if np.ndim(x) == 1 else se


def covariogram(evaluator: CovariogramEvaluator, x):
    return evaluator(x)


# -- spherical aggregate ---------------------------------------------------------


@dataclass(frozen=True)
class SphericalAggregate:
    """``r -> integral over S^(d-1) of (g_A(r u) - g_A(0))``; never positive."""

    evaluator: CovariogramEvaluator
    rule: AngularRule = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.rule is None:
            object.__setattr__(self, "rule", angular_rule(self.evaluator.shape.dim))

    def __call__(self, r):
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r_arr < 0):
            raise ValueError("radius must be non-negative")
        dirs = self.rule.directions
        pts = (r_arr[:, None, None] * dirs[None, :, :]).reshape(-1, dirs.shape[1])
        vals = self.evaluator(pts).reshape(len(r_arr), len(dirs)) - self.evaluator.g0
        out = self.rule.integrate(vals)
        out = np.minimum(out, 0.0)
        return float(out[0]) if np.ndim(r) == 0 else out


def spherical_aggregate(agg: SphericalAggregate, r):
    return agg(r)


# -- derivative at the origin and perimeter recovery ------------------------------


@dataclass(frozen=True)
class DerivativeEstimate:
    value: float
    error: float
    converged: bool


def _richardson(diffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-level extrapolation of one-sided quotients on a halving h-ladder.

    ``diffs`` has the ladder on axis 0. Returns (limit, error indicator).
    """
    r1 = 2 * diffs[1:] - diffs[:-1]
    r2 = (4 * r1[1:] - r1[:-1]) / 3
    return r2[-1], np.abs(r2[-1] - r2[-2])


def _h_ladder(shape: Shape, levels: int = 7) -> np.ndarray:
    lo, hi = shape.bbox()
    scale = min(1.0, float(np.min(hi - lo)))
    return 0.1 * scale * 2.0 ** -np.arange(levels)


def _derivatives(evaluator: CovariogramEvaluator, dirs: np.ndarray, tol: float):
    h = _h_ladder(evaluator.shape)
    pts = (h[:, None, None] * dirs[None, :, :]).reshape(-1, dirs.shape[1])
    g = evaluator(pts).reshape(len(h), len(dirs))
    quotients = (g - evaluator.g0) / h[:, None]
    value, err = _richardson(quotients)
    converged = err <= tol * np.maximum(np.abs(value), 1e-300)
    return value, err, converged


def directional_derivative_at_zero(
    evaluator: CovariogramEvaluator, u, tol: float = 1e-4
) -> DerivativeEstimate:
    """One-sided derivative of ``g_A`` at 0 along unit vector ``u``.

    The ladder is h_k = 0.1 L 2^-k, k=0..6 (L = min(1, smallest bounding-box
    side)). Non-convergence is reported through ``converged``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (evaluator.shape.dim,):
        raise DimensionError(f"direction must have dimension {evaluator.shape.dim}")
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError(f"direction must be a unit vector, |u| = {np.linalg.norm(u)}")
    value, err, ok = _derivatives(evaluator, u[None, :], tol)
    return DerivativeEstimate(float(value[0]), float(err[0]), bool(ok[0]))


def perimeter_from_covariogram(
    evaluator: CovariogramEvaluator, rule: AngularRule | None = None, tol: float = 1e-4
) -> float:
    """Perimeter recovered from the directional derivatives of ``g_A`` at 0.

    ``-(1/kappa_(d-1)) * integral over S^(d-1) of dg_A/du(0)``.
    Raises :class:`ConvergenceError` if any directional limit fails to settle.
    """
    d = evaluator.shape.dim
    rule = rule or angular_rule(d)
    value, err, ok = _derivatives(evaluator, rule.directions, tol)
    if not ok.all():
        worst = int(np.argmax(err / np.maximum(np.abs(value), 1e-300)))
        raise ConvergenceError(
            f"{np.count_nonzero(~ok)} of {len(ok)} directional derivatives did not converge "
            f"(worst: direction {worst}, estimate {value[worst]:.6g} +- {err[worst]:.3g})"
        )
    return float(-rule.integrate(value) / unit_ball_volume(d - 1))
