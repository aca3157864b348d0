"""Theoretical predictions for the Poisson-Voronoi approximation.

The exact mean of ``Vol(A Delta A_eta)`` is a one-dimensional radial
integral of the spherically aggregated covariogram. Substituting
``t = kappa_d r^d`` turns it into a Laplace-type integral, evaluated with
Gauss-Laguerre and, when that is not accurate enough (the integrand has a
``t^(1/d)`` cusp at the origin), with Gauss-Legendre on a geometric
partition of [0, 1] plus Gauss-Laguerre on [1, inf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal, Sequence

import numpy as np
from scipy import integrate
from scipy.special import erf, i0e, roots_laguerre, roots_legendre

from .approx import MomentSummary
from .covariogram import (
    AngularRule,
    ConvergenceError,
    CovariogramEvaluator,
    SphericalAggregate,
    has_closed_form,
)
from .fit import PowerLawFit, fit_power_law
from .geom import Ball, Box, Shape, pva_constant, unit_ball_volume

__all__ = [
    "TheoryPrediction",
    "radial_integral",
    "exact_mean_sym_diff",
    "asymptotic_mean_sym_diff",
    "asymptotic_moment",
    "kernel_integral_check",
    "direct_mean_sym_diff",
    "predict",
    "MomentBoundRow",
    "moment_bound_report",
    "VarianceRateReport",
    "variance_rate_report",
]


@lru_cache(maxsize=None)
def _laguerre(n: int):
    return roots_laguerre(n)


@lru_cache(maxsize=None)
def _legendre(n: int):
    return roots_legendre(n)


def _laguerre_sum(h: Callable, n: int) -> float:
    t, w = _laguerre(n)
    return float(w @ h(t))


def _legendre_pieces(h: Callable, lo: np.ndarray, hi: np.ndarray, order: int) -> float:
    x, w = _legendre(order)
    half, mid = (hi - lo)[:, None] / 2, (hi + lo)[:, None] / 2
    t = (mid + half * x).ravel()
    return float(((half * w) * (np.exp(-t) * h(t)).reshape(len(lo), -1)).sum())


def _adaptive_sum(h: Callable, breaks: Sequence[float] = (), levels: int = 52, order: int = 20) -> tuple[float, float]:
    """``integral_0^inf e^-t h(t) dt`` with geometric refinement toward 0.

    ``breaks`` are points beyond 1 where ``h`` is not smooth; up to the last
    one below 80 the pieces have unit length and shrink geometrically toward
    each break. Gauss-Laguerre covers the rest.
    """
    geo = 2.0 ** -np.arange(levels)
    edges = [geo]
    kinks = sorted(b for b in breaks if 1.0 < b < 80.0)
    last = kinks[-1] if kinks else 1.0
    if kinks:
        edges.append(np.arange(1.0, last))
        for b in kinks:
            edges.append(b + np.concatenate([-geo[1:40], [0.0], geo[1:40]]))
    e = np.unique(np.concatenate(edges))
    e = e[(e > 0) & (e <= last)]
    lo_e, hi_e = np.concatenate([[0.0], e[:-1]]), e
    fine = _legendre_pieces(h, lo_e, hi_e, order)
    coarse = _legendre_pieces(h, lo_e, hi_e, order // 2)
    tail_fine = math.exp(-last) * _laguerre_sum(lambda u: h(last + u), 64)
    tail_coarse = math.exp(-last) * _laguerre_sum(lambda u: h(last + u), 32)
    return fine + tail_fine, abs(fine - coarse) + abs(tail_fine - tail_coarse)


def radial_integral(
    f: Callable[[np.ndarray], np.ndarray],
    d: int,
    rate: float,
    method: Literal["auto", "laguerre", "adaptive"] = "auto",
    n: int = 64,
    rtol: float = 1e-6,
    atol: float = 1e-300,
    kinks: Sequence[float] = (),
) -> tuple[float, float]:
    """``integral_0^inf r^(d-1) exp(-rate r^d) f(r) dr`` and an error estimate.

    Computed as ``(1 / (d rate)) integral_0^inf e^-t f((t/rate)^(1/d)) dt``.
    ``auto`` tries ``n``-node Gauss-Laguerre (error estimated against n/2
    nodes) and falls back to the adaptive rule above ``rtol``; a fallback
    that still misses the tolerance raises :class:`ConvergenceError`.
    ``kinks`` lists radii where ``f`` is not smooth.
    """
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")

    def h(t):
        return np.asarray(f((np.asarray(t) / rate) ** (1.0 / d)), dtype=float)

    scale = 1.0 / (d * rate)
    if method in ("auto", "laguerre"):
        value = _laguerre_sum(h, n)
        err = abs(value - _laguerre_sum(h, max(2, n // 2)))
        if method == "laguerre" or err <= max(rtol * abs(value), atol):
            return scale * value, scale * err
    elif method != "adaptive":
        raise ValueError(f"unknown radial method {method!r}")
    value, err = _adaptive_sum(h, [rate * k**d for k in kinks])
    if err > max(rtol * abs(value), atol):
        raise ConvergenceError(f"radial quadrature error {err:.3g} exceeds tolerance at value {value:.6g}")
    return scale * value, scale * err


def _kink_radii(shape: Shape) -> list[float]:
    # offsets where the covariogram loses smoothness: side lengths and diameter
    if isinstance(shape, Ball):
        return [2.0 * shape.radius]
    lo, hi = shape.bbox()
    return sorted({*map(float, hi - lo), float(np.linalg.norm(hi - lo))})


def _sampled_mean_sym_diff(shape: Shape, lam: float, n: int = 2_000_000, seed: int = 0) -> tuple[float, float]:
    """``2 Vol(A) P(x + z not in A)`` with ``x`` uniform on A and ``z`` of density
    ``lam exp(-lam kappa_d |z|^d)``; returns the estimate and its standard error.
    """
    d = shape.dim
    rng = np.random.default_rng(seed)
    lo, hi = shape.bbox()
    box_vol = float(np.prod(hi - lo))
    hits = misses = drawn = 0
    chunk = 250_000
    while drawn < n:
        x = lo + (hi - lo) * rng.random((chunk, d))
        x = x[shape.contains(x)]
        drawn += chunk
        radius = (rng.standard_exponential(len(x)) / (lam * unit_ball_volume(d))) ** (1.0 / d)
        u = rng.standard_normal((len(x), d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        out = ~shape.contains(x + radius[:, None] * u)
        hits += len(x)
        misses += int(np.count_nonzero(out))
    if hits == 0:
        return 0.0, 0.0
    vol = shape.analytic_volume or box_vol * hits / drawn
    p = misses / hits
    return 2 * vol * p, 2 * vol * math.sqrt(p * (1 - p) / hits)


def _mean_sym_diff_with_error(
    shape: Shape,
    lam: float,
    rule: AngularRule | None = None,
    aggregate: Callable | None = None,
    method: str = "auto",
    rtol: float = 1e-4,
) -> tuple[float, float]:
    if not lam > 0:
        raise ValueError(f"intensity must be positive, got {lam}")
    d = shape.dim
    if method == "monte_carlo" or (aggregate is None and method == "auto" and not has_closed_form(shape)):
        return _sampled_mean_sym_diff(shape, lam)
    if aggregate is None:
        aggregate = SphericalAggregate(CovariogramEvaluator(shape), rule)
    step = lam ** (-1.0 / d)
    kinks = [k / step for k in _kink_radii(shape)]
    value, err = radial_integral(
        lambda r: aggregate(step * r), d, unit_ball_volume(d), method, rtol=rtol, kinks=kinks
    )
    return max(0.0, -2.0 * value), 2.0 * err


def exact_mean_sym_diff(
    shape: Shape,
    lam: float,
    rule: AngularRule | None = None,
    aggregate: Callable | None = None,
    method: Literal["auto", "laguerre", "adaptive", "monte_carlo"] = "auto",
) -> float:
    """``E Vol(A Delta A_eta) = -2 integral r^(d-1) e^(-kappa_d r^d) g~_A(lam^(-1/d) r) dr``.

    ``aggregate`` overrides the spherically aggregated covariogram ``g~_A``.
    Shapes whose covariogram has no closed form (and ``method="monte_carlo"``)
    use a sampled estimate of the equivalent double integral instead.
    """
    return _mean_sym_diff_with_error(shape, lam, rule, aggregate, method)[0]


def _require_perimeter(shape: Shape) -> float:
    per = shape.analytic_perimeter
    if per is None:
        raise ValueError("shape has no closed-form perimeter (overlapping or touching CSG operands)")
    return per


def asymptotic_mean_sym_diff(shape: Shape, lam: float) -> float:
    """Leading term ``c_d Per(A) lam^(-1/d)``."""
    return pva_constant(shape.dim) * _require_perimeter(shape) * lam ** (-1.0 / shape.dim)


def asymptotic_moment(shape: Shape, lam: float, n: int) -> float:
    """Leading term ``(c_d Per(A))^n lam^(-n/d)`` of ``E Vol^n(A Delta A_eta)``; d >= 2 only."""
    if n < 1:
        raise ValueError("moment order must be >= 1")
    if shape.dim < 2:
        raise ValueError(
            "the moment asymptotic (c_d Per(A))^n lam^(-n/d) is only established for d >= 2"
        )
    return asymptotic_mean_sym_diff(shape, lam) ** n


def kernel_integral_check(c: float, d: int, method: str = "auto") -> float:
    """``integral over R^d of exp(-c |x|^d) dx`` by the radial rule; should equal kappa_d / c."""
    if not c > 0:
        raise ValueError("rate must be positive")
    value, _ = radial_integral(lambda r: np.ones_like(r), d, c, method)
    return d * unit_ball_volume(d) * value


# -- independent oracle ------------------------------------------------------------


def _interval_oracle(a: float, b: float, lam: float) -> float:
    rate = 2.0 * lam  # lam * kappa_1
    span = 60.0 / rate

    def inner(x):
        near = min(abs(a - x), abs(b - x))
        far = max(abs(a - x), abs(b - x))
        return (math.exp(-rate * near) - math.exp(-rate * far)) / rate

    opts = dict(epsabs=0.0, epsrel=1e-11, limit=200)
    left = integrate.quad(inner, a - span, a, **opts)[0]
    right = integrate.quad(inner, b, b + span, **opts)[0]
    return 2 * lam * (left + right)


def _disk_oracle(radius: float, lam: float) -> float:
    a = lam * math.pi
    span = 9.0 / math.sqrt(a)

    def integrand(t, s):
        rx, ry = radius + s, radius - t
        return rx * ry * math.exp(-a * (s + t) ** 2) * i0e(2 * a * rx * ry)

    inner_max = min(span, radius)
    val = integrate.dblquad(integrand, 0.0, span, 0.0, inner_max, epsabs=0.0, epsrel=1e-10)[0]
    return 2 * lam * (2 * math.pi) ** 2 * val


def _box2_oracle(box: Box, lam: float) -> float:
    root = math.sqrt(lam * math.pi)
    span = 9.0 / root
    opts = dict(epsabs=0.0, epsrel=1e-11, limit=200)
    whole, inner = [], []
    for lo, hi in zip(box.lower, box.upper):
        def f(x, lo=lo, hi=hi):
            return (erf(root * (hi - x)) - erf(root * (lo - x))) / (2 * math.sqrt(lam))

        whole.append(integrate.quad(f, lo - span, hi + span, points=[lo, hi], **opts)[0])
        inner.append(integrate.quad(f, lo, hi, **opts)[0])
    return 2 * lam * (whole[0] * whole[1] - inner[0] * inner[1])


def direct_mean_sym_diff(shape: Shape, lam: float) -> float:
    """``2 lam integral_{R^d - A} integral_A exp(-lam kappa_d |y-x|^d) dy dx`` by nested quadrature.

    Independent of the covariogram code path. Supported: d=1 intervals,
    d=2 disks and rectangles.
    """
    if shape.dim == 1 and isinstance(shape, (Ball, Box)):
        lo, hi = shape.bbox()
        return _interval_oracle(float(lo[0]), float(hi[0]), lam)
    if shape.dim == 2 and isinstance(shape, Ball):
        return _disk_oracle(shape.radius, lam)
    if shape.dim == 2 and isinstance(shape, Box):
        return _box2_oracle(shape, lam)
    raise NotImplementedError(f"no direct oracle for {type(shape).__name__} in d={shape.dim}")


# -- predictions and reports ---------------------------------------------------------


@dataclass(frozen=True)
class TheoryPrediction:
    lam: float
    exact_mean_sym_diff: float
    asymptotic_mean_sym_diff: float | None
    asymptotic_moment_n: float | None
    quad_error_estimate: float
    n: int = 2

    @property
    def ratio(self) -> float | None:
        if not self.asymptotic_mean_sym_diff:
            return None
        return self.exact_mean_sym_diff / self.asymptotic_mean_sym_diff


def predict(
    shape: Shape,
    lam: float,
    n: int = 2,
    rule: AngularRule | None = None,
    aggregate: Callable | None = None,
) -> TheoryPrediction:
    exact, err = _mean_sym_diff_with_error(shape, lam, rule, aggregate)
    has_per = shape.analytic_perimeter is not None
    asym = asymptotic_mean_sym_diff(shape, lam) if has_per else None
    mom = asymptotic_moment(shape, lam, n) if has_per and shape.dim >= 2 else None
    return TheoryPrediction(lam, exact, asym, mom, err, n)


@dataclass(frozen=True)
class MomentBoundRow:
    """Moment deviations and their values divided by the predicted rates.

    ``approx_deviation`` estimates ``|E Vol^n(A_eta) - Vol^n(A)|`` using
    ``E Vol(A_eta) = Vol(A)`` exactly (the first-order term is dropped);
    ``approx_deviation_raw`` is the plain sample-moment difference.
    """

    n: int
    approx_deviation: float
    approx_deviation_raw: float
    approx_normalized: float
    sym_diff_deviation: float
    sym_diff_normalized: float


def moment_bound_report(summary: MomentSummary, shape: Shape) -> list[MomentBoundRow]:
    """Per moment order, deviations normalised by ``lam^-1 Vol^(n-1)(A)`` and
    ``lam^(-1-(n-1)/d) Per(A)^(n-1)``.

    Constancy (no growth) of the normalised columns across a lambda sweep is
    the checkable content; the constants themselves are not known.
    """
    vol = shape.analytic_volume
    if vol is None:
        raise ValueError("shape has no closed-form volume")
    per = _require_perimeter(shape)
    lam, d = summary.lam, shape.dim
    dev = summary.vol_approx - vol
    s = summary.vol_sym_diff
    rows = []
    for n in range(1, summary.n_max + 1):
        raw = abs(summary.approx_moments[n - 1] - vol**n)
        if n == 1:
            cv = raw
        else:
            cv = abs(sum(math.comb(n, k) * vol ** (n - k) * float(np.mean(dev**k)) for k in range(2, n + 1)))
        thm3 = abs(float(np.mean(s**n)) - float(np.mean(s)) ** n)
        rows.append(
            MomentBoundRow(
                n=n,
                approx_deviation=cv,
                approx_deviation_raw=raw,
                approx_normalized=cv / (vol ** (n - 1) / lam),
                sym_diff_deviation=thm3,
                sym_diff_normalized=thm3 / (per ** (n - 1) * lam ** (-1.0 - (n - 1) / d)),
            )
        )
    return rows


@dataclass(frozen=True)
class VarianceRateReport:
    sym_diff: PowerLawFit
    vol_approx: PowerLawFit
    bound: float
    tolerance: float

    @property
    def sym_diff_ok(self) -> bool:
        return self.sym_diff.exponent <= self.bound + self.tolerance

    @property
    def vol_approx_ok(self) -> bool:
        return self.vol_approx.exponent <= self.bound + self.tolerance

    @property
    def ok(self) -> bool:
        return self.sym_diff_ok and self.vol_approx_ok


def variance_rate_report(
    summaries: Sequence[MomentSummary], shape: Shape, tolerance: float = 0.15
) -> VarianceRateReport:
    """Fitted log-log slopes of ``Var Vol(A Delta A_eta)`` and ``Var Vol(A_eta)``.

    The variances are bounded by a multiple of ``lam^(-1-1/d)``, so the check
    is ``slope <= -(1 + 1/d) + tolerance``.
    """
    lams = np.array([s.lam for s in summaries])
    if len(lams) < 4 or lams.max() / lams.min() < 100 * (1 - 1e-9):
        raise ValueError("variance rate needs at least 4 intensities spanning 2 decades")
    d = shape.dim
    return VarianceRateReport(
        sym_diff=fit_power_law([(s.lam, s.var_sym_diff) for s in summaries]),
        vol_approx=fit_power_law([(s.lam, s.var_vol_approx) for s in summaries]),
        bound=-(1.0 + 1.0 / d),
        tolerance=tolerance,
    )
