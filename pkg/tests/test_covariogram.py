import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvapprox.covariogram import (
    ConvergenceError,
    CovariogramEvaluator,
    SphericalAggregate,
    angular_rule,
    ball_intersection_volume,
    covariogram,
    directional_derivative_at_zero,
    perimeter_from_covariogram,
    spherical_aggregate,
)
from pvapprox.geom import Ball, Box, Difference, Union, sphere_area, unit_ball_volume


def lens_area(t):
    # two unit disks whose centres are t apart
    t = np.asarray(t, dtype=float)
    t = np.minimum(t, 2.0)
    return 2 * np.arccos(t / 2) - t / 2 * np.sqrt(4 - t * t)


def test_disk_values(disk):
    g = CovariogramEvaluator(disk)
    assert g.is_exact
    assert covariogram(g, (0.0, 0.0)) == pytest.approx(math.pi, rel=1e-14)
    assert covariogram(g, (2.0, 0.0)) == 0.0
    # 2*pi/3 - sqrt(3)/2, frozen from a 40-digit evaluation
    assert covariogram(g, (1.0, 0.0)) == pytest.approx(1.2283696986087568455, rel=1e-13)
    assert covariogram(g, (0.0, -1.0)) == pytest.approx(2 * math.pi / 3 - math.sqrt(3) / 2, rel=1e-13)


def test_square_product_formula_exact(square):
    g = CovariogramEvaluator(square)
    assert g((0.5, 0.5)) == pytest.approx(0.25, abs=1e-12)
    for a, b in [(1, 3), (1, 4), (2, 5), (-1, 8), (3, 7)]:
        x = (a / b, -b / 11)
        want = (1 - abs(a / b)) * (1 - b / 11)
        assert g(x) == pytest.approx(want, abs=1e-12)
    assert g((1.0, 0.0)) == 0.0


def test_lens_formula_against_monte_carlo(disk):
    exact = CovariogramEvaluator(disk)
    mc = CovariogramEvaluator(disk, mode="monte_carlo", n_points=1_000_000, seed=3)
    assert not mc.is_exact
    rng = np.random.default_rng(5)
    t = rng.uniform(0, 2, 20)
    ang = rng.uniform(0, 2 * np.pi, 20)
    x = np.column_stack([t * np.cos(ang), t * np.sin(ang)])
    ref = lens_area(t)
    np.testing.assert_allclose(exact(x), ref, rtol=1e-12, atol=1e-14)
    z = np.abs(mc(x) - ref) / np.maximum(mc.standard_error(x), 1e-12)
    assert np.all(z <= 4)


@pytest.mark.parametrize(
    "shape",
    [
        Box((0.0, 0.0, 0.0), (1.0, 2.0, 0.5)),
        Union(Ball((0.0, 0.0), 1.0), Ball((3.0, 0.0), 0.5)),
        Difference(Ball((0.0, 0.0), 1.0), Ball((0.0, 0.0), 0.5)),
    ],
)
def test_analytic_and_monte_carlo_agree(shape):
    exact = CovariogramEvaluator(shape)
    assert exact.is_exact
    mc = CovariogramEvaluator(shape, mode="monte_carlo", n_points=1_000_000, seed=11)
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, (12, shape.dim))
    z = np.abs(mc(x) - exact(x)) / np.maximum(mc.standard_error(x), 1e-12)
    assert np.all(z <= 4)


def test_mixed_primitive_csg_uses_sampling():
    shape = Difference(Ball((0.0, 0.0), 1.0), Box((-0.3, -0.3), (0.3, 0.3)))
    g = CovariogramEvaluator(shape)
    assert not g.is_exact
    assert g.g0 == pytest.approx(math.pi - 0.36, rel=5e-3)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_ball_intersection_matches_sampling(d):
    rng = np.random.default_rng(d)
    n = 400_000
    r1, r2, t = 1.0, 0.7, 0.9
    pts = rng.uniform(-1, 1, (n, d))
    shifted = pts.copy()
    shifted[:, 0] -= t
    hits = (np.linalg.norm(pts, axis=1) <= r1) & (np.linalg.norm(shifted, axis=1) <= r2)
    est = 2.0**d * hits.mean()
    se = 2.0**d * hits.std() / math.sqrt(n)
    got = float(ball_intersection_volume(r1, r2, t, d)[0])
    assert abs(got - est) <= 4 * se


def test_ball_intersection_limits():
    assert ball_intersection_volume(1.0, 0.5, 0.2, 3)[0] == pytest.approx(unit_ball_volume(3) * 0.125)
    assert ball_intersection_volume(1.0, 1.0, 2.5, 2)[0] == 0.0


def test_covariogram_symmetry_and_monotonicity(square):
    shapes = [Ball((0.0, 0.0), 1.0), square, Ball((1.0, 2.0, 3.0), 0.5)]
    rng = np.random.default_rng(0)
    for s in shapes:
        g = CovariogramEvaluator(s)
        x = rng.uniform(-1, 1, (50, s.dim))
        np.testing.assert_allclose(g(x), g(-x), atol=1e-14)
        u = x[0] / np.linalg.norm(x[0])
        vals = g(np.linspace(0, 3, 200)[:, None] * u[None, :])
        assert np.all(np.diff(vals) <= 1e-14)


vec = st.tuples(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5))


@settings(max_examples=200, deadline=None)
@given(vec, vec)
def test_lipschitz_bound_half_perimeter(x, y):
    for s in (Ball((0.0, 0.0), 1.0), Box((0.0, 0.0), (1.0, 1.0)), Difference(Ball((0.0, 0.0), 1.0), Ball((0.0, 0.0), 0.5))):
        g = CovariogramEvaluator(s)
        diff = abs(g(np.array(x)) - g(np.array(y)))
        assert diff <= 0.5 * s.analytic_perimeter * math.dist(x, y) + 1e-12


def test_lipschitz_bound_with_sampling_allowance():
    s = Ball((0.0, 0.0), 1.0)
    g = CovariogramEvaluator(s, mode="monte_carlo", n_points=200_000, seed=1)
    rng = np.random.default_rng(9)
    x, y = rng.uniform(-2, 2, (2, 100, 2))
    allowance = 4 * (g.standard_error(x) + g.standard_error(y))
    assert np.all(np.abs(g(x) - g(y)) <= 0.5 * s.analytic_perimeter * np.linalg.norm(x - y, axis=1) + allowance)


def test_angular_rules_integrate_constants():
    for d, kind in [(1, "auto"), (2, "auto"), (3, "qmc"), (3, "product"), (4, "qmc")]:
        rule = angular_rule(d, kind=kind)
        assert rule.integrate(np.ones(len(rule.weights))) == pytest.approx(sphere_area(d), rel=1e-12)
        np.testing.assert_allclose(np.linalg.norm(rule.directions, axis=1), 1.0)
    rule = angular_rule(3, kind="product")
    # second moment of a coordinate over S^2 is 4 pi / 3
    assert rule.integrate(rule.directions[:, 2] ** 2) == pytest.approx(4 * math.pi / 3, rel=1e-10)


def test_spherical_aggregate_disk(disk):
    agg = SphericalAggregate(CovariogramEvaluator(disk))
    assert spherical_aggregate(agg, 0.0) == 0.0
    # isotropy: 2 pi (lens(0.1) - pi), frozen from a 40-digit evaluation
    assert agg(0.1) == pytest.approx(-1.2561132661352526987, rel=1e-12)


def test_spherical_aggregate_square(square):
    agg = SphericalAggregate(CovariogramEvaluator(square))
    # closed form of the angular integral: -8 r + 2 r^2; the |cos| kinks cap
    # the equispaced rule's accuracy
    assert agg(0.1) == pytest.approx(-0.78, rel=1e-4)
    dense = SphericalAggregate(CovariogramEvaluator(square), angular_rule(2, n=20000))
    assert dense(0.1) == pytest.approx(-0.78, rel=1e-8)


@pytest.mark.parametrize(
    "shape",
    [Ball((0.0, 0.0), 1.0), Box((0.0, 0.0), (1.0, 1.0)), Ball((0.0, 0.0, 0.0), 2.0)],
)
def test_aggregate_slope_at_zero_gives_perimeter(shape):
    agg = SphericalAggregate(CovariogramEvaluator(shape))
    want = -unit_ball_volume(shape.dim - 1) * shape.analytic_perimeter
    for r in (1e-2, 1e-3):
        assert agg(r) / r == pytest.approx(want, rel=0.02)


def test_directional_derivatives(disk, square):
    for u in [(1.0, 0.0), (0.6, 0.8), (0.0, -1.0)]:
        est = directional_derivative_at_zero(CovariogramEvaluator(disk), u)
        assert est.converged and est.value == pytest.approx(-2.0, rel=1e-6)
    g = CovariogramEvaluator(square)
    assert directional_derivative_at_zero(g, (1.0, 0.0)).value == pytest.approx(-1.0, rel=1e-9)
    s = math.sqrt(0.5)
    assert directional_derivative_at_zero(g, (s, s)).value == pytest.approx(-math.sqrt(2), rel=1e-9)
    with pytest.raises(ValueError):
        directional_derivative_at_zero(g, (1.0, 1.0))


@pytest.mark.parametrize(
    "shape, per",
    [
        (Ball((0.0, 0.0), 1.0), 2 * math.pi),
        (Box((0.0, 0.0), (1.0, 1.0)), 4.0),
        (Ball((0.0, 0.0, 0.0), 2.0), 16 * math.pi),
        (Difference(Ball((0.0, 0.0), 1.0), Ball((0.0, 0.0), 0.5)), 3 * math.pi),
        (Box((0.0,), (3.0,)), 2.0),
    ],
)
def test_perimeter_recovery(shape, per):
    assert perimeter_from_covariogram(CovariogramEvaluator(shape)) == pytest.approx(per, rel=0.01)


def test_noisy_covariogram_fails_to_converge(disk):
    g = CovariogramEvaluator(disk, mode="monte_carlo", n_points=10_000, seed=0)
    with pytest.raises(ConvergenceError):
        perimeter_from_covariogram(g)
