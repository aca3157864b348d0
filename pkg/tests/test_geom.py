import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvapprox.geom import (
    Ball,
    Box,
    Difference,
    DimensionError,
    ShapeSpecError,
    Union,
    bounding_box,
    contains,
    dim_constants,
    pva_constant,
    shape_from_json,
    shape_to_json,
    sphere_area,
    unit_ball_volume,
)

mp.mp.dps = 40


def _kappa_mp(d):
    return mp.pi ** (mp.mpf(d) / 2) / mp.gamma(mp.mpf(d) / 2 + 1)


def _c_mp(d):
    return 2 * mp.gamma(mp.mpf(1) / d) * _kappa_mp(d - 1) * _kappa_mp(d) ** (-1 - mp.mpf(1) / d) / d**2


@pytest.mark.parametrize("d", range(0, 11))
def test_unit_ball_volume_matches_high_precision(d):
    assert unit_ball_volume(d) == pytest.approx(float(_kappa_mp(d)), rel=1e-12)


@pytest.mark.parametrize("d", range(1, 11))
def test_pva_constant_matches_high_precision(d):
    assert pva_constant(d) == pytest.approx(float(_c_mp(d)), rel=1e-12)


def test_small_dimension_values():
    assert unit_ball_volume(1) == pytest.approx(2.0, rel=1e-15)
    assert unit_ball_volume(2) == pytest.approx(math.pi, rel=1e-15)
    assert unit_ball_volume(3) == pytest.approx(4.1887902047863909846, rel=1e-14)
    assert pva_constant(1) == pytest.approx(0.5, rel=1e-12)
    assert pva_constant(2) == pytest.approx(1 / math.pi, rel=1e-12)
    # frozen from a 40-digit evaluation
    assert pva_constant(3) == pytest.approx(0.27698013918254510235, rel=1e-12)


def test_gamma_form_of_constant_agrees():
    # equivalent form with Gamma(1 + 1/d)
    for d in range(1, 8):
        alt = 2 / d * unit_ball_volume(d - 1) * unit_ball_volume(d) ** (-1 - 1 / d) * math.gamma(1 + 1 / d)
        assert pva_constant(d) == pytest.approx(alt, rel=1e-13)


def test_sphere_area_and_bundle():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    dc = dim_constants(2)
    assert dc.kappa == pytest.approx(math.pi)
    assert dc.c_d == pytest.approx(1 / math.pi)


@pytest.mark.parametrize("bad", [-1, 21, 2.5, True])
def test_bad_dimensions_rejected(bad):
    with pytest.raises(ValueError):
        unit_ball_volume(bad)


def test_pva_constant_needs_positive_dimension():
    with pytest.raises(ValueError):
        pva_constant(0)


def test_contains_disk_closed_convention(disk):
    assert contains(disk, (0.0, 0.0)) is True
    assert contains(disk, (1.0, 0.0)) is True
    assert contains(disk, (1.0001, 0.0)) is False
    got = disk.contains(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert got.tolist() == [True, False]


def test_contains_dimension_mismatch(disk):
    with pytest.raises(DimensionError):
        disk.contains(np.zeros((3, 3)))


def test_bounding_boxes(disk, square):
    b = bounding_box(disk, 0.0)
    assert b.lower == (-1.0, -1.0) and b.upper == (1.0, 1.0)
    b = bounding_box(disk, 0.5)
    assert b.lower == (-1.5, -1.5) and b.upper == (1.5, 1.5)
    b = bounding_box(square, 0.1)
    np.testing.assert_allclose(b.lower, (-0.1, -0.1))
    np.testing.assert_allclose(b.upper, (1.1, 1.1))
    with pytest.raises(ValueError):
        bounding_box(disk, -1.0)


def test_box_perimeter_and_volume():
    box = Box((0.0, 0.0, 0.0), (1.0, 2.0, 3.0))
    assert box.analytic_volume == pytest.approx(6.0)
    assert box.analytic_perimeter == pytest.approx(2 * (6 + 3 + 2))
    assert Box((0.0,), (1.0,)).analytic_perimeter == 2.0


def test_ball_perimeter():
    ball = Ball((0.0, 0.0, 0.0), 2.0)
    assert ball.analytic_perimeter == pytest.approx(16 * math.pi)
    assert ball.analytic_volume == pytest.approx(32 * math.pi / 3)


def test_disjoint_union_is_additive():
    u = Union(Ball((0.0, 0.0), 1.0), Ball((3.0, 0.0), 0.5))
    assert u.disjoint
    assert u.analytic_volume == pytest.approx(math.pi * 1.25)
    assert u.analytic_perimeter == pytest.approx(2 * math.pi * 1.5)


def test_overlapping_union_has_no_closed_form():
    u = Union(Ball((0.0, 0.0), 1.0), Ball((1.0, 0.0), 1.0))
    assert not u.disjoint
    assert u.analytic_volume is None and u.analytic_perimeter is None
    assert u.contains((1.9, 0.0)) and u.contains((-0.9, 0.0))


def test_nested_difference_is_subtractive():
    ring = Difference(Ball((0.0, 0.0), 1.0), Ball((0.0, 0.0), 0.5))
    assert ring.nested
    assert ring.analytic_volume == pytest.approx(math.pi * 0.75)
    assert ring.analytic_perimeter == pytest.approx(3 * math.pi)
    assert not ring.contains((0.0, 0.0)) and ring.contains((0.75, 0.0))


def test_touching_difference_has_no_closed_form():
    bite = Difference(Box((0.0, 0.0), (1.0, 1.0)), Box((0.5, 0.5), (1.0, 1.0)))
    assert not bite.nested
    assert bite.analytic_volume is None


@pytest.mark.parametrize(
    "shape",
    [
        Ball((0.0, 0.0), 1.0),
        Box((0.0, 0.0), (1.0, 1.0)),
        Union(Ball((0.0, 0.0), 1.0), Box((2.0, 2.0), (3.0, 4.0))),
        Difference(Ball((0.0, 0.0, 0.0), 1.0), Ball((0.0, 0.0, 0.0), 0.5)),
    ],
)
def test_monte_carlo_volume_within_four_se(shape):
    lo, hi = shape.bbox()
    rng = np.random.default_rng(7)
    n = 1_000_000
    pts = lo + (hi - lo) * rng.random((n, shape.dim))
    hits = shape.contains(pts)
    box_vol = float(np.prod(hi - lo))
    est = box_vol * hits.mean()
    se = box_vol * hits.std() / math.sqrt(n)
    assert abs(est - shape.analytic_volume) <= 4 * se


def test_json_roundtrip():
    shape = Difference(Union(Ball((0.0, 0.0), 1.0), Box((2.0, 0.0), (3.0, 1.0))), Ball((0.0, 0.0), 0.2))
    obj = shape_to_json(shape)
    assert shape_from_json(obj) == shape


@pytest.mark.parametrize(
    "obj, path",
    [
        ({"kind": "ball", "center": [0, 0], "radius": -1}, "shape.radius"),
        ({"kind": "ball", "radius": 1}, "shape.center"),
        ({"kind": "blob"}, "shape.kind"),
        ({"kind": "union", "left": {"kind": "ball", "center": [0], "radius": 1}}, "shape.right"),
        (
            {"kind": "difference", "left": {"kind": "box", "lower": [0], "upper": [1]}, "right": {"kind": "ball"}},
            "shape.right.center",
        ),
        ([1, 2], "shape"),
    ],
)
def test_json_errors_name_the_path(obj, path):
    with pytest.raises(ShapeSpecError) as err:
        shape_from_json(obj)
    assert err.value.path == path


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Box((1.0,), (0.0,))


coord = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.tuples(coord, coord))
def test_sdf_sign_matches_membership(p):
    shapes = [
        Ball((0.0, 0.0), 1.0),
        Box((0.0, 0.0), (1.0, 1.0)),
        Difference(Ball((0.0, 0.0), 2.0), Box((-0.5, -0.5), (0.5, 0.5))),
    ]
    for s in shapes:
        sd = float(s.sdf(np.array([p]))[0])
        inside = bool(s.contains(p))
        if sd < -1e-12:
            assert inside
        elif sd > 1e-12:
            assert not inside


@settings(max_examples=200, deadline=None)
@given(st.tuples(coord, coord), st.tuples(coord, coord))
def test_sdf_is_one_lipschitz(p, q):
    s = Union(Ball((0.0, 0.0), 1.0), Difference(Box((0.5, 0.5), (2.0, 2.0)), Ball((1.5, 1.5), 0.3)))
    v = s.sdf(np.array([p, q]))
    assert abs(v[0] - v[1]) <= math.dist(p, q) + 1e-12
