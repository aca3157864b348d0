"""Shape primitives, constructive combinations and dimensional constants.

Shapes are immutable and dimension generic. Membership uses the closed-set
convention (``<=`` comparisons). Volume and perimeter are exact closed forms;
they are only populated for CSG combinations where inclusion-exclusion is
exact (disjoint unions, strictly nested differences), and are ``None``
otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterator, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "ShapeSpecError",
    "DimConstants",
    "Shape",
    "Ball",
    "Box",
    "Union",
    "Difference",
    "unit_ball_volume",
    "sphere_area",
    "pva_constant",
    "dim_constants",
    "contains",
    "bounding_box",
    "shape_from_json",
    "shape_to_json",
]

MAX_DIM = 20


class DimensionError(ValueError):
    """Raised when points and shapes disagree on the ambient dimension."""


class ShapeSpecError(ValueError):
    """Raised for malformed shape descriptions; ``path`` locates the problem."""

    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in ``R^d``, ``pi^(d/2) / Gamma(d/2 + 1)``."""
    if isinstance(d, bool) or int(d) != d or not 0 <= d <= MAX_DIM:
        raise ValueError(f"dimension must be an integer in [0, {MAX_DIM}], got {d!r}")
    d = int(d)
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^(d-1) in ``R^d``."""
    return d * unit_ball_volume(d)


def pva_constant(d: int) -> float:
    """Leading constant of the mean symmetric-difference volume.

    ``2 d^-2 Gamma(1/d) kappa_(d-1) kappa_d^(-1-1/d)``; equals 1/2 for d=1 and
    1/pi for d=2.
    """
    if isinstance(d, bool) or int(d) != d or not 1 <= d <= MAX_DIM:
        raise ValueError(f"dimension must be an integer in [1, {MAX_DIM}], got {d!r}")
    d = int(d)
    kd = unit_ball_volume(d)
    return 2.0 / d**2 * math.gamma(1.0 / d) * unit_ball_volume(d - 1) * kd ** (-1.0 - 1.0 / d)


@dataclass(frozen=True)
class DimConstants:
    dim: int
    kappa: float
    kappa_minus1: float
    c_d: float


def dim_constants(d: int) -> DimConstants:
    return DimConstants(d, unit_ball_volume(d), unit_ball_volume(d - 1), pva_constant(d))


def _as_points(x: Any, dim: int) -> tuple[np.ndarray, bool]:
    """Return ``(n, dim)`` float array and whether the input was a single point."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionError(f"expected points of dimension {dim}, got array of shape {np.shape(x)}")
    return arr, single


class Shape:
    """Base class. Subclasses are frozen dataclasses."""

    dim: int

    def contains(self, x):
        """Vectorised closed-set membership; scalar bool for a single point."""
        pts, single = _as_points(x, self.dim)
        out = self._contains(pts)
        return bool(out[0]) if single else out

    def sdf(self, x) -> np.ndarray:
        """Signed distance bound: negative inside, positive outside.

        ``|sdf(x)|`` never exceeds the true distance to the boundary and the
        function is 1-Lipschitz (exact for primitives, a lower bound for CSG).
        """
        pts, _ = _as_points(x, self.dim)
        return self._sdf(pts)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def analytic_volume(self) -> float | None:
        raise NotImplementedError

    @property
    def analytic_perimeter(self) -> float | None:
        raise NotImplementedError

    def primitives(self) -> Iterator[tuple[int, "Shape"]]:
        """Signed primitive decomposition ``A = sum_i s_i P_i`` (a.e.).

        Only valid when ``analytic_volume`` is not None.
        """
        raise NotImplementedError

    def _contains(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sdf(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _hull_parts(self) -> Iterator["Shape"]:
        # primitives whose union covers the shape
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not len(self.center) or not 1 <= len(self.center) <= MAX_DIM:
            raise ValueError("ball center must have between 1 and 20 coordinates")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"ball radius must be positive and finite, got {self.radius!r}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return len(self.center)

    def _contains(self, pts):
        diff = pts - np.asarray(self.center)
        return np.einsum("ij,ij->i", diff, diff) <= self.radius**2

    def _sdf(self, pts):
        return np.linalg.norm(pts - np.asarray(self.center), axis=1) - self.radius

    def bbox(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    @property
    def analytic_volume(self):
        return unit_ball_volume(self.dim) * self.radius**self.dim

    @property
    def analytic_perimeter(self):
        d = self.dim
        return d * unit_ball_volume(d) * self.radius ** (d - 1)

    def primitives(self):
        yield 1, self

    def _hull_parts(self):
        yield self


@dataclass(frozen=True)
class Box(Shape):
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not 1 <= len(lo) <= MAX_DIM:
            raise ValueError("box corners must have equal length between 1 and 20")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"box needs lower < upper in every coordinate, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def _contains(self, pts):
        return np.all((pts >= np.asarray(self.lower)) & (pts <= np.asarray(self.upper)), axis=1)

    def _sdf(self, pts):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        q = np.abs(pts - 0.5 * (lo + hi)) - 0.5 * (hi - lo)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def bbox(self):
        return np.asarray(self.lower), np.asarray(self.upper)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def analytic_volume(self):
        return self.volume

    @property
    def analytic_perimeter(self):
        a = self.sides
        if self.dim == 1:
            return 2.0
        return float(2.0 * sum(np.prod(np.delete(a, i)) for i in range(self.dim)))

    def primitives(self):
        yield 1, self

    def _hull_parts(self):
        yield self


def _check_same_dim(left: Shape, right: Shape):
    if left.dim != right.dim:
        raise DimensionError(f"operands have dimensions {left.dim} and {right.dim}")


@dataclass(frozen=True)
class Union(Shape):
    left: Shape
    right: Shape

    def __post_init__(self):
        _check_same_dim(self.left, self.right)

    @property
    def dim(self) -> int:
        return self.left.dim

    @property
    def disjoint(self) -> bool:
        return _separated(self.left, self.right)

    def _contains(self, pts):
        return self.left._contains(pts) | self.right._contains(pts)

    def _sdf(self, pts):
        return np.minimum(self.left._sdf(pts), self.right._sdf(pts))

    def bbox(self):
        l1, u1 = self.left.bbox()
        l2, u2 = self.right.bbox()
        return np.minimum(l1, l2), np.maximum(u1, u2)

    @property
    def analytic_volume(self):
        a, b = self.left.analytic_volume, self.right.analytic_volume
        if a is None or b is None or not self.disjoint:
            return None
        return a + b

    @property
    def analytic_perimeter(self):
        a, b = self.left.analytic_perimeter, self.right.analytic_perimeter
        if a is None or b is None or self.analytic_volume is None:
            return None
        return a + b

    def primitives(self):
        yield from self.left.primitives()
        yield from self.right.primitives()

    def _hull_parts(self):
        yield from self.left._hull_parts()
        yield from self.right._hull_parts()


@dataclass(frozen=True)
class Difference(Shape):
    left: Shape
    right: Shape

    def __post_init__(self):
        _check_same_dim(self.left, self.right)

    @property
    def dim(self) -> int:
        return self.left.dim

    @property
    def nested(self) -> bool:
        return _inside_with_clearance(self.right, self.left)

    def _contains(self, pts):
        return self.left._contains(pts) & ~self.right._contains(pts)

    def _sdf(self, pts):
        return np.maximum(self.left._sdf(pts), -self.right._sdf(pts))

    def bbox(self):
        return self.left.bbox()

    @property
    def analytic_volume(self):
        a, b = self.left.analytic_volume, self.right.analytic_volume
        if a is None or b is None or not self.nested:
            return None
        return a - b

    @property
    def analytic_perimeter(self):
        a, b = self.left.analytic_perimeter, self.right.analytic_perimeter
        if a is None or b is None or self.analytic_volume is None:
            return None
        return a + b

    def primitives(self):
        yield from self.left.primitives()
        for sign, prim in self.right.primitives():
            yield -sign, prim

    def _hull_parts(self):
        yield from self.left._hull_parts()


# -- conservative separation / nesting tests --------------------------------


def _prim_separated(p: Shape, q: Shape) -> bool:
    if isinstance(p, Ball) and isinstance(q, Ball):
        gap = math.dist(p.center, q.center) - p.radius - q.radius
        return gap > 0
    if isinstance(p, Box) and isinstance(q, Box):
        return any(
            a_hi < b_lo or b_hi < a_lo
            for a_lo, a_hi, b_lo, b_hi in zip(p.lower, p.upper, q.lower, q.upper)
        )
    ball, box = (p, q) if isinstance(p, Ball) else (q, p)
    return float(box._sdf(np.asarray([ball.center]))[0]) > ball.radius


def _separated(a: Shape, b: Shape) -> bool:
    """True only if ``a`` and ``b`` are provably at positive distance."""
    return all(_prim_separated(p, q) for p in a._hull_parts() for q in b._hull_parts())


def _prim_inside(inner: Shape, outer: Shape) -> bool:
    if isinstance(outer, Ball):
        c = np.asarray(outer.center)
        if isinstance(inner, Ball):
            return math.dist(inner.center, outer.center) + inner.radius < outer.radius
        lo, hi = inner.bbox()
        far = np.maximum(np.abs(lo - c), np.abs(hi - c))
        return float(np.linalg.norm(far)) < outer.radius
    lo, hi = np.asarray(outer.lower), np.asarray(outer.upper)
    ilo, ihi = inner.bbox()
    return bool(np.all(ilo > lo) and np.all(ihi < hi))


def _inside_with_clearance(inner: Shape, outer: Shape) -> bool:
    """True only if ``inner`` provably lies in the interior of ``outer``."""
    if isinstance(inner, (Union,)):
        return _inside_with_clearance(inner.left, outer) and _inside_with_clearance(inner.right, outer)
    if isinstance(inner, Difference):
        return _inside_with_clearance(inner.left, outer)
    if isinstance(outer, Union):
        return _inside_with_clearance(inner, outer.left) or _inside_with_clearance(inner, outer.right)
    if isinstance(outer, Difference):
        return _inside_with_clearance(inner, outer.left) and _separated(inner, outer.right)
    return _prim_inside(inner, outer)


# -- module-level operations ---------------------------------------------------


def contains(shape: Shape, x):
    return shape.contains(x)


def bounding_box(shape: Shape, margin: float = 0.0) -> Box:
    """Axis-aligned box around ``shape`` dilated by ``margin`` in every coordinate."""
    if margin < 0:
        raise ValueError(f"margin must be non-negative, got {margin}")
    lo, hi = shape.bbox()
    return Box(tuple(lo - margin), tuple(hi + margin))


# -- JSON --------------------------------------------------------------------


def _coords(obj: dict, key: str, path: str) -> tuple[float, ...]:
    if key not in obj:
        raise ShapeSpecError(f"{path}.{key}", "missing")
    val = obj[key]
    if not isinstance(val, Sequence) or isinstance(val, str) or not val:
        raise ShapeSpecError(f"{path}.{key}", "expected a non-empty list of numbers")
    try:
        out = tuple(float(v) for v in val)
    except (TypeError, ValueError):
        raise ShapeSpecError(f"{path}.{key}", "expected a non-empty list of numbers") from None
    if not all(math.isfinite(v) for v in out):
        raise ShapeSpecError(f"{path}.{key}", "coordinates must be finite")
    return out


def shape_from_json(obj: Any, path: str = "shape") -> Shape:
    """Build a shape from its JSON form, e.g. ``{"kind": "ball", "center": [0, 0], "radius": 1}``."""
    if not isinstance(obj, dict):
        raise ShapeSpecError(path, "expected an object")
    kind = obj.get("kind")
    try:
        if kind == "ball":
            center = _coords(obj, "center", path)
            radius = obj.get("radius")
            if isinstance(radius, bool) or not isinstance(radius, (int, float)):
                raise ShapeSpecError(f"{path}.radius", "expected a positive number")
            if not radius > 0:
                raise ShapeSpecError(f"{path}.radius", "must be positive")
            return Ball(center, radius)
        if kind == "box":
            return Box(_coords(obj, "lower", path), _coords(obj, "upper", path))
        if kind in ("union", "difference"):
            for key in ("left", "right"):
                if key not in obj:
                    raise ShapeSpecError(f"{path}.{key}", "missing")
            left = shape_from_json(obj["left"], f"{path}.left")
            right = shape_from_json(obj["right"], f"{path}.right")
            cls = Union if kind == "union" else Difference
            return cls(left, right)
    except ShapeSpecError:
        raise
    except ValueError as exc:
        raise ShapeSpecError(path, str(exc)) from None
    raise ShapeSpecError(f"{path}.kind", f"unknown shape kind {kind!r}")


def shape_to_json(shape: Shape) -> dict:
    if isinstance(shape, Ball):
        return {"kind": "ball", "center": list(shape.center), "radius": shape.radius}
    if isinstance(shape, Box):
        return {"kind": "box", "lower": list(shape.lower), "upper": list(shape.upper)}
    kind = "union" if isinstance(shape, Union) else "difference"
    return {"kind": kind, "left": shape_to_json(shape.left), "right": shape_to_json(shape.right)}
