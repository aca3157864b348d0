"""Poisson-Voronoi approximation ``A_eta`` and replicated volume estimates.

``x`` belongs to ``A_eta`` iff its nearest nucleus carries the label "in A".
Volumes are never computed from explicit Voronoi cells; every estimator only
needs nearest-neighbour queries.
"""

from __future__ import annotations

import itertools
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geom import Shape
from .sampler import NucleusSet, Window, label_nuclei, sample_ppp, simulation_window, stream

__all__ = [
    "ApproximationModel",
    "Quadrature",
    "VolumeSample",
    "MomentSummary",
    "build_model",
    "estimate_volumes",
    "replicate",
    "summarize",
    "replication_seed",
]


class ApproximationModel:
    """Immutable nearest-nucleus classifier ``x -> 1{x in A_eta}``.

    Ties between equidistant nuclei go to the lowest nucleus index. An empty
    nucleus set classifies everything as outside and sets ``degenerate``.
    """

    def __init__(self, nuclei: NucleusSet):
        self.nuclei = nuclei
        self.labels = nuclei.labels
        self.nucleus_count = len(nuclei)
        self.degenerate = self.nucleus_count == 0
        self._tree = None if self.degenerate else cKDTree(nuclei.points)

    @property
    def window(self) -> Window | None:
        return self.nuclei.window

    @property
    def dim(self) -> int:
        return self.nuclei.dim

    def query(self, x, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices of the ``k`` nearest nuclei, shape (n, k).

        Missing neighbours (fewer than ``k`` nuclei) have distance ``inf`` and
        index ``nucleus_count``.
        """
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if self.degenerate:
            return np.full((len(pts), k), np.inf), np.zeros((len(pts), k), dtype=np.intp)
        dist, idx = self._tree.query(pts, k=k)
        if k == 1:
            dist, idx = dist[:, None], idx[:, None]
        return dist, idx

    def nearest(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-nucleus distance and index with the lowest-index tie rule."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if self.nucleus_count < 2:
            dist, idx = self.query(pts, 1)
            return dist[:, 0], idx[:, 0]
        dist, idx = self.query(pts, 2)
        d1, i1 = dist[:, 0].copy(), idx[:, 0].copy()
        for row in np.flatnonzero(dist[:, 0] == dist[:, 1]):
            sq = np.sum((self.nuclei.points - pts[row]) ** 2, axis=1)
            i1[row] = int(np.flatnonzero(sq == sq.min())[0])
            d1[row] = math.sqrt(sq.min())
        return d1, i1

    def classify(self, x):
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if self.degenerate:
            out = np.zeros(len(pts), dtype=bool)
        else:
            out = self.labels[self.nearest(pts)[1]]
        return bool(out[0]) if single else out


def build_model(nuclei: NucleusSet) -> ApproximationModel:
    return ApproximationModel(nuclei)


@dataclass(frozen=True)
class Quadrature:
    """How ``estimate_volumes`` integrates over the window box.

    ``adaptive`` (default): certified cell refinement plus stratified sampling
    of the undecided leaves, about ``n_quad`` points in total. ``uniform``:
    ``n_quad`` i.i.d. points in the box. ``grid``: deterministic midpoint
    lattice with about ``n_quad`` nodes (debugging only).
    """

    n_quad: int = 200_000
    method: Literal["adaptive", "uniform", "grid"] = "adaptive"
    points_per_leaf: int = 8

    def __post_init__(self):
        if self.n_quad <= 0:
            raise ValueError("n_quad must be positive")
        if self.method not in ("adaptive", "uniform", "grid"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.points_per_leaf < 1:
            raise ValueError("points_per_leaf must be positive")


@dataclass(frozen=True)
class VolumeSample:
    """One replication. ``vol_sym_diff == vol_a_minus + vol_eta_minus`` exactly."""

    vol_approx: float
    vol_sym_diff: float
    vol_a_minus: float
    vol_eta_minus: float
    n_quad: int
    seed: int | None
    quad_var: float = 0.0
    nucleus_count: int = 0
    degenerate: bool = False
    edge_flag: bool = False


class _Tally:
    def __init__(self):
        self.approx = 0.0
        self.a_minus = 0.0
        self.eta_minus = 0.0
        self.quad_var = 0.0
        self.edge = False

    def add(self, weight: float, cls: np.ndarray, inside: np.ndarray):
        self.approx += weight * np.count_nonzero(cls)
        self.a_minus += weight * np.count_nonzero(inside & ~cls)
        self.eta_minus += weight * np.count_nonzero(~inside & cls)


def _edge_risk(model, window, pts, d1, cls, slack=0.0) -> bool:
    # a nucleus beyond the window is never in A, so only points labelled in
    # A_eta can change, and only if the window edge is no farther than d1
    if window is None or not cls.any():
        return False
    return bool(np.any(cls & (d1 + slack >= window.boundary_distance(pts) - slack)))


def _estimate_adaptive(shape, model, window, quad, rng) -> tuple[_Tally, int]:
    box = window.box
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    d = box.dim
    tally = _Tally()
    leaf_budget = max(1, quad.n_quad // quad.points_per_leaf)
    spacing = (box.volume / max(model.nucleus_count, 1)) ** (1.0 / d)
    n0 = np.maximum(1, np.ceil((hi - lo) / (4 * spacing))).astype(np.int64)
    while np.prod(n0) > leaf_budget and n0.max() > 1:
        n0 = np.maximum(1, n0 // 2)
    size = (hi - lo) / n0
    idx = np.stack(np.meshgrid(*[np.arange(n) for n in n0], indexing="ij"), -1).reshape(-1, d)
    children = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)
    labels = model.labels

    for _level in range(60):
        centers = lo + (idx + 0.5) * size
        rho = 0.5 * float(np.linalg.norm(size))
        cell_vol = float(np.prod(size))
        sdf = shape.sdf(centers)
        dist, nn = model.query(centers, 2)
        d1, d2 = dist[:, 0], dist[:, 1]
        side = np.abs(sdf) > rho
        inside = sdf < 0
        # every point of the cell is nearer to its nucleus than to dA
        same_side = d1 + 2 * rho < np.abs(sdf)
        # one nucleus is nearest on the whole cell and the cell avoids dA
        one_cell = side & (d2 - d1 > 2 * rho)
        cert = same_side | one_cell
        cls = np.where(same_side, inside, labels[np.minimum(nn[:, 0], len(labels) - 1)])
        tally.add(cell_vol, cls[cert], inside[cert])
        tally.edge |= _edge_risk(model, window, centers[cert], d1[cert], cls[cert], rho)
        idx = idx[~cert]
        if len(idx) == 0 or len(idx) * len(children) > leaf_budget:
            break
        # negligible volume left, or cell indices about to outrun float precision
        if len(idx) * cell_vol <= 1e-12 * box.volume or 2 * int(idx.max()) + 2 >= 1 << 52:
            break
        idx = (2 * idx[:, None, :] + children[None, :, :]).reshape(-1, d)
        size = size / 2

    n_leaves = len(idx)
    if n_leaves == 0:
        return tally, 0
    k = max(quad.points_per_leaf, quad.n_quad // n_leaves)
    if n_leaves * float(np.prod(size)) <= 1e-12 * box.volume:
        # what is left is below rounding scale; spending the budget there buys nothing
        k = quad.points_per_leaf
    pts = lo + (idx[:, None, :] + rng.random((n_leaves, k, d))) * size
    pts = pts.reshape(-1, d)
    d1, i1 = model.nearest(pts)
    cls = labels[i1]
    inside = shape.contains(pts)
    weight = float(np.prod(size)) / k
    tally.add(weight, cls, inside)
    tally.edge |= _edge_risk(model, window, pts, d1, cls)
    if k > 1:
        sym = (cls != inside).reshape(n_leaves, k).astype(float)
        tally.quad_var = float(np.prod(size)) ** 2 * float(np.sum(sym.var(axis=1, ddof=1))) / k
    return tally, n_leaves * k


def _estimate_flat(shape, model, window, quad, rng) -> tuple[_Tally, int]:
    box = window.box
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    d = box.dim
    if quad.method == "uniform":
        pts = lo + (hi - lo) * rng.random((quad.n_quad, d))
    else:
        m = max(1, int(round(quad.n_quad ** (1.0 / d))))
        axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(m) + 0.5) / m for i in range(d)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    n = len(pts)
    tally = _Tally()
    if model.degenerate:
        cls = np.zeros(n, dtype=bool)
        d1 = np.full(n, np.inf)
    else:
        d1, i1 = model.nearest(pts)
        cls = model.labels[i1]
    inside = shape.contains(pts)
    tally.add(box.volume / n, cls, inside)
    tally.edge = _edge_risk(model, window, pts, d1, cls)
    if quad.method == "uniform":
        tally.quad_var = box.volume**2 * float(np.var(cls != inside)) / n
    return tally, n


def estimate_volumes(
    shape: Shape,
    model: ApproximationModel,
    quad: Quadrature | None = None,
    seed=0,
    window: Window | None = None,
) -> VolumeSample:
    """Window-restricted volumes of ``A_eta``, ``A - A_eta``, ``A_eta - A``.

    Unbiased for the window-restricted volumes given the nucleus realisation.
    """
    quad = quad or Quadrature()
    window = window or model.window
    if window is None:
        raise ValueError("no window: pass one or build the model from a windowed NucleusSet")
    rng = stream(seed)
    if quad.method == "adaptive" and not model.degenerate:
        tally, n = _estimate_adaptive(shape, model, window, quad, rng)
    else:
        tally, n = _estimate_flat(shape, model, window, quad, rng)
    a_minus, eta_minus = tally.a_minus, tally.eta_minus
    return VolumeSample(
        vol_approx=tally.approx,
        vol_sym_diff=a_minus + eta_minus,
        vol_a_minus=a_minus,
        vol_eta_minus=eta_minus,
        n_quad=n,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
        quad_var=tally.quad_var,
        nucleus_count=model.nucleus_count,
        degenerate=model.degenerate,
        edge_flag=tally.edge,
    )


# -- replication -------------------------------------------------------------------


def _lambda_key(lam: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(lam)))[0]


def replication_seed(master_seed: int, lam: float, index: int) -> int:
    """64-bit seed of replication ``index`` at intensity ``lam``."""
    ss = np.random.SeedSequence([int(master_seed) & ((1 << 64) - 1), _lambda_key(lam), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_replication(shape: Shape, lam: float, seed: int, quad: Quadrature, safety: float) -> VolumeSample:
    rng = stream(seed)
    window = simulation_window(shape, lam, safety)
    points = sample_ppp(window, lam, rng)
    nuclei = label_nuclei(points, shape, lam, seed, window)
    return estimate_volumes(shape, build_model(nuclei), quad, rng, window)


def _run_one(args) -> VolumeSample:
    shape, lam, seed, quad, safety = args
    vs = run_replication(shape, lam, seed, quad, safety)
    return VolumeSample(**{**vs.__dict__, "seed": seed})


@dataclass(frozen=True, eq=False)
class MomentSummary:
    """Across-replication moments. Standard errors are ``std / sqrt(M)``.

    ``higher_moments[n-1]`` estimates ``E Vol^n(A Delta A_eta)`` and
    ``approx_moments[n-1]`` estimates ``E Vol^n(A_eta)``.
    """

    lam: float
    replications: int
    mean_vol_approx: float
    se_vol_approx: float
    mean_sym_diff: float
    se_sym_diff: float
    var_vol_approx: float
    se_var_vol_approx: float
    var_sym_diff: float
    se_var_sym_diff: float
    mean_a_minus: float
    mean_eta_minus: float
    se_a_minus_eta_minus: float
    higher_moments: tuple[float, ...]
    se_higher_moments: tuple[float, ...]
    approx_moments: tuple[float, ...]
    diag_identity_1543: float
    se_diag_identity_1543: float
    n_degenerate: int
    n_edge: int
    quad_var_ratio: float
    vol_approx: np.ndarray = field(repr=False)
    vol_sym_diff: np.ndarray = field(repr=False)
    vol_a_minus: np.ndarray = field(repr=False)
    vol_eta_minus: np.ndarray = field(repr=False)

    @property
    def n_max(self) -> int:
        return len(self.higher_moments)


def _se_var(x: np.ndarray) -> float:
    return float(np.std((x - x.mean()) ** 2, ddof=1) / math.sqrt(len(x)))


def summarize(lam: float, samples: Sequence[VolumeSample], n_max: int = 2) -> MomentSummary:
    m = len(samples)
    if m < 2:
        raise ValueError("need at least two replications")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    v = np.array([s.vol_approx for s in samples])
    sd = np.array([s.vol_sym_diff for s in samples])
    am = np.array([s.vol_a_minus for s in samples])
    em = np.array([s.vol_eta_minus for s in samples])
    qv = np.array([s.quad_var for s in samples])
    root = math.sqrt(m)
    powers = [sd**n for n in range(1, n_max + 1)]
    diag = (am - em) ** 2
    var_sd = float(np.var(sd, ddof=1))
    return MomentSummary(
        lam=float(lam),
        replications=m,
        mean_vol_approx=float(v.mean()),
        se_vol_approx=float(v.std(ddof=1) / root),
        mean_sym_diff=float(sd.mean()),
        se_sym_diff=float(sd.std(ddof=1) / root),
        var_vol_approx=float(np.var(v, ddof=1)),
        se_var_vol_approx=_se_var(v),
        var_sym_diff=var_sd,
        se_var_sym_diff=_se_var(sd),
        mean_a_minus=float(am.mean()),
        mean_eta_minus=float(em.mean()),
        se_a_minus_eta_minus=float((am - em).std(ddof=1) / root),
        higher_moments=tuple(float(p.mean()) for p in powers),
        se_higher_moments=tuple(float(p.std(ddof=1) / root) for p in powers),
        approx_moments=tuple(float((v**n).mean()) for n in range(1, n_max + 1)),
        diag_identity_1543=float(diag.mean()),
        se_diag_identity_1543=float(diag.std(ddof=1) / root),
        n_degenerate=sum(s.degenerate for s in samples),
        n_edge=sum(s.edge_flag for s in samples),
        quad_var_ratio=float(qv.mean() / var_sd) if var_sd > 0 else math.inf,
        vol_approx=v,
        vol_sym_diff=sd,
        vol_a_minus=am,
        vol_eta_minus=em,
    )


def replicate(
    shape: Shape,
    lam: float,
    replications: int,
    n_max: int = 2,
    master_seed: int = 0,
    quad: Quadrature | None = None,
    safety: float = 4.0,
    workers: int = 1,
) -> MomentSummary:
    """Run ``replications`` independent window/sample/build/estimate pipelines.

    Replication ``i`` uses ``replication_seed(master_seed, lam, i)``, and the
    reduction runs in index order, so the result does not depend on
    ``workers``. Degenerate and edge-flagged replications are counted, not
    dropped.
    """
    if replications < 2:
        raise ValueError("need at least two replications")
    quad = quad or Quadrature()
    jobs = [(shape, lam, replication_seed(master_seed, lam, i), quad, safety) for i in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        samples = [_run_one(job) for job in jobs]
    return summarize(lam, samples, n_max)
