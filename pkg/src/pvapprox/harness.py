"""Experiment configuration, intensity sweeps and CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .approx import MomentSummary, Quadrature, replicate
from .covariogram import AngularRule, CovariogramEvaluator, angular_rule
from .geom import Ball, Shape, ShapeSpecError, shape_from_json, shape_to_json
from .theory import TheoryPrediction, predict

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SweepRow",
    "SWEEP_COLUMNS",
    "resolve_threads",
    "run_sweep",
    "sweep_rows_to_csv",
    "write_csv",
    "read_sweep_csv",
    "theory_table",
    "covariogram_profile",
]

SWEEP_COLUMNS = (
    "lambda",
    "mean_vol_approx",
    "se_vol_approx",
    "mean_sym_diff",
    "se_sym_diff",
    "var_vol_approx",
    "var_sym_diff",
    "diag_1543",
    "exact_theory",
    "asymptotic_theory",
    "ratio",
    "flag_degenerate",
    "flag_edge",
)

THREADS_ENV = "PVA_THREADS"


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the offending path."""


@dataclass(frozen=True)
class ExperimentConfig:
    shape: Shape = field(default_factory=lambda: Ball((0.0, 0.0), 1.0))
    lambda_grid: tuple[float, ...] = (1e2, 10**2.5, 1e3, 10**3.5, 1e4)
    replications: int = 200
    n_quad: int = 200_000
    n_max: int = 2
    master_seed: int = 0
    safety: float = 4.0
    thread_count: int | str = 1
    output_path: str | None = None
    quad_method: str = "adaptive"

    def __post_init__(self):
        grid = tuple(float(v) for v in self.lambda_grid)
        object.__setattr__(self, "lambda_grid", grid)
        if not grid:
            raise ConfigError("lambda_grid: must not be empty")
        if any(not (v > 0 and math.isfinite(v)) for v in grid):
            raise ConfigError("lambda_grid: intensities must be positive and finite")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("lambda_grid: must be strictly increasing")
        for name in ("replications", "n_quad", "n_max"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, int) or val < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {val!r}")
        if self.replications < 2:
            raise ConfigError("replications: need at least 2")
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError("master_seed: must be a non-negative integer")
        if self.master_seed >= 1 << 64:
            raise ConfigError("master_seed: must fit in 64 bits")
        if not (isinstance(self.safety, (int, float)) and self.safety >= 1):
            raise ConfigError("safety: must be a number >= 1")
        tc = self.thread_count
        if not (tc == "auto" or (isinstance(tc, int) and not isinstance(tc, bool) and tc >= 1)):
            raise ConfigError("thread_count: must be a positive integer or \"auto\"")
        if self.quad_method not in ("adaptive", "uniform", "grid"):
            raise ConfigError("quad_method: must be one of adaptive, uniform, grid")

    @property
    def quadrature(self) -> Quadrature:
        return Quadrature(self.n_quad, self.quad_method)  # type: ignore[arg-type]

    @classmethod
    def from_json(cls, obj: Any) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config: expected a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ConfigError(f"config: unknown keys {unknown}")
        kwargs = dict(obj)
        if "shape" in kwargs:
            try:
                kwargs["shape"] = shape_from_json(kwargs["shape"])
            except ShapeSpecError as exc:
                raise ConfigError(str(exc)) from None
        if "lambda_grid" in kwargs:
            grid = kwargs["lambda_grid"]
            if not isinstance(grid, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in grid
            ):
                raise ConfigError("lambda_grid: expected a list of numbers")
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_json(obj)

    def to_json(self) -> dict:
        return {
            "shape": shape_to_json(self.shape),
            "lambda_grid": list(self.lambda_grid),
            "replications": self.replications,
            "n_quad": self.n_quad,
            "n_max": self.n_max,
            "master_seed": self.master_seed,
            "safety": self.safety,
            "thread_count": self.thread_count,
            "output_path": self.output_path,
            "quad_method": self.quad_method,
        }

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def resolve_threads(config_value: int | str, flag: int | str | None = None, env: dict | None = None) -> int:
    """Worker count: command-line flag, then ``PVA_THREADS``, then the config."""
    env = os.environ if env is None else env
    value: int | str = config_value
    if env.get(THREADS_ENV):
        value = env[THREADS_ENV]
    if flag is not None:
        value = flag
    if value == "auto":
        return os.cpu_count() or 1
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"thread_count: cannot parse {value!r}") from None
    if n < 1:
        raise ConfigError("thread_count: must be >= 1")
    return n


@dataclass(frozen=True)
class SweepRow:
    lam: float
    summary: MomentSummary
    prediction: TheoryPrediction | None

    def as_record(self) -> dict:
        s, p = self.summary, self.prediction
        exact = p.exact_mean_sym_diff if p else None
        asym = p.asymptotic_mean_sym_diff if p else None
        return {
            "lambda": self.lam,
            "mean_vol_approx": s.mean_vol_approx,
            "se_vol_approx": s.se_vol_approx,
            "mean_sym_diff": s.mean_sym_diff,
            "se_sym_diff": s.se_sym_diff,
            "var_vol_approx": s.var_vol_approx,
            "var_sym_diff": s.var_sym_diff,
            "diag_1543": s.diag_identity_1543,
            "exact_theory": exact,
            "asymptotic_theory": asym,
            "ratio": s.mean_sym_diff / asym if asym else None,
            "flag_degenerate": s.n_degenerate,
            "flag_edge": s.n_edge,
        }


def run_sweep(
    config: ExperimentConfig,
    workers: int = 1,
    with_theory: bool = True,
    progress: Callable[[str], None] | None = None,
) -> list[SweepRow]:
    """Replicate at every grid intensity and attach the theory prediction.

    Deterministic in ``config.master_seed`` for any ``workers``.
    """
    rule = angular_rule(config.shape.dim) if with_theory else None
    rows = []
    for lam in config.lambda_grid:
        summary = replicate(
            config.shape,
            lam,
            config.replications,
            config.n_max,
            config.master_seed,
            config.quadrature,
            config.safety,
            workers,
        )
        pred = predict(config.shape, lam, config.n_max, rule) if with_theory else None
        rows.append(SweepRow(lam, summary, pred))
        if progress:
            progress(f"lambda={lam:g} mean_sym_diff={summary.mean_sym_diff:.6g}")
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(columns: Sequence[str], records: Sequence[dict], out, comment: str | None = None) -> None:
    """Write ``records`` as CSV to a path or a text stream."""
    if isinstance(out, (str, Path)):
        with Path(out).open("w", newline="") as fh:
            write_csv(columns, records, fh, comment)
        return
    if comment is not None:
        out.write(f"# {comment}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        writer.writerow([_fmt(rec.get(c)) for c in columns])


def timestamp_comment(kind: str) -> str:
    return f"pvapprox {kind} generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}"


def sweep_rows_to_csv(rows: Sequence[SweepRow], out, comment: str | None = None) -> None:
    write_csv(SWEEP_COLUMNS, [r.as_record() for r in rows], out, comment)


def read_sweep_csv(source) -> list[dict]:
    """Parse a sweep CSV (comment lines skipped) into float/None records."""
    text = Path(source).read_text() if not isinstance(source, io.TextIOBase) else source.read()
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or list(reader.fieldnames) != list(SWEEP_COLUMNS):
        raise ConfigError(f"sweep csv: expected header {','.join(SWEEP_COLUMNS)}")
    return [{k: (float(v) if v != "" else None) for k, v in rec.items()} for rec in reader]


def theory_table(config: ExperimentConfig, rule: AngularRule | None = None) -> list[dict]:
    rule = rule or angular_rule(config.shape.dim)
    out = []
    for lam in config.lambda_grid:
        p = predict(config.shape, lam, config.n_max, rule)
        out.append(
            {"lambda": lam, "exact": p.exact_mean_sym_diff, "asymptotic": p.asymptotic_mean_sym_diff, "ratio": p.ratio}
        )
    return out


def covariogram_profile(shape: Shape, n_r: int = 50, n_directions: int = 8, r_max: float | None = None) -> list[dict]:
    """Covariogram along a fan of directions, for CSV export."""
    evaluator = CovariogramEvaluator(shape)
    lo, hi = shape.bbox()
    r_max = float(np.linalg.norm(hi - lo)) if r_max is None else r_max
    d = shape.dim
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif d == 2:
        theta = 2 * np.pi * np.arange(n_directions) / n_directions
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        dirs = angular_rule(d, n=n_directions, kind="qmc").directions
    radii = np.linspace(0.0, r_max, n_r)
    records = []
    for j, u in enumerate(dirs):
        vals = evaluator(radii[:, None] * u[None, :])
        records.extend({"r": float(r), "direction_index": j, "g_value": float(g)} for r, g in zip(radii, vals))
    return records
