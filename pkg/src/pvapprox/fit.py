"""Log-log least squares for convergence rates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import stats

__all__ = ["PowerLawFit", "fit_power_law"]


@dataclass(frozen=True)
class PowerLawFit:
    """``value ~ exp(log_constant) * lam**exponent``."""

    exponent: float
    ci_low: float
    ci_high: float
    log_constant: float
    r_squared: float
    stderr: float
    n_points: int

    @property
    def ci(self) -> tuple[float, float]:
        return self.ci_low, self.ci_high


def fit_power_law(pairs: Iterable[tuple[float, float]], confidence: float = 0.95) -> PowerLawFit:
    """Ordinary least squares of ``log value`` on ``log lam``; CI from residual variance."""
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
        raise ValueError("need at least 3 (lambda, value) pairs")
    lam, val = arr[:, 0], arr[:, 1]
    if np.any(lam <= 0) or np.any(val <= 0):
        raise ValueError("lambda and value must be positive for a log-log fit")
    x, y = np.log(lam), np.log(val)
    n = len(x)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise ValueError("lambda values must not all be equal")
    slope = float(xc @ (y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    # exact fits leave only rounding noise in ss_res
    if ss_tot <= 1e-24 * max(1.0, float((y**2).sum())):
        r2 = 1.0 if ss_res <= 1e-24 * max(1.0, float((y**2).sum())) else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    se = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else math.inf
    half = float(stats.t.ppf(0.5 + confidence / 2, n - 2)) * se
    return PowerLawFit(slope, slope - half, slope + half, intercept, r2, se, n)
