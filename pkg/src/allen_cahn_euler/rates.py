"""Order-of-convergence estimation by least squares on log-log data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INSUFFICIENT = "insufficient levels"
LOW_CONFIDENCE = "low-confidence"


@dataclass(frozen=True)
class RateReport:
    """Fitted ``log error = intercept + slope * log dt``.

    ``slope`` estimates the convergence order and ``exp(intercept)`` the
    constant in front of it.  ``residual`` is the Euclidean norm of the
    log-residuals.
    """

    levels: tuple
    slope: float
    intercept: float
    residual: float
    slope_stderr: float
    flags: tuple = ()
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def constant(self) -> float:
        return math.exp(self.intercept)

    @property
    def fitted(self) -> bool:
        return INSUFFICIENT not in self.flags

    def refit(self) -> "RateReport":
        return fit_rate(self.levels, metadata=self.metadata)


def fit_rate(levels, metadata: dict | None = None) -> RateReport:
    """Ordinary least squares of ``log(error)`` against ``log(dt)``.

    Parameters
    ----------
    levels : sequence of (dt, error)
        At least two levels with distinct ``dt`` and positive errors.

    Notes
    -----
    With exactly two levels the slope is the two-point ratio
    ``log(e1/e2) / log(dt1/dt2)``, the standard error is undefined (NaN) and
    the report is flagged low-confidence.
    """
    levels = tuple((float(dt), float(err)) for dt, err in levels)
    if len(levels) < 2:
        raise ValueError(f"need at least 2 levels to fit a rate, got {len(levels)}")
    dts = np.array([dt for dt, _ in levels])
    errs = np.array([e for _, e in levels])
    if np.any(dts <= 0):
        raise ValueError("step sizes must be positive")
    if len(np.unique(dts)) != len(dts):
        raise ValueError("duplicate step size in rate fit")
    if np.any(~(errs > 0)) or not np.all(np.isfinite(errs)):
        raise ValueError("errors must be positive and finite; a zero error means degenerate coupling")

    x = np.log(dts)
    y = np.log(errs)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    res = y - (intercept + slope * x)
    ssr = float(np.sum(res**2))
    n = len(levels)
    flags = ()
    if n > 2:
        stderr = math.sqrt(ssr / (n - 2) / sxx)
    else:
        stderr = math.nan
        flags = (LOW_CONFIDENCE,)
    return RateReport(levels, slope, intercept, math.sqrt(ssr), stderr, flags, dict(metadata or {}))


def unfitted(levels, metadata: dict | None = None) -> RateReport:
    """Report for fewer than two levels: data only, no fit."""
    levels = tuple((float(dt), float(err)) for dt, err in levels)
    return RateReport(levels, math.nan, math.nan, math.nan, math.nan, (INSUFFICIENT,), dict(metadata or {}))


def two_point_slope(dt1: float, e1: float, dt2: float, e2: float) -> float:
    return math.log(e1 / e2) / math.log(dt1 / dt2)
