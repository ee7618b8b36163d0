"""Backward Euler approximation of the stochastic convolution.

The discrete convolution ``W_A^n = sum_k (I + dt A)^{-(n-k+1)} dW^k`` obeys
``W_A^n = (I + dt A)^{-1} (W_A^{n-1} + dW^n)``.  Comparing it against the
exact, coupled ``W_A(t_n)`` isolates the time-discretisation error of the
linear part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisError
from .noise import (
    NoiseSpec,
    coarsen,
    convolution_normals,
    coupled_convolution,
    dyadic_factor,
    sample_batch,
    stack_increments,
    step_count,
)
from .parallel import chunked, map_chunks
from .rates import RateReport, fit_rate, unfitted
from .spectral import EigenBasis, resolvent_factor


def discrete_convolution(increments, basis: EigenBasis, dt: float) -> np.ndarray:
    """Backward Euler stochastic convolution.

    Parameters
    ----------
    increments : array, shape (..., M, N)
        Increments ``dW^1..dW^N`` per mode at step ``dt``.

    Returns
    -------
    array, shape (..., M, N + 1)
        ``W_A^0 = 0, W_A^1, ..., W_A^N``.
    """
    increments = np.asarray(increments, dtype=np.float64)
    rho = resolvent_factor(basis, dt)
    out = np.zeros(increments.shape[:-1] + (increments.shape[-1] + 1,))
    for n in range(increments.shape[-1]):
        out[..., n + 1] = rho * (out[..., n] + increments[..., n])
    return out


def discrete_mean_square(q, lam, dt: float, n: int):
    """``E|W_A^n|^2`` per mode: ``dt q sum_{j=1}^n rho^{2j}``."""
    rho2 = (1.0 / (1.0 + dt * np.asarray(lam, dtype=np.float64))) ** 2
    return dt * np.asarray(q) * rho2 * (1.0 - rho2**n) / (1.0 - rho2)


@dataclass(frozen=True, eq=False)
class ConvolutionPair:
    """Exact and discrete convolution at the coarse times of one level."""

    exact: np.ndarray = field(repr=False)
    discrete: np.ndarray = field(repr=False)
    dt: float
    seed: int
    factor: int

    def error_norms(self) -> np.ndarray:
        """``|W_A(t_n) - W_A^n|`` for every coarse ``n`` (last axis)."""
        return np.sqrt(np.sum((self.exact - self.discrete) ** 2, axis=-2))

    def sup_error(self) -> np.ndarray:
        return self.error_norms()[..., 1:].max(axis=-1)


def default_moment(epsilon: float) -> int:
    """Smallest even integer strictly above ``1/epsilon``."""
    p = math.floor(1.0 / epsilon) + 1
    return p + (p % 2)


def check_convolution_hypotheses(spec: NoiseSpec, beta: float, epsilon: float, p: float) -> None:
    if not 0.0 < epsilon < 0.5:
        raise HypothesisError(f"need 0 < epsilon < 1/2, got epsilon={epsilon}")
    if not p > 1.0 / epsilon:
        raise HypothesisError(f"need p > 1/epsilon: p={p} <= {1.0 / epsilon:g}")
    if not 0.0 <= beta <= 2.0:
        raise HypothesisError(f"need 0 <= beta <= 2, got beta={beta}")
    s = (beta - 1.0) / 2.0 + epsilon
    hs = spec.hs_norm(s)
    if not hs.converges:
        raise HypothesisError(
            f"|A^((beta-1)/2+epsilon) Q^(1/2)|_HS diverges: summand exponent "
            f"4s - 4r = {hs.exponent:g} is not < -1 (s={s:g}, r={spec.decay_exponent:g})"
        )


def _chunk_sup_errors(spec, basis, fine_dt, n_fine, factors, seed, paths):
    records = sample_batch(spec, fine_dt, n_fine, seed, paths)
    inc = stack_increments(records)
    normals = np.stack([convolution_normals(r) for r in records])
    exact, _, _ = coupled_convolution(inc, normals, spec.eigenvalues, basis.eigenvalues, fine_dt)
    out = []
    for f in factors:
        pair = ConvolutionPair(
            exact[..., ::f], discrete_convolution(coarsen(inc, f), basis, f * fine_dt), f * fine_dt, seed, f
        )
        out.append(pair.sup_error())
    return np.stack(out)  # (levels, P)


def lp_estimate(samples: np.ndarray, p: float, axis=-1):
    """``(mean |X|^p)^{1/p}``, scaled to avoid overflow for large ``p``."""
    samples = np.asarray(samples, dtype=np.float64)
    top = np.max(np.abs(samples), axis=axis, keepdims=True)
    top = np.where(top > 0, top, 1.0)
    scaled = np.mean((np.abs(samples) / top) ** p, axis=axis) ** (1.0 / p)
    return scaled * np.squeeze(top, axis=axis)


def batch_slope_stats(sup_errors: np.ndarray, dts, p: float, batches: int):
    """Per-batch estimates, their standard errors and the batch-means slope
    uncertainty.  ``sup_errors`` has shape ``(levels, paths)``."""
    paths = sup_errors.shape[1]
    groups = np.array_split(np.arange(paths), batches)
    est = np.array([[lp_estimate(row[g], p) for g in groups] for row in sup_errors])  # (levels, B)
    level_se = est.std(axis=1, ddof=1) / math.sqrt(batches)
    slopes = np.array([fit_rate(list(zip(dts, est[:, b]))).slope for b in range(batches)])
    slope_se = float(slopes.std(ddof=1) / math.sqrt(batches))
    return level_se, slopes, slope_se


def convolution_error_experiment(
    spec: NoiseSpec,
    beta: float,
    epsilon: float,
    p: int | None,
    dt_levels,
    paths: int,
    T: float,
    seed: int,
    batches: int = 10,
    chunk: int = 25,
    threads: int = 1,
    max_slope_stderr: float = 0.05,
) -> RateReport:
    """Monte Carlo ``(E sup_n |W_A(t_n) - W_A^n|^p)^{1/p}`` per step size.

    Every level is driven by the same finest-level increments (the smallest
    entry of ``dt_levels``), and the exact convolution is computed once at
    that level.  Returns the log-log fit; ``metadata`` carries the per-level
    table, batch-means standard errors and the slope uncertainty.
    """
    p = default_moment(epsilon) if p is None else p
    check_convolution_hypotheses(spec, beta, epsilon, p)
    dts = sorted((float(d) for d in dt_levels), reverse=True)
    if not dts:
        raise ValueError("no dt levels given")
    fine_dt = dts[-1]
    factors = [dyadic_factor(d, fine_dt) for d in dts]
    for d in dts:
        step_count(T, d)
    n_fine = step_count(T, fine_dt)
    basis = EigenBasis(spec.mode_count)

    work = chunked(range(paths), chunk)
    parts = map_chunks(
        lambda ps: _chunk_sup_errors(spec, basis, fine_dt, n_fine, factors, seed, ps), work, threads
    )
    sup_errors = np.concatenate(parts, axis=1)
    estimates = lp_estimate(sup_errors, p)

    meta = dict(
        seed=seed, paths=paths, M=spec.mode_count, p=p, beta=beta, epsilon=epsilon,
        r=spec.decay_exponent, q0=spec.amplitude, T=T, fine_dt=fine_dt, batches=batches,
    )
    levels = list(zip(dts, estimates.tolist()))
    if len(dts) < 2:
        meta["rows"] = [dict(dt=dts[0], error=float(estimates[0]), batch_std=math.nan)]
        return unfitted(levels, meta)

    flags = []
    if paths >= 2 * batches:
        level_se, slopes, slope_se = batch_slope_stats(sup_errors, dts, p, batches)
    else:
        level_se, slopes, slope_se = np.full(len(dts), math.nan), np.array([]), math.nan
        flags.append("too few paths for batch means")
    if not slope_se < max_slope_stderr:
        flags.append("slope uncertainty too large")
    meta.update(
        batch_slopes=slopes.tolist(),
        batch_slope_stderr=slope_se,
        rows=[dict(dt=d, error=float(e), batch_std=float(s)) for d, e, s in zip(dts, estimates, level_se)],
    )
    report = fit_rate(levels, meta)
    return RateReport(
        report.levels, report.slope, report.intercept, report.residual, report.slope_stderr,
        report.flags + tuple(flags), report.metadata,
    )
