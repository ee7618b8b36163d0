"""Experiment drivers: pathwise and strong errors, moment growth, Hölder
quotients, the nonlinearity's Lipschitz ratio and the deterministic smoothing
order.

Every driver takes a :class:`~allen_cahn_euler.config.RunConfig`, checks the
hypotheses it relies on, and returns an immutable report whose ``metadata``
is enough to rerun it bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .errors import HypothesisError, ProvenanceMismatch
from .noise import NoiseSpec, dyadic_factor, sample_batch, stream, step_count
from .parallel import chunked, map_chunks
from .rates import RateReport, fit_rate, unfitted
from .scheme import (
    Collocation,
    PotentialParams,
    SchemeParams,
    Trajectory,
    default_initial,
    reference_solution,
    simulate_records,
)
from .spectral import EigenBasis, deterministic_error_apply, power_law_field

# acceptance thresholds (see tests/baselines.json for the calibrated values)
PATHWISE_MIN_SLOPE = 0.40
PATHWISE_MIN_FRACTION = 0.80
PATHWISE_MIN_MEDIAN = 0.45
STRONG_MAX_RATIO = 0.25
MOMENT_SLACK = 1.1  # value(T_k)/value(T_{k-1}) <= slack * T_k/T_{k-1}
HOLDER_MAX_FACTOR = 2.0
LIPSCHITZ_MAX_DRIFT = 0.10
SMOOTHING_MIN_SLOPE = 0.9
NEWTON_MAX_ITERATIONS = 8
NEWTON_MAX_RESIDUAL = 1e-10
TINY_AMPLITUDE = 1e-8
CONVOLUTION_BANDS = {2.0: (0.85, 1.15), 1.0: (0.40, 0.65)}


def convolution_band(beta: float) -> tuple:
    """Accepted slope interval for the stochastic convolution error: the
    calibrated bands for beta in {1, 2}, ``beta/2 +- 0.15`` otherwise."""
    return CONVOLUTION_BANDS.get(float(beta), (beta / 2 - 0.15, beta / 2 + 0.15))


def _metadata(cfg: RunConfig, **extra) -> dict:
    meta = dict(seed=cfg.seed, M=cfg.modes, paths=cfg.path_count, r=cfg.r, q0=cfg.q0, c=cfg.c, beta_dw=cfg.beta_dw)
    meta.update(extra)
    return meta


def require_hs(spec: NoiseSpec, s: float) -> None:
    """Refuse to run unless ``|A^s Q^{1/2}|_HS`` is finite."""
    hs = spec.hs_norm(s)
    if not hs.converges:
        raise HypothesisError(
            f"|A^{s:g} Q^(1/2)|_HS diverges: summand exponent 4s - 4r = {hs.exponent:g} is not < -1 "
            f"(r={spec.decay_exponent:g})"
        )


# ---------------------------------------------------------------- pathwise


def pathwise_error(reference: Trajectory, coarse: Trajectory):
    """``sup_n |u_ref(t_n) - u^n|`` over the stored times of ``coarse``.

    Both trajectories must carry the same noise provenance (seed and path
    indices) and every coarse time must be a reference time.  Returns a float
    for a single path and an array of shape ``(P,)`` for a batch.
    """
    if reference.seed is None or coarse.seed is None or reference.provenance != coarse.provenance:
        raise ProvenanceMismatch(
            f"trajectories come from different noise: {reference.provenance} vs {coarse.provenance}"
        )
    if reference.basis.mode_count != coarse.basis.mode_count:
        raise ValueError("trajectories use different mode counts")
    ratio = coarse.store_dt / reference.store_dt
    stride = int(round(ratio))
    if stride < 1 or abs(stride - ratio) > 1e-9 * ratio:
        raise ValueError(f"coarse spacing {coarse.store_dt!r} is not a multiple of {reference.store_dt!r}")
    last = (coarse.states.shape[0] - 1) * stride
    if last >= reference.states.shape[0]:
        raise ValueError("coarse trajectory extends past the reference")
    ref = reference.states[: last + 1 : stride]
    diff = np.sqrt(np.sum((ref - coarse.states) ** 2, axis=-1))
    sup = diff.max(axis=0)
    return float(sup) if np.ndim(sup) == 0 else sup


def _coupled_chunk(cfg: RunConfig, u0, dts, paths):
    spec, basis, pot = cfg.noise, cfg.basis, cfg.potential
    n_fine = step_count(cfg.T, cfg.fine_dt)
    records = sample_batch(spec, cfg.fine_dt, n_fine, cfg.seed, paths)
    stride = dyadic_factor(min(dts), cfg.fine_dt)
    ref = reference_solution(
        u0, records, SchemeParams(cfg.fine_dt, n_fine, cfg.newton_tol, cfg.newton_max), pot, basis, stride, cfg.padded
    )
    errors, iters, resid = [], [int(ref.iterations.max())], [float(ref.residuals.max())]
    for dt in dts:
        traj = simulate_records(u0, records, dt, pot, basis, 1, cfg.newton_tol, cfg.newton_max, cfg.padded)
        errors.append(pathwise_error(ref, traj))
        iters.append(int(traj.iterations.max()))
        resid.append(float(traj.residuals.max()))
    return np.stack(errors), max(iters), max(resid)


def coupled_sup_errors(cfg: RunConfig, u0=None, dt_levels=None):
    """``sup_n |u_ref(t_n) - u^n|`` for every level and path.

    Returns ``(dts, errors, newton_iterations, newton_residual)`` with
    ``errors`` of shape ``(levels, paths)`` and ``dts`` sorted coarse to fine.
    The reference is backward Euler at ``cfg.fine_dt`` on the same noise.
    """
    u0 = default_initial(cfg.basis) if u0 is None else u0
    dts = sorted((float(d) for d in (dt_levels or cfg.dt_levels)), reverse=True)
    parts = map_chunks(lambda ps: _coupled_chunk(cfg, u0, dts, ps), chunked(range(cfg.path_count), cfg.chunk), cfg.threads)
    errors = np.concatenate([p[0] for p in parts], axis=1)
    return dts, errors, max(p[1] for p in parts), max(p[2] for p in parts)


def monotone_threshold(dts, errors) -> float:
    """Largest level from which the errors decrease strictly all the way to
    the finest level; NaN if even the last pair does not.  ``dts`` must be
    sorted coarse to fine."""
    errors = np.asarray(errors)
    start = len(dts) - 1
    while start > 0 and errors[start - 1] > errors[start]:
        start -= 1
    return float(dts[start]) if start < len(dts) - 1 else math.nan


@dataclass(frozen=True, eq=False)
class PathwiseSummary:
    """Per-path rate fits and their distribution."""

    reports: tuple
    errors: np.ndarray = field(repr=False)  # (levels, paths)
    dt0_proxy: np.ndarray = field(repr=False)
    newton_iterations: int
    newton_residual: float
    metadata: dict = field(default_factory=dict)

    @property
    def slopes(self) -> np.ndarray:
        return np.array([r.slope for r in self.reports])

    @property
    def median_slope(self) -> float:
        return float(np.median(self.slopes))

    @property
    def fraction_above(self) -> float:
        return float(np.mean(self.slopes >= PATHWISE_MIN_SLOPE))

    @property
    def passed(self) -> bool:
        return self.fraction_above >= PATHWISE_MIN_FRACTION and self.median_slope >= PATHWISE_MIN_MEDIAN


def pathwise_rate_experiment(cfg: RunConfig, u0=None) -> PathwiseSummary:
    """Fit ``log sup_n |u(t_n) - u^n|`` against ``log dt`` path by path."""
    require_hs(cfg.noise, 0.5 + cfg.epsilon)
    dts, errors, iters, resid = coupled_sup_errors(cfg, u0)
    meta = _metadata(cfg, dt_levels=tuple(dts), fine_dt=cfg.fine_dt, T=cfg.T, epsilon=cfg.epsilon)
    reports = []
    for j in range(errors.shape[1]):
        levels = list(zip(dts, errors[:, j].tolist()))
        path_meta = dict(meta, path=j)
        reports.append(fit_rate(levels, path_meta) if len(dts) > 1 else unfitted(levels, path_meta))
    dt0 = np.array([monotone_threshold(dts, errors[:, j]) for j in range(errors.shape[1])])
    return PathwiseSummary(tuple(reports), errors, dt0, iters, resid, meta)


def deterministic_limit_rate(cfg: RunConfig, u0=None) -> RateReport:
    """Single path with ``q0 = 1e-8``: the fit should be close to order one."""
    tiny = cfg.replace(q0=TINY_AMPLITUDE, paths=1)
    dts, errors, _, _ = coupled_sup_errors(tiny, u0)
    return fit_rate(list(zip(dts, errors[:, 0].tolist())), _metadata(tiny, dt_levels=tuple(dts)))


# ---------------------------------------------------------------- strong


@dataclass(frozen=True, eq=False)
class StrongReport:
    """Monte Carlo ``E sup_n |u(t_n) - u^n|^p`` per level and moment."""

    dts: tuple
    moments: tuple
    estimates: np.ndarray = field(repr=False)  # (moments, levels)
    batch_std: np.ndarray = field(repr=False)
    newton_iterations: int
    newton_residual: float
    flags: tuple = ()
    metadata: dict = field(default_factory=dict)

    def decreasing(self, i: int) -> bool:
        return bool(np.all(np.diff(self.estimates[i]) < 0))

    def ratio(self, i: int) -> float:
        return float(self.estimates[i, -1] / self.estimates[i, 0])

    @property
    def passed(self) -> bool:
        return all(self.decreasing(i) and self.ratio(i) < STRONG_MAX_RATIO for i in range(len(self.moments)))


def _batch_std(samples: np.ndarray, batches: int) -> float:
    if samples.size < 2 * batches:
        return math.nan
    means = [g.mean() for g in np.array_split(samples, batches)]
    return float(np.std(means, ddof=1) / math.sqrt(batches))


def strong_convergence_experiment(cfg: RunConfig, u0=None) -> StrongReport:
    """``E sup_n |u(t_n) - u^n|^p`` for each ``p`` in ``cfg.p`` (default 1, 2).

    No rate is fitted; the report records whether the estimates decrease
    and how far they fall across the levels.
    """
    moments = cfg.p or (1.0, 2.0)
    require_hs(cfg.noise, 0.5 + cfg.epsilon)
    dts, errors, iters, resid = coupled_sup_errors(cfg, u0)
    est = np.array([[np.mean(row**p) for row in errors] for p in moments])
    std = np.array([[_batch_std(row**p, cfg.batches) for row in errors] for p in moments])
    flags = ("statistical insufficiency: one path",) if errors.shape[1] < 2 else ()
    meta = _metadata(cfg, dt_levels=tuple(dts), fine_dt=cfg.fine_dt, T=cfg.T)
    return StrongReport(tuple(dts), tuple(moments), est, std, iters, resid, flags, meta)


# ---------------------------------------------------------------- moments


@dataclass(frozen=True, eq=False)
class MomentReport:
    """``E sup_{1<=l<=N} |u^l|^p`` and ``E sup |u^l|_1^p`` per horizon."""

    horizons: tuple
    p: float
    dt: float
    l2: np.ndarray = field(repr=False)
    h1: np.ndarray = field(repr=False)
    l2_std: np.ndarray = field(repr=False)
    h1_std: np.ndarray = field(repr=False)
    growth_fit: tuple | None  # (slope, intercept) of h1 against T
    gate: dict  # T -> T^(p-1) dt
    newton_iterations: int
    newton_residual: float
    metadata: dict = field(default_factory=dict)

    @property
    def growth_ratio(self) -> float:
        """``h1(T_last) / h1(T_prev)``."""
        if len(self.horizons) < 2:
            return math.nan
        return float(self.h1[-1] / self.h1[-2])

    @property
    def growth_limit(self) -> float:
        return MOMENT_SLACK * self.horizons[-1] / self.horizons[-2] if len(self.horizons) > 1 else math.nan

    @property
    def passed(self) -> bool:
        return bool(self.growth_ratio <= self.growth_limit)


def check_moment_gate(p: float, horizons, dt: float) -> dict:
    """``T^{p-1} dt`` per horizon; for ``p > 2`` every value must be <= 1/2."""
    gate = {float(T): float(T ** (p - 1) * dt) for T in horizons}
    if p > 2:
        for T, value in gate.items():
            if value > 0.5:
                raise HypothesisError(
                    f"T^(p-1) dt <= 1/2 fails: T={T:g}, p={p:g}, dt={dt:g} gives {value:g}"
                )
    return gate


def _moment_chunk(cfg: RunConfig, u0, dt, n_steps, marks, p, paths):
    spec = cfg.noise
    records = sample_batch(spec, dt, n_steps, cfg.seed, paths)
    traj = simulate_records(u0, records, dt, cfg.potential, cfg.basis, 1, cfg.newton_tol, cfg.newton_max, cfg.padded)
    l2 = traj.norms(0.0)[1:] ** p  # (N, P)
    h1 = traj.norms(1.0)[1:] ** p
    sups = np.array([[l2[:n].max(axis=0), h1[:n].max(axis=0)] for n in marks])  # (H, 2, P)
    return sups, int(traj.iterations.max()), float(traj.residuals.max())


def moment_bound_experiment(cfg: RunConfig, horizons=None, p: float | None = None, dt: float | None = None, u0=None) -> MomentReport:
    """Moments of the running sup of ``|u^l|`` and ``|u^l|_1`` over nested
    horizons.  One run to the largest horizon serves all of them."""
    horizons = tuple(float(h) for h in (horizons or cfg.horizons))
    p = float(p if p is not None else (cfg.p[0] if cfg.p else 2.0))
    dt = float(dt or cfg.moment_dt)
    require_hs(cfg.noise, 0.5)
    gate = check_moment_gate(p, horizons, dt)
    marks = [step_count(T, dt) for T in horizons]
    u0 = default_initial(cfg.basis) if u0 is None else u0
    parts = map_chunks(
        lambda ps: _moment_chunk(cfg, u0, dt, marks[-1], marks, p, ps), chunked(range(cfg.path_count), cfg.chunk),
        cfg.threads,
    )
    sups = np.concatenate([q[0] for q in parts], axis=-1)
    est = sups.mean(axis=-1)
    std = np.array([[_batch_std(s, cfg.batches) for s in row] for row in sups])
    fit = None
    if len(horizons) > 1 and p == 2:
        slope, intercept = np.polyfit(np.array(horizons), est[:, 1], 1)
        fit = (float(slope), float(intercept))
    meta = _metadata(cfg, dt=dt, horizons=horizons, p=p)
    return MomentReport(
        horizons, p, dt, est[:, 0], est[:, 1], std[:, 0], std[:, 1], fit, gate,
        max(q[1] for q in parts), max(q[2] for q in parts), meta,
    )


# ---------------------------------------------------------------- Hölder


@dataclass(frozen=True)
class HolderReport:
    gamma: float
    quotient_sup: float
    lags: tuple  # lag times examined


def holder_quotient(trajectory: Trajectory, gamma: float, max_points: int = 2048, exhaustive: bool = False) -> HolderReport:
    """Empirical ``sup |u(t) - u(s)| / |t - s|^gamma`` on a stored path.

    The path is subsampled to at most ``max_points + 1`` states and the sup is
    taken over dyadic lags from every start index, or over all pairs when
    ``exhaustive`` is set.
    """
    if not 0.0 <= gamma < 0.5:
        raise HypothesisError(f"need 0 <= gamma < 1/2, got gamma={gamma}")
    if trajectory.states.ndim != 2:
        raise ValueError("pass a single-path trajectory")
    states = trajectory.states
    n = states.shape[0] - 1
    sub = max(1, math.ceil(n / max_points))
    states = states[::sub]
    h = trajectory.store_dt * sub
    n = states.shape[0] - 1
    if exhaustive:
        lags = list(range(1, n + 1))
    else:
        lags = [1 << k for k in range(n.bit_length()) if (1 << k) <= n]
    best = 0.0
    for lag in lags:
        d = np.sqrt(np.sum((states[lag:] - states[:-lag]) ** 2, axis=-1)).max()
        best = max(best, float(d) / (lag * h) ** gamma)
    return HolderReport(float(gamma), best, tuple(lag * h for lag in lags))


@dataclass(frozen=True, eq=False)
class HolderExperiment:
    gamma: float
    fine: np.ndarray = field(repr=False)  # K at the fine level, per path
    coarse: np.ndarray = field(repr=False)  # K at twice the fine step
    newton_iterations: int
    newton_residual: float
    metadata: dict = field(default_factory=dict)

    @property
    def ratios(self) -> np.ndarray:
        return self.fine / self.coarse

    @property
    def passed(self) -> bool:
        r = self.ratios
        return bool(np.all(np.isfinite(self.fine)) and np.all((r <= HOLDER_MAX_FACTOR) & (r >= 1 / HOLDER_MAX_FACTOR)))


def _holder_chunk(cfg: RunConfig, u0, paths):
    n_fine = step_count(cfg.T, cfg.fine_dt)
    records = sample_batch(cfg.noise, cfg.fine_dt, n_fine, cfg.seed, paths)
    out = []
    iters, resid = 0, 0.0
    for dt in (cfg.fine_dt, 2 * cfg.fine_dt):
        traj = simulate_records(u0, records, dt, cfg.potential, cfg.basis, 1, cfg.newton_tol, cfg.newton_max, cfg.padded)
        out.append([holder_quotient(traj.path(j), cfg.gamma).quotient_sup for j in range(len(paths))])
        iters, resid = max(iters, int(traj.iterations.max())), max(resid, float(traj.residuals.max()))
    return np.array(out), iters, resid


def holder_experiment(cfg: RunConfig, u0=None) -> HolderExperiment:
    """Hölder quotient at the fine step and at twice the fine step on the
    same noise paths."""
    if not 0.0 <= cfg.gamma < 0.5:
        raise HypothesisError(f"need 0 <= gamma < 1/2, got gamma={cfg.gamma}")
    require_hs(cfg.noise, 0.5)
    u0 = default_initial(cfg.basis) if u0 is None else u0
    parts = map_chunks(lambda ps: _holder_chunk(cfg, u0, ps), chunked(range(cfg.path_count), cfg.chunk), cfg.threads)
    k = np.concatenate([q[0] for q in parts], axis=1)
    meta = _metadata(cfg, gamma=cfg.gamma, fine_dt=cfg.fine_dt, T=cfg.T)
    return HolderExperiment(cfg.gamma, k[0], k[1], max(q[1] for q in parts), max(q[2] for q in parts), meta)


# ---------------------------------------------------------------- Lipschitz

_FIELD_PURPOSE = 2
_AMPLITUDE_PURPOSE = 3


def random_smooth_fields(basis: EigenBasis, count: int, seed: int, tag: int, decay: float = 2.0,
                         h1_range=(0.5, 2.0)) -> np.ndarray:
    """``count`` random fields with coefficients ``xi_k k^{-decay}``, rescaled
    to ``|u|_1`` uniform in ``h1_range``.

    Mode ``k`` draws from its own stream, so the low modes are identical for
    every mode count.  Returns coefficients of shape ``(count, M)``.
    """
    k = np.arange(1, basis.mode_count + 1)
    xi = np.stack([stream(seed, tag, j, _FIELD_PURPOSE).standard_normal(count) for j in range(basis.mode_count)], axis=1)
    coeffs = xi * k ** (-float(decay))
    h1 = np.sqrt(np.sum(basis.eigenvalues * coeffs**2, axis=1))
    target = stream(seed, tag, 0, _AMPLITUDE_PURPOSE).uniform(*h1_range, size=count)
    return coeffs * (target / h1)[:, None]


def lipschitz_ratios(u: np.ndarray, v: np.ndarray, basis: EigenBasis, potential: PotentialParams,
                     padded: bool = True) -> np.ndarray:
    """``|A^{-1/2}(f(u) - f(v))| / ((|u|_1^2 + |v|_1^2) |u - v|)`` row by row.

    Rows with ``u == v`` are 0/0 and come back as NaN.
    """
    u, v = np.atleast_2d(u), np.atleast_2d(v)
    colloc = Collocation(basis, padded)
    lam = basis.eigenvalues
    df = colloc.nonlinearity(u, potential) - colloc.nonlinearity(v, potential)
    num = np.sqrt(np.sum(df**2 / lam, axis=-1))
    h1 = np.sum(lam * u**2, axis=-1) + np.sum(lam * v**2, axis=-1)
    dist = np.sqrt(np.sum((u - v) ** 2, axis=-1))
    same = dist == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = num / (h1 * dist)
    return np.where(same, np.nan, ratio)


def cubic_growth_ratios(u: np.ndarray, basis: EigenBasis, potential: PotentialParams, padded: bool = True) -> np.ndarray:
    """``|f(u)| / (|u| + |u|_1^3)`` row by row."""
    u = np.atleast_2d(u)
    fu = Collocation(basis, padded).nonlinearity(u, potential)
    lam = basis.eigenvalues
    denom = np.sqrt(np.sum(u**2, axis=-1)) + np.sum(lam * u**2, axis=-1) ** 1.5
    return np.sqrt(np.sum(fu**2, axis=-1)) / denom


@dataclass(frozen=True)
class LipschitzTable:
    modes: int
    samples: int
    skipped: int
    constant: float  # max Lipschitz ratio over the pairs
    zero_constant: float  # max Lipschitz ratio with v = 0
    growth_constant: float  # max cubic growth ratio
    seed: int


def lipschitz_probe(sample_count: int = 1000, modes: int = 128, seed: int = 20101, decay: float = 2.0,
                    potential: PotentialParams | None = None) -> LipschitzTable:
    """Largest empirical constants over random smooth fields and pairs."""
    potential = potential or PotentialParams()
    basis = EigenBasis(modes)
    u = random_smooth_fields(basis, sample_count, seed, 0, decay)
    v = random_smooth_fields(basis, sample_count, seed, 1, decay)
    ratios = lipschitz_ratios(u, v, basis, potential)
    zero = lipschitz_ratios(u, np.zeros_like(u), basis, potential)
    growth = cubic_growth_ratios(u, basis, potential)
    skipped = int(np.isnan(ratios).sum())
    return LipschitzTable(
        modes, sample_count, skipped, float(np.nanmax(ratios)), float(np.nanmax(zero)), float(growth.max()), seed
    )


@dataclass(frozen=True)
class LipschitzStability:
    coarse: LipschitzTable
    fine: LipschitzTable

    @property
    def drift(self) -> float:
        return abs(self.fine.constant - self.coarse.constant) / self.coarse.constant

    @property
    def growth_drift(self) -> float:
        return abs(self.fine.growth_constant - self.coarse.growth_constant) / self.coarse.growth_constant

    @property
    def passed(self) -> bool:
        values = [getattr(t, a) for t in (self.coarse, self.fine) for a in ("constant", "zero_constant", "growth_constant")]
        return all(map(math.isfinite, values)) and max(self.drift, self.growth_drift) <= LIPSCHITZ_MAX_DRIFT


def lipschitz_experiment(cfg: RunConfig) -> LipschitzStability:
    """Probe at ``M`` and ``2M`` with the same seed."""
    args = dict(sample_count=cfg.lipschitz_samples, seed=cfg.seed, decay=cfg.lipschitz_decay, potential=cfg.potential)
    return LipschitzStability(lipschitz_probe(modes=cfg.modes, **args), lipschitz_probe(modes=2 * cfg.modes, **args))


# ---------------------------------------------------------------- smoothing


def smoothing_experiment(cfg: RunConfig, t_final: float = 1.0, decay: float = 4.0) -> RateReport:
    """``|(R^n - E(t_n)) v|`` at fixed ``t_n`` for smooth ``v`` with
    coefficients ``k^{-decay}``, fitted against ``dt``."""
    basis = cfg.basis
    v = power_law_field(basis, decay)
    levels = []
    for dt in sorted(cfg.smoothing_dt_levels, reverse=True):
        n = step_count(t_final, dt)
        levels.append((float(dt), float(deterministic_error_apply(v, dt, n).norm())))
    meta = dict(M=cfg.modes, t_final=t_final, decay=decay)
    return fit_rate(levels, meta) if len(levels) > 1 else unfitted(levels, meta)


# ---------------------------------------------------------------- simulate


def simulate_experiment(cfg: RunConfig, u0=None) -> Trajectory:
    """Batched trajectories at the finest configured level."""
    dt = min(cfg.dt_levels)
    n = step_count(cfg.T, dt)
    records = sample_batch(cfg.noise, dt, n, cfg.seed, range(cfg.path_count))
    u0 = default_initial(cfg.basis) if u0 is None else u0
    return simulate_records(u0, records, dt, cfg.potential, cfg.basis, 1, cfg.newton_tol, cfg.newton_max, cfg.padded)
