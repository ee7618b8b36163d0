"""Q-Wiener noise diagonal in the sine eigenbasis.

The covariance is ``Q = q0 A^{-2r}``, i.e. ``Q^{1/2} = sqrt(q0) A^{-r}`` and
``q_k = q0 lambda_k^{-2r}``.  Randomness is drawn from one Philox stream per
(path, mode, purpose), all derived from a master seed, so the samples of a
given mode do not depend on how many modes are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import EigenBasis

RNG_ALGORITHM = "Philox"

# stream purposes
_INCREMENTS = 0
_CONVOLUTION = 1


@dataclass(frozen=True)
class NoiseSpec:
    decay_exponent: float
    amplitude: float
    mode_count: int

    def __post_init__(self):
        if self.decay_exponent < 0:
            raise ValueError(f"decay exponent r must be >= 0, got {self.decay_exponent}")
        if not self.amplitude > 0:
            raise ValueError(f"noise amplitude q0 must be positive, got {self.amplitude}")
        if self.mode_count < 1:
            raise ValueError("mode_count must be positive")

    @property
    def eigenvalues(self) -> np.ndarray:
        """``q_k`` for ``k = 1..M``."""
        lam = EigenBasis(self.mode_count).eigenvalues
        return self.amplitude * lam ** (-2.0 * self.decay_exponent)

    def hs_norm(self, s: float) -> "HSNorm":
        return hs_norm(self, s)


@dataclass(frozen=True)
class HSNorm:
    """Truncated ``|A^s Q^{1/2}|_HS`` and whether the full series converges."""

    value: float
    converges: bool
    exponent: float  # summand ~ k**exponent

    def __float__(self):
        return self.value


def hs_norm(spec: NoiseSpec, s: float) -> HSNorm:
    """Hilbert-Schmidt norm of ``A^s Q^{1/2}`` over the kept modes.

    The summands behave like ``k^{4s - 4r}``; the series converges iff that
    exponent is below ``-1``.
    """
    lam = EigenBasis(spec.mode_count).eigenvalues
    value = math.sqrt(float(np.sum(lam ** (2.0 * s) * spec.eigenvalues)))
    exponent = 4.0 * s - 4.0 * spec.decay_exponent
    return HSNorm(value, exponent < -1.0, exponent)


def stream(seed: int, path: int, mode: int, purpose: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path), int(mode), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


def _normals(seed: int, path: int, modes: int, count: int, purpose: int) -> np.ndarray:
    out = np.empty((modes, count))
    for k in range(modes):
        out[k] = stream(seed, path, k, purpose).standard_normal(count)
    return out


@dataclass(frozen=True, eq=False)
class WienerRecord:
    """Finest-level increments of one noise path, shape ``(M, N_f)``."""

    fine_dt: float
    increments: np.ndarray = field(repr=False)
    seed: int
    path: int = 0
    spec: NoiseSpec | None = None

    def __post_init__(self):
        inc = np.array(self.increments, dtype=np.float64)
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def fine_count(self) -> int:
        return self.increments.shape[-1]

    @property
    def mode_count(self) -> int:
        return self.increments.shape[0]

    @property
    def provenance(self) -> tuple:
        return (self.seed, self.path)


def sample_increments(spec: NoiseSpec, fine_dt: float, fine_count: int, seed: int, path: int = 0) -> WienerRecord:
    """Draw ``Delta W`` for ``fine_count`` steps of size ``fine_dt``.

    Mode ``k`` increments are i.i.d. ``N(0, fine_dt q_k)``.  Equal
    ``(spec, seed, path)`` give bit-identical records.
    """
    if not fine_dt > 0:
        raise ValueError(f"fine_dt must be positive, got {fine_dt}")
    if fine_count < 0:
        raise ValueError("fine_count must be nonnegative")
    z = _normals(seed, path, spec.mode_count, fine_count, _INCREMENTS)
    scale = np.sqrt(fine_dt * spec.eigenvalues)[:, None]
    return WienerRecord(fine_dt, scale * z, seed, path, spec)


def sample_batch(spec: NoiseSpec, fine_dt: float, fine_count: int, seed: int, paths) -> list[WienerRecord]:
    return [sample_increments(spec, fine_dt, fine_count, seed, p) for p in paths]


def stack_increments(records) -> np.ndarray:
    """``(P, M, N_f)`` array from a sequence of records."""
    return np.stack([r.increments for r in records])


def _halve(a: np.ndarray) -> np.ndarray:
    return a[..., 0::2] + a[..., 1::2]


def coarsen(record, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments along the last axis.

    Powers of two are summed as a pairwise tree, so coarsening by 2 twice is
    bit-identical to coarsening by 4.  Accepts a record or a plain array.
    """
    inc = record.increments if isinstance(record, WienerRecord) else np.asarray(record)
    factor = int(factor)
    n = inc.shape[-1]
    if factor < 1 or n % factor:
        raise ValueError(f"coarsening factor {factor} does not divide {n} fine steps")
    out = inc
    while factor % 2 == 0:
        out = _halve(out)
        factor //= 2
    if factor > 1:
        out = out.reshape(out.shape[:-1] + (-1, factor)).sum(axis=-1)
    return out if out is not inc else inc.copy()


def _cond_var_ratio(x: np.ndarray) -> np.ndarray:
    # (1 - e^{-2x})/(2x) - ((1 - e^{-x})/x)^2, series near 0 to dodge cancellation
    x = np.asarray(x, dtype=np.float64)
    small = x < 0.05
    xs = np.where(small, x, 0.0)
    series = xs**2 * (
        1 / 12 - xs / 12 + 17 * xs**2 / 360 - 7 * xs**3 / 360 + 43 * xs**4 / 6720 - 107 * xs**5 / 60480
    )
    xl = np.where(small, 1.0, x)
    direct = -np.expm1(-2 * xl) / (2 * xl) - (np.expm1(-xl) / xl) ** 2
    return np.where(small, series, np.maximum(direct, 0.0))


def _phi(x: np.ndarray, scale: float = 1.0) -> np.ndarray:
    # (1 - e^{-scale x}) / x with the limit `scale` at x = 0
    x = np.asarray(x, dtype=np.float64)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, -np.expm1(-scale * safe) / safe, scale)


def ou_substep_moments(q, lam, dt):
    """Joint law of ``X = W(dt)`` and ``Y = int_0^dt e^{-lam (dt - s)} dW(s)``.

    Returns ``(var_x, var_y, cov_xy)`` per mode; the ``lam -> 0`` limit is
    handled exactly (``Y -> X``).
    """
    q = np.asarray(q, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    var_x = q * dt
    var_y = q * _phi(lam, 2.0 * dt) / 2.0
    cov = q * _phi(lam, dt)
    return var_x, var_y, cov


@dataclass(frozen=True, eq=False)
class OUCoupledPath:
    """Exact stochastic convolution ``W_A`` at the fine times ``j fine_dt``.

    ``values`` has shape ``(M, N_f + 1)``; column 0 is ``W_A(0) = 0``.
    """

    values: np.ndarray = field(repr=False)
    fine_dt: float
    decay: np.ndarray = field(repr=False)  # e^{-lambda_k fine_dt}
    substep: np.ndarray = field(repr=False)  # the Y_{j,k}
    provenance: tuple = ()

    def at_factor(self, factor: int) -> np.ndarray:
        """Values at every ``factor``-th fine time (coarse grid incl. t = 0)."""
        return self.values[..., ::factor]


def coupled_convolution(increments: np.ndarray, normals: np.ndarray, q: np.ndarray, lam: np.ndarray, dt: float):
    """Exact coupled ``W_A`` for arrays shaped ``(..., M, N_f)``.

    ``normals`` are independent standard normals used for the part of each
    substep integral not explained by its increment.  Returns
    ``(values, substep_integrals, decay)``.
    """
    var_x, var_y, cov = ou_substep_moments(q, lam, dt)
    slope = (cov / var_x)[:, None]
    cond_sd = np.sqrt(var_x * _cond_var_ratio(lam * dt))[:, None]
    y = slope * increments + cond_sd * normals
    decay = np.exp(-lam * dt)
    values = np.zeros(increments.shape[:-1] + (increments.shape[-1] + 1,))
    for j in range(increments.shape[-1]):
        values[..., j + 1] = decay * values[..., j] + y[..., j]
    return values, y, decay


def convolution_normals(record: WienerRecord) -> np.ndarray:
    return _normals(record.seed, record.path, record.mode_count, record.fine_count, _CONVOLUTION)


def sample_coupled_convolution(record: WienerRecord, basis: EigenBasis) -> OUCoupledPath:
    """Exact ``W_A(t_j) = int_0^{t_j} E(t_j - s) dW(s)`` driven by ``record``.

    Each substep integral is drawn from its Gaussian law conditional on the
    recorded increment, then the recursion
    ``W_A(t_j) = e^{-lambda dt} W_A(t_{j-1}) + Y_j`` is advanced.
    """
    if record.mode_count != basis.mode_count:
        raise ValueError(
            f"record has {record.mode_count} modes but basis has {basis.mode_count}"
        )
    if record.spec is None:
        raise ValueError("record carries no NoiseSpec; cannot recover q_k")
    values, y, decay = coupled_convolution(
        record.increments, convolution_normals(record), record.spec.eigenvalues, basis.eigenvalues, record.fine_dt
    )
    return OUCoupledPath(values, record.fine_dt, decay, y, record.provenance)


def save_record(record: WienerRecord, path) -> Path:
    """Text dump: ``#`` header with M, N_f, fine_dt, seed, then one row per mode."""
    path = Path(path)
    header = [
        f"M={record.mode_count}",
        f"N_f={record.fine_count}",
        f"fine_dt={record.fine_dt!r}",
        f"seed={record.seed}",
        f"path={record.path}",
        f"rng={RNG_ALGORITHM}",
    ]
    if record.spec is not None:
        header += [f"r={record.spec.decay_exponent!r}", f"q0={record.spec.amplitude!r}"]
    np.savetxt(path, record.increments, fmt="%.17g", delimiter=",", header="\n".join(header))
    return path


def load_record(path) -> WienerRecord:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
    m, n = int(meta["M"]), int(meta["N_f"])
    data = np.loadtxt(path, delimiter=",", ndmin=2) if n else np.zeros((m, 0))
    data = data.reshape(m, n)
    spec = None
    if "r" in meta:
        spec = NoiseSpec(float(meta["r"]), float(meta["q0"]), m)
    return WienerRecord(float(meta["fine_dt"]), data, int(meta["seed"]), int(meta.get("path", 0)), spec)


def step_count(T: float, dt: float) -> int:
    """``N`` with ``N dt = T`` to 1e-12, or ValueError."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-12 * max(1.0, abs(T)):
        raise ValueError(f"T={T!r} is not an integer multiple of dt={dt!r}")
    return n


def dyadic_factor(dt: float, fine_dt: float) -> int:
    """Integer power of two ``dt / fine_dt``, or ValueError naming both."""
    ratio = dt / fine_dt
    factor = int(round(ratio))
    if factor < 1 or abs(factor - ratio) > 1e-9 * ratio or factor & (factor - 1):
        raise ValueError(f"dt={dt!r} is not a dyadic multiple of the fine level {fine_dt!r}")
    return factor
