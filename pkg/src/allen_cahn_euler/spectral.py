"""Dirichlet Laplacian on the unit interval in its sine eigenbasis.

The operator ``A = -d^2/dx^2`` with homogeneous Dirichlet conditions has
eigenpairs ``lambda_k = (k pi)^2`` and ``e_k(x) = sqrt(2) sin(k pi x)``.
Everything here is diagonal in that basis, so functions of ``A`` act
coefficient-wise.  Coefficient arrays may carry leading batch axes; the
mode axis is always the last one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BasisMismatch


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def sine_matrix(modes: int, points: int) -> np.ndarray:
    """``S[k-1, i-1] = sqrt(2) sin(k pi x_i)`` with ``x_i = i / (points + 1)``."""
    k = np.arange(1, modes + 1)[:, None]
    i = np.arange(1, points + 1)[None, :]
    return np.sqrt(2.0) * np.sin(np.pi * k * i / (points + 1))


@dataclass(frozen=True)
class EigenBasis:
    """First ``mode_count`` Dirichlet eigenpairs plus the collocation grid.

    Two bases compare equal when they have the same mode count, which fully
    determines them.
    """

    mode_count: int

    def __post_init__(self):
        if not isinstance(self.mode_count, (int, np.integer)) or self.mode_count < 1:
            raise ValueError(f"mode_count must be a positive integer, got {self.mode_count!r}")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        k = np.arange(1, self.mode_count + 1, dtype=np.float64)
        return _frozen((k * np.pi) ** 2)

    @cached_property
    def grid_points(self) -> np.ndarray:
        return _frozen(np.arange(1, self.mode_count + 1) / (self.mode_count + 1))

    @property
    def weight(self) -> float:
        return 1.0 / (self.mode_count + 1)

    @cached_property
    def synthesis(self) -> np.ndarray:
        # symmetric, and synthesis @ synthesis = (M + 1) I
        return _frozen(sine_matrix(self.mode_count, self.mode_count))

    def field(self, coefficients) -> "SpectralField":
        return SpectralField(coefficients, self)

    def zeros(self, *batch: int) -> "SpectralField":
        return SpectralField(np.zeros(batch + (self.mode_count,)), self)

    def unit(self, k: int) -> "SpectralField":
        """The eigenfunction ``e_k`` (1-based)."""
        c = np.zeros(self.mode_count)
        c[k - 1] = 1.0
        return SpectralField(c, self)


def build_basis(M: int) -> EigenBasis:
    return EigenBasis(int(M) if isinstance(M, (int, np.integer)) else M)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A function (or a stack of functions) given by sine coefficients."""

    coefficients: np.ndarray
    basis: EigenBasis = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=np.float64)
        if c.ndim == 0 or c.shape[-1] != self.basis.mode_count:
            raise ValueError(
                f"coefficient array of shape {c.shape} does not match "
                f"{self.basis.mode_count} modes"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("spectral field has non-finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def _check(self, other: "SpectralField") -> None:
        if not isinstance(other, SpectralField):
            raise TypeError(f"expected SpectralField, got {type(other).__name__}")
        if other.basis != self.basis:
            raise BasisMismatch(
                f"fields live in different bases ({self.basis.mode_count} "
                f"vs {other.basis.mode_count} modes)"
            )

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.coefficients + other.coefficients, self.basis)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.coefficients - other.coefficients, self.basis)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coefficients * float(scalar), self.basis)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coefficients, self.basis)

    def allclose(self, other: "SpectralField", atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.coefficients, other.coefficients, rtol=0.0, atol=atol))

    def norm(self, beta: float = 0.0):
        return sobolev_norm(self, beta)


def apply_fractional_power(v: SpectralField, s: float) -> SpectralField:
    """``A^s v``: coefficient ``k`` becomes ``lambda_k^s v_k``."""
    return SpectralField(v.basis.eigenvalues**s * v.coefficients, v.basis)


def sobolev_norm(v: SpectralField, beta: float):
    """``|v|_beta = |A^{beta/2} v|``; returns an array for batched fields."""
    lam = v.basis.eigenvalues
    return np.sqrt(np.sum(lam**beta * v.coefficients**2, axis=-1))


def semigroup_apply(v: SpectralField, t: float) -> SpectralField:
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t}")
    return SpectralField(np.exp(-v.basis.eigenvalues * t) * v.coefficients, v.basis)


def resolvent_factor(basis: EigenBasis, dt: float) -> np.ndarray:
    """Per-mode ``(1 + dt lambda_k)^{-1}``."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return 1.0 / (1.0 + dt * basis.eigenvalues)


def resolvent_power_apply(v: SpectralField, dt: float, n: int) -> SpectralField:
    """Backward Euler propagator ``(I + dt A)^{-n} v``."""
    if n < 0:
        raise ValueError(f"power must be nonnegative, got {n}")
    return SpectralField(resolvent_factor(v.basis, dt) ** n * v.coefficients, v.basis)


def deterministic_error_factor(lam, dt: float, n: int):
    """``exp(-lambda n dt) - (1 + dt lambda)^{-n}`` for scalar or array ``lam``."""
    lam = np.asarray(lam, dtype=np.float64)
    return np.exp(-lam * n * dt) - (1.0 + dt * lam) ** (-float(n))


def deterministic_error_apply(v: SpectralField, dt: float, n: int) -> SpectralField:
    """Apply ``E(t_n) - (I + dt A)^{-n}``, the error of backward Euler on the
    homogeneous linear problem after ``n`` steps."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n < 1:
        raise ValueError(f"step count must be at least 1, got {n}")
    return SpectralField(
        deterministic_error_factor(v.basis.eigenvalues, dt, n) * v.coefficients, v.basis
    )


def to_grid(v: SpectralField) -> np.ndarray:
    """Point values at the interior collocation points ``x_i = i/(M+1)``."""
    return v.coefficients @ v.basis.synthesis


def from_grid(values, basis: EigenBasis) -> SpectralField:
    """Inverse of :func:`to_grid` (discrete sine transform, type I)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0 or values.shape[-1] != basis.mode_count:
        raise ValueError(
            f"grid array of length {values.shape[-1] if values.ndim else 0} "
            f"does not match {basis.mode_count} points"
        )
    return SpectralField(basis.weight * (values @ basis.synthesis), basis)


def fast_to_grid(v: SpectralField) -> np.ndarray:
    """Same contract as :func:`to_grid`, via an FFT-based sine transform."""
    from scipy.fft import dst

    return dst(v.coefficients, type=1, axis=-1) / np.sqrt(2.0)


def fast_from_grid(values, basis: EigenBasis) -> SpectralField:
    from scipy.fft import dst

    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != basis.mode_count:
        raise ValueError("grid length does not match basis")
    return SpectralField(basis.weight * dst(values, type=1, axis=-1) / np.sqrt(2.0), basis)


def grid_l2_norm(values, basis: EigenBasis):
    """Quadrature L2 norm of grid values; equals ``sobolev_norm(v, 0)``."""
    values = np.asarray(values, dtype=np.float64)
    return np.sqrt(basis.weight * np.sum(values**2, axis=-1))


def power_law_field(basis: EigenBasis, decay: float, h1_norm: float | None = None) -> SpectralField:
    """Coefficients ``k^{-decay}``, optionally rescaled to a given ``|.|_1``."""
    k = np.arange(1, basis.mode_count + 1, dtype=np.float64)
    v = SpectralField(k**-decay, basis)
    if h1_norm is not None:
        v = v * (h1_norm / sobolev_norm(v, 1.0))
    return v
