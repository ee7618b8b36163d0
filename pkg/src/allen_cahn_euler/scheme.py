"""Fully implicit backward Euler for the stochastic Allen-Cahn equation.

Each step solves ``u + dt A u + dt f(u) = u_prev + dW`` for ``u`` by Newton's
method.  The linear part is diagonal in sine coefficients; the cubic
``f(s) = 4 c s (s^2 - beta^2)`` and its derivative are evaluated on the
collocation grid.  All solver routines accept a leading batch axis so that
many independent paths advance together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NewtonDivergence, ProvenanceMismatch
from .noise import WienerRecord, coarsen, dyadic_factor, stack_increments
from .spectral import EigenBasis, SpectralField, power_law_field, sine_matrix


@dataclass(frozen=True)
class PotentialParams:
    """Double well ``F(s) = c (s^2 - beta_dw^2)^2``."""

    c: float = 1.0
    beta_dw: float = 1.0

    def __post_init__(self):
        if not (self.c > 0 and self.beta_dw > 0):
            raise ValueError(f"potential needs c > 0 and beta_dw > 0, got {self.c}, {self.beta_dw}")

    @property
    def one_sided_constant(self) -> float:
        """``L`` with ``f'(s) >= -L`` for all ``s``."""
        return 4.0 * self.c * self.beta_dw**2

    @property
    def dissipativity_constant(self) -> float:
        """``C`` with ``s f(s) >= -C``; the minimum sits at ``s^2 = beta^2/2``."""
        return self.c * self.beta_dw**4

    def F(self, s):
        return self.c * (s * s - self.beta_dw**2) ** 2

    def f(self, s):
        return 4.0 * self.c * s * (s * s - self.beta_dw**2)

    def f_prime(self, s):
        return 4.0 * self.c * (3.0 * s * s - self.beta_dw**2)


def f_eval(grid_values, potential: PotentialParams) -> np.ndarray:
    return potential.f(np.asarray(grid_values, dtype=np.float64))


def f_prime_eval(grid_values, potential: PotentialParams) -> np.ndarray:
    return potential.f_prime(np.asarray(grid_values, dtype=np.float64))


@dataclass(frozen=True)
class SchemeParams:
    dt: float
    step_count: int
    newton_tol: float = 1e-10
    newton_max: int = 25

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.step_count < 0:
            raise ValueError("step_count must be nonnegative")
        if not (self.newton_tol > 0 and self.newton_max >= 1):
            raise ValueError("Newton tolerance and iteration cap must be positive")

    @property
    def T(self) -> float:
        return self.step_count * self.dt

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.step_count + 1)

    def check_window(self, potential: PotentialParams) -> None:
        """Require ``dt * 4 c beta^2 < 1`` so the step map is strongly monotone."""
        if not self.dt * potential.one_sided_constant < 1.0:
            raise ValueError(
                f"dt={self.dt!r} is outside the solvability window: "
                f"dt*4c*beta^2 = {self.dt * potential.one_sided_constant:g} >= 1"
            )


class Collocation:
    """Coefficient <-> grid maps used to evaluate the nonlinearity.

    With ``padded=True`` the grid has ``2M + 1`` points, which suppresses
    most of the aliasing of the cubic term.
    """

    def __init__(self, basis: EigenBasis, padded: bool = False):
        self.basis = basis
        self.padded = padded
        points = 2 * basis.mode_count + 1 if padded else basis.mode_count
        self.points = points
        self._to = basis.synthesis if not padded else sine_matrix(basis.mode_count, points)
        self._from = self._to.T / (points + 1)

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs @ self._to

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        return values @ self._from

    def nonlinearity(self, coeffs: np.ndarray, potential: PotentialParams) -> np.ndarray:
        """Coefficients of ``f(u)``."""
        return self.from_grid(potential.f(self.to_grid(coeffs)))


def _pcg(apply, rhs: np.ndarray, minv: np.ndarray, tol: float, maxiter: int):
    """Batched preconditioned CG for SPD ``apply``; rows are independent
    systems.  Stops when every row has ``|rhs - apply(x)| <= tol``."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = minv * r
    p = z.copy()
    rz = np.sum(r * z, axis=-1)
    for it in range(maxiter + 1):
        rn = np.sqrt(np.sum(r * r, axis=-1))
        live = rn > tol
        if not live.any():
            return x, it
        ap = apply(p)
        pap = np.sum(p * ap, axis=-1)
        alpha = np.where(live, rz / np.where(live, pap, 1.0), 0.0)
        x += alpha[:, None] * p
        r -= alpha[:, None] * ap
        z = minv * r
        rz_new = np.sum(r * z, axis=-1)
        beta = np.where(live, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
        p = z + beta[:, None] * p
        rz = rz_new
    raise NewtonDivergence(f"inner CG did not reach {tol:g} in {maxiter} iterations")


def _dense_solve(colloc: Collocation, diag, dt, fp, rhs):
    # J = diag + dt * From diag(f') To, formed explicitly per row
    out = np.empty_like(rhs)
    for i in range(rhs.shape[0]):
        jac = np.diag(diag) + dt * (colloc._to * fp[i][None, :]) @ colloc._from
        out[i] = np.linalg.solve(jac, rhs[i])
    return out


def newton_solve(
    colloc: Collocation,
    dt: float,
    potential: PotentialParams,
    rhs: np.ndarray,
    guess: np.ndarray,
    tol: float = 1e-10,
    maxit: int = 25,
    linear_solver: str = "cg",
    history: bool = False,
):
    """Solve ``(1 + dt lambda) u + dt f(u) = rhs`` row-wise by Newton.

    Parameters
    ----------
    rhs, guess : array, shape (P, M)
    linear_solver : {"cg", "dense"}
        Jacobian solves by preconditioned CG (to ``tol / 10``) or by
        assembling the ``M x M`` matrix.

    Returns
    -------
    u, iterations, residual_norms[, residual_history]

    Raises
    ------
    NewtonDivergence
        If some row misses ``tol`` after ``maxit`` iterations.
    """
    diag = 1.0 + dt * colloc.basis.eigenvalues
    minv = 1.0 / diag
    u = np.array(guess, dtype=np.float64, copy=True)
    rhs = np.asarray(rhs, dtype=np.float64)

    def residual(v, b):
        g = colloc.to_grid(v)
        return diag * v + dt * colloc.from_grid(potential.f(g)) - b, g

    res, grid = residual(u, rhs)
    rn = np.sqrt(np.sum(res * res, axis=-1))
    iters = np.zeros(len(u), dtype=int)
    hist = [rn.copy()]
    active = np.flatnonzero(rn > tol)
    for it in range(1, maxit + 1):
        if active.size == 0:
            break
        fp = potential.f_prime(grid[active])
        if linear_solver == "dense":
            delta = _dense_solve(colloc, diag, dt, fp, -res[active])
        else:
            jac = lambda x: diag * x + dt * colloc.from_grid(fp * colloc.to_grid(x))  # noqa: E731
            delta, _ = _pcg(jac, -res[active], minv, tol / 10.0, maxiter=4 * len(diag))
        u[active] += delta
        r_a, g_a = residual(u[active], rhs[active])
        res[active] = r_a
        grid[active] = g_a
        rn[active] = np.sqrt(np.sum(r_a * r_a, axis=-1))
        iters[active] = it
        hist.append(rn.copy())
        active = active[rn[active] > tol]
    if active.size:
        raise NewtonDivergence(
            f"Newton residual {rn[active].max():.3e} above tol {tol:g} after {maxit} iterations",
            residual=float(rn[active].max()),
        )
    if history:
        return u, iters, rn, np.array(hist)
    return u, iters, rn


@dataclass(frozen=True)
class StepDiagnostics:
    iterations: int
    residual: float
    residual_history: tuple = ()


def backward_euler_step(
    u_prev: SpectralField,
    dW: SpectralField,
    scheme: SchemeParams,
    potential: PotentialParams,
    basis: EigenBasis,
    padded: bool = False,
    linear_solver: str = "cg",
):
    """One implicit step ``u + dt A u + dt f(u) = u_prev + dW``.

    Newton starts from ``u_prev``.  Returns the new state and a
    :class:`StepDiagnostics` with the full residual history.
    """
    scheme.check_window(potential)
    u_prev._check(dW)
    if u_prev.basis != basis:
        raise ValueError("state does not live in the given basis")
    colloc = Collocation(basis, padded)
    prev = np.atleast_2d(u_prev.coefficients)
    rhs = prev + np.atleast_2d(dW.coefficients)
    u, iters, rn, hist = newton_solve(
        colloc, scheme.dt, potential, rhs, prev, scheme.newton_tol, scheme.newton_max, linear_solver, history=True
    )
    diag = StepDiagnostics(int(iters.max()), float(rn.max()), tuple(float(h.max()) for h in hist))
    return SpectralField(u.reshape(u_prev.coefficients.shape), basis), diag


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``u^0..u^N`` (or every ``stride``-th of them).

    ``states`` has shape ``(n_stored, M)`` for one path or
    ``(n_stored, P, M)`` for a batch.  ``iterations`` and ``residuals`` hold
    per-step Newton diagnostics, shape ``(N,)`` or ``(N, P)``.
    """

    states: np.ndarray = field(repr=False)
    dt: float
    stride: int
    basis: EigenBasis
    iterations: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    seed: int | None = None
    paths: tuple = ()

    @property
    def step_count(self) -> int:
        return self.iterations.shape[0]

    @property
    def store_dt(self) -> float:
        return self.dt * self.stride

    @property
    def times(self) -> np.ndarray:
        return self.store_dt * np.arange(self.states.shape[0])

    @property
    def T(self) -> float:
        return self.dt * self.step_count

    @property
    def provenance(self) -> tuple:
        return (self.seed, self.paths)

    def state(self, i: int) -> SpectralField:
        return SpectralField(self.states[i], self.basis)

    def norms(self, beta: float = 0.0) -> np.ndarray:
        return np.sqrt(np.sum(self.basis.eigenvalues**beta * self.states**2, axis=-1))

    def path(self, j: int) -> "Trajectory":
        """Single path ``j`` of a batched trajectory."""
        return Trajectory(
            self.states[:, j], self.dt, self.stride, self.basis, self.iterations[:, j], self.residuals[:, j],
            self.seed, (self.paths[j],) if self.paths else (),
        )


def default_initial(basis: EigenBasis) -> SpectralField:
    """Coefficients ``k^{-3}`` scaled to ``|u0|_1 = 1``."""
    return power_law_field(basis, 3.0, h1_norm=1.0)


def simulate_path(
    u0,
    increments,
    scheme: SchemeParams,
    potential: PotentialParams,
    basis: EigenBasis,
    stride: int = 1,
    padded: bool = False,
    linear_solver: str = "cg",
    seed: int | None = None,
    paths: tuple = (),
) -> Trajectory:
    """March the scheme through the given increments.

    Parameters
    ----------
    u0 : SpectralField or array, shape (M,) or (P, M)
    increments : array, shape (M, N) or (P, M, N)
        Noise increments at step ``scheme.dt``; ``N`` must equal
        ``scheme.step_count``.
    stride : int
        Keep every ``stride``-th state (``N`` must be a multiple).

    Raises
    ------
    NewtonDivergence
        With ``.step`` set to the failing (1-based) step index.
    """
    scheme.check_window(potential)
    inc = np.asarray(increments, dtype=np.float64)
    single = inc.ndim == 2
    if single:
        inc = inc[None]
    P, M, N = inc.shape
    if M != basis.mode_count:
        raise ValueError(f"increments have {M} modes, basis has {basis.mode_count}")
    if N != scheme.step_count:
        raise ValueError(f"got {N} increments for {scheme.step_count} steps")
    if N % stride:
        raise ValueError(f"stride {stride} does not divide {N} steps")
    c0 = u0.coefficients if isinstance(u0, SpectralField) else np.asarray(u0, dtype=np.float64)
    u = np.broadcast_to(c0, (P, M)).copy()

    colloc = Collocation(basis, padded)
    states = np.empty((N // stride + 1, P, M))
    states[0] = u
    iters = np.zeros((N, P), dtype=np.int16)
    resid = np.zeros((N, P))
    dW = np.ascontiguousarray(np.moveaxis(inc, -1, 0))  # (N, P, M)
    for j in range(N):
        try:
            u, it, rn = newton_solve(
                colloc, scheme.dt, potential, u + dW[j], u, scheme.newton_tol, scheme.newton_max, linear_solver
            )
        except NewtonDivergence as exc:
            raise NewtonDivergence(f"step {j + 1}: {exc}", step=j + 1, residual=exc.residual) from exc
        iters[j] = it
        resid[j] = rn
        if (j + 1) % stride == 0:
            states[(j + 1) // stride] = u
    if single:
        states, iters, resid = states[:, 0], iters[:, 0], resid[:, 0]
    return Trajectory(states, scheme.dt, stride, basis, iters, resid, seed, tuple(paths))


def simulate_records(
    u0,
    records,
    dt: float,
    potential: PotentialParams,
    basis: EigenBasis,
    stride: int = 1,
    newton_tol: float = 1e-10,
    newton_max: int = 25,
    padded: bool = False,
) -> Trajectory:
    """Batched run at step ``dt`` driven by coarsened fine-level records."""
    records = list(records)
    fine = records[0].fine_dt
    factor = dyadic_factor(dt, fine)
    seeds = {r.seed for r in records}
    if len(seeds) != 1:
        raise ProvenanceMismatch("records in one batch must share a master seed")
    inc = coarsen(stack_increments(records), factor)
    scheme = SchemeParams(dt, inc.shape[-1], newton_tol, newton_max)
    return simulate_path(
        u0, inc, scheme, potential, basis, stride=stride, padded=padded,
        seed=seeds.pop(), paths=tuple(r.path for r in records),
    )


def reference_solution(
    u0,
    record,
    scheme: SchemeParams,
    potential: PotentialParams,
    basis: EigenBasis,
    stride: int = 1,
    padded: bool = False,
) -> Trajectory:
    """Backward Euler at the finest level, used in place of the exact solution.

    ``record`` is a :class:`WienerRecord` or a list of them (batch); its step
    must equal ``scheme.dt``.
    """
    records = [record] if isinstance(record, WienerRecord) else list(record)
    if any(not math.isclose(r.fine_dt, scheme.dt, rel_tol=1e-12) for r in records):
        raise ValueError("reference must run at the record's fine step")
    traj = simulate_records(
        u0, records, scheme.dt, potential, basis, stride, scheme.newton_tol, scheme.newton_max, padded
    )
    if isinstance(record, WienerRecord):
        return traj.path(0)
    return traj


def write_trajectory_csv(traj: Trajectory, path, modes=(1, 2, 3), header: str = "") -> Path:
    """Columns ``t, u_k..., norm_l2, norm_h1`` for a single-path trajectory."""
    path = Path(path)
    if traj.states.ndim != 2:
        raise ValueError("export one path at a time")
    modes = [k for k in modes if k <= traj.basis.mode_count]
    cols = [traj.times] + [traj.states[:, k - 1] for k in modes] + [traj.norms(0.0), traj.norms(1.0)]
    names = ["t"] + [f"u_{k}" for k in modes] + ["norm_l2", "norm_h1"]
    lines = [f"# {line}" for line in header.splitlines()] if header else []
    lines.append(",".join(names))
    for row in zip(*cols):
        lines.append(",".join(f"{v:.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def save_trajectory(traj: Trajectory, path) -> Path:
    """Full-state binary dump (``.npz``) for replay."""
    path = Path(path)
    np.savez(
        path, states=traj.states, dt=traj.dt, stride=traj.stride, modes=traj.basis.mode_count,
        iterations=traj.iterations, residuals=traj.residuals,
        seed=-1 if traj.seed is None else traj.seed, paths=np.array(traj.paths, dtype=int),
    )
    return path


def load_trajectory(path) -> Trajectory:
    with np.load(path) as z:
        seed = int(z["seed"])
        return Trajectory(
            z["states"], float(z["dt"]), int(z["stride"]), EigenBasis(int(z["modes"])), z["iterations"],
            z["residuals"], None if seed < 0 else seed, tuple(int(p) for p in z["paths"]),
        )
