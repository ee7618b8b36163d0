import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import root

from allen_cahn_euler.errors import NewtonDivergence, ProvenanceMismatch
from allen_cahn_euler.noise import NoiseSpec, coarsen, sample_batch, sample_increments, stack_increments
from allen_cahn_euler.scheme import (
    Collocation,
    PotentialParams,
    SchemeParams,
    backward_euler_step,
    default_initial,
    f_eval,
    f_prime_eval,
    load_trajectory,
    newton_solve,
    reference_solution,
    save_trajectory,
    simulate_path,
    simulate_records,
    write_trajectory_csv,
)
from allen_cahn_euler.spectral import EigenBasis, SpectralField, from_grid, sobolev_norm, to_grid


def test_potential_examples():
    pot = PotentialParams(1.0, 1.0)
    assert f_eval(2.0, pot) == 24.0
    s = np.linspace(-3, 3, 6001)
    assert f_prime_eval(s, pot).min() == pytest.approx(-4.0)
    assert s[np.argmin(f_prime_eval(s, pot))] == pytest.approx(0.0, abs=1e-12)
    assert np.all(f_eval(np.array([-1.0, 0.0, 1.0]), pot) == 0)
    assert pot.one_sided_constant == 4.0 and pot.dissipativity_constant == 1.0
    assert np.min(s * f_eval(s, pot)) >= -pot.dissipativity_constant
    assert pot.F(1.0) == 0.0 and pot.F(0.0) == 1.0
    with pytest.raises(ValueError):
        PotentialParams(0.0, 1.0)


def test_solvability_window():
    pot = PotentialParams(1.0, 1.0)
    SchemeParams(0.24, 1).check_window(pot)
    with pytest.raises(ValueError, match="solvability window"):
        SchemeParams(0.25, 1).check_window(pot)
    assert SchemeParams(0.125, 8).T == 1.0


@given(st.floats(1e-4, 0.249), st.lists(st.floats(-5, 5), min_size=8, max_size=8))
def test_linearisation_lower_bound(dt, values):
    pot = PotentialParams()
    assert np.min(1 + dt * f_prime_eval(np.array(values), pot)) >= 1 - dt * pot.one_sided_constant - 1e-15


def _residual(u, u_prev, dw, dt, pot, basis):
    # independent residual: spectral-core transforms only
    fu = from_grid(f_eval(to_grid(SpectralField(u, basis)), pot), basis).coefficients
    return u + dt * basis.eigenvalues * u + dt * fu - u_prev - dw


def test_linear_limit():
    b = EigenBasis(16)
    pot = PotentialParams(1e-9, 1.0)
    u, diag = backward_euler_step(b.unit(1), b.zeros(), SchemeParams(0.05, 1), pot, b)
    expected = 1 / (1 + 0.05 * b.eigenvalues[0])
    assert u.coefficients[0] == pytest.approx(expected, abs=1e-8)
    assert np.abs(u.coefficients[1:]).max() < 1e-8
    assert diag.residual <= 1e-10


def test_step_meets_residual_and_matches_scipy_root():
    b = EigenBasis(32)
    pot = PotentialParams()
    rng = np.random.default_rng(8)
    u_prev = rng.standard_normal(32) / np.arange(1, 33) ** 2
    dw = 0.1 * rng.standard_normal(32) / np.arange(1, 33)
    dt = 0.05
    u, diag = backward_euler_step(SpectralField(u_prev, b), SpectralField(dw, b), SchemeParams(dt, 1), pot, b)
    assert np.linalg.norm(_residual(u.coefficients, u_prev, dw, dt, pot, b)) <= 1e-10
    assert diag.iterations <= 8
    sol = root(lambda v: _residual(v, u_prev, dw, dt, pot, b), u_prev, tol=1e-14)
    assert np.max(np.abs(sol.x - u.coefficients)) < 1e-10


def test_dense_and_cg_agree():
    b = EigenBasis(24)
    pot = PotentialParams(2.0, 1.2)
    colloc = Collocation(b)
    rng = np.random.default_rng(2)
    rhs = rng.standard_normal((3, 24)) / np.arange(1, 25)
    args = (colloc, 0.02, pot, rhs, rhs, 1e-12, 25)
    u_cg, _, _ = newton_solve(*args, linear_solver="cg")
    u_dense, _, _ = newton_solve(*args, linear_solver="dense")
    assert np.max(np.abs(u_cg - u_dense)) < 1e-11


def test_quadratic_newton_contraction():
    b = EigenBasis(64)
    pot = PotentialParams()
    x = b.grid_points
    u_prev = from_grid(1.8 * np.sin(3 * np.pi * x) + 0.5, b)
    dw = SpectralField(0.3 * np.random.default_rng(0).standard_normal(64) / np.arange(1, 65), b)
    _, diag = backward_euler_step(u_prev, dw, SchemeParams(0.01, 1), pot, b)
    r = np.array(diag.residual_history)
    assert r[-1] <= 1e-10 and len(r) >= 4
    assert np.all(np.diff(r) < 0)
    big = r[:-1] > 1e-7  # above round-off
    k = r[1:][big] / r[:-1][big] ** 2
    assert k.max() < 10.0
    ratios = r[1:] / r[:-1]
    assert ratios[-1] < ratios[0]


def test_padded_collocation_is_a_transform_pair():
    b = EigenBasis(10)
    colloc = Collocation(b, padded=True)
    c = np.random.default_rng(1).standard_normal((2, 10))
    assert colloc.points == 21
    assert np.allclose(colloc.from_grid(colloc.to_grid(c)), c, atol=1e-13)


def test_zero_steps_returns_initial():
    b = EigenBasis(8)
    u0 = default_initial(b)
    traj = simulate_path(u0, np.zeros((8, 0)), SchemeParams(0.1, 0), PotentialParams(), b)
    assert traj.states.shape == (1, 8)
    assert np.array_equal(traj.states[0], u0.coefficients)
    assert sobolev_norm(u0, 1.0) == pytest.approx(1.0)


def test_zero_state_is_equilibrium():
    b = EigenBasis(8)
    traj = simulate_path(b.zeros(), np.zeros((8, 10)), SchemeParams(0.1, 10), PotentialParams(), b)
    assert np.all(traj.states == 0)


def test_deterministic_dissipativity():
    b = EigenBasis(32)
    pot = PotentialParams()
    u0 = SpectralField(3 * np.random.default_rng(5).standard_normal(32) / np.arange(1, 33), b)
    steps, dt = 40, 0.05
    traj = simulate_path(u0, np.zeros((32, steps)), SchemeParams(dt, steps), pot, b)
    bound = math.sqrt(u0.norm() ** 2 + 2 * pot.dissipativity_constant * steps * dt)
    assert traj.norms().max() <= bound


def test_a_priori_energy_inequality():
    b = EigenBasis(32)
    pot = PotentialParams()
    spec = NoiseSpec(1.0, 50.0, 32)
    recs = sample_batch(spec, 2.0**-7, 128, seed=4, paths=range(3))
    inc = stack_increments(recs)
    u0 = default_initial(b)
    dt = 2.0**-7
    traj = simulate_path(u0, inc, SchemeParams(dt, 128), pot, b, seed=4, paths=(0, 1, 2))
    u = traj.states  # (N+1, P, M)
    lam = b.eigenvalues
    du = np.diff(u, axis=0)
    lhs = np.sum(u[-1] ** 2, axis=-1) + np.sum(du**2, axis=(0, 2)) + 2 * dt * np.sum(lam * u[1:] ** 2, axis=(0, 2))
    noise = np.sum(np.moveaxis(inc, -1, 0) * u[1:], axis=(0, 2))
    rhs = np.sum(u[0] ** 2, axis=-1) + 2 * pot.dissipativity_constant * 1.0 + 2 * noise
    assert np.all(lhs <= rhs + 1e-8)


def test_newton_failure_reports_step():
    b = EigenBasis(16)
    inc = np.ones((16, 3))
    with pytest.raises(NewtonDivergence) as info:
        simulate_path(default_initial(b), inc, SchemeParams(0.1, 3, newton_tol=1e-14, newton_max=1), PotentialParams(), b)
    assert info.value.step == 1
    assert info.value.residual > 0


def test_batched_run_matches_single_paths():
    b = EigenBasis(16)
    spec = NoiseSpec(1.0, 10.0, 16)
    recs = sample_batch(spec, 2.0**-6, 64, seed=9, paths=[0, 1])
    batch = simulate_records(default_initial(b), recs, 2.0**-5, PotentialParams(), b)
    for j, rec in enumerate(recs):
        single = simulate_path(default_initial(b), coarsen(rec, 2), SchemeParams(2.0**-5, 32), PotentialParams(), b)
        assert np.allclose(batch.states[:, j], single.states, atol=1e-12)
    assert batch.provenance == (9, (0, 1))


def test_mixed_seeds_rejected():
    spec = NoiseSpec(1.0, 1.0, 4)
    recs = [sample_increments(spec, 0.01, 4, seed=1), sample_increments(spec, 0.01, 4, seed=2)]
    with pytest.raises(ProvenanceMismatch):
        simulate_records(np.zeros(4), recs, 0.01, PotentialParams(), EigenBasis(4))


def test_reference_determinism_and_convergence():
    b = EigenBasis(32)
    spec = NoiseSpec(1.5, 1000.0, 32)
    fine = 2.0**-11
    rec = sample_increments(spec, fine / 2, 2**12, seed=17)
    u0 = default_initial(b)
    pot = PotentialParams()
    half = reference_solution(u0, rec, SchemeParams(fine / 2, 2**12), pot, b, stride=2)
    again = reference_solution(u0, rec, SchemeParams(fine / 2, 2**12), pot, b, stride=2)
    assert np.array_equal(half.states, again.states)
    ref = simulate_records(u0, [rec], fine, pot, b, stride=1).path(0)
    coarse = simulate_records(u0, [rec], 2.0**-4, pot, b).path(0)
    ref_gap = np.linalg.norm(ref.states - half.states, axis=-1).max()
    coarse_err = np.linalg.norm(ref.states[::128] - coarse.states, axis=-1).max()
    assert ref_gap * 2 <= coarse_err


def test_trajectory_exports(tmp_path):
    b = EigenBasis(8)
    rec = sample_increments(NoiseSpec(1.0, 1.0, 8), 0.05, 20, seed=3)
    traj = reference_solution(default_initial(b), rec, SchemeParams(0.05, 20), PotentialParams(), b, stride=2)
    assert traj.times[-1] == pytest.approx(1.0) and traj.states.shape == (11, 8)
    csv = write_trajectory_csv(traj, tmp_path / "t.csv", header="seed = 3")
    lines = csv.read_text().splitlines()
    assert lines[0] == "# seed = 3" and lines[1] == "t,u_1,u_2,u_3,norm_l2,norm_h1" and len(lines) == 13
    back = load_trajectory(save_trajectory(traj, tmp_path / "t.npz"))
    assert np.array_equal(back.states, traj.states)
    assert back.provenance == traj.provenance and back.stride == 2
