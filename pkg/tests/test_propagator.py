import numpy as np
import pytest
from scipy.linalg import expm

from dipoleid.linalg import random_hermitian_basis
from dipoleid.propagator import (
    StrangPropagator,
    TimeGrid,
    mu_delta_t,
    propagate,
    propagate_adjoint,
    propagate_tangent,
)

from conftest import PAPER_H, random_hermitian, random_state


def smooth_field(t, T):
    return 0.8 * np.sin(2 * np.pi * t / T) * np.exp(-((t - T / 2) / (T / 4)) ** 2) + 0.3 * np.cos(3 * t / T)


def norm_drift(traj):
    return float(np.max(np.abs(np.linalg.norm(traj, axis=1) - 1.0)))


def test_time_grid():
    g = TimeGrid(4000 * np.pi, 40000)
    assert abs(g.dt * g.M - g.T) <= 1e-12 * g.T
    assert np.allclose(np.diff(g.times()), g.dt)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        g.check_field(np.zeros(3))
    bad = np.zeros(40000)
    bad[7] = np.nan
    with pytest.raises(ValueError):
        g.check_field(bad)


def test_free_evolution_is_exact(rng):
    H = random_hermitian(rng)
    mu = random_hermitian(rng)
    psi0 = random_state(rng)
    traj = propagate(H, mu, np.zeros(300), psi0, 0.1)
    np.testing.assert_allclose(traj[-1], expm(-1j * H * 30.0) @ psi0, atol=1e-12)
    assert norm_drift(traj) <= 1e-10


def test_commuting_operators_constant_field(rng):
    H = np.diag(rng.standard_normal(3))
    mu = np.diag(rng.standard_normal(3))
    psi0 = random_state(rng)
    traj = propagate(H, mu, np.full(100, 0.37), psi0, 0.2)
    np.testing.assert_allclose(traj[-1], expm(-1j * (H + 0.37 * mu) * 20.0) @ psi0, atol=1e-12)


def test_paper_hamiltonian_preserves_basis_states():
    traj = propagate(PAPER_H, np.eye(3), np.zeros(1000), np.eye(3)[0], 4 * np.pi)
    assert abs(np.vdot(np.eye(3)[2], traj[-1])) == 0.0


def test_step_matches_dense_formula(rng):
    H = random_hermitian(rng)
    mu = random_hermitian(rng)
    psi0 = random_state(rng)
    eps = rng.standard_normal(5)
    dt = 0.3
    A = expm(-0.5j * dt * H)
    psi = psi0
    for e in eps:
        psi = A @ expm(-1j * e * dt * mu) @ A @ psi
    np.testing.assert_allclose(propagate(H, mu, eps, psi0, dt)[-1], psi, atol=1e-13)


def test_norm_conservation_random(rng):
    for _ in range(10):
        n = int(rng.integers(2, 6))
        traj = propagate(random_hermitian(rng, n), random_hermitian(rng, n),
                         rng.standard_normal(2000), random_state(rng, n), 0.05)
        assert norm_drift(traj) <= 1e-10


def test_rejects_bad_input(rng):
    H = random_hermitian(rng)
    with pytest.raises(ValueError):
        propagate(H, random_hermitian(rng, 4), np.zeros(3), random_state(rng), 0.1)
    with pytest.raises(ValueError):
        propagate(H, H, np.array([0.0, np.inf]), random_state(rng), 0.1)


def test_strang_second_order(rng):
    H = random_hermitian(rng, scale=0.5)
    mu = random_hermitian(rng, scale=0.5)
    psi0 = random_state(rng)
    T, M0 = 100.0, 400
    ref_grid = TimeGrid(T, 64 * M0)
    ref = propagate(H, mu, ref_grid.sample(lambda t: smooth_field(t, T)), psi0, ref_grid.dt)[-1]
    dts, errs = [], []
    for f in (1, 2, 4, 8):
        g = TimeGrid(T, M0 * f)
        psi = propagate(H, mu, g.sample(lambda t: smooth_field(t, T)), psi0, g.dt)[-1]
        dts.append(g.dt)
        errs.append(np.linalg.norm(psi - ref))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert 1.8 <= slope <= 2.2, (slope, errs)


def test_tangent_zero_and_linear(rng):
    H, mu, dmu = (random_hermitian(rng) for _ in range(3))
    eps = rng.standard_normal(40)
    base = propagate(H, mu, eps, random_state(rng), 0.1)
    np.testing.assert_array_equal(propagate_tangent(H, mu, np.zeros((3, 3)), eps, base, 0.1), 0)
    d1 = propagate_tangent(H, mu, dmu, eps, base, 0.1)
    d3 = propagate_tangent(H, mu, -2.5 * dmu, eps, base, 0.1)
    assert np.max(np.abs(d3 + 2.5 * d1)) <= 1e-10


def test_tangent_matches_central_differences(rng):
    for _ in range(20):
        H = random_hermitian(rng, scale=0.05)
        basis = random_hermitian_basis(3, 4, seed=int(rng.integers(1 << 30)))
        alpha = rng.standard_normal(4)
        dalpha = rng.standard_normal(4)
        mu = np.tensordot(alpha, basis, axes=1)
        dmu = np.tensordot(dalpha, basis, axes=1)
        eps = 0.2 * rng.standard_normal(200)
        psi0 = random_state(rng)
        dt, h = 0.25, 1e-5
        base = propagate(H, mu, eps, psi0, dt)
        tangent = propagate_tangent(H, mu, dmu, eps, base, dt)
        fd = (propagate(H, mu + h * dmu, eps, psi0, dt)[-1]
              - propagate(H, mu - h * dmu, eps, psi0, dt)[-1]) / (2 * h)
        assert np.linalg.norm(tangent - fd) <= 1e-6 * np.linalg.norm(fd)


def test_tangent_rejects_mismatched_trajectory(rng):
    H, mu = random_hermitian(rng), random_hermitian(rng)
    base = propagate(H, mu, np.zeros(10), random_state(rng), 0.1)
    with pytest.raises(ValueError):
        propagate_tangent(H, mu, mu, np.zeros(11), base, 0.1)


def test_adjoint_zero_terminal(rng):
    chi = propagate_adjoint(random_hermitian(rng), random_hermitian(rng), rng.standard_normal(30),
                            np.zeros(3), 0.1)
    assert np.all(chi == 0)


def test_adjoint_round_trip(rng):
    H, mu = random_hermitian(rng), random_hermitian(rng)
    eps = rng.standard_normal(500)
    terminal = 0.3 * random_state(rng)
    chi = propagate_adjoint(H, mu, eps, terminal, 0.05)
    norms = np.linalg.norm(chi, axis=1)
    assert np.max(np.abs(norms - 0.3)) <= 1e-10
    forward = propagate(H, mu, eps, chi[0] / 0.3, 0.05) * 0.3
    np.testing.assert_allclose(forward, chi, atol=1e-10)


def test_adjoint_free_backward_evolution(rng):
    H, mu = random_hermitian(rng), random_hermitian(rng)
    terminal = random_state(rng)
    chi = propagate_adjoint(H, mu, np.zeros(200), terminal, 0.1)
    np.testing.assert_allclose(chi[0], expm(1j * H * 20.0) @ terminal, atol=1e-12)


def divided_difference_oracle(H, mu, e1, e0, dt):
    A = expm(-0.5j * dt * H)
    D = (expm(-1j * e1 * dt * mu) - expm(-1j * e0 * dt * mu)) / (-1j * dt * (e1 - e0))
    return A.conj().T @ D @ A


def test_mu_delta_t_matches_raw_divided_difference(rng):
    for _ in range(20):
        H, mu = random_hermitian(rng), random_hermitian(rng)
        e0, e1 = rng.standard_normal(2)
        np.testing.assert_allclose(
            mu_delta_t(H, mu, e1, e0, 0.3), divided_difference_oracle(H, mu, e1, e0, 0.3), atol=1e-11
        )


def test_mu_delta_t_confluent_limit_and_symmetry(rng):
    H, mu = random_hermitian(rng), random_hermitian(rng)
    dt = 0.2
    A = expm(-0.5j * dt * H)
    np.testing.assert_allclose(mu_delta_t(H, mu, 0.0, 0.0, dt), A.conj().T @ mu @ A, atol=1e-13)
    e = 0.7
    limit = A.conj().T @ mu @ expm(-1j * e * dt * mu) @ A
    np.testing.assert_allclose(mu_delta_t(H, mu, e, e, dt), limit, atol=1e-13)
    np.testing.assert_allclose(mu_delta_t(H, mu, e + 1e-10, e, dt), limit, atol=1e-9)
    np.testing.assert_allclose(mu_delta_t(H, mu, 0.3, -1.1, dt), mu_delta_t(H, mu, -1.1, 0.3, dt), atol=1e-14)


def test_propagator_final_matches_trajectory(rng):
    P = StrangPropagator(random_hermitian(rng), random_hermitian(rng), 0.1)
    eps = rng.standard_normal(50)
    psi0 = random_state(rng)
    np.testing.assert_allclose(P.final(eps, psi0), P.forward(eps, psi0)[-1], atol=1e-14)
