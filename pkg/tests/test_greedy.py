import numpy as np
import pytest

from dipoleid.functionals import MeasurementModel, fitting_cost, measure_phi, selectivity_J
from dipoleid.greedy import (
    MeasurementRecord,
    SelectivityWarning,
    fit_alpha,
    greedy_fields,
    identify,
    initial_field,
    relative_error,
)
from dipoleid.linalg import combine, random_hermitian_basis
from dipoleid.optimizers import MonotonicSettings, MultistartSettings

from conftest import random_hermitian

MONO = MonotonicSettings(max_iters=30)
MS = MultistartSettings(restarts=4)


def smooth_fields(grid, count, amp=0.05):
    t = grid.midpoints()
    return [amp * (np.sin(0.3 * t + s) + np.cos((0.1 + 0.05 * s) * t)) for s in range(count)]


@pytest.fixture(scope="module")
def small_fieldset():
    from conftest import PAPER_H
    from dipoleid.functionals import ProblemContext
    from dipoleid.propagator import TimeGrid

    ctx = ProblemContext(PAPER_H, [1, 0, 0], [0, 0, 1], TimeGrid(60.0, 120), beta=1e-2)
    basis = random_hermitian_basis(3, 4, seed=5)
    fs = greedy_fields(ctx, basis, MONO, MS, field_seed=1)
    return ctx, fs


def test_single_element_basis(paper_ctx_small, rng):
    fs = greedy_fields(paper_ctx_small, [random_hermitian(rng)], MONO, MS)
    assert len(fs.fields) == 1
    assert len(fs.fit_coefficients) == 1 and fs.fit_coefficients[0].size == 0
    assert np.isnan(fs.fit_costs[0])


def test_dependent_basis_warns(paper_ctx_small, rng):
    mu = random_hermitian(rng)
    with pytest.warns(SelectivityWarning):
        fs = greedy_fields(paper_ctx_small, [mu, mu], MONO, MS)
    assert fs.fit_coefficients[1] == pytest.approx([1.0], abs=1e-6)
    assert fs.fit_costs[1] <= 1e-12
    # the discriminatory step degenerates to the penalty and kills the field
    assert np.max(np.abs(fs.fields[1])) < np.max(np.abs(initial_field(paper_ctx_small.grid, 1)))


def test_fit_alpha_in_span(paper_ctx_small):
    b = random_hermitian_basis(3, 2, seed=8)
    basis = [b[0], b[1], combine([0.3, -0.5], b)]
    fields = smooth_fields(paper_ctx_small.grid, 2)
    alpha, cost, _ = fit_alpha(paper_ctx_small, basis, 3, fields, MS)
    assert cost <= 1e-12
    assert alpha == pytest.approx([0.3, -0.5], abs=1e-5)


def test_fit_alpha_rescaled_basis(paper_ctx_small, rng):
    mu = random_hermitian(rng)
    fields = smooth_fields(paper_ctx_small.grid, 1)
    a, _, _ = fit_alpha(paper_ctx_small, [mu, 0.7 * mu], 2, fields, MS)
    c = 2.5
    b, _, _ = fit_alpha(paper_ctx_small, [c * mu, 0.7 * mu], 2, fields, MS)
    assert a[0] == pytest.approx(0.7, abs=1e-6)
    assert b[0] == pytest.approx(a[0] / c, abs=1e-6)


def test_fit_alpha_matches_grid_scan(paper_ctx_small):
    basis = random_hermitian_basis(3, 2, seed=13)
    fields = smooth_fields(paper_ctx_small.grid, 1)
    alpha, cost, _ = fit_alpha(paper_ctx_small, basis, 2, fields, MultistartSettings(restarts=10))
    grid = np.linspace(-6, 6, 6001)
    costs = np.array([fitting_cost(paper_ctx_small, basis, 2, [a], fields) for a in grid])
    i = int(np.argmin(costs))
    assert cost <= costs[i] + 1e-12
    assert abs(alpha[0] - grid[i]) <= grid[1] - grid[0]


def test_fit_alpha_index_errors(paper_ctx_small, rng):
    basis = [random_hermitian(rng) for _ in range(3)]
    with pytest.raises(IndexError):
        fit_alpha(paper_ctx_small, basis, 1, [])
    with pytest.raises(ValueError):
        fit_alpha(paper_ctx_small, basis, 3, smooth_fields(paper_ctx_small.grid, 1))


def test_greedy_selectivity_growth(small_fieldset):
    ctx, fs = small_fieldset
    assert len(fs.fields) == 4
    for k, (eps, tr) in enumerate(zip(fs.fields, fs.traces), start=1):
        assert tr.final_objective > tr.objective_history[0]
        assert np.all(np.diff(tr.objective_history) >= -1e-10)
        if k > 1:
            mu_fit = combine(fs.fit_coefficients[k - 1], fs.basis[:k - 1])
            assert tr.final_objective == pytest.approx(selectivity_J(ctx, fs.basis[k - 1], mu_fit, eps), abs=1e-10)
    prov = fs.provenance
    assert prov["field_seed"] == 1 and prov["M"] == 120 and prov["beta"] == 1e-2


def test_greedy_deterministic(small_fieldset):
    ctx, fs = small_fieldset
    again = greedy_fields(ctx, fs.basis, MONO, MS, field_seed=1)
    for a, b in zip(fs.fields, again.fields):
        assert np.array_equal(a, b)
    for a, b in zip(fs.fit_coefficients, again.fit_coefficients):
        assert np.array_equal(a, b)


def test_identify_in_basis_truth(small_fieldset):
    ctx, fs = small_fieldset
    meas = [MeasurementRecord(k, measure_phi(ctx, fs.basis[0], e)) for k, e in enumerate(fs.fields)]
    # about one start in ten lands in the right basin on this instance
    res = identify(ctx, fs, meas, MultistartSettings(restarts=40))
    assert res.alpha == pytest.approx([1, 0, 0, 0], abs=1e-6)
    assert res.residual <= 1e-12
    assert np.array_equal(res.mu_hat, res.mu_hat.conj().T)


def test_identify_noise(small_fieldset):
    ctx, fs = small_fieldset
    truth = np.array([0.6, -0.4, 0.3, 0.2])
    mu_star = combine(truth, fs.basis)
    clean = np.array([measure_phi(ctx, mu_star, e) for e in fs.fields])
    sigma = 1e-3
    noise = sigma * np.random.default_rng(4).standard_normal((len(clean), 2)) @ np.array([1, 1j])
    ms = MultistartSettings(restarts=40)
    exact = identify(ctx, fs, list(clean), ms)
    noisy = identify(ctx, fs, list(clean + noise), ms)
    assert exact.residual <= 1e-12
    assert relative_error(exact.mu_hat, mu_star) <= 1e-6
    L = len(fs.fields)
    # residual of order L sigma^2 (the fit absorbs some of the noise)
    assert 1e-3 * L * sigma ** 2 <= noisy.residual <= 10 * L * sigma ** 2
    assert np.max(np.abs(noisy.alpha - exact.alpha)) <= 1e-2


def test_identify_rejects_mismatch(small_fieldset):
    ctx, fs = small_fieldset
    with pytest.raises(ValueError):
        identify(ctx, fs, [0j] * 3)
    bad = [MeasurementRecord(k, 0j) for k in (0, 2, 1, 3)]
    with pytest.raises(ValueError):
        identify(ctx, fs, bad)


def test_relative_error_examples(rng):
    mu = random_hermitian(rng)
    assert relative_error(mu, mu) == 0.0
    assert relative_error(2 * mu, mu) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        relative_error(mu, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        relative_error(mu, np.zeros((2, 2)))


def test_relative_error_eig_oracle(rng):
    for _ in range(10):
        a, b = random_hermitian(rng), random_hermitian(rng)
        # for Hermitian matrices the spectral norm is the largest |eigenvalue|
        oracle = np.max(np.abs(np.linalg.eigvalsh(b - a))) / np.max(np.abs(np.linalg.eigvalsh(b)))
        assert relative_error(a, b) == pytest.approx(oracle, rel=1e-12)


def test_measurement_model_matches_phi(small_fieldset):
    ctx, fs = small_fieldset
    alpha = np.array([0.1, 0.2, -0.3, 0.4])
    model = MeasurementModel(ctx, fs.basis, fs.fields, np.zeros(4))
    direct = [measure_phi(ctx, combine(alpha, fs.basis), e) for e in fs.fields]
    assert np.max(np.abs(model.phi(alpha) - direct)) <= 1e-13


def test_readings_blind_to_middle_phase(small_fieldset):
    # conjugating mu by diag(1, e^{i theta}, 1) commutes with H and fixes psi0, psi1,
    # so every reading is unchanged while mu itself moves
    ctx, fs = small_fieldset
    mu = combine([0.6, -0.4, 0.3, 0.2], fs.basis)
    D = np.diag([1, np.exp(0.9j), 1])
    moved = D @ mu @ D.conj().T
    assert relative_error(moved, mu) > 0.1
    for eps in fs.fields:
        assert abs(measure_phi(ctx, moved, eps) - measure_phi(ctx, mu, eps)) <= 1e-12
