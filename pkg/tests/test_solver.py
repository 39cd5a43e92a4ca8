import io

import numpy as np
import pytest

from diffpace.errors import NumericalError
from diffpace.measurement import MeasurementSet, nmse
from diffpace.schedule import make_schedule
from diffpace.scores import GaussianScoreSource, PointScoreSource
from diffpace.solver import (GramSolver, SolverConfig, consistency_project,
                             consistency_prox, delta_sigma, diffpace_estimate,
                             ode_sample, prior_step, rho)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def make_measurement(rng, m, n, h, sigma_n, snr_db=10.0):
    phi = crandn(rng, m, n) / np.sqrt(n)
    y = phi @ h + sigma_n * crandn(rng, m)
    return MeasurementSet(y=y, phi=phi, sigma_n=sigma_n, snr_db=snr_db)


# --- step-length arithmetic -----------------------------------------------------

def test_delta_sigma_single_step():
    s = make_schedule(1, 0.5, 1.0)
    assert delta_sigma(s, 1) == pytest.approx(1.0)  # sigma_max * (sigma_max - 0)


def test_delta_sigma_formula():
    s = make_schedule(10, 0.05, 2.0)
    for i in range(1, 11):
        expected = s.sigma_at(i) * (s.sigma_at(i) - s.sigma_at(i - 1))
        assert delta_sigma(s, i) == pytest.approx(expected)
        assert delta_sigma(s, i) > 0


def test_delta_sigma_index_bounds():
    s = make_schedule(5, 0.1, 1.0)
    with pytest.raises(ValueError):
        delta_sigma(s, 0)
    with pytest.raises(ValueError):
        delta_sigma(s, 6)


def test_rho_formula_and_reductions():
    s = make_schedule(10, 0.05, 2.0)
    lam, beta, sigma_n = 0.006, 0.05, 0.4
    for i in (1, 5, 10):
        expected = delta_sigma(s, i) / (2 * lam * sigma_n ** 2 + beta * s.sigma_at(i) ** 2)
        assert rho(s, i, lam, beta, sigma_n) == pytest.approx(expected)
    # beta = 0 reduces to the unsmoothed form
    assert rho(s, 5, lam, 0.0, sigma_n) == pytest.approx(
        delta_sigma(s, 5) / (2 * lam * sigma_n ** 2))
    # sigma_n = 0 leaves only the smoothing term
    assert rho(s, 5, lam, beta, 0.0) == pytest.approx(
        delta_sigma(s, 5) / (beta * s.sigma_at(5) ** 2))
    with pytest.raises(ValueError):
        rho(s, 5, lam, 0.0, 0.0)


# --- prior step -------------------------------------------------------------------

def test_prior_step_zero_score():
    class Zero:
        def score(self, h_t, sigma):
            return np.zeros_like(h_t)

    rng = np.random.default_rng(0)
    h = crandn(rng, 8)
    np.testing.assert_array_equal(prior_step(Zero(), h, 0.5, 0.1), h)


def test_prior_step_point_score_full_denoise():
    rng = np.random.default_rng(1)
    h = crandn(rng, 8)
    h_t = h + 0.4 * crandn(rng, 8)
    sigma = 0.4
    z = prior_step(PointScoreSource(h), h_t, sigma, sigma ** 2)
    np.testing.assert_allclose(z, h, atol=1e-12)


def test_prior_step_gaussian_monotone_contraction():
    rng = np.random.default_rng(2)
    n = 12
    a = crandn(rng, n, n)
    cov = a @ a.conj().T / n
    src = GaussianScoreSource(crandn(rng, n), cov)
    s = make_schedule(40, 0.05, 2.0)
    h = 3.0 * crandn(rng, n)
    dist = np.linalg.norm(h - src.mean)
    for i in range(40, 0, -1):
        h = prior_step(src, h, s.sigma_at(i), delta_sigma(s, i))
        new_dist = np.linalg.norm(h - src.mean)
        assert new_dist <= dist + 1e-12
        dist = new_dist


def test_prior_step_nonfinite_score_aborts():
    class Bad:
        def score(self, h_t, sigma):
            return np.full_like(h_t, np.nan)

    with pytest.raises(NumericalError):
        prior_step(Bad(), np.ones(4, complex), 0.5, 0.1)


# --- consistency steps --------------------------------------------------------------

def test_projection_identity_over_random_instances():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        m, n = 6, 12
        phi = crandn(rng, m, n)
        z = crandn(rng, n)
        y = crandn(rng, m)
        rho_i = float(rng.uniform(0.0, 2.0))
        h = consistency_project(z, y, phi, rho_i)
        lhs = np.linalg.norm(y - phi @ h)
        rhs = abs(1 - rho_i) * np.linalg.norm(y - phi @ z)
        assert abs(lhs - rhs) < 1e-8 * max(1.0, rhs)


def test_projection_rho_one_exact_consistency():
    rng = np.random.default_rng(3)
    m, n = 8, 16
    phi = crandn(rng, m, n)
    h = consistency_project(crandn(rng, n), crandn(rng, m), phi, 1.0)
    # lands exactly on the consistency subspace


def test_projection_rho_zero_no_op():
    rng = np.random.default_rng(4)
    phi = crandn(rng, 6, 12)
    z = crandn(rng, 12)
    np.testing.assert_array_equal(consistency_project(z, crandn(rng, 6), phi, 0.0), z)


def test_projection_rank_deficient_regularized():
    rng = np.random.default_rng(5)
    phi = np.vstack([crandn(rng, 3, 12)] * 2)  # duplicated rows: rank 3 of 6
    with pytest.warns(RuntimeWarning):
        gram = GramSolver(phi)
    assert gram.regularized
    out = consistency_project(crandn(rng, 12), crandn(rng, 6), phi, 0.5, gram=gram)
    assert np.all(np.isfinite(out))


def test_prox_step_residual_contraction_per_direction():
    rng = np.random.default_rng(6)
    m, n = 6, 12
    phi = crandn(rng, m, n)
    z = crandn(rng, n)
    y = crandn(rng, m)
    rho_i = 2.0
    h = consistency_prox(z, y, phi, rho_i)
    # residual transforms as gamma (Phi Phi^H + gamma I)^{-1} residual
    gamma = 1.0 / rho_i
    gram_mat = phi @ phi.conj().T
    expected = gamma * np.linalg.solve(gram_mat + gamma * np.eye(m), y - phi @ z)
    np.testing.assert_allclose(y - phi @ h, expected, atol=1e-10)
    assert np.linalg.norm(y - phi @ h) <= np.linalg.norm(y - phi @ z) + 1e-12


def test_prox_approaches_projection_for_large_rho():
    rng = np.random.default_rng(7)
    m, n = 6, 12
    phi = crandn(rng, m, n)
    z, y = crandn(rng, n), crandn(rng, m)
    near = consistency_prox(z, y, phi, 1e9)
    exact = consistency_project(z, y, phi, 1.0)
    np.testing.assert_allclose(near, exact, atol=1e-5)


def test_gram_solver_rejects_wide_side():
    rng = np.random.default_rng(8)
    with pytest.raises(ValueError):
        GramSolver(crandn(rng, 12, 6))


# --- full estimator -------------------------------------------------------------------

def test_estimate_oracle_reduction_converges_to_truth():
    rng = np.random.default_rng(9)
    n, m = 24, 18
    h = crandn(rng, n)
    meas = make_measurement(rng, m, n, h, sigma_n=0.0)
    for k in (10, 25):
        sched = make_schedule(k, 0.02, 2.0)
        cfg = SolverConfig(n_steps=k, lam=0.006, beta=0.05, schedule=sched, seed=5)
        est, _ = diffpace_estimate(PointScoreSource(h), meas, cfg)
        assert np.sum(np.abs(est - h) ** 2) / np.sum(np.abs(h) ** 2) < 1e-6


def test_estimate_deterministic():
    rng = np.random.default_rng(10)
    n, m = 16, 12
    h = crandn(rng, n)
    meas = make_measurement(rng, m, n, h, sigma_n=0.1)
    src = GaussianScoreSource(np.zeros(n, complex), np.eye(n, dtype=complex))
    cfg = SolverConfig(n_steps=20, lam=0.01, beta=0.1,
                       schedule=make_schedule(20, 0.02, 2.0), seed=77)
    a, _ = diffpace_estimate(src, meas, cfg)
    b, _ = diffpace_estimate(src, meas, cfg)
    np.testing.assert_array_equal(a, b)


def test_estimate_noiseless_residual_trend():
    rng = np.random.default_rng(11)
    n, m = 20, 20
    h = crandn(rng, n)
    meas = make_measurement(rng, m, n, h, sigma_n=0.0)
    src = PointScoreSource(h)
    cfg = SolverConfig(n_steps=40, lam=0.01, beta=0.05,
                       schedule=make_schedule(40, 0.02, 2.0), seed=3)
    _, diag = diffpace_estimate(src, meas, cfg)
    residuals = [r.residual_norm for r in diag.records]
    # windowed minimum over the last 10 steps never increases
    mins = [min(residuals[max(0, i - 9):i + 1]) for i in range(len(residuals))]
    tail = mins[-10:]
    assert all(tail[j + 1] <= tail[j] + 1e-12 for j in range(len(tail) - 1))


def test_estimate_square_fullrank_projection_dominance():
    # noiseless square system: the final iterate satisfies the data nearly
    # exactly whatever the score says, provided late steps keep projecting
    rng = np.random.default_rng(12)
    n = 16
    h = crandn(rng, n)
    meas = make_measurement(rng, n, n, h, sigma_n=0.0)

    class Null:
        def score(self, h_t, sigma):
            return np.zeros_like(h_t)

    cfg = SolverConfig(n_steps=60, lam=0.006, beta=0.05,
                       schedule=make_schedule(60, 0.02, 2.0), seed=8,
                       data_step="project")
    est, diag = diffpace_estimate(Null(), meas, cfg)
    assert diag.records[-1].rho >= 0.5
    assert np.linalg.norm(meas.y - meas.phi @ est) / np.linalg.norm(meas.y) < 1e-3


def test_estimate_gaussian_oracle_near_mmse_small_instance():
    """Small-scale rehearsal of the solver-vs-MMSE oracle check: correlated
    Gaussian channels observed through real pilot plans with combiner-coloured
    noise."""
    from diffpace.baselines import SecondOrderPrior, mmse
    from diffpace.geometry import ArrayConfig, subarray_codebooks
    from diffpace.measurement import measure, sample_pilot_plan, unvec

    cfg_arr = ArrayConfig(n_t=8, n_r=4, k_t=2, k_r=2, l_t=2, l_r=2,
                          tx_subarray_shape=(2, 2), rx_subarray_shape=(2, 1))
    books = subarray_codebooks(cfg_arr)
    n = 32
    c_r = 0.5 ** np.abs(np.subtract.outer(np.arange(4), np.arange(4)))
    c_t = 0.4 ** np.abs(np.subtract.outer(np.arange(8), np.arange(8)))
    cov = np.kron(c_t, c_r)
    chol = np.linalg.cholesky(cov)
    src = GaussianScoreSource(np.zeros(n, complex), cov)
    prior = SecondOrderPrior(np.zeros(n, complex), cov)
    gaps, ls_margins = [], []
    for t in range(30):
        r = np.random.default_rng(100 + t)
        h = chol @ crandn(r, n)
        plan = sample_pilot_plan(r, cfg_arr, m_t=7, m_r=2, n_b=4)
        meas = measure(unvec(h, (4, 8)), plan, 10.0, r, books, signal_power=2.0)
        gram = GramSolver(meas.phi)
        cfg = SolverConfig(n_steps=60, lam=0.06, beta=0.2,
                           schedule=make_schedule(60, 0.02, 3.0), seed=200 + t)
        est, _ = diffpace_estimate(src, meas, cfg, gram=gram)
        value = nmse(h, est)
        gaps.append(value - nmse(h, mmse(meas.y, meas.phi, prior, meas.sigma_n)))
        ls_margins.append(nmse(h, meas.phi.conj().T @ gram.solve(meas.y)) - value)
    assert np.mean(gaps) < 3.0
    assert np.mean(ls_margins) >= 3.0


def test_estimate_aborts_on_bad_score():
    class Bad:
        def score(self, h_t, sigma):
            return np.full_like(h_t, np.inf)

    rng = np.random.default_rng(14)
    n, m = 12, 8
    meas = make_measurement(rng, m, n, crandn(rng, n), sigma_n=0.1)
    cfg = SolverConfig(n_steps=5, lam=0.01, beta=0.1,
                       schedule=make_schedule(5, 0.1, 1.0), seed=1)
    with pytest.raises(NumericalError):
        diffpace_estimate(Bad(), meas, cfg)


def test_diagnostics_csv_stream():
    rng = np.random.default_rng(15)
    n, m = 12, 8
    h = crandn(rng, n)
    meas = make_measurement(rng, m, n, h, sigma_n=0.05)
    cfg = SolverConfig(n_steps=4, lam=0.01, beta=0.1,
                       schedule=make_schedule(4, 0.1, 1.0), seed=2)
    _, diag = diffpace_estimate(PointScoreSource(h), meas, cfg)
    buf = io.StringIO()
    diag.write_csv(buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "step,sigma,rho,residual_norm,step_norm"
    assert len(lines) == 5
    assert [int(line.split(",")[0]) for line in lines[1:]] == [4, 3, 2, 1]


# --- unconditional sampler -----------------------------------------------------------

def test_ode_sample_zero_score_returns_init():
    class Zero:
        def score(self, h_t, sigma):
            return np.zeros_like(h_t)

    sched = make_schedule(10, 0.05, 2.0)
    a = ode_sample(Zero(), sched, 8, np.random.default_rng(3))
    b = 2.0 * crandn(np.random.default_rng(3), 8)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_ode_sample_deterministic_given_seed():
    sched = make_schedule(15, 0.05, 2.0)
    src = GaussianScoreSource(np.zeros(6, complex), np.eye(6, dtype=complex))
    a = ode_sample(src, sched, 6, np.random.default_rng(4))
    b = ode_sample(src, sched, 6, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)


def test_ode_sample_matches_prior_moments():
    rng = np.random.default_rng(5)
    n = 8
    a = crandn(rng, n, n)
    cov = a @ a.conj().T / n + 0.5 * np.eye(n)
    mu = 2.0 * crandn(rng, n)
    src = GaussianScoreSource(mu, cov)
    sched = make_schedule(200, 0.01, 40.0)  # sigma_max >> data scale
    draws = np.stack([ode_sample(src, sched, n, np.random.default_rng(1000 + t))
                      for t in range(2000)])
    mean = draws.mean(axis=0)
    centred = draws - mean
    sample_cov = centred.T @ centred.conj() / draws.shape[0]  # E[(x-mean)(x-mean)^H]
    assert np.linalg.norm(mean - mu) / np.linalg.norm(mu) < 0.05
    assert np.linalg.norm(sample_cov - cov) / np.linalg.norm(cov) < 0.10
